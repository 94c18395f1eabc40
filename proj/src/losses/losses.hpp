#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "counterparts/counterparts.hpp"
#include "diffengine/ops.hpp"
#include "model/model.hpp"

namespace dvqa::loss {

enum class Variant {
  Symmetric,   // -[log s(p_im - p_jm) + log s(p_jn - p_in)]
  Simplified,  // -log s(p_im - p_jm)
  Modulated,   // -p_jm * log s(p_im - p_jm)
};

enum class FactorPolicy {
  Detached,        // p_jm is a constant weight
  Differentiated,  // gradients also flow through the weight
};

enum class Normalization {
  Sum,           // per anchor, counterpart terms are summed; then averaged over anchors
  MeanPerAnchor, // per anchor, counterpart terms are averaged first
  MeanPerKind,   // per anchor, real terms and synthetic terms are each averaged, then added
};

const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);
const char* policy_name(FactorPolicy p);
FactorPolicy parse_policy(const std::string& s);
const char* normalization_name(Normalization n);
Normalization parse_normalization(const std::string& s);

struct LossConfig {
  double lambda_vqa = 0.05;
  double lambda_dis = 0.6;
  Variant variant = Variant::Modulated;
  FactorPolicy policy = FactorPolicy::Differentiated;
  Normalization normalization = Normalization::Sum;
  std::size_t n_real = 1;
  std::size_t n_synthetic = 1;

  void validate() const;
};

// Scalar reference forms over plain probability vectors.
// The symmetric form needs the counterpart's own answer n; without one (a
// synthetic counterpart) it throws UsageError.
double dis_loss_symmetric(std::span<const double> p_i, std::span<const double> p_j, std::size_t m,
                          std::optional<std::size_t> n);
double dis_loss_simplified(std::span<const double> p_i, std::span<const double> p_j, std::size_t m);
double dis_loss_modulated(std::span<const double> p_i, std::span<const double> p_j, std::size_t m);

// Binary cross-entropy, summed over answers and averaged over instances,
// computed from logits with the stable log-sigmoid.
ad::Var vqa_loss(ad::Var logits, const ad::Tensor& targets);

// One batch's worth of probabilities: the shared pass plus the re-paired
// synthetic rows, and the ground-truth labels of the batch members.
struct BatchProbs {
  ad::Var probs;                        // B x |A|, one row per batch member
  ad::Var synthetic_probs;              // S x |A|, row s pairs synthetic_pairs[s]
  bool has_synthetic = false;
  std::span<const std::size_t> labels;  // length B
};

// Row order used for the synthetic pass: (anchor, donor) for every anchor's
// sampled donors, anchors in batch order.
struct SyntheticPairs {
  std::vector<std::size_t> anchors;
  std::vector<std::size_t> donors;
};
SyntheticPairs synthetic_pairs(const cp::CounterpartBatchPlan& plan);

enum class CounterpartKind { Real, Synthetic };

struct DistinguishingTerm {
  std::size_t anchor;       // batch position
  std::size_t counterpart;  // batch position (real) or synthetic row
  std::size_t m;            // anchor's ground-truth answer
  std::optional<std::size_t> n;  // counterpart's answer, real only
  CounterpartKind kind;
};

// Flattens a plan into terms, real terms first, anchors in batch order.
// Synthetic terms index rows of the synthetic pass in synthetic_pairs order.
std::vector<DistinguishingTerm> distinguishing_terms(const cp::CounterpartBatchPlan& plan,
                                                     std::span<const std::size_t> labels);

struct DisTerms {
  ad::Var loss;  // scalar L_dis (0 when there are no terms)
  std::size_t real_terms = 0;
  std::size_t synthetic_terms = 0;
};

DisTerms dis_loss(const BatchProbs& batch, const cp::CounterpartBatchPlan& plan, const LossConfig& cfg);

struct TotalLoss {
  ad::Var total;
  double vqa = 0.0;
  double dis = 0.0;
  std::size_t real_terms = 0;
  std::size_t synthetic_terms = 0;
};

// lambda_vqa * L_vqa + lambda_dis * L_dis. With lambda_dis == 0 no
// distinguishing terms are recorded at all.
TotalLoss total_loss(ad::Var logits, const ad::Tensor& targets, const BatchProbs& batch,
                     const cp::CounterpartBatchPlan& plan, const LossConfig& cfg);

}  // namespace dvqa::loss
