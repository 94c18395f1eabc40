#include "losses/losses.hpp"

#include <cmath>

#include "common/error.hpp"

namespace dvqa::loss {

using ad::Tensor;
using ad::Var;

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Symmetric: return "symmetric";
    case Variant::Simplified: return "simplified";
    case Variant::Modulated: return "modulated";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "symmetric") return Variant::Symmetric;
  if (s == "simplified") return Variant::Simplified;
  if (s == "modulated") return Variant::Modulated;
  throw ConfigError("unknown loss variant '" + s + "' (symmetric|simplified|modulated)");
}

const char* policy_name(FactorPolicy p) { return p == FactorPolicy::Detached ? "detached" : "differentiated"; }

FactorPolicy parse_policy(const std::string& s) {
  if (s == "detached") return FactorPolicy::Detached;
  if (s == "differentiated") return FactorPolicy::Differentiated;
  throw ConfigError("unknown modulating-factor policy '" + s + "' (detached|differentiated)");
}

const char* normalization_name(Normalization n) {
  switch (n) {
    case Normalization::Sum: return "sum";
    case Normalization::MeanPerAnchor: return "mean_per_anchor";
    case Normalization::MeanPerKind: return "mean_per_kind";
  }
  return "?";
}

Normalization parse_normalization(const std::string& s) {
  if (s == "sum") return Normalization::Sum;
  if (s == "mean_per_anchor") return Normalization::MeanPerAnchor;
  if (s == "mean_per_kind") return Normalization::MeanPerKind;
  throw ConfigError("unknown normalization '" + s + "' (sum|mean_per_anchor|mean_per_kind)");
}

void LossConfig::validate() const {
  if (!(lambda_vqa >= 0.0) || !std::isfinite(lambda_vqa)) throw ConfigError("lambda_vqa must be finite and >= 0");
  if (!(lambda_dis >= 0.0) || !std::isfinite(lambda_dis)) throw ConfigError("lambda_dis must be finite and >= 0");
}

namespace {

void check_index(std::span<const double> p, std::size_t k, const char* what) {
  if (k >= p.size()) {
    throw ConfigError(std::string(what) + " index " + std::to_string(k) + " outside probability vector of length " +
                      std::to_string(p.size()));
  }
}

}  // namespace

double dis_loss_symmetric(std::span<const double> p_i, std::span<const double> p_j, std::size_t m,
                          std::optional<std::size_t> n) {
  if (!n) throw UsageError("symmetric distinguishing term needs the counterpart's answer; synthetic pairs have none");
  check_index(p_i, m, "m");
  check_index(p_j, m, "m");
  check_index(p_i, *n, "n");
  check_index(p_j, *n, "n");
  return -(ad::log_sigmoid(p_i[m] - p_j[m]) + ad::log_sigmoid(p_j[*n] - p_i[*n]));
}

double dis_loss_simplified(std::span<const double> p_i, std::span<const double> p_j, std::size_t m) {
  check_index(p_i, m, "m");
  check_index(p_j, m, "m");
  return -ad::log_sigmoid(p_i[m] - p_j[m]);
}

double dis_loss_modulated(std::span<const double> p_i, std::span<const double> p_j, std::size_t m) {
  check_index(p_i, m, "m");
  check_index(p_j, m, "m");
  return -p_j[m] * ad::log_sigmoid(p_i[m] - p_j[m]);
}

Var vqa_loss(Var logits, const Tensor& targets) {
  const Tensor& z = logits.value();
  if (z.shape() != targets.shape()) {
    throw ConfigError("vqa_loss: logits " + ad::shape_string(z.shape()) + " vs targets " +
                      ad::shape_string(targets.shape()));
  }
  if (!z.all_finite() || !targets.all_finite()) throw NumericError("vqa_loss: non-finite logits or targets");
  const double n = static_cast<double>(z.rows());  // z dangles once new nodes are recorded
  ad::Tape& tape = *logits.tape;
  Tensor complement = Tensor::zeros_like(targets);
  for (std::size_t i = 0; i < targets.size(); ++i) complement[i] = 1.0 - targets[i];
  const Var pos = ad::mul(ad::log_sigmoid(logits), tape.constant(targets));
  const Var neg = ad::mul(ad::log_sigmoid(ad::scale(logits, -1.0)), tape.constant(std::move(complement)));
  return ad::scale(ad::sum(ad::add(pos, neg)), -1.0 / n);
}

SyntheticPairs synthetic_pairs(const cp::CounterpartBatchPlan& plan) {
  SyntheticPairs out;
  for (std::size_t i = 0; i < plan.anchors.size(); ++i) {
    for (std::size_t j : plan.anchors[i].synthetic) {
      out.anchors.push_back(i);
      out.donors.push_back(j);
    }
  }
  return out;
}

std::vector<DistinguishingTerm> distinguishing_terms(const cp::CounterpartBatchPlan& plan,
                                                     std::span<const std::size_t> labels) {
  if (labels.size() != plan.anchors.size()) throw ConfigError("plan and label list cover different batch sizes");
  std::vector<DistinguishingTerm> terms;
  for (std::size_t i = 0; i < plan.anchors.size(); ++i) {
    for (std::size_t j : plan.anchors[i].real) {
      terms.push_back({i, j, labels[i], labels[j], CounterpartKind::Real});
    }
  }
  std::size_t row = 0;
  for (std::size_t i = 0; i < plan.anchors.size(); ++i) {
    for (std::size_t k = 0; k < plan.anchors[i].synthetic.size(); ++k) {
      terms.push_back({i, row++, labels[i], std::nullopt, CounterpartKind::Synthetic});
    }
  }
  return terms;
}

namespace {

// Sum over a group of one-sided terms -w_t * f_t * log s(p_im - p_jm), where
// f is 1 (simplified) or p_jm (modulated).
Var one_sided(Var anchor_probs, Var counterpart_probs, std::span<const std::size_t> anchors,
              std::span<const std::size_t> counterparts, std::span<const std::size_t> answers, const Tensor& weights,
              const LossConfig& cfg, bool modulated) {
  const Var pim = ad::pick(anchor_probs, anchors, answers);
  const Var pjm = ad::pick(counterpart_probs, counterparts, answers);
  Var ls = ad::log_sigmoid(ad::sub(pim, pjm));
  if (modulated) {
    const Var factor = cfg.policy == FactorPolicy::Detached ? ad::detach(pjm) : pjm;
    ls = ad::mul(factor, ls);
  }
  ls = ad::mul(ls, anchor_probs.tape->constant(weights));
  return ad::scale(ad::sum(ls), -1.0);
}

}  // namespace

DisTerms dis_loss(const BatchProbs& batch, const cp::CounterpartBatchPlan& plan, const LossConfig& cfg) {
  ad::Tape& tape = *batch.probs.tape;
  const std::size_t n_anchors = plan.anchors.size();
  if (n_anchors == 0) throw ConfigError("distinguishing loss over an empty batch");
  const auto terms = distinguishing_terms(plan, batch.labels);

  std::vector<double> real_weight(n_anchors, 1.0 / static_cast<double>(n_anchors));
  std::vector<double> synthetic_weight = real_weight;
  for (std::size_t i = 0; i < n_anchors; ++i) {
    const double nr = static_cast<double>(plan.anchors[i].real.size());
    const double ns = static_cast<double>(plan.anchors[i].synthetic.size());
    if (cfg.normalization == Normalization::MeanPerAnchor && nr + ns > 0) {
      real_weight[i] /= nr + ns;
      synthetic_weight[i] /= nr + ns;
    } else if (cfg.normalization == Normalization::MeanPerKind) {
      if (nr > 0) real_weight[i] /= nr;
      if (ns > 0) synthetic_weight[i] /= ns;
    }
  }

  std::vector<std::size_t> ra, rc, rm, rn, sa, sr, sm;
  for (const auto& t : terms) {
    if (t.kind == CounterpartKind::Real) {
      ra.push_back(t.anchor);
      rc.push_back(t.counterpart);
      rm.push_back(t.m);
      rn.push_back(*t.n);
    } else {
      sa.push_back(t.anchor);
      sr.push_back(t.counterpart);
      sm.push_back(t.m);
    }
  }
  auto weights_for = [](const std::vector<std::size_t>& anchors, const std::vector<double>& per_anchor) {
    Tensor w = Tensor::zeros(anchors.size(), 1);
    for (std::size_t k = 0; k < anchors.size(); ++k) w[k] = per_anchor[anchors[k]];
    return w;
  };

  DisTerms out;
  out.real_terms = ra.size();
  out.synthetic_terms = sa.size();
  Var total = tape.constant(Tensor::scalar(0.0));
  const bool modulated = cfg.variant == Variant::Modulated;
  if (!ra.empty()) {
    const Tensor w = weights_for(ra, real_weight);
    total = ad::add(total, one_sided(batch.probs, batch.probs, ra, rc, rm, w, cfg, modulated));
    if (cfg.variant == Variant::Symmetric) {
      // Reverse direction: the counterpart should beat the anchor on its own answer n.
      total = ad::add(total, one_sided(batch.probs, batch.probs, rc, ra, rn, w, cfg, false));
    }
  }
  if (!sa.empty()) {
    if (!batch.has_synthetic) throw UsageError("plan has synthetic counterparts but no synthetic probabilities");
    total = ad::add(total, one_sided(batch.probs, batch.synthetic_probs, sa, sr, sm,
                                     weights_for(sa, synthetic_weight), cfg, modulated));
  }
  out.loss = total;
  return out;
}

TotalLoss total_loss(Var logits, const Tensor& targets, const BatchProbs& batch, const cp::CounterpartBatchPlan& plan,
                     const LossConfig& cfg) {
  cfg.validate();
  TotalLoss out;
  const Var lv = vqa_loss(logits, targets);
  out.vqa = lv.item();
  out.total = ad::scale(lv, cfg.lambda_vqa);
  if (cfg.lambda_dis == 0.0) return out;
  const DisTerms dis = dis_loss(batch, plan, cfg);
  out.dis = dis.loss.item();
  out.real_terms = dis.real_terms;
  out.synthetic_terms = dis.synthetic_terms;
  out.total = ad::add(out.total, ad::scale(dis.loss, cfg.lambda_dis));
  return out;
}

}  // namespace dvqa::loss
