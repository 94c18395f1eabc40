#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "data/dataset.hpp"

namespace dvqa::cp {

// Positions below are indices into a split's instance vector.

// Inverted index question type -> ground-truth answer -> instance positions.
// The real counterparts of an anchor are every list of its type except the
// one under its own answer.
class SSSIndex {
 public:
  using AnswerLists = std::map<std::size_t, std::vector<std::size_t>>;

  const std::map<std::size_t, AnswerLists>& by_type() const noexcept { return by_type_; }
  std::size_t type_count(std::size_t type) const;
  std::size_t size() const noexcept { return total_; }

  // Number of real counterparts of an anchor with (type, label), O(#answers of type).
  std::size_t real_count(std::size_t type, std::size_t label) const;
  // Sorted real-counterpart positions for an anchor.
  std::vector<std::size_t> real_counterparts(std::size_t type, std::size_t label) const;

 private:
  friend SSSIndex build_sss_index(std::span<const data::Instance> split);
  std::map<std::size_t, AnswerLists> by_type_;
  std::map<std::size_t, std::size_t> type_counts_;
  std::size_t total_ = 0;
};

SSSIndex build_sss_index(std::span<const data::Instance> split);

struct SuperficiallySimilarSet {
  std::vector<std::size_t> real;       // positions j whose (v_j, q_j) is a real counterpart
  std::vector<std::size_t> synthetic;  // positions j whose image pairs with the anchor's question
};

// Literal set construction: one pass over every j != anchor.
SuperficiallySimilarSet enumerate_sss(std::size_t anchor, std::span<const data::Instance> split);

struct AnchorPlan {
  std::vector<std::size_t> real;       // batch positions of real counterparts
  std::vector<std::size_t> synthetic;  // batch positions donating their image
};

struct CounterpartBatchPlan {
  std::vector<AnchorPlan> anchors;  // one per batch position
  std::size_t real_terms() const;
  std::size_t synthetic_terms() const;
  // Anchors that wanted counterparts but found fewer than requested.
  std::size_t real_shortages = 0;
  std::size_t synthetic_shortages = 0;
};

// Per-batch-member view the sampler needs.
struct BatchMember {
  std::size_t question_type;
  std::size_t label;
  std::int64_t image_id;
};

std::vector<BatchMember> batch_members(std::span<const data::Instance> split, std::span<const std::size_t> batch);

// Uniformly samples, without replacement, up to n_real real counterparts
// (same type, different label) and up to n_synthetic image donors (different
// image) from inside the batch. Shortages take every available candidate.
CounterpartBatchPlan sample_counterparts(std::span<const BatchMember> batch, std::size_t n_real,
                                         std::size_t n_synthetic, std::mt19937_64& rng);

// Per-type counts, anchors with/without real counterparts and mean real-set size.
// When the split carries latent concepts, also reports the rate at which a
// synthetic pair (v_j, q_i) shares the anchor's visual concept.
std::string index_stats_json(const data::Dataset& ds, const SSSIndex& index);

}  // namespace dvqa::cp
