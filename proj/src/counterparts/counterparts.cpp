#include "counterparts/counterparts.hpp"

#include <algorithm>
#include <iterator>
#include <nlohmann/json.hpp>

namespace dvqa::cp {

std::size_t SSSIndex::type_count(std::size_t type) const {
  auto it = type_counts_.find(type);
  return it == type_counts_.end() ? 0 : it->second;
}

std::size_t SSSIndex::real_count(std::size_t type, std::size_t label) const {
  auto it = by_type_.find(type);
  if (it == by_type_.end()) return 0;
  auto own = it->second.find(label);
  const std::size_t own_size = own == it->second.end() ? 0 : own->second.size();
  return type_count(type) - own_size;
}

std::vector<std::size_t> SSSIndex::real_counterparts(std::size_t type, std::size_t label) const {
  std::vector<std::size_t> out;
  auto it = by_type_.find(type);
  if (it == by_type_.end()) return out;
  for (const auto& [answer, positions] : it->second) {
    if (answer == label) continue;
    out.insert(out.end(), positions.begin(), positions.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

SSSIndex build_sss_index(std::span<const data::Instance> split) {
  SSSIndex index;
  for (std::size_t pos = 0; pos < split.size(); ++pos) {
    const auto& inst = split[pos];
    index.by_type_[inst.question_type][inst.label].push_back(pos);
    ++index.type_counts_[inst.question_type];
  }
  index.total_ = split.size();
  return index;
}

SuperficiallySimilarSet enumerate_sss(std::size_t anchor, std::span<const data::Instance> split) {
  SuperficiallySimilarSet set;
  const auto& a = split[anchor];
  const std::size_t m = data::argmax_answer(a.answers);
  for (std::size_t j = 0; j < split.size(); ++j) {
    if (j == anchor) continue;
    set.synthetic.push_back(j);
    if (split[j].question_type == a.question_type) {
      const std::size_t n = data::argmax_answer(split[j].answers);
      if (m != n) set.real.push_back(j);
    }
  }
  return set;
}

std::size_t CounterpartBatchPlan::real_terms() const {
  std::size_t n = 0;
  for (const auto& a : anchors) n += a.real.size();
  return n;
}

std::size_t CounterpartBatchPlan::synthetic_terms() const {
  std::size_t n = 0;
  for (const auto& a : anchors) n += a.synthetic.size();
  return n;
}

std::vector<BatchMember> batch_members(std::span<const data::Instance> split, std::span<const std::size_t> batch) {
  std::vector<BatchMember> out;
  out.reserve(batch.size());
  for (std::size_t pos : batch) {
    const auto& inst = split[pos];
    out.push_back({inst.question_type, inst.label, inst.image_id});
  }
  return out;
}

CounterpartBatchPlan sample_counterparts(std::span<const BatchMember> batch, std::size_t n_real,
                                         std::size_t n_synthetic, std::mt19937_64& rng) {
  CounterpartBatchPlan plan;
  plan.anchors.resize(batch.size());
  std::vector<std::size_t> candidates;
  candidates.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const BatchMember& anchor = batch[i];
    AnchorPlan& out = plan.anchors[i];
    if (n_real > 0) {
      candidates.clear();
      for (std::size_t j = 0; j < batch.size(); ++j) {
        if (j != i && batch[j].question_type == anchor.question_type && batch[j].label != anchor.label) {
          candidates.push_back(j);
        }
      }
      if (candidates.size() < n_real) ++plan.real_shortages;
      std::sample(candidates.begin(), candidates.end(), std::back_inserter(out.real), n_real, rng);
    }
    if (n_synthetic > 0) {
      candidates.clear();
      for (std::size_t j = 0; j < batch.size(); ++j) {
        if (j != i && batch[j].image_id != anchor.image_id) candidates.push_back(j);
      }
      if (candidates.size() < n_synthetic) ++plan.synthetic_shortages;
      std::sample(candidates.begin(), candidates.end(), std::back_inserter(out.synthetic), n_synthetic, rng);
    }
  }
  return plan;
}

std::string index_stats_json(const data::Dataset& ds, const SSSIndex& index) {
  using nlohmann::json;
  const auto& split = ds.train.instances;
  json types = json::array();
  std::size_t total_pairs = 0;
  for (const auto& [type, lists] : index.by_type()) {
    json answers = json::object();
    std::size_t with_real = 0, pairs = 0;
    for (const auto& [label, positions] : lists) {
      answers[ds.answers.at(label)] = positions.size();
      const std::size_t rc = index.real_count(type, label);
      pairs += rc * positions.size();
      if (rc > 0) with_real += positions.size();
    }
    const std::size_t n = index.type_count(type);
    total_pairs += pairs;
    types.push_back({{"type_id", type},
                     {"type", ds.types.name(type)},
                     {"instances", n},
                     {"answers", std::move(answers)},
                     {"anchors_with_real", with_real},
                     {"anchors_without_real", n - with_real},
                     {"mean_real_counterparts", n ? static_cast<double>(pairs) / static_cast<double>(n) : 0.0}});
  }
  json out = {{"instances", split.size()},
              {"question_types", std::move(types)},
              {"real_pairs", total_pairs},
              {"synthetic_per_anchor", split.empty() ? 0 : split.size() - 1}};

  const bool has_concepts =
      !split.empty() && std::all_of(split.begin(), split.end(), [](const auto& i) { return i.latent_concept.has_value(); });
  if (has_concepts && split.size() > 1) {
    std::map<std::int64_t, std::size_t> concept_counts;
    for (const auto& inst : split) ++concept_counts[*inst.latent_concept];
    double same = 0.0;
    for (const auto& inst : split) same += static_cast<double>(concept_counts[*inst.latent_concept] - 1);
    const double n = static_cast<double>(split.size());
    out["synthetic_same_concept_rate"] = same / (n * (n - 1.0));
  }
  return out.dump(2);
}

}  // namespace dvqa::cp
