#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>
#include <set>

#include "counterparts/counterparts.hpp"
#include "data/synthetic.hpp"

using namespace dvqa;
using data::Instance;

namespace {

Instance inst(std::int64_t id, std::size_t type, std::size_t label) {
  Instance i;
  i.id = id;
  i.image_id = id;
  i.question = {0};
  i.question_type = type;
  i.answers = {{label, 1.0}};
  i.label = label;
  return i;
}

std::vector<Instance> random_split(std::mt19937_64& rng, std::size_t n, std::size_t types, std::size_t answers) {
  std::uniform_int_distribution<std::size_t> t(0, types - 1), a(0, answers - 1), extra(0, 2);
  std::uniform_real_distribution<double> s(0.1, 1.0);
  std::vector<Instance> out;
  for (std::size_t i = 0; i < n; ++i) {
    Instance x = inst(static_cast<std::int64_t>(i), t(rng), 0);
    // Sparse soft scores with occasional ties so the argmax rule matters.
    std::map<std::size_t, double> scores;
    const std::size_t k = 1 + extra(rng);
    for (std::size_t r = 0; r < k; ++r) scores[a(rng)] = extra(rng) == 0 ? 1.0 : s(rng);
    x.answers.clear();
    for (const auto& [ans, sc] : scores) x.answers.push_back({ans, sc});
    x.label = data::argmax_answer(x.answers);
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace

TEST(Index, ThreeInstanceExample) {
  const std::vector<Instance> split{inst(0, 1, 0), inst(1, 1, 1), inst(2, 2, 0)};
  const auto index = cp::build_sss_index(split);
  EXPECT_EQ(index.real_counterparts(1, 0), (std::vector<std::size_t>{1}));
  EXPECT_TRUE(index.real_counterparts(2, 0).empty());
  EXPECT_EQ(cp::enumerate_sss(0, split).real, (std::vector<std::size_t>{1}));
  EXPECT_TRUE(cp::enumerate_sss(2, split).real.empty());
  EXPECT_EQ(cp::enumerate_sss(2, split).synthetic.size(), 2u);
}

TEST(Index, SingleAnswerTypeHasNoRealCounterparts) {
  const std::vector<Instance> split{inst(0, 3, 5), inst(1, 3, 5), inst(2, 3, 5), inst(3, 4, 1)};
  const auto index = cp::build_sss_index(split);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(index.real_count(3, 5), 0u);
    EXPECT_TRUE(cp::enumerate_sss(i, split).real.empty());
  }
}

TEST(Index, PartitionsTheSplit) {
  std::mt19937_64 rng(3);
  const auto split = random_split(rng, 300, 5, 6);
  const auto index = cp::build_sss_index(split);
  std::size_t total = 0;
  std::vector<int> seen(split.size(), 0);
  for (const auto& [type, lists] : index.by_type()) {
    for (const auto& [answer, positions] : lists) {
      EXPECT_TRUE(std::is_sorted(positions.begin(), positions.end()));
      for (auto p : positions) {
        ++seen[p];
        EXPECT_EQ(split[p].question_type, type);
        EXPECT_EQ(split[p].label, answer);
      }
      total += positions.size();
    }
  }
  EXPECT_EQ(total, split.size());
  EXPECT_EQ(index.size(), split.size());
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Index, MatchesBruteForceOnRandomSplits) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const auto split = random_split(rng, 200, 4, 5);
    const auto index = cp::build_sss_index(split);
    for (std::size_t i = 0; i < split.size(); ++i) {
      const auto brute = cp::enumerate_sss(i, split);
      EXPECT_EQ(index.real_counterparts(split[i].question_type, split[i].label), brute.real) << "anchor " << i;
      EXPECT_EQ(index.real_count(split[i].question_type, split[i].label), brute.real.size());
      EXPECT_EQ(brute.synthetic.size(), split.size() - 1);
    }
  }
}

TEST(Index, RealRelationIsSymmetric) {
  std::mt19937_64 rng(5);
  const auto split = random_split(rng, 120, 3, 4);
  std::vector<std::vector<bool>> rel(split.size(), std::vector<bool>(split.size(), false));
  for (std::size_t i = 0; i < split.size(); ++i) {
    for (auto j : cp::enumerate_sss(i, split).real) rel[i][j] = true;
  }
  for (std::size_t i = 0; i < split.size(); ++i) {
    EXPECT_FALSE(rel[i][i]);
    for (std::size_t j = 0; j < split.size(); ++j) EXPECT_EQ(rel[i][j], rel[j][i]);
  }
}

TEST(Sampler, TwoMemberBatchPairsWithEachOther) {
  const std::vector<cp::BatchMember> batch{{0, 0, 10}, {0, 1, 11}};
  std::mt19937_64 rng(0);
  const auto plan = cp::sample_counterparts(batch, 1, 1, rng);
  EXPECT_EQ(plan.anchors[0].real, (std::vector<std::size_t>{1}));
  EXPECT_EQ(plan.anchors[0].synthetic, (std::vector<std::size_t>{1}));
  EXPECT_EQ(plan.anchors[1].real, (std::vector<std::size_t>{0}));
  EXPECT_EQ(plan.anchors[1].synthetic, (std::vector<std::size_t>{0}));
  EXPECT_EQ(plan.real_terms(), 2u);
  EXPECT_EQ(plan.real_shortages, 0u);
}

TEST(Sampler, LoneTypeTakesNothingAndCountsShortage) {
  const std::vector<cp::BatchMember> batch{{0, 0, 1}, {1, 1, 2}, {1, 2, 3}};
  std::mt19937_64 rng(0);
  const auto plan = cp::sample_counterparts(batch, 1, 5, rng);
  EXPECT_TRUE(plan.anchors[0].real.empty());
  EXPECT_EQ(plan.real_shortages, 1u);
  for (const auto& a : plan.anchors) EXPECT_EQ(a.synthetic.size(), 2u);  // take all available
  EXPECT_EQ(plan.synthetic_shortages, 3u);
}

TEST(Sampler, SameImageIsNeverADonor) {
  const std::vector<cp::BatchMember> batch{{0, 0, 7}, {0, 1, 7}, {0, 2, 8}};
  std::mt19937_64 rng(1);
  for (int r = 0; r < 50; ++r) {
    const auto plan = cp::sample_counterparts(batch, 2, 2, rng);
    EXPECT_EQ(plan.anchors[0].synthetic, (std::vector<std::size_t>{2}));
    EXPECT_EQ(plan.anchors[1].synthetic, (std::vector<std::size_t>{2}));
    EXPECT_EQ(plan.anchors[2].synthetic.size(), 2u);
  }
}

TEST(Sampler, EverySampleIsValid) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::size_t> t(0, 3), a(0, 4), img(0, 40);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<cp::BatchMember> batch(32);
    for (auto& b : batch) b = {t(rng), a(rng), static_cast<std::int64_t>(img(rng))};
    const std::size_t n1 = trial % 4, n2 = (trial / 4) % 4;
    const auto plan = cp::sample_counterparts(batch, n1, n2, rng);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& p = plan.anchors[i];
      EXPECT_LE(p.real.size(), n1);
      EXPECT_LE(p.synthetic.size(), n2);
      std::set<std::size_t> uniq(p.real.begin(), p.real.end());
      EXPECT_EQ(uniq.size(), p.real.size());
      for (auto j : p.real) {
        EXPECT_NE(j, i);
        EXPECT_EQ(batch[j].question_type, batch[i].question_type);
        EXPECT_NE(batch[j].label, batch[i].label);
      }
      for (auto j : p.synthetic) {
        EXPECT_NE(j, i);
        EXPECT_NE(batch[j].image_id, batch[i].image_id);
      }
    }
  }
}

TEST(Sampler, SelectionIsUniformWithinThreeSigma) {
  // Anchor 0 has five real candidates (positions 1..5) and seven donors.
  std::vector<cp::BatchMember> batch{{0, 0, 0}};
  for (std::size_t j = 1; j <= 5; ++j) batch.push_back({0, j, static_cast<std::int64_t>(j)});
  batch.push_back({1, 0, 6});
  batch.push_back({1, 1, 7});
  const std::size_t draws = 100000;
  for (std::size_t n1 : {1u, 2u}) {
    std::vector<double> real(batch.size(), 0.0), syn(batch.size(), 0.0);
    std::mt19937_64 rng(99 + n1);
    for (std::size_t d = 0; d < draws; ++d) {
      const auto plan = cp::sample_counterparts(batch, n1, n1, rng);
      for (auto j : plan.anchors[0].real) real[j] += 1.0;
      for (auto j : plan.anchors[0].synthetic) syn[j] += 1.0;
    }
    auto check = [&](const std::vector<double>& counts, std::size_t lo, std::size_t hi) {
      const double p = static_cast<double>(n1) / static_cast<double>(hi - lo + 1);
      const double mean = p * draws, sigma = std::sqrt(draws * p * (1.0 - p));
      for (std::size_t j = lo; j <= hi; ++j) EXPECT_LE(std::abs(counts[j] - mean), 3.0 * sigma) << "position " << j;
    };
    check(real, 1, 5);
    check(syn, 1, 7);
    EXPECT_EQ(real[6] + real[7], 0.0);
  }
}

TEST(IndexStats, ReportsPerTypeCountsAndSameConceptRate) {
  data::GenConfig g;
  g.train_size = 400;
  g.test_size = 10;
  const auto ds = data::generate_synthetic(g, 2);
  const auto index = cp::build_sss_index(ds.train.instances);
  const auto j = nlohmann::json::parse(cp::index_stats_json(ds, index));
  EXPECT_EQ(j.at("instances").get<std::size_t>(), 400u);
  std::size_t total = 0;
  for (const auto& t : j.at("question_types")) total += t.at("instances").get<std::size_t>();
  EXPECT_EQ(total, 400u);
  EXPECT_TRUE(j.contains("synthetic_same_concept_rate"));
}
