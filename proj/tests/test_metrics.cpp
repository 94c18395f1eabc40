#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "common/error.hpp"
#include "metrics/metrics.hpp"

using namespace dvqa;
using namespace dvqa::metrics;

namespace {

PredictionRecord record(std::int64_t id, std::vector<double> p, std::size_t label, std::size_t type = 0) {
  PredictionRecord r;
  r.instance_id = id;
  r.predicted = argmax(p);
  r.probs = std::move(p);
  r.logits = r.probs;
  r.label = label;
  r.question_type = type;
  return r;
}

AnswerDistribution dist(std::map<std::size_t, double> f) {
  AnswerDistribution d;
  d.count = 1;
  d.freq = std::move(f);
  return d;
}

double sum(const AnswerDistribution& d) {
  double s = 0.0;
  for (const auto& [a, f] : d.freq) s += f;
  return s;
}

double euclid(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(Argmax, LowestIndexOnTies) {
  const std::vector<double> v{0.2, 0.7, 0.7, 0.1};
  EXPECT_EQ(argmax(v), 1u);
}

TEST(AnswerDistribution, PointMassAndAlternating) {
  std::vector<PredictionRecord> all_two, alternating;
  for (int i = 0; i < 6; ++i) {
    all_two.push_back(record(i, {0.1, 0.9, 0.2}, 0));
    alternating.push_back(record(i, i % 2 ? std::vector<double>{0.8, 0.1, 0.0} : std::vector<double>{0.1, 0.2, 0.9}, 0));
  }
  const auto d = answer_distribution(all_two, 0);
  ASSERT_EQ(d.freq.size(), 1u);
  EXPECT_EQ(d.freq.at(1), 1.0);
  const auto e = answer_distribution(alternating, 0);
  EXPECT_EQ(e.freq.at(0), 0.5);
  EXPECT_EQ(e.freq.at(2), 0.5);
}

TEST(AnswerDistribution, EmptyTypeIsMarkedEmpty) {
  std::vector<PredictionRecord> recs{record(0, {1.0, 0.0}, 0, 3)};
  const auto d = answer_distribution(recs, 5);
  EXPECT_TRUE(d.empty());
  EXPECT_TRUE(d.freq.empty());
  EXPECT_THROW(js_divergence(d, answer_distribution(recs, 3)), UsageError);
}

TEST(AnswerDistribution, AlwaysSumsToOne) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> type(0, 3);
  std::vector<PredictionRecord> recs;
  std::vector<data::Instance> insts;
  for (int i = 0; i < 997; ++i) {
    recs.push_back(record(i, {u(rng), u(rng), u(rng), u(rng), u(rng)}, 0, type(rng)));
    data::Instance inst;
    inst.question_type = recs.back().question_type;
    inst.label = static_cast<std::size_t>(u(rng) * 7);
    insts.push_back(inst);
  }
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_NEAR(sum(answer_distribution(recs, t)), 1.0, 1e-9);
    EXPECT_NEAR(sum(answer_distribution(insts, t, Source::TestGt)), 1.0, 1e-9);
  }
}

TEST(JsDivergence, Examples) {
  const auto a = dist({{0, 0.5}, {1, 0.5}});
  const auto b = dist({{0, 1.0}});
  // Direct evaluation with M = (3/4, 1/4).
  const double oracle =
      0.5 * (0.5 * std::log2(0.5 / 0.75) + 0.5 * std::log2(0.5 / 0.25)) + 0.5 * (1.0 * std::log2(1.0 / 0.75));
  EXPECT_NEAR(js_divergence(a, b), oracle, 1e-12);
  EXPECT_NEAR(js_divergence(a, b), 0.311278, 1e-6);
  EXPECT_NEAR(js_divergence(b, a), js_divergence(a, b), 1e-15);
  EXPECT_EQ(js_divergence(a, a), 0.0);
  EXPECT_NEAR(js_divergence(dist({{3, 1.0}}), dist({{4, 1.0}})), 1.0, 1e-15);
}

TEST(JsDivergence, BoundedOnRandomPairs) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int r = 0; r < 200; ++r) {
    std::map<std::size_t, double> f, g;
    double sf = 0.0, sg = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
      if (u(rng) < 0.7) sf += f[k] = u(rng);
      if (u(rng) < 0.7) sg += g[k] = u(rng);
    }
    if (sf == 0.0 || sg == 0.0) continue;
    for (auto& [k, v] : f) v /= sf;
    for (auto& [k, v] : g) v /= sg;
    const double js = js_divergence(dist(f), dist(g));
    EXPECT_GE(js, 0.0);
    EXPECT_LE(js, 1.0 + 1e-12);
  }
}

TEST(ClassDistances, TwoClassExample) {
  const std::vector<std::vector<double>> v{{0, 0}, {0, 0}, {1, 0}, {1, 0}};
  const std::vector<std::size_t> labels{0, 0, 1, 1};
  const auto d = class_distances(v, labels);
  EXPECT_EQ(d.intra.at(0), 0.0);
  EXPECT_EQ(d.intra.at(1), 0.0);
  ASSERT_TRUE(d.inter);
  EXPECT_EQ(*d.inter, 1.0);
  EXPECT_FALSE(d.ratio());  // zero intra
}

TEST(ClassDistances, MatchesBruteForceOracle) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<std::size_t> cls(0, 3);
  const std::size_t n = 150;
  std::vector<std::vector<double>> v(n, std::vector<double>(6));
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : v[i]) x = g(rng);
    labels[i] = cls(rng);
  }
  std::map<std::size_t, std::pair<double, double>> intra;
  double inter = 0.0, inter_n = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = euclid(v[i], v[j]);
      if (labels[i] == labels[j]) {
        intra[labels[i]].first += d;
        intra[labels[i]].second += 1.0;
      } else {
        inter += d;
        inter_n += 1.0;
      }
    }
  }
  const auto d = class_distances(v, labels);
  for (const auto& [c, acc] : intra) EXPECT_NEAR(d.intra.at(c), acc.first / acc.second, 1e-12);
  EXPECT_NEAR(*d.inter, inter / inter_n, 1e-12);

  // Relabeling class ids leaves the statistics unchanged.
  std::vector<std::size_t> relabeled(n);
  for (std::size_t i = 0; i < n; ++i) relabeled[i] = 10 + (3 - labels[i]);
  const auto r = class_distances(v, relabeled);
  EXPECT_NEAR(*r.inter, *d.inter, 1e-12);
  EXPECT_NEAR(*r.mean_intra(), *d.mean_intra(), 1e-12);
}

TEST(ClassDistances, DegenerateClassesWarn) {
  const std::vector<std::vector<double>> v{{0.0}, {1.0}, {3.0}};
  const std::vector<std::size_t> labels{0, 0, 1};
  const auto d = class_distances(v, labels);
  EXPECT_EQ(d.intra.count(1), 0u);
  EXPECT_FALSE(d.warnings.empty());
  EXPECT_NEAR(*d.inter, 2.5, 1e-15);
  const std::vector<std::size_t> one{0, 0, 0};
  const auto e = class_distances(v, one);
  EXPECT_FALSE(e.inter);
  EXPECT_FALSE(e.warnings.empty());
}

TEST(Projection, PreservesDistancesOfCentered2D) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> rows(12, std::vector<double>(2));
  double mx = 0.0, my = 0.0;
  for (auto& r : rows) {
    r[0] = 3.0 * g(rng);
    r[1] = g(rng);
    mx += r[0];
    my += r[1];
  }
  for (auto& r : rows) {
    r[0] -= mx / 12.0;
    r[1] -= my / 12.0;
  }
  const auto proj = project_2d(rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      const double before = euclid(rows[i], rows[j]);
      const double after = std::hypot(proj[i].first - proj[j].first, proj[i].second - proj[j].second);
      EXPECT_NEAR(before, after, 1e-10);
    }
  }
}

TEST(Projection, DeterministicAndSignFixed) {
  std::vector<std::vector<double>> rows{{1, 0, 0}, {0, 2, 0}, {0, 0, 3}, {1, 1, 1}};
  EXPECT_EQ(project_2d(rows), project_2d(rows));
  auto negated = rows;
  for (auto& r : negated) {
    for (auto& x : r) x = -x;
  }
  // Negating the data flips the scores; the fixed loading sign keeps them consistent.
  const auto a = project_2d(rows), b = project_2d(negated);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i].first, -b[i].first, 1e-12);
}

TEST(Export, ShapeOfAnswerSpaceCsv) {
  const auto path = (std::filesystem::temp_directory_path() / "dvqa_test_export.csv").string();
  std::vector<PredictionRecord> recs{record(7, {0.1, 0.2, 0.3, 0.4}, 3), record(8, {0.9, 0.1, 0.0, 0.2}, 0),
                                     record(9, {0.3, 0.3, 0.6, 0.1}, 1), record(10, {0.5, 0.5, 0.5, 0.5}, 1, 2)};
  export_answer_space(recs, 0, path);
  const auto rows = read_csv(path);
  ASSERT_EQ(rows.size(), 4u);  // header + three records of type 0
  EXPECT_EQ(rows[0], (std::vector<std::string>{"id", "label", "predicted", "p_0", "p_1", "p_2", "p_3", "pc1", "pc2"}));
  for (std::size_t r = 1; r < rows.size(); ++r) EXPECT_EQ(rows[r].size(), 9u);
  EXPECT_EQ(rows[1][0], "7");
  const auto first = read_csv(path);
  export_answer_space(recs, 0, path);
  EXPECT_EQ(read_csv(path), first);
  std::filesystem::remove(path);
  EXPECT_THROW(export_answer_space(recs, 0, "/nonexistent-dir/x.csv"), IoError);
}

TEST(Svg, RendersOneBarPerEntry) {
  data::AnswerVocab vocab({"yes", "no"});
  AnswerDistribution a = dist({{0, 0.8}, {1, 0.2}});
  a.source = Source::TrainGt;
  AnswerDistribution b = dist({{0, 0.1}, {1, 0.9}});
  b.source = Source::TestGt;
  const auto svg = distribution_svg({a, b}, {"train", "test"}, vocab, "is this");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  std::size_t bars = 0;
  for (std::size_t pos = 0; (pos = svg.find("<rect class=\"bar\"", pos)) != std::string::npos; ++pos) ++bars;
  EXPECT_EQ(bars, 4u);
}
