#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "data/dataset.hpp"

namespace dvqa::metrics {

struct PredictionRecord {
  std::int64_t instance_id = 0;
  std::vector<double> probs;
  std::vector<double> logits;
  std::size_t predicted = 0;  // argmax of probs, lowest index on ties
  std::size_t label = 0;
  std::size_t question_type = 0;
  double score = 0.0;  // soft score of the predicted answer
};

// Lowest index wins ties.
std::size_t argmax(std::span<const double> v);

enum class Source { TrainGt, TestGt, Model };
const char* source_name(Source s);

struct AnswerDistribution {
  std::size_t question_type = 0;
  Source source = Source::Model;
  std::size_t count = 0;                 // instances of the type that were counted
  std::map<std::size_t, double> freq;    // answer index -> frequency, sums to 1 unless empty
  bool empty() const noexcept { return count == 0; }
};

// Distribution of predicted answers over records of one type.
AnswerDistribution answer_distribution(std::span<const PredictionRecord> records, std::size_t type);
// Distribution of ground-truth labels over instances of one type.
AnswerDistribution answer_distribution(std::span<const data::Instance> instances, std::size_t type, Source source);

// Jensen-Shannon divergence in bits over the union support. Both
// distributions must be non-empty.
double js_divergence(const AnswerDistribution& a, const AnswerDistribution& b);

struct ClassDistances {
  std::map<std::size_t, double> intra;   // class -> mean pairwise distance inside it
  std::optional<double> inter;           // mean distance over pairs from different classes
  std::vector<std::string> warnings;     // statistics that were omitted and why

  std::optional<double> mean_intra() const;
  // inter / mean_intra when both exist and mean_intra > 0.
  std::optional<double> ratio() const;
};

// Euclidean distances among vectors grouped by label. Classes with fewer
// than two members get no intra statistic; fewer than two classes leave
// inter unset.
ClassDistances class_distances(std::span<const std::vector<double>> vectors, std::span<const std::size_t> labels);
// Over the answer-space vectors of one question type.
ClassDistances class_distances(std::span<const PredictionRecord> records, std::size_t type, bool use_logits = false);

// Top-two principal-component scores of the rows. Each component's sign is
// fixed so its largest-magnitude loading is positive.
std::vector<std::pair<double, double>> project_2d(std::span<const std::vector<double>> rows);

// CSV: id,label,predicted,p_0..p_{A-1},pc1,pc2 for records of one type.
void export_answer_space(std::span<const PredictionRecord> records, std::size_t type, const std::string& path,
                         bool use_logits = false);

// Grouped horizontal bars: one group per answer, one bar per distribution.
// legend names the distributions; missing entries fall back to the source.
std::string distribution_svg(const std::vector<AnswerDistribution>& dists, const std::vector<std::string>& legend,
                             const data::AnswerVocab& answers, const std::string& title);

struct TypeAnalysis {
  std::size_t question_type = 0;
  std::string name;
  AnswerDistribution train_gt, test_gt, model;
  std::optional<double> js_model_test;
  std::optional<double> js_model_train;
  ClassDistances distances;
};

struct Analysis {
  std::vector<TypeAnalysis> types;
  // Averages over types where the statistic exists.
  double mean_js_model_test = 0.0;
  double mean_js_model_train = 0.0;
  double mean_distance_ratio = 0.0;
  double mean_intra = 0.0;
  double mean_inter = 0.0;
};

// Test-split records against the dataset's train and test ground truth.
Analysis analyze(const data::Dataset& ds, std::span<const PredictionRecord> test_records);

}  // namespace dvqa::metrics
