#pragma once

#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "metrics/metrics.hpp"
#include "model/model.hpp"
#include "train/train.hpp"

namespace dvqa::train {

// A finished run directory: its config, its model and the test predictions.
struct LoadedRun {
  std::string label;
  TrainConfig config;
  model::Model model;
  std::string dataset_hash;
};

LoadedRun load_run(const std::string& dir, const std::string& label);

// Rebuilds the dataset a checkpoint was trained on from its stored config.
data::Dataset dataset_for_checkpoint(const std::string& metadata_json);

struct RunAnalysis {
  std::string label;
  metrics::Analysis analysis;
  double test_accuracy = 0.0;
};

// Evaluates every run on the shared test split and writes into out_dir:
//   distribution_<type>.csv   answer frequencies: train-gt, test-gt, one column per run
//   distribution_<type>.svg   the same as bars (when svg is set)
//   divergence.json           JS divergence of each run's predictions to test-gt and train-gt
//   class_distances.json      intra/inter answer-space distances per type and run
//   answer_space_<label>_<type>.csv
// All runs must share one dataset. Returns the summary JSON.
std::string analyze_runs(const std::vector<std::string>& dirs, const std::vector<std::string>& labels,
                         const std::string& out_dir, bool svg, const data::Dataset* dataset_override = nullptr);

}  // namespace dvqa::train
