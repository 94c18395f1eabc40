#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "data/synthetic.hpp"
#include "losses/losses.hpp"
#include "metrics/metrics.hpp"
#include "model/model.hpp"

namespace dvqa::train {

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  loss::LossConfig loss;
  std::size_t eval_every = 1;  // epochs between evaluations; 0 evaluates only at the end
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  model::Fusion fusion = model::Fusion::Product;

  // Data source: a dataset file, or the synthetic generator.
  std::string dataset_path;
  data::GenConfig synthetic;
  std::uint64_t data_seed = 0;

  void validate() const;
  // Canonical key=value text; parse_config(to_text()) reproduces the config.
  std::string to_text() const;
};

// key = value lines; '#' starts a comment. Unknown keys and bad values throw
// ConfigError naming the line.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);
// Applies one "key=value" override.
void set_option(TrainConfig& cfg, const std::string& key, const std::string& value);

data::Dataset load_dataset_for(const TrainConfig& cfg);

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double vqa = 0.0;
  double dis = 0.0;
  double total = 0.0;
  std::size_t real_terms = 0;
  std::size_t synthetic_terms = 0;
};

struct EvalResult {
  double overall = 0.0;
  std::map<std::string, double> per_category;
  std::vector<metrics::PredictionRecord> predictions;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_vqa = 0.0;
  double mean_dis = 0.0;
  double mean_total = 0.0;
  std::size_t real_shortages = 0;
  std::size_t synthetic_shortages = 0;
  bool evaluated = false;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct RunRecord {
  TrainConfig config;
  std::uint64_t dataset_hash = 0;
  std::vector<EpochLog> epochs;
  EvalResult final_train;  // predictions dropped
  EvalResult final_test;   // predictions dropped
  std::size_t steps = 0;
  std::size_t forward_passes = 0;
  std::string checkpoint;
  double wall_clock_seconds = 0.0;
  std::vector<StepLog> step_log;
};

// timing=false leaves out the wall clock so equal runs serialize equally.
std::string run_record_json(const RunRecord& rec, bool timing = true);
std::string loss_csv(const std::vector<StepLog>& log);

struct TrainResult {
  model::Model model;
  RunRecord record;
};

// Called after every optimizer step with the step's log entry.
using StepHook = std::function<void(const StepLog&)>;

TrainResult train(const data::Dataset& ds, const TrainConfig& cfg, const StepHook& hook = {});

// Predicted answer = argmax of p; score = soft score of that answer.
EvalResult evaluate(const model::Model& m, const data::Dataset& ds, const data::Split& split,
                    bool keep_predictions = true);

// Writes run.json, loss.csv, model.ckpt and config.txt into out_dir.
void write_run(TrainResult& result, const std::string& out_dir);

struct SweepPoint {
  double ratio = 0.0;  // lambda_dis / lambda_vqa
  std::vector<double> train_accuracy;  // one per seed
  std::vector<double> test_accuracy;
  double mean_train() const;
  double mean_test() const;
};

// Trains base with lambda_dis = ratio * lambda_vqa for every ratio and seed.
std::vector<SweepPoint> lambda_sweep(const data::Dataset& ds, const TrainConfig& base,
                                     const std::vector<double>& ratios, const std::vector<std::uint64_t>& seeds);

}  // namespace dvqa::train
