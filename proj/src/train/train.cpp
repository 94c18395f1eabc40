#include "train/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <sstream>

#include "common/error.hpp"
#include "counterparts/counterparts.hpp"
#include "diffengine/optim.hpp"

namespace dvqa::train {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that parses back to the same double.
std::string fmt(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream s(value);
  T out{};
  s >> out;
  if (!s || !s.eof()) throw ConfigError("bad value '" + value + "' for " + key);
  if constexpr (std::is_unsigned_v<T>) {
    if (trim(value).starts_with("-")) throw ConfigError("negative value '" + value + "' for " + key);
  }
  return out;
}

const std::uint64_t kSamplerStream = 0x9E3779B97F4A7C15ULL;

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2; a batch of one holds no counterparts");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("embed_dim and hidden_dim must be positive");
  loss.validate();
  if (dataset_path.empty()) synthetic.validate();
}

void set_option(TrainConfig& c, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "epochs") c.epochs = parse_number<std::size_t>(key, v);
  else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, v);
  else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, v);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "optimizer") {
    if (v == "adam") c.optimizer = OptimizerKind::Adam;
    else if (v == "sgd") c.optimizer = OptimizerKind::Sgd;
    else throw ConfigError("unknown optimizer '" + v + "' (adam|sgd)");
  }
  else if (key == "lambda_vqa") c.loss.lambda_vqa = parse_number<double>(key, v);
  else if (key == "lambda_dis") c.loss.lambda_dis = parse_number<double>(key, v);
  else if (key == "variant") c.loss.variant = loss::parse_variant(v);
  else if (key == "factor_policy") c.loss.policy = loss::parse_policy(v);
  else if (key == "normalization") c.loss.normalization = loss::parse_normalization(v);
  else if (key == "n_real") c.loss.n_real = parse_number<std::size_t>(key, v);
  else if (key == "n_synthetic") c.loss.n_synthetic = parse_number<std::size_t>(key, v);
  else if (key == "eval_every") c.eval_every = parse_number<std::size_t>(key, v);
  else if (key == "embed_dim") c.embed_dim = parse_number<std::size_t>(key, v);
  else if (key == "hidden_dim") c.hidden_dim = parse_number<std::size_t>(key, v);
  else if (key == "fusion") c.fusion = model::parse_fusion(v);
  else if (key == "dataset") c.dataset_path = v;
  else if (key == "data_seed") c.data_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "synthetic.num_types") c.synthetic.num_types = parse_number<std::size_t>(key, v);
  else if (key == "synthetic.answers_per_type") c.synthetic.answers_per_type = parse_number<std::size_t>(key, v);
  else if (key == "synthetic.train_size") c.synthetic.train_size = parse_number<std::size_t>(key, v);
  else if (key == "synthetic.test_size") c.synthetic.test_size = parse_number<std::size_t>(key, v);
  else if (key == "synthetic.bias") c.synthetic.bias = parse_number<double>(key, v);
  else if (key == "synthetic.visual_noise") c.synthetic.visual_noise = parse_number<double>(key, v);
  else if (key == "synthetic.image_dim") c.synthetic.image_dim = parse_number<std::size_t>(key, v);
  else if (key == "synthetic.filler_tokens") c.synthetic.filler_tokens = parse_number<std::size_t>(key, v);
  else if (key == "synthetic.test_prior") c.synthetic.test_prior = data::parse_test_prior(v);
  else throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    try {
      set_option(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string TrainConfig::to_text() const {
  std::ostringstream s;
  s << "epochs = " << epochs << '\n'
    << "batch_size = " << batch_size << '\n'
    << "learning_rate = " << fmt(learning_rate) << '\n'
    << "seed = " << seed << '\n'
    << "optimizer = " << (optimizer == OptimizerKind::Adam ? "adam" : "sgd") << '\n'
    << "lambda_vqa = " << fmt(loss.lambda_vqa) << '\n'
    << "lambda_dis = " << fmt(loss.lambda_dis) << '\n'
    << "variant = " << loss::variant_name(loss.variant) << '\n'
    << "factor_policy = " << loss::policy_name(loss.policy) << '\n'
    << "normalization = " << loss::normalization_name(loss.normalization) << '\n'
    << "n_real = " << loss.n_real << '\n'
    << "n_synthetic = " << loss.n_synthetic << '\n'
    << "eval_every = " << eval_every << '\n'
    << "embed_dim = " << embed_dim << '\n'
    << "hidden_dim = " << hidden_dim << '\n'
    << "fusion = " << model::fusion_name(fusion) << '\n';
  if (!dataset_path.empty()) {
    s << "dataset = " << dataset_path << '\n';
  } else {
    s << "data_seed = " << data_seed << '\n'
      << "synthetic.num_types = " << synthetic.num_types << '\n'
      << "synthetic.answers_per_type = " << synthetic.answers_per_type << '\n'
      << "synthetic.train_size = " << synthetic.train_size << '\n'
      << "synthetic.test_size = " << synthetic.test_size << '\n'
      << "synthetic.bias = " << fmt(synthetic.bias) << '\n'
      << "synthetic.visual_noise = " << fmt(synthetic.visual_noise) << '\n'
      << "synthetic.image_dim = " << synthetic.image_dim << '\n'
      << "synthetic.filler_tokens = " << synthetic.filler_tokens << '\n'
      << "synthetic.test_prior = " << data::test_prior_name(synthetic.test_prior) << '\n';
  }
  return s.str();
}

data::Dataset load_dataset_for(const TrainConfig& cfg) {
  if (!cfg.dataset_path.empty()) return data::load_dataset(cfg.dataset_path);
  return data::generate_synthetic(cfg.synthetic, cfg.data_seed);
}

namespace {

struct BatchData {
  std::vector<std::vector<std::size_t>> tokens;
  ad::Tensor images;
  ad::Tensor targets;
  std::vector<std::size_t> labels;
};

BatchData gather(const data::Dataset& ds, const data::Split& split, std::span<const std::size_t> positions) {
  BatchData b;
  const std::size_t n = positions.size();
  b.images = ad::Tensor::zeros(n, ds.image_dim);
  b.targets = ad::Tensor::zeros(n, ds.answers.size());
  for (std::size_t r = 0; r < n; ++r) {
    const data::Instance& inst = split.instances[positions[r]];
    b.tokens.push_back(inst.question);
    b.labels.push_back(inst.label);
    const auto img = ds.image(inst.image_id);
    std::copy(img.begin(), img.end(), b.images.row(r).begin());
    for (const auto& a : inst.answers) b.targets(r, a.answer) = a.score;
  }
  return b;
}

std::unique_ptr<ad::Optimizer> make_optimizer(const TrainConfig& cfg, std::vector<ad::Parameter*> params) {
  if (cfg.optimizer == OptimizerKind::Sgd) return std::make_unique<ad::Sgd>(std::move(params), cfg.learning_rate);
  ad::AdamOptions opts;
  opts.lr = cfg.learning_rate;
  return std::make_unique<ad::Adam>(std::move(params), opts);
}

json eval_json(const EvalResult& r) { return {{"overall", r.overall}, {"per_category", r.per_category}}; }

}  // namespace

EvalResult evaluate(const model::Model& m, const data::Dataset& ds, const data::Split& split, bool keep_predictions) {
  EvalResult out;
  const std::size_t n = split.instances.size();
  if (n == 0) return out;
  std::map<std::string, std::pair<double, std::size_t>> cats;
  double total = 0.0;
  const std::size_t chunk = 1024;
  std::vector<std::size_t> positions;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t end = std::min(n, start + chunk);
    positions.resize(end - start);
    std::iota(positions.begin(), positions.end(), start);
    const BatchData b = gather(ds, split, positions);
    const auto pred = m.predict(b.tokens, b.images);
    for (std::size_t r = 0; r < positions.size(); ++r) {
      const data::Instance& inst = split.instances[positions[r]];
      const auto p = pred.probs.row(r);
      const std::size_t k = metrics::argmax(p);
      const double score = inst.score_of(k);
      total += score;
      auto& c = cats[inst.category];
      c.first += score;
      ++c.second;
      if (keep_predictions) {
        metrics::PredictionRecord rec;
        rec.instance_id = inst.id;
        rec.probs.assign(p.begin(), p.end());
        const auto z = pred.logits.row(r);
        rec.logits.assign(z.begin(), z.end());
        rec.predicted = k;
        rec.label = inst.label;
        rec.question_type = inst.question_type;
        rec.score = score;
        out.predictions.push_back(std::move(rec));
      }
    }
  }
  out.overall = total / static_cast<double>(n);
  for (const auto& [name, c] : cats) out.per_category[name] = c.first / static_cast<double>(c.second);
  return out;
}

TrainResult train(const data::Dataset& ds, const TrainConfig& cfg, const StepHook& hook) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const data::Split& split = ds.train;
  if (split.instances.empty()) throw DataError("train split is empty");

  model::ModelConfig mc;
  mc.question_vocab = ds.tokens.size();
  mc.image_dim = ds.image_dim;
  mc.num_answers = ds.answers.size();
  mc.embed_dim = cfg.embed_dim;
  mc.hidden_dim = cfg.hidden_dim;
  mc.fusion = cfg.fusion;
  mc.seed = cfg.seed;
  TrainResult res{model::Model(mc), {}};
  model::Model& m = res.model;
  RunRecord& rec = res.record;
  rec.config = cfg;
  rec.dataset_hash = ds.content_hash();

  const auto params = m.parameters();
  auto opt = make_optimizer(cfg, params);
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 sample_rng(cfg.seed ^ kSamplerStream);
  const bool use_dm = cfg.loss.lambda_dis != 0.0;

  std::vector<std::size_t> order(split.instances.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLog ep;
    ep.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const BatchData b = gather(ds, split, batch);

      ad::Tape tape;
      const model::BoundParams bp = m.bind(tape);
      const model::Forward fw = m.forward(bp, b.tokens, b.images);
      loss::BatchProbs probs{fw.probs, {}, false, b.labels};
      cp::CounterpartBatchPlan plan;
      if (use_dm) {
        const auto members = cp::batch_members(split.instances, batch);
        plan = cp::sample_counterparts(members, cfg.loss.n_real, cfg.loss.n_synthetic, sample_rng);
        const auto pairs = loss::synthetic_pairs(plan);
        if (!pairs.anchors.empty()) {
          probs.synthetic_probs = m.pair_probs(bp, fw, pairs.donors, pairs.anchors);
          probs.has_synthetic = true;
        }
        ep.real_shortages += plan.real_shortages;
        ep.synthetic_shortages += plan.synthetic_shortages;
      }
      loss::TotalLoss tl;
      try {
        tl = loss::total_loss(fw.logits, b.targets, probs, plan, cfg.loss);
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step + 1) + ": " + e.what());
      }

      StepLog log{++step, epoch, tl.vqa, tl.dis, tl.total.item(), tl.real_terms, tl.synthetic_terms};
      if (!std::isfinite(log.total) || !std::isfinite(log.vqa) || !std::isfinite(log.dis)) {
        throw NumericError("non-finite loss at step " + std::to_string(step) + ": L_vqa=" + fmt(log.vqa) +
                           " L_dis=" + fmt(log.dis) + " total=" + fmt(log.total));
      }
      tape.backward(tl.total);
      opt->step();
      ad::zero_grad(params);

      ep.mean_vqa += log.vqa;
      ep.mean_dis += log.dis;
      ep.mean_total += log.total;
      ++batches;
      rec.step_log.push_back(log);
      if (hook) hook(log);
    }
    ep.mean_vqa /= static_cast<double>(batches);
    ep.mean_dis /= static_cast<double>(batches);
    ep.mean_total /= static_cast<double>(batches);
    if (cfg.eval_every > 0 && epoch % cfg.eval_every == 0 && epoch != cfg.epochs) {
      ep.evaluated = true;
      ep.train_accuracy = evaluate(m, ds, ds.train, false).overall;
      ep.test_accuracy = ds.test.instances.empty() ? 0.0 : evaluate(m, ds, ds.test, false).overall;
    }
    rec.epochs.push_back(ep);
  }
  rec.final_train = evaluate(m, ds, ds.train, false);
  rec.final_test = evaluate(m, ds, ds.test, false);
  rec.epochs.back().evaluated = true;
  rec.epochs.back().train_accuracy = rec.final_train.overall;
  rec.epochs.back().test_accuracy = rec.final_test.overall;
  rec.steps = step;
  rec.forward_passes = m.forward_passes();
  rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return res;
}

std::string run_record_json(const RunRecord& rec, bool timing) {
  json cfg = json::object();
  std::istringstream lines(rec.config.to_text());
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    cfg[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  json epochs = json::array();
  for (const auto& e : rec.epochs) {
    json j = {{"epoch", e.epoch},
              {"mean_l_vqa", e.mean_vqa},
              {"mean_l_dis", e.mean_dis},
              {"mean_total", e.mean_total},
              {"real_shortages", e.real_shortages},
              {"synthetic_shortages", e.synthetic_shortages}};
    if (e.evaluated) {
      j["train_accuracy"] = e.train_accuracy;
      j["test_accuracy"] = e.test_accuracy;
    }
    epochs.push_back(std::move(j));
  }
  std::ostringstream hash;
  hash << std::hex << rec.dataset_hash;
  json out = {{"format", "dvqa-run"},
              {"version", 1},
              {"config", std::move(cfg)},
              {"dataset_hash", hash.str()},
              {"epochs", std::move(epochs)},
              {"final", {{"train", eval_json(rec.final_train)}, {"test", eval_json(rec.final_test)}}},
              {"steps", rec.steps},
              {"forward_passes", rec.forward_passes},
              {"checkpoint", rec.checkpoint}};
  if (timing) out["wall_clock_seconds"] = rec.wall_clock_seconds;
  return out.dump(2);
}

std::string loss_csv(const std::vector<StepLog>& log) {
  std::ostringstream s;
  s.precision(17);
  s << "step,epoch,l_vqa,l_dis,total,real_terms,synthetic_terms\n";
  for (const auto& l : log) {
    s << l.step << ',' << l.epoch << ',' << l.vqa << ',' << l.dis << ',' << l.total << ',' << l.real_terms << ','
      << l.synthetic_terms << '\n';
  }
  return s.str();
}

void write_run(TrainResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  const fs::path dir(out_dir);
  RunRecord& rec = result.record;
  rec.checkpoint = "model.ckpt";
  std::ostringstream hash;
  hash << std::hex << rec.dataset_hash;
  const json meta = {{"config", rec.config.to_text()}, {"dataset_hash", hash.str()}};
  model::save_checkpoint(result.model, (dir / rec.checkpoint).string(), meta.dump());
  auto write = [&](const char* name, const std::string& text) {
    const auto path = (dir / name).string();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed for " + path);
  };
  write("run.json", run_record_json(rec) + "\n");
  write("loss.csv", loss_csv(rec.step_log));
  write("config.txt", rec.config.to_text());
}

double SweepPoint::mean_train() const {
  return train_accuracy.empty() ? 0.0
                                : std::accumulate(train_accuracy.begin(), train_accuracy.end(), 0.0) /
                                      static_cast<double>(train_accuracy.size());
}

double SweepPoint::mean_test() const {
  return test_accuracy.empty() ? 0.0
                               : std::accumulate(test_accuracy.begin(), test_accuracy.end(), 0.0) /
                                     static_cast<double>(test_accuracy.size());
}

std::vector<SweepPoint> lambda_sweep(const data::Dataset& ds, const TrainConfig& base,
                                     const std::vector<double>& ratios, const std::vector<std::uint64_t>& seeds) {
  std::vector<SweepPoint> out;
  for (double ratio : ratios) {
    SweepPoint pt;
    pt.ratio = ratio;
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      cfg.eval_every = 0;
      cfg.loss.lambda_dis = ratio * base.loss.lambda_vqa;
      const TrainResult r = train(ds, cfg);
      pt.train_accuracy.push_back(r.record.final_train.overall);
      pt.test_accuracy.push_back(r.record.final_test.overall);
    }
    out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace dvqa::train
