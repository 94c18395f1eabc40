#include "train/analyze.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "common/error.hpp"

namespace dvqa::train {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string file_safe(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out.empty() ? "_" : out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

json distances_json(const metrics::ClassDistances& d, const data::AnswerVocab& answers) {
  json intra = json::object();
  for (const auto& [c, v] : d.intra) intra[answers.at(c)] = v;
  json j = {{"intra", std::move(intra)}, {"warnings", d.warnings}};
  j["inter"] = d.inter ? json(*d.inter) : json(nullptr);
  const auto mi = d.mean_intra();
  j["mean_intra"] = mi ? json(*mi) : json(nullptr);
  const auto r = d.ratio();
  j["inter_intra_ratio"] = r ? json(*r) : json(nullptr);
  return j;
}

}  // namespace

data::Dataset dataset_for_checkpoint(const std::string& metadata_json) {
  const json meta = json::parse(metadata_json);
  if (!meta.contains("config")) throw DataError("checkpoint metadata has no training config");
  return load_dataset_for(parse_config(meta.at("config").get<std::string>()));
}

LoadedRun load_run(const std::string& dir, const std::string& label) {
  const fs::path d(dir);
  auto loaded = model::load_checkpoint((d / "model.ckpt").string());
  const json meta = json::parse(loaded.metadata_json);
  if (!meta.contains("config")) throw DataError(dir + ": checkpoint metadata has no training config");
  return {label, parse_config(meta.at("config").get<std::string>()), std::move(loaded.model),
          meta.value("dataset_hash", "")};
}

std::string analyze_runs(const std::vector<std::string>& dirs, const std::vector<std::string>& labels,
                         const std::string& out_dir, bool svg, const data::Dataset* dataset_override) {
  if (dirs.empty()) throw UsageError("analyze needs at least one run directory");
  if (dirs.size() != labels.size()) throw UsageError("analyze: one label per run directory");
  std::vector<LoadedRun> runs;
  for (std::size_t i = 0; i < dirs.size(); ++i) runs.push_back(load_run(dirs[i], labels[i]));

  data::Dataset ds = dataset_override ? *dataset_override : load_dataset_for(runs.front().config);
  std::ostringstream hash;
  hash << std::hex << ds.content_hash();
  for (const auto& r : runs) {
    if (!r.dataset_hash.empty() && r.dataset_hash != hash.str()) {
      throw DataError("run '" + r.label + "' was trained on a different dataset (" + r.dataset_hash + " vs " +
                      hash.str() + ")");
    }
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  const fs::path out(out_dir);

  std::vector<RunAnalysis> results;
  std::vector<std::vector<metrics::PredictionRecord>> predictions;
  for (const auto& r : runs) {
    EvalResult ev = evaluate(r.model, ds, ds.test, true);
    results.push_back({r.label, metrics::analyze(ds, ev.predictions), ev.overall});
    predictions.push_back(std::move(ev.predictions));
  }

  json divergence = json::object();
  json distances = json::object();
  json summary = json::object();
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& a = results[k].analysis;
    json div_types = json::object();
    json dist_types = json::object();
    for (const auto& t : a.types) {
      json dj = json::object();
      dj["js_to_test_gt"] = t.js_model_test ? json(*t.js_model_test) : json(nullptr);
      dj["js_to_train_gt"] = t.js_model_train ? json(*t.js_model_train) : json(nullptr);
      div_types[t.name] = std::move(dj);
      dist_types[t.name] = distances_json(t.distances, ds.answers);
      if (!predictions[k].empty()) {
        bool any = false;
        for (const auto& p : predictions[k]) any = any || p.question_type == t.question_type;
        if (any) {
          metrics::export_answer_space(
              predictions[k], t.question_type,
              (out / ("answer_space_" + file_safe(results[k].label) + "_" + file_safe(t.name) + ".csv")).string());
        }
      }
    }
    divergence[results[k].label] = {{"mean_js_to_test_gt", a.mean_js_model_test},
                                    {"mean_js_to_train_gt", a.mean_js_model_train},
                                    {"per_type", std::move(div_types)}};
    distances[results[k].label] = {{"mean_intra", a.mean_intra},
                                   {"mean_inter", a.mean_inter},
                                   {"mean_inter_intra_ratio", a.mean_distance_ratio},
                                   {"per_type", std::move(dist_types)}};
    summary[results[k].label] = {{"test_accuracy", results[k].test_accuracy},
                                 {"mean_js_to_test_gt", a.mean_js_model_test},
                                 {"mean_inter_intra_ratio", a.mean_distance_ratio}};
  }
  write_text(out / "divergence.json", divergence.dump(2) + "\n");
  write_text(out / "class_distances.json", distances.dump(2) + "\n");

  const auto& types = results.front().analysis.types;
  for (std::size_t ti = 0; ti < types.size(); ++ti) {
    const auto& t = types[ti];
    std::vector<metrics::AnswerDistribution> dists{t.train_gt, t.test_gt};
    std::vector<std::string> legend{"train-gt", "test-gt"};
    for (const auto& r : results) {
      dists.push_back(r.analysis.types[ti].model);
      legend.push_back(r.label);
    }
    std::set<std::size_t> support;
    for (const auto& d : dists) {
      for (const auto& [a, f] : d.freq) support.insert(a);
    }
    std::ostringstream csv;
    csv.precision(17);
    csv << "answer,train_gt,test_gt";
    for (const auto& r : results) csv << ',' << r.label;
    csv << '\n';
    for (std::size_t a : support) {
      csv << ds.answers.at(a);
      for (const auto& d : dists) {
        const auto it = d.freq.find(a);
        csv << ',' << (it == d.freq.end() ? 0.0 : it->second);
      }
      csv << '\n';
    }
    write_text(out / ("distribution_" + file_safe(t.name) + ".csv"), csv.str());
    if (svg) {
      write_text(out / ("distribution_" + file_safe(t.name) + ".svg"),
                 metrics::distribution_svg(dists, legend, ds.answers, "answer distribution: " + t.name));
    }
  }
  return summary.dump(2);
}

}  // namespace dvqa::train
