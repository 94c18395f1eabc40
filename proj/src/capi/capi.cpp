#include <cstdlib>
#include <cstring>
#include <new>
#include <nlohmann/json.hpp>
#include <string>

#include "common/error.hpp"
#include "counterparts/counterparts.hpp"
#include "data/ingest.hpp"
#include "dvqa/dvqa.h"
#include "train/analyze.hpp"
#include "train/train.hpp"

struct dvqa_dataset {
  dvqa::data::Dataset ds;
};

struct dvqa_model {
  dvqa::model::Model model;
  std::string metadata_json;
};

namespace {

thread_local std::string last_error;

dvqa_status status_of(dvqa::ErrorKind kind) {
  switch (kind) {
    case dvqa::ErrorKind::Config: return DVQA_ERR_CONFIG;
    case dvqa::ErrorKind::Data: return DVQA_ERR_DATA;
    case dvqa::ErrorKind::Usage: return DVQA_ERR_USAGE;
    case dvqa::ErrorKind::Numeric: return DVQA_ERR_NUMERIC;
    case dvqa::ErrorKind::Io: return DVQA_ERR_IO;
  }
  return DVQA_ERR_INTERNAL;
}

template <class F>
dvqa_status guarded(F&& f) {
  last_error.clear();
  try {
    f();
    return DVQA_OK;
  } catch (const dvqa::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    last_error = e.what();
    return DVQA_ERR_DATA;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return DVQA_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return DVQA_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw dvqa::UsageError(std::string(what) + " must not be null");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* dvqa_last_error(void) { return last_error.c_str(); }

const char* dvqa_status_name(dvqa_status status) {
  switch (status) {
    case DVQA_OK: return "ok";
    case DVQA_ERR_CONFIG: return "configuration error";
    case DVQA_ERR_DATA: return "data error";
    case DVQA_ERR_USAGE: return "usage error";
    case DVQA_ERR_NUMERIC: return "numeric error";
    case DVQA_ERR_IO: return "i/o error";
    case DVQA_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* dvqa_version(void) { return "1.0.0"; }

void dvqa_string_free(char* s) { std::free(s); }

dvqa_status dvqa_dataset_generate(const char* config_text, dvqa_dataset** out) {
  return guarded([&] {
    require(config_text, "config_text");
    require(out, "out");
    const auto cfg = dvqa::train::parse_config(config_text);
    *out = new dvqa_dataset{dvqa::train::load_dataset_for(cfg)};
  });
}

dvqa_status dvqa_dataset_load(const char* path, dvqa_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new dvqa_dataset{dvqa::data::load_dataset(path)};
  });
}

dvqa_status dvqa_dataset_save(const dvqa_dataset* ds, const char* path) {
  return guarded([&] {
    require(ds, "dataset");
    require(path, "path");
    dvqa::data::save_dataset(ds->ds, path);
  });
}

dvqa_status dvqa_dataset_ingest(const char* questions, const char* annotations, const char* test_questions,
                                const char* test_annotations, const char* features, dvqa_dataset** out) {
  return guarded([&] {
    require(questions, "questions");
    require(annotations, "annotations");
    require(features, "features");
    require(out, "out");
    std::vector<dvqa::data::IngestSource> sources{{"train", questions, annotations}};
    if (test_questions || test_annotations) {
      require(test_questions, "test_questions");
      require(test_annotations, "test_annotations");
      sources.push_back({"test", test_questions, test_annotations});
    }
    *out = new dvqa_dataset{dvqa::data::ingest_vqa_json(sources, features, {})};
  });
}

dvqa_status dvqa_dataset_write_features(const dvqa_dataset* ds, const char* path) {
  return guarded([&] {
    require(ds, "dataset");
    require(path, "path");
    dvqa::data::write_feature_file(path, ds->ds.images, ds->ds.image_dim);
  });
}

size_t dvqa_dataset_size(const dvqa_dataset* ds, const char* split) {
  if (!ds || !split) return 0;
  const std::string s(split);
  if (s == "train") return ds->ds.train.instances.size();
  if (s == "test") return ds->ds.test.instances.size();
  return 0;
}

void dvqa_dataset_free(dvqa_dataset* ds) { delete ds; }

dvqa_status dvqa_index_stats(const dvqa_dataset* ds, char** json_out) {
  return guarded([&] {
    require(ds, "dataset");
    require(json_out, "json_out");
    const auto index = dvqa::cp::build_sss_index(ds->ds.train.instances);
    *json_out = dup(dvqa::cp::index_stats_json(ds->ds, index));
  });
}

dvqa_status dvqa_train(const char* config_text, const char* out_dir, char** run_json_out) {
  return guarded([&] {
    require(config_text, "config_text");
    require(out_dir, "out_dir");
    const auto cfg = dvqa::train::parse_config(config_text);
    const auto ds = dvqa::train::load_dataset_for(cfg);
    auto result = dvqa::train::train(ds, cfg);
    dvqa::train::write_run(result, out_dir);
    if (run_json_out) *run_json_out = dup(dvqa::train::run_record_json(result.record));
  });
}

dvqa_status dvqa_model_load(const char* checkpoint_path, dvqa_model** out) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(out, "out");
    auto loaded = dvqa::model::load_checkpoint(checkpoint_path);
    *out = new dvqa_model{std::move(loaded.model), std::move(loaded.metadata_json)};
  });
}

void dvqa_model_free(dvqa_model* model) { delete model; }

dvqa_status dvqa_model_dataset(const dvqa_model* model, dvqa_dataset** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = new dvqa_dataset{dvqa::train::dataset_for_checkpoint(model->metadata_json)};
  });
}

dvqa_status dvqa_evaluate(const dvqa_model* model, const dvqa_dataset* ds, const char* split, char** json_out) {
  return guarded([&] {
    require(model, "model");
    require(ds, "dataset");
    require(split, "split");
    require(json_out, "json_out");
    const auto& sp = ds->ds.split(split);
    const auto r = dvqa::train::evaluate(model->model, ds->ds, sp, false);
    const nlohmann::json j = {
        {"split", sp.name}, {"instances", sp.instances.size()}, {"overall", r.overall}, {"per_category", r.per_category}};
    *json_out = dup(j.dump(2));
  });
}

dvqa_status dvqa_analyze(const char* const* run_dirs, const char* const* labels, size_t n, const char* out_dir,
                         int svg, char** summary_json_out) {
  return guarded([&] {
    require(run_dirs, "run_dirs");
    require(labels, "labels");
    require(out_dir, "out_dir");
    std::vector<std::string> dirs, names;
    for (size_t i = 0; i < n; ++i) {
      require(run_dirs[i], "run directory");
      require(labels[i], "label");
      dirs.emplace_back(run_dirs[i]);
      names.emplace_back(labels[i]);
    }
    const std::string summary = dvqa::train::analyze_runs(dirs, names, out_dir, svg != 0);
    if (summary_json_out) *summary_json_out = dup(summary);
  });
}

}  // extern "C"
