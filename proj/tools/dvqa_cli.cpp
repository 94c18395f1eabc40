#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dvqa/dvqa.h"

namespace {

struct Failure {
  dvqa_status status;
};

void check(dvqa_status s) {
  if (s != DVQA_OK) throw Failure{s};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open " << path << '\n';
    throw Failure{DVQA_ERR_IO};
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_or_print(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out || !(out << text << '\n')) {
    std::cerr << "error: cannot write " << path << '\n';
    throw Failure{DVQA_ERR_IO};
  }
}

// Owns a C string handed out by the library.
struct Owned {
  char* p = nullptr;
  ~Owned() { dvqa_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct Dataset {
  dvqa_dataset* p = nullptr;
  ~Dataset() { dvqa_dataset_free(p); }
};

struct Model {
  dvqa_model* p = nullptr;
  ~Model() { dvqa_model_free(p); }
};

std::string with_overrides(std::string text, const std::vector<std::string>& overrides) {
  text += "\n";
  for (const auto& o : overrides) text += o + "\n";
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-prior debiasing lab: datasets, counterpart index, training and diagnostics"};
  app.require_subcommand(1);

  std::string config, out, dataset, questions, annotations, test_questions, test_annotations, features, checkpoint,
      split, baseline, dm;
  std::vector<std::string> overrides, runs;
  bool svg = false;

  auto* gen = app.add_subcommand("generate", "generate the synthetic changed-prior benchmark");
  gen->add_option("--config", config, "config file (data_seed and synthetic.* keys)");
  gen->add_option("--set", overrides, "extra key=value lines");
  gen->add_option("--out", out, "dataset file (JSONL)")->required();
  gen->add_option("--features", features, "also write a binary feature file");

  auto* ing = app.add_subcommand("ingest", "build a dataset from VQA-style question/annotation JSON");
  ing->add_option("--questions", questions, "train questions JSON")->required();
  ing->add_option("--annotations", annotations, "train annotations JSON")->required();
  ing->add_option("--test-questions", test_questions, "test questions JSON");
  ing->add_option("--test-annotations", test_annotations, "test annotations JSON");
  ing->add_option("--features", features, "binary feature file or .json id->array map")->required();
  ing->add_option("--out", out, "dataset file (JSONL)")->required();

  auto* idx = app.add_subcommand("build-index", "print counterpart index statistics as JSON");
  idx->add_option("--dataset", dataset, "dataset file");
  idx->add_option("--config", config, "config file, used when --dataset is absent");
  idx->add_option("--set", overrides, "extra key=value lines");
  idx->add_option("--out", out, "write the JSON here instead of stdout");

  auto* tr = app.add_subcommand("train", "train one model and write a run directory");
  tr->add_option("--config", config, "key=value config file")->required();
  tr->add_option("--set", overrides, "extra key=value lines, applied after the file");
  tr->add_option("--out", out, "run directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  ev->add_option("--checkpoint", checkpoint, "model.ckpt")->required();
  ev->add_option("--split", split, "train or test")->required();
  ev->add_option("--dataset", dataset, "dataset file; defaults to the one recorded in the checkpoint");

  auto* an = app.add_subcommand("analyze", "answer distributions, divergences and class distances of runs");
  an->add_option("--baseline", baseline, "baseline run directory");
  an->add_option("--dm", dm, "run directory trained with the distinguishing loss");
  an->add_option("--run", runs, "additional label=dir runs");
  an->add_option("--out", out, "output directory")->required();
  an->add_flag("--svg", svg, "also render distribution bar charts");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const std::string text = with_overrides(config.empty() ? "" : read_file(config), overrides);
      Dataset ds;
      check(dvqa_dataset_generate(text.c_str(), &ds.p));
      check(dvqa_dataset_save(ds.p, out.c_str()));
      if (!features.empty()) check(dvqa_dataset_write_features(ds.p, features.c_str()));
      std::cout << "wrote " << out << " (" << dvqa_dataset_size(ds.p, "train") << " train, "
                << dvqa_dataset_size(ds.p, "test") << " test)\n";
    } else if (*ing) {
      Dataset ds;
      check(dvqa_dataset_ingest(questions.c_str(), annotations.c_str(),
                                test_questions.empty() ? nullptr : test_questions.c_str(),
                                test_annotations.empty() ? nullptr : test_annotations.c_str(), features.c_str(),
                                &ds.p));
      check(dvqa_dataset_save(ds.p, out.c_str()));
      std::cout << "wrote " << out << " (" << dvqa_dataset_size(ds.p, "train") << " train, "
                << dvqa_dataset_size(ds.p, "test") << " test)\n";
    } else if (*idx) {
      Dataset ds;
      if (!dataset.empty()) {
        check(dvqa_dataset_load(dataset.c_str(), &ds.p));
      } else {
        const std::string text = with_overrides(config.empty() ? "" : read_file(config), overrides);
        check(dvqa_dataset_generate(text.c_str(), &ds.p));
      }
      Owned stats;
      check(dvqa_index_stats(ds.p, &stats.p));
      write_or_print(stats.str(), out);
    } else if (*tr) {
      const std::string text = with_overrides(read_file(config), overrides);
      Owned record;
      check(dvqa_train(text.c_str(), out.c_str(), &record.p));
      std::cout << record.str() << '\n';
    } else if (*ev) {
      Model m;
      check(dvqa_model_load(checkpoint.c_str(), &m.p));
      Dataset ds;
      if (!dataset.empty()) {
        check(dvqa_dataset_load(dataset.c_str(), &ds.p));
      } else {
        check(dvqa_model_dataset(m.p, &ds.p));
      }
      Owned result;
      check(dvqa_evaluate(m.p, ds.p, split.c_str(), &result.p));
      std::cout << result.str() << '\n';
    } else if (*an) {
      std::vector<std::string> labels, dirs;
      if (!baseline.empty()) {
        labels.push_back("baseline");
        dirs.push_back(baseline);
      }
      if (!dm.empty()) {
        labels.push_back("dm");
        dirs.push_back(dm);
      }
      for (const auto& r : runs) {
        const auto eq = r.find('=');
        if (eq == std::string::npos) {
          std::cerr << "error: --run expects label=dir, got " << r << '\n';
          return DVQA_ERR_USAGE;
        }
        labels.push_back(r.substr(0, eq));
        dirs.push_back(r.substr(eq + 1));
      }
      if (dirs.empty()) {
        std::cerr << "error: analyze needs --baseline, --dm or --run\n";
        return DVQA_ERR_USAGE;
      }
      std::vector<const char*> d, l;
      for (std::size_t i = 0; i < dirs.size(); ++i) {
        d.push_back(dirs[i].c_str());
        l.push_back(labels[i].c_str());
      }
      Owned summary;
      check(dvqa_analyze(d.data(), l.data(), d.size(), out.c_str(), svg ? 1 : 0, &summary.p));
      std::cout << summary.str() << '\n';
    }
  } catch (const Failure& f) {
    if (f.status != DVQA_OK && *dvqa_last_error()) {
      std::cerr << "error: " << dvqa_status_name(f.status) << ": " << dvqa_last_error() << '\n';
    }
    return static_cast<int>(f.status);
  }
  return 0;
}
