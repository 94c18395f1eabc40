#pragma once

#include <span>
#include <string>
#include <vector>

#include "data/dataset.hpp"

namespace dvqa::data {

struct IngestOptions {
  // Fixed answer vocabulary. When empty it is built from the first source,
  // keeping answers given by at least min_answer_count annotators overall.
  std::vector<std::string> answer_vocab;
  std::size_t min_answer_count = 1;
};

struct IngestSource {
  std::string split;  // "train" or "test"
  std::string questions_path;
  std::string annotations_path;
};

// Lowercases, strips punctuation other than apostrophes, splits on spaces.
std::vector<std::string> tokenize(const std::string& text);

// Standard VQA soft score for an answer given by `matches` annotators.
double vqa_soft_score(std::size_t matches);

// Reads VQA-format question/annotation JSON. The feature file is either the
// binary format or, for names ending in .json, an object {"<image id>": [..]}.
Dataset ingest_vqa_json(std::span<const IngestSource> sources, const std::string& feature_path,
                        const IngestOptions& opts = {});
Dataset ingest_vqa_json(const std::string& questions_path, const std::string& annotations_path,
                        const std::string& feature_path, const IngestOptions& opts = {});

}  // namespace dvqa::data
