#include "data/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <unordered_map>

#include "common/error.hpp"

namespace dvqa::data {

using nlohmann::json;

namespace {

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path + " is not valid JSON: " + e.what());
  }
}

std::string normalize_answer(const std::string& a) {
  const auto words = tokenize(a);
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::map<std::int64_t, std::vector<double>> read_features(const std::string& path, std::size_t* dim) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    const json j = read_json(path);
    std::map<std::int64_t, std::vector<double>> out;
    *dim = 0;
    for (const auto& [key, value] : j.items()) {
      std::int64_t id = 0;
      try {
        id = std::stoll(key);
        out[id] = value.get<std::vector<double>>();
      } catch (const std::exception&) {
        throw DataError("malformed feature record '" + key + "' in " + path);
      }
      if (*dim == 0) *dim = out[id].size();
      if (out[id].size() != *dim) throw DataError("feature width mismatch for image " + key);
    }
    return out;
  }
  return read_feature_file(path, dim);
}

struct RawQuestion {
  std::int64_t question_id;
  std::int64_t image_id;
  std::string text;
};

struct RawAnnotation {
  std::int64_t image_id;
  std::vector<std::string> answers;
  std::string answer_type;
};

std::vector<RawQuestion> read_questions(const std::string& path) {
  const json j = read_json(path);
  if (!j.contains("questions") || !j["questions"].is_array()) throw DataError(path + " has no questions array");
  std::vector<RawQuestion> out;
  for (const auto& q : j["questions"]) {
    const std::string who = q.contains("question_id") ? q["question_id"].dump() : "?";
    try {
      out.push_back({q.at("question_id").get<std::int64_t>(), q.at("image_id").get<std::int64_t>(),
                     q.at("question").get<std::string>()});
    } catch (const json::exception& e) {
      throw DataError("malformed question record " + who + ": " + e.what());
    }
  }
  return out;
}

std::unordered_map<std::int64_t, RawAnnotation> read_annotations(const std::string& path) {
  const json j = read_json(path);
  if (!j.contains("annotations") || !j["annotations"].is_array()) throw DataError(path + " has no annotations array");
  if (j["annotations"].empty()) throw DataError(path + " contains no annotations");
  std::unordered_map<std::int64_t, RawAnnotation> out;
  for (const auto& a : j["annotations"]) {
    const std::string who = a.contains("question_id") ? a["question_id"].dump() : "?";
    try {
      RawAnnotation ann;
      ann.image_id = a.at("image_id").get<std::int64_t>();
      for (const auto& ans : a.at("answers")) ann.answers.push_back(normalize_answer(ans.at("answer").get<std::string>()));
      ann.answer_type = a.value("answer_type", "other");
      out[a.at("question_id").get<std::int64_t>()] = std::move(ann);
    } catch (const json::exception& e) {
      throw DataError("malformed annotation record " + who + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::string clean;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '\'') {
      clean += static_cast<char>(std::tolower(u));
    } else {
      clean += ' ';
    }
  }
  std::istringstream ss(clean);
  std::vector<std::string> words;
  for (std::string w; ss >> w;) words.push_back(w);
  return words;
}

double vqa_soft_score(std::size_t matches) { return std::min(static_cast<double>(matches) / 3.0, 1.0); }

Dataset ingest_vqa_json(std::span<const IngestSource> sources, const std::string& feature_path,
                        const IngestOptions& opts) {
  if (sources.empty()) throw UsageError("ingest needs at least one question/annotation source");
  Dataset ds;
  ds.types = QuestionTypeTable::vqa_v2();
  ds.images = read_features(feature_path, &ds.image_dim);
  ds.generator_json = json{{"source", "vqa-json"}}.dump();

  std::vector<std::vector<RawQuestion>> questions;
  std::vector<std::unordered_map<std::int64_t, RawAnnotation>> annotations;
  for (const auto& src : sources) {
    if (src.split != "train" && src.split != "test") throw UsageError("unknown split '" + src.split + "'");
    questions.push_back(read_questions(src.questions_path));
    annotations.push_back(read_annotations(src.annotations_path));
  }

  if (!opts.answer_vocab.empty()) {
    ds.answers = AnswerVocab(opts.answer_vocab);
  } else {
    std::map<std::string, std::size_t> counts;
    for (const auto& [qid, ann] : annotations.front()) {
      for (const auto& a : ann.answers) ++counts[a];
    }
    for (const auto& [a, n] : counts) {
      if (n >= opts.min_answer_count && !a.empty()) ds.answers.add(a);
    }
  }

  std::unordered_map<std::string, std::size_t> token_index;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    Split& split = sources[s].split == "train" ? ds.train : ds.test;
    for (const RawQuestion& q : questions[s]) {
      const std::string who = "question " + std::to_string(q.question_id);
      auto it = annotations[s].find(q.question_id);
      if (it == annotations[s].end()) throw DataError(who + " has no annotation");
      const RawAnnotation& ann = it->second;
      if (ann.image_id != q.image_id) throw DataError(who + " annotation refers to a different image");
      if (!ds.images.count(q.image_id)) {
        throw DataError(who + " references image " + std::to_string(q.image_id) + " without features");
      }
      std::map<std::size_t, std::size_t> matches;
      for (const auto& a : ann.answers) {
        if (auto idx = ds.answers.find(a)) ++matches[*idx];
      }
      if (matches.empty()) continue;  // every answer outside the vocabulary

      Instance inst;
      inst.id = q.question_id;
      inst.image_id = q.image_id;
      const auto words = tokenize(q.text);
      if (words.empty()) throw DataError(who + " has empty question text");
      for (const auto& w : words) {
        auto [pos, inserted] = token_index.emplace(w, ds.tokens.size());
        if (inserted) ds.tokens.push_back(w);
        inst.question.push_back(pos->second);
      }
      inst.question_type = ds.types.classify(words);
      for (const auto& [idx, n] : matches) inst.answers.push_back({idx, vqa_soft_score(n)});
      inst.label = argmax_answer(inst.answers);
      inst.category = ann.answer_type;
      split.instances.push_back(std::move(inst));
    }
  }
  ds.validate();
  return ds;
}

Dataset ingest_vqa_json(const std::string& questions_path, const std::string& annotations_path,
                        const std::string& feature_path, const IngestOptions& opts) {
  const IngestSource src{"train", questions_path, annotations_path};
  return ingest_vqa_json(std::span<const IngestSource>(&src, 1), feature_path, opts);
}

}  // namespace dvqa::data
