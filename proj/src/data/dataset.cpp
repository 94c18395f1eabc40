#include "data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "common/error.hpp"

namespace dvqa::data {

using nlohmann::json;

AnswerVocab::AnswerVocab(std::vector<std::string> answers) {
  for (const auto& a : answers) {
    if (index_.count(a)) throw DataError("duplicate answer '" + a + "' in vocabulary");
    add(a);
  }
}

std::size_t AnswerVocab::add(const std::string& s) {
  auto it = index_.find(s);
  if (it != index_.end()) return it->second;
  answers_.push_back(s);
  index_.emplace(s, answers_.size() - 1);
  return answers_.size() - 1;
}

std::optional<std::size_t> AnswerVocab::find(const std::string& s) const {
  auto it = index_.find(s);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

QuestionTypeTable::QuestionTypeTable(std::vector<std::string> names, std::vector<std::vector<std::string>> prefixes)
    : names_(std::move(names)), prefixes_(std::move(prefixes)) {
  if (names_.size() != prefixes_.size()) throw ConfigError("question type names and prefixes differ in count");
  std::set<std::vector<std::string>> seen;
  for (const auto& p : prefixes_) {
    if (p.empty()) throw ConfigError("empty question type prefix");
    if (!seen.insert(p).second) throw ConfigError("duplicate question type prefix");
  }
}

QuestionTypeTable QuestionTypeTable::from_prefixes(const std::vector<std::string>& prefixes) {
  std::vector<std::vector<std::string>> split;
  for (const auto& p : prefixes) {
    std::istringstream ss(p);
    std::vector<std::string> words;
    for (std::string w; ss >> w;) words.push_back(w);
    split.push_back(std::move(words));
  }
  return {prefixes, std::move(split)};
}

QuestionTypeTable QuestionTypeTable::vqa_v2() { return from_prefixes(vqa_v2_question_prefixes()); }

std::size_t QuestionTypeTable::classify(std::span<const std::string> tokens) const {
  std::size_t best = other_id();
  std::size_t best_len = 0;
  for (std::size_t t = 0; t < prefixes_.size(); ++t) {
    const auto& p = prefixes_[t];
    if (p.size() <= best_len || p.size() > tokens.size()) continue;
    if (std::equal(p.begin(), p.end(), tokens.begin())) {
      best = t;
      best_len = p.size();
    }
  }
  return best;
}

std::string QuestionTypeTable::name(std::size_t id) const {
  if (id == other_id()) return "other";
  return names_.at(id);
}

// External convention: the question-type list distributed with VQA v2.
const std::vector<std::string>& vqa_v2_question_prefixes() {
  static const std::vector<std::string> kPrefixes = {
      "how many",        "is the",          "what",
      "what color is the", "what is the",   "none of the above",
      "is this",         "is this a",       "what is",
      "are the",         "what kind of",    "is there a",
      "what type of",    "is it",           "what are the",
      "where is the",    "is there",        "does the",
      "what color are the", "are these",    "are there",
      "which",           "is",              "what is the man",
      "is the man",      "are",             "how",
      "does this",       "what is on the",  "what does the",
      "how many people are", "what is in the", "what is this",
      "do",              "what are",        "are they",
      "what time",       "what sport is",   "are there any",
      "is he",           "what color is",   "why",
      "where are the",   "what color",      "who is",
      "what animal is",  "is the woman",    "is this an",
      "do you",          "how many people are in", "what room is",
      "has",             "is this person",  "what is the woman",
      "can you",         "why is the",      "is there any",
      "what is the name", "what is the color of the", "what brand",
      "what is the person", "could",        "is that a",
      "what number is",  "was",
  };
  return kPrefixes;
}

double Instance::score_of(std::size_t answer) const {
  for (const auto& s : answers) {
    if (s.answer == answer) return s.score;
  }
  return 0.0;
}

std::size_t argmax_answer(std::span<const AnswerScore> scores) {
  if (scores.empty()) throw DataError("instance has no answer scores");
  std::size_t best = scores[0].answer;
  double best_score = scores[0].score;
  for (const auto& s : scores) {
    if (s.score > best_score || (s.score == best_score && s.answer < best)) {
      best = s.answer;
      best_score = s.score;
    }
  }
  return best;
}

const Split& Dataset::split(const std::string& name) const {
  if (name == train.name) return train;
  if (name == test.name) return test;
  throw UsageError("unknown split '" + name + "' (expected train or test)");
}

std::span<const double> Dataset::image(std::int64_t image_id) const {
  auto it = images.find(image_id);
  if (it == images.end()) throw DataError("no features for image " + std::to_string(image_id));
  return it->second;
}

std::vector<std::string> Dataset::question_text(const Instance& inst) const {
  std::vector<std::string> words;
  for (std::size_t t : inst.question) words.push_back(tokens.at(t));
  return words;
}

void Dataset::validate() const {
  std::set<std::int64_t> ids;
  for (const Split* s : {&train, &test}) {
    for (const Instance& inst : s->instances) {
      const std::string who = "instance " + std::to_string(inst.id);
      if (!ids.insert(inst.id).second) throw DataError(who + " appears more than once");
      if (inst.answers.empty()) throw DataError(who + " has no nonzero answer score");
      for (const auto& a : inst.answers) {
        if (a.answer >= answers.size()) throw DataError(who + " references answer outside vocabulary");
        if (!(a.score > 0.0 && a.score <= 1.0)) throw DataError(who + " has answer score outside (0,1]");
      }
      if (inst.label != argmax_answer(inst.answers)) throw DataError(who + " label is not the argmax answer");
      if (inst.question_type >= types.size()) throw DataError(who + " has invalid question type");
      if (inst.question.empty()) throw DataError(who + " has an empty question");
      for (std::size_t t : inst.question) {
        if (t >= tokens.size()) throw DataError(who + " has token outside vocabulary");
      }
      auto img = images.find(inst.image_id);
      if (img == images.end()) throw DataError(who + " references image " + std::to_string(inst.image_id) + " without features");
      if (img->second.size() != image_dim) throw DataError("image " + std::to_string(inst.image_id) + " has wrong feature width");
    }
  }
}

std::uint64_t Dataset::content_hash() const {
  const std::string s = dataset_to_jsonl(*this);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

json instance_to_json(const Instance& inst, const std::string& split) {
  json answers = json::array();
  for (const auto& a : inst.answers) answers.push_back(json::array({a.answer, a.score}));
  json j = {{"record", "instance"},
            {"split", split},
            {"id", inst.id},
            {"image_id", inst.image_id},
            {"question", inst.question},
            {"question_type", inst.question_type},
            {"answers", std::move(answers)},
            {"label", inst.label},
            {"category", inst.category}};
  if (inst.latent_concept) j["concept"] = *inst.latent_concept;
  return j;
}

Instance instance_from_json(const json& j) {
  Instance inst;
  inst.id = j.at("id").get<std::int64_t>();
  try {
    inst.image_id = j.at("image_id").get<std::int64_t>();
    inst.question = j.at("question").get<std::vector<std::size_t>>();
    inst.question_type = j.at("question_type").get<std::size_t>();
    for (const auto& a : j.at("answers")) {
      inst.answers.push_back({a.at(0).get<std::size_t>(), a.at(1).get<double>()});
    }
    inst.label = j.at("label").get<std::size_t>();
    inst.category = j.value("category", "");
    if (j.contains("concept")) inst.latent_concept = j.at("concept").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw DataError("malformed instance record " + std::to_string(inst.id) + ": " + e.what());
  }
  return inst;
}

}  // namespace

std::string dataset_to_jsonl(const Dataset& ds) {
  std::ostringstream out;
  json types = json::array();
  for (std::size_t t = 0; t < ds.types.names().size(); ++t) {
    types.push_back({{"name", ds.types.names()[t]}, {"prefix", ds.types.prefixes()[t]}});
  }
  json header = {{"record", "header"},
                 {"format", "dvqa-dataset"},
                 {"version", 1},
                 {"answers", ds.answers.answers()},
                 {"question_types", std::move(types)},
                 {"tokens", ds.tokens},
                 {"image_dim", ds.image_dim},
                 {"generator", json::parse(ds.generator_json)},
                 {"seed", ds.seed}};
  out << header.dump() << '\n';
  for (const auto& [id, feats] : ds.images) {
    out << json{{"record", "image"}, {"image_id", id}, {"features", feats}}.dump() << '\n';
  }
  for (const Split* s : {&ds.train, &ds.test}) {
    for (const Instance& inst : s->instances) out << instance_to_json(inst, s->name).dump() << '\n';
  }
  return out.str();
}

Dataset dataset_from_jsonl(const std::string& text) {
  Dataset ds;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("dataset line " + std::to_string(line_no) + " is not JSON: " + e.what());
    }
    const std::string kind = j.value("record", "");
    if (!have_header) {
      if (kind != "header" || j.value("format", "") != "dvqa-dataset") {
        throw DataError("dataset must start with a dvqa-dataset header record");
      }
      if (j.value("version", 0) != 1) throw DataError("unsupported dataset version");
      try {
        ds.answers = AnswerVocab(j.at("answers").get<std::vector<std::string>>());
        std::vector<std::string> names;
        std::vector<std::vector<std::string>> prefixes;
        for (const auto& t : j.at("question_types")) {
          names.push_back(t.at("name").get<std::string>());
          prefixes.push_back(t.at("prefix").get<std::vector<std::string>>());
        }
        ds.types = QuestionTypeTable(std::move(names), std::move(prefixes));
        ds.tokens = j.at("tokens").get<std::vector<std::string>>();
        ds.image_dim = j.at("image_dim").get<std::size_t>();
        ds.generator_json = j.value("generator", json::object()).dump();
        ds.seed = j.value("seed", std::uint64_t{0});
      } catch (const json::exception& e) {
        throw DataError(std::string("malformed dataset header: ") + e.what());
      }
      have_header = true;
    } else if (kind == "image") {
      try {
        ds.images[j.at("image_id").get<std::int64_t>()] = j.at("features").get<std::vector<double>>();
      } catch (const json::exception& e) {
        throw DataError("malformed image record on line " + std::to_string(line_no) + ": " + e.what());
      }
    } else if (kind == "instance") {
      if (!j.contains("id")) throw DataError("instance record without id on line " + std::to_string(line_no));
      const std::string split = j.value("split", "");
      Instance inst = instance_from_json(j);
      if (split == "train") {
        ds.train.instances.push_back(std::move(inst));
      } else if (split == "test") {
        ds.test.instances.push_back(std::move(inst));
      } else {
        throw DataError("instance " + std::to_string(inst.id) + " has unknown split '" + split + "'");
      }
    } else {
      throw DataError("unknown record kind '" + kind + "' on line " + std::to_string(line_no));
    }
  }
  if (!have_header) throw DataError("empty dataset file");
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset " + path);
  out << dataset_to_jsonl(ds);
  if (!out) throw IoError("failed writing dataset " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return dataset_from_jsonl(ss.str());
}

namespace {
constexpr char kFeatureMagic[8] = {'D', 'V', 'Q', 'A', 'F', 'E', 'A', 'T'};

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated feature file " + path);
  return v;
}
}  // namespace

void write_feature_file(const std::string& path, const std::map<std::int64_t, std::vector<double>>& features,
                        std::size_t dim) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file " + path);
  out.write(kFeatureMagic, sizeof kFeatureMagic);
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  put<std::uint64_t>(out, features.size());
  std::uint64_t offset = 0;
  for (const auto& [id, f] : features) {
    if (f.size() != dim) throw DataError("image " + std::to_string(id) + " has wrong feature width");
    put<std::int64_t>(out, id);
    put<std::uint64_t>(out, offset);
    offset += dim;
  }
  for (const auto& [id, f] : features) {
    for (double v : f) put<float>(out, static_cast<float>(v));
  }
  if (!out) throw IoError("failed writing feature file " + path);
}

std::map<std::int64_t, std::vector<double>> read_feature_file(const std::string& path, std::size_t* dim_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kFeatureMagic, sizeof magic) != 0) {
    throw DataError("not a dvqa feature file: " + path);
  }
  if (get<std::uint32_t>(in, path) != 1) throw DataError("unsupported feature file version: " + path);
  const std::size_t dim = get<std::uint32_t>(in, path);
  const std::uint64_t count = get<std::uint64_t>(in, path);
  std::vector<std::pair<std::int64_t, std::uint64_t>> index;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto id = get<std::int64_t>(in, path);
    const auto off = get<std::uint64_t>(in, path);
    index.emplace_back(id, off);
  }
  std::vector<float> payload(count * dim);
  if (!payload.empty() &&
      !in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)))) {
    throw DataError("truncated feature payload in " + path);
  }
  std::map<std::int64_t, std::vector<double>> out;
  for (const auto& [id, off] : index) {
    if (off + dim > payload.size()) throw DataError("feature offset out of range for image " + std::to_string(id));
    out[id] = std::vector<double>(payload.begin() + static_cast<std::ptrdiff_t>(off),
                                  payload.begin() + static_cast<std::ptrdiff_t>(off + dim));
  }
  if (dim_out) *dim_out = dim;
  return out;
}

}  // namespace dvqa::data
