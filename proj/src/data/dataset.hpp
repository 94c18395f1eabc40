#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dvqa::data {

class AnswerVocab {
 public:
  AnswerVocab() = default;
  explicit AnswerVocab(std::vector<std::string> answers);

  // Returns the index of s, appending it if new.
  std::size_t add(const std::string& s);
  std::optional<std::size_t> find(const std::string& s) const;
  const std::string& at(std::size_t i) const { return answers_.at(i); }
  std::size_t size() const noexcept { return answers_.size(); }
  const std::vector<std::string>& answers() const noexcept { return answers_; }

  bool operator==(const AnswerVocab& o) const { return answers_ == o.answers_; }

 private:
  std::vector<std::string> answers_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Ordered prefix table with an implicit trailing "other" type. Matching picks
// the longest prefix (in tokens) that the question starts with.
class QuestionTypeTable {
 public:
  QuestionTypeTable() = default;
  QuestionTypeTable(std::vector<std::string> names, std::vector<std::vector<std::string>> prefixes);

  // Builds a table from space-separated prefixes; the prefix is also the name.
  static QuestionTypeTable from_prefixes(const std::vector<std::string>& prefixes);
  // The 65 VQA v2 question-type prefixes.
  static QuestionTypeTable vqa_v2();

  std::size_t classify(std::span<const std::string> tokens) const;
  // Number of types including "other".
  std::size_t size() const noexcept { return names_.size() + 1; }
  std::size_t other_id() const noexcept { return names_.size(); }
  std::string name(std::size_t id) const;
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<std::vector<std::string>>& prefixes() const noexcept { return prefixes_; }

  bool operator==(const QuestionTypeTable&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<std::string>> prefixes_;
};

const std::vector<std::string>& vqa_v2_question_prefixes();

struct AnswerScore {
  std::size_t answer = 0;
  double score = 0.0;
  bool operator==(const AnswerScore&) const = default;
};

struct Instance {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::vector<std::size_t> question;  // token ids
  std::size_t question_type = 0;
  std::vector<AnswerScore> answers;   // nonzero scores only, sorted by answer index
  std::size_t label = 0;              // argmax of answers, lowest index on ties
  std::string category;
  std::optional<std::int64_t> latent_concept;  // latent visual concept (synthetic data only)

  double score_of(std::size_t answer) const;
  bool operator==(const Instance&) const = default;
};

// Argmax over sparse scores; ties go to the lowest answer index.
std::size_t argmax_answer(std::span<const AnswerScore> scores);

struct Split {
  std::string name;
  std::vector<Instance> instances;
  bool operator==(const Split&) const = default;
};

struct Dataset {
  AnswerVocab answers;
  QuestionTypeTable types;
  std::vector<std::string> tokens;
  std::size_t image_dim = 0;
  std::map<std::int64_t, std::vector<double>> images;
  Split train{"train", {}};
  Split test{"test", {}};
  std::string generator_json = "{}";
  std::uint64_t seed = 0;

  const Split& split(const std::string& name) const;
  std::span<const double> image(std::int64_t image_id) const;
  std::vector<std::string> question_text(const Instance& inst) const;

  // Throws DataError on any broken invariant.
  void validate() const;
  // FNV-1a over the serialized form.
  std::uint64_t content_hash() const;

  bool operator==(const Dataset&) const = default;
};

// Line-delimited JSON: one header record, one record per image (inline
// features) and one per instance.
std::string dataset_to_jsonl(const Dataset& ds);
Dataset dataset_from_jsonl(const std::string& text);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Binary feature file: "DVQAFEAT", u32 version, u32 dim, u64 count, then
// count x (i64 image id, u64 offset in floats), then the float32 payload.
void write_feature_file(const std::string& path, const std::map<std::int64_t, std::vector<double>>& features,
                        std::size_t dim);
std::map<std::int64_t, std::vector<double>> read_feature_file(const std::string& path, std::size_t* dim_out);

}  // namespace dvqa::data
