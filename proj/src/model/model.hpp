#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "diffengine/ops.hpp"
#include "diffengine/tape.hpp"

namespace dvqa::model {

enum class Fusion {
  Product,  // elementwise product of the two projected streams
  Concat,   // concatenation, the SAN-flavoured variant
};

const char* fusion_name(Fusion f);
Fusion parse_fusion(const std::string& s);

struct ModelConfig {
  std::size_t question_vocab = 0;
  std::size_t image_dim = 0;
  std::size_t num_answers = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  Fusion fusion = Fusion::Product;
  std::uint64_t seed = 0;
};

// Parameters bound to one tape. Each parameter gets exactly one leaf node so
// gradients from every use collect in a single place.
struct BoundParams {
  ad::Var embedding, q_w, q_b, v_w, v_b, h1_w, h1_b, h2_w, h2_b, out_w, out_b;
};

struct Forward {
  ad::Var question;  // encoded questions, B x d
  ad::Var image;     // encoded images, B x d
  ad::Var fused;     // shared high-level feature, B x h
  ad::Var logits;    // B x |A|
  ad::Var probs;     // sigmoid(logits)
};

// Two-stream answer classifier:
//   q = tanh(mean(E[tokens]) Wq + bq),  v = tanh(x Wv + bv)
//   f = relu(relu(fuse(v, q) W1 + b1) W2 + b2),  p = sigmoid(f Wo + bo)
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const noexcept { return cfg_; }
  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  ad::Parameter* find(const std::string& name);

  BoundParams bind(ad::Tape& tape);
  // Parameter values as constants; nothing flows back into the model.
  BoundParams bind_constants(ad::Tape& tape) const;

  // instance_labels, when given, name rows in data errors.
  ad::Var encode_question(const BoundParams& p, std::span<const std::vector<std::size_t>> tokens,
                          std::span<const std::string> instance_labels = {}) const;
  ad::Var encode_image(const BoundParams& p, const ad::Tensor& images) const;
  ad::Var fuse(const BoundParams& p, ad::Var image, ad::Var question) const;
  ad::Var output(const BoundParams& p, ad::Var fused) const;

  // One pass over a batch. Increments the forward-pass counter by the batch size.
  Forward forward(const BoundParams& p, std::span<const std::vector<std::size_t>> tokens, const ad::Tensor& images,
                  std::span<const std::string> instance_labels = {});

  // Probabilities for re-paired (image row, question row) combinations of
  // already-encoded streams. Runs only the fusion head; no encoder pass.
  ad::Var pair_probs(const BoundParams& p, const Forward& fw, std::span<const std::size_t> image_rows,
                     std::span<const std::size_t> question_rows) const;

  // Inference without gradients and without touching the pass counter.
  struct Prediction {
    ad::Tensor logits;
    ad::Tensor probs;
  };
  Prediction predict(std::span<const std::vector<std::size_t>> tokens, const ad::Tensor& images,
                     std::span<const std::string> instance_labels = {}) const;

  std::size_t forward_passes() const noexcept { return forward_passes_; }
  void reset_forward_passes() noexcept { forward_passes_ = 0; }

 private:
  ModelConfig cfg_;
  ad::Parameter embedding_, q_w_, q_b_, v_w_, v_b_, h1_w_, h1_b_, h2_w_, h2_b_, out_w_, out_b_;
  std::size_t forward_passes_ = 0;
};

// JSON checkpoint: format tag, version, config, free-form metadata and every
// parameter's shape and data. Doubles are written in shortest round-trip form.
void save_checkpoint(const Model& model, const std::string& path, const std::string& metadata_json = "{}");
struct LoadedCheckpoint {
  Model model;
  std::string metadata_json;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

std::string checkpoint_to_string(const Model& model, const std::string& metadata_json = "{}");
LoadedCheckpoint checkpoint_from_string(const std::string& text);

}  // namespace dvqa::model
