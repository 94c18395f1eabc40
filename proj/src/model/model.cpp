#include "model/model.hpp"

#include <cmath>
#include <random>

#include "common/error.hpp"

namespace dvqa::model {

namespace {

ad::Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  ad::Tensor t = ad::Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

ad::Tensor normal_init(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  ad::Tensor t = ad::Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

const char* fusion_name(Fusion f) { return f == Fusion::Product ? "product" : "concat"; }

Fusion parse_fusion(const std::string& s) {
  if (s == "product") return Fusion::Product;
  if (s == "concat") return Fusion::Concat;
  throw ConfigError("unknown fusion '" + s + "' (expected product or concat)");
}

Model::Model(ModelConfig cfg) : cfg_(cfg) {
  if (cfg_.question_vocab == 0 || cfg_.image_dim == 0 || cfg_.num_answers == 0 || cfg_.embed_dim == 0 ||
      cfg_.hidden_dim == 0) {
    throw ConfigError("model dimensions must all be positive");
  }
  std::mt19937_64 rng(cfg_.seed);
  const std::size_t d = cfg_.embed_dim, h = cfg_.hidden_dim;
  const std::size_t fused_dim = cfg_.fusion == Fusion::Product ? d : 2 * d;
  embedding_ = {"embedding", normal_init(cfg_.question_vocab, d, rng)};
  q_w_ = {"question.weight", uniform_init(d, d, d, rng)};
  q_b_ = {"question.bias", uniform_init(1, d, d, rng)};
  v_w_ = {"image.weight", uniform_init(cfg_.image_dim, d, cfg_.image_dim, rng)};
  v_b_ = {"image.bias", uniform_init(1, d, cfg_.image_dim, rng)};
  h1_w_ = {"hidden1.weight", uniform_init(fused_dim, h, fused_dim, rng)};
  h1_b_ = {"hidden1.bias", uniform_init(1, h, fused_dim, rng)};
  h2_w_ = {"hidden2.weight", uniform_init(h, h, h, rng)};
  h2_b_ = {"hidden2.bias", uniform_init(1, h, h, rng)};
  out_w_ = {"output.weight", uniform_init(h, cfg_.num_answers, h, rng)};
  out_b_ = {"output.bias", uniform_init(1, cfg_.num_answers, h, rng)};
}

std::vector<ad::Parameter*> Model::parameters() {
  return {&embedding_, &q_w_, &q_b_, &v_w_, &v_b_, &h1_w_, &h1_b_, &h2_w_, &h2_b_, &out_w_, &out_b_};
}

std::vector<const ad::Parameter*> Model::parameters() const {
  return {&embedding_, &q_w_, &q_b_, &v_w_, &v_b_, &h1_w_, &h1_b_, &h2_w_, &h2_b_, &out_w_, &out_b_};
}

ad::Parameter* Model::find(const std::string& name) {
  for (ad::Parameter* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

BoundParams Model::bind(ad::Tape& tape) {
  return {tape.leaf(embedding_), tape.leaf(q_w_),  tape.leaf(q_b_),  tape.leaf(v_w_),
          tape.leaf(v_b_),       tape.leaf(h1_w_), tape.leaf(h1_b_), tape.leaf(h2_w_),
          tape.leaf(h2_b_),      tape.leaf(out_w_), tape.leaf(out_b_)};
}

BoundParams Model::bind_constants(ad::Tape& tape) const {
  return {tape.constant(embedding_.value), tape.constant(q_w_.value),  tape.constant(q_b_.value),
          tape.constant(v_w_.value),       tape.constant(v_b_.value),  tape.constant(h1_w_.value),
          tape.constant(h1_b_.value),      tape.constant(h2_w_.value), tape.constant(h2_b_.value),
          tape.constant(out_w_.value),     tape.constant(out_b_.value)};
}

Model::Prediction Model::predict(std::span<const std::vector<std::size_t>> tokens, const ad::Tensor& images,
                                 std::span<const std::string> instance_labels) const {
  if (images.rank() == 2 && images.rows() != tokens.size()) {
    throw UsageError("predict: " + std::to_string(tokens.size()) + " questions but " +
                     std::to_string(images.rows()) + " images");
  }
  ad::Tape tape;
  const BoundParams p = bind_constants(tape);
  const ad::Var q = encode_question(p, tokens, instance_labels);
  const ad::Var v = encode_image(p, images);
  const ad::Var logits = output(p, fuse(p, v, q));
  const ad::Var probs = ad::sigmoid(logits);
  return {logits.value(), probs.value()};
}

ad::Var Model::encode_question(const BoundParams& p, std::span<const std::vector<std::size_t>> tokens,
                               std::span<const std::string> instance_labels) const {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string who = i < instance_labels.size() ? instance_labels[i] : "row " + std::to_string(i);
    if (tokens[i].empty()) throw DataError("empty question for instance " + who);
    for (std::size_t t : tokens[i]) {
      if (t >= cfg_.question_vocab) {
        throw DataError("token id " + std::to_string(t) + " outside question vocabulary of " +
                        std::to_string(cfg_.question_vocab) + " for instance " + who);
      }
    }
  }
  ad::Var bag = ad::embedding_bag(p.embedding, tokens);
  return ad::tanh(ad::add(ad::matmul(bag, p.q_w), p.q_b));
}

ad::Var Model::encode_image(const BoundParams& p, const ad::Tensor& images) const {
  if (images.rank() != 2 || images.cols() != cfg_.image_dim) {
    throw DataError("image feature width mismatch: expected " + std::to_string(cfg_.image_dim) + ", got " +
                    (images.rank() == 2 ? std::to_string(images.cols()) : ad::shape_string(images.shape())));
  }
  ad::Var x = p.embedding.tape->constant(images);
  return ad::tanh(ad::add(ad::matmul(x, p.v_w), p.v_b));
}

ad::Var Model::fuse(const BoundParams& p, ad::Var image, ad::Var question) const {
  ad::Var joint = cfg_.fusion == Fusion::Product ? ad::mul(image, question) : ad::concat_cols(image, question);
  ad::Var h1 = ad::relu(ad::add(ad::matmul(joint, p.h1_w), p.h1_b));
  return ad::relu(ad::add(ad::matmul(h1, p.h2_w), p.h2_b));
}

ad::Var Model::output(const BoundParams& p, ad::Var fused) const {
  return ad::add(ad::matmul(fused, p.out_w), p.out_b);
}

Forward Model::forward(const BoundParams& p, std::span<const std::vector<std::size_t>> tokens,
                       const ad::Tensor& images, std::span<const std::string> instance_labels) {
  if (images.rank() == 2 && images.rows() != tokens.size()) {
    throw UsageError("forward: " + std::to_string(tokens.size()) + " questions but " +
                     std::to_string(images.rows()) + " images");
  }
  Forward fw;
  fw.question = encode_question(p, tokens, instance_labels);
  fw.image = encode_image(p, images);
  fw.fused = fuse(p, fw.image, fw.question);
  fw.logits = output(p, fw.fused);
  fw.probs = ad::sigmoid(fw.logits);
  forward_passes_ += tokens.size();
  return fw;
}

ad::Var Model::pair_probs(const BoundParams& p, const Forward& fw, std::span<const std::size_t> image_rows,
                          std::span<const std::size_t> question_rows) const {
  ad::Var v = ad::gather_rows(fw.image, image_rows);
  ad::Var q = ad::gather_rows(fw.question, question_rows);
  return ad::sigmoid(output(p, fuse(p, v, q)));
}

}  // namespace dvqa::model
