#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "common/error.hpp"
#include "model/model.hpp"

using namespace dvqa;
using ad::Tensor;
using model::Model;
using model::ModelConfig;

namespace {

ModelConfig small_config(model::Fusion fusion = model::Fusion::Product) {
  ModelConfig c;
  c.question_vocab = 7;
  c.image_dim = 5;
  c.num_answers = 4;
  c.embed_dim = 6;
  c.hidden_dim = 8;
  c.fusion = fusion;
  c.seed = 11;
  return c;
}

Tensor random_images(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Tensor t = Tensor::zeros(n, d);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = g(rng);
  return t;
}

}  // namespace

TEST(Model, ForwardShapesAndRange) {
  for (auto fusion : {model::Fusion::Product, model::Fusion::Concat}) {
    Model m(small_config(fusion));
    ad::Tape t;
    const auto p = m.bind(t);
    std::vector<std::vector<std::size_t>> q{{0, 1, 2}, {3}, {4, 5, 6, 6}};
    const auto fw = m.forward(p, q, random_images(3, 5, 1));
    EXPECT_EQ(fw.logits.shape(), (std::vector<std::size_t>{3, 4}));
    for (double x : fw.probs.value().data()) {
      EXPECT_GT(x, 0.0);
      EXPECT_LT(x, 1.0);
    }
  }
}

TEST(Model, ForwardCounterCountsBatchRows) {
  Model m(small_config());
  ad::Tape t;
  const auto p = m.bind(t);
  std::vector<std::vector<std::size_t>> q{{0}, {1}, {2}, {3}, {4}};
  const auto fw = m.forward(p, q, random_images(5, 5, 2));
  EXPECT_EQ(m.forward_passes(), 5u);
  // Re-paired probabilities reuse the encoded streams.
  std::vector<std::size_t> img{1, 2, 3}, qs{0, 0, 4};
  const auto pp = m.pair_probs(p, fw, img, qs);
  EXPECT_EQ(pp.shape(), (std::vector<std::size_t>{3, 4}));
  EXPECT_EQ(m.forward_passes(), 5u);
  m.predict(q, random_images(5, 5, 3));
  EXPECT_EQ(m.forward_passes(), 5u);
}

TEST(Model, PairProbsMatchFreshForwardOfSwappedPair) {
  Model m(small_config(model::Fusion::Concat));
  std::vector<std::vector<std::size_t>> q{{0, 1}, {2, 3}};
  const Tensor imgs = random_images(2, 5, 4);
  ad::Tape t;
  const auto p = m.bind(t);
  const auto fw = m.forward(p, q, imgs);
  std::vector<std::size_t> img_rows{1}, q_rows{0};
  const Tensor swapped = m.pair_probs(p, fw, img_rows, q_rows).value();

  Tensor one = Tensor::zeros(1, 5);
  for (std::size_t c = 0; c < 5; ++c) one(0, c) = imgs(1, c);
  std::vector<std::vector<std::size_t>> q0{q[0]};
  const auto fresh = m.predict(q0, one).probs;
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(swapped(0, c), fresh(0, c), 1e-14);
}

TEST(Model, SwappingImageChangesProbabilities) {
  Model m(small_config());
  std::vector<std::vector<std::size_t>> q{{1, 2}};
  const auto a = m.predict(q, random_images(1, 5, 5)).probs;
  const auto b = m.predict(q, random_images(1, 5, 6)).probs;
  double diff = 0.0;
  for (std::size_t c = 0; c < 4; ++c) diff += std::abs(a(0, c) - b(0, c));
  EXPECT_GT(diff, 1e-6);
}

TEST(Model, QuestionEncoderIgnoresTokenOrder) {
  Model m(small_config());
  ad::Tape t;
  const auto p = m.bind_constants(t);
  std::vector<std::vector<std::size_t>> q{{0, 3, 5, 1}, {1, 5, 3, 0}};
  const Tensor enc = m.encode_question(p, q).value();
  for (std::size_t c = 0; c < enc.cols(); ++c) EXPECT_NEAR(enc(0, c), enc(1, c), 1e-15);
}

TEST(Model, ImageWidthMismatchNamesBothWidths) {
  Model m(small_config());
  std::vector<std::vector<std::size_t>> q{{0}};
  try {
    m.predict(q, random_images(1, 9, 7));
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("got 9"), std::string::npos) << msg;
  }
}

TEST(Model, BadTokensNameTheInstance) {
  Model m(small_config());
  std::vector<std::vector<std::size_t>> q{{0}, {99}};
  std::vector<std::string> labels{"id 10", "id 11"};
  try {
    m.predict(q, random_images(2, 5, 8), labels);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("id 11"), std::string::npos);
  }
  std::vector<std::vector<std::size_t>> empty{{}};
  EXPECT_THROW(m.predict(empty, random_images(1, 5, 9)), DataError);
}

TEST(Model, InitDependsOnlyOnSeed) {
  Model a(small_config()), b(small_config());
  auto pa = a.parameters();
  auto pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
  auto cfg = small_config();
  cfg.seed = 12;
  Model c(cfg);
  EXPECT_NE(c.parameters()[0]->value, pa[0]->value);
}

TEST(Model, RejectsZeroDimensions) {
  auto cfg = small_config();
  cfg.hidden_dim = 0;
  EXPECT_THROW(Model{cfg}, ConfigError);
  EXPECT_THROW(model::parse_fusion("attention"), ConfigError);
}

TEST(Checkpoint, RoundTripIsExact) {
  Model m(small_config(model::Fusion::Concat));
  // Perturb away from the init so the round trip is not trivially the seed.
  for (auto* p : m.parameters()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = p->value[i] / 3.0 + 1e-17 * i;
  }
  const auto text = model::checkpoint_to_string(m, R"({"note":"x"})");
  const auto back = model::checkpoint_from_string(text);
  EXPECT_EQ(back.model.config().fusion, model::Fusion::Concat);
  auto pa = m.parameters();
  auto pb = back.model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
  EXPECT_NE(back.metadata_json.find("\"note\""), std::string::npos);

  std::vector<std::vector<std::size_t>> q{{1, 2}, {3}};
  const auto imgs = random_images(2, 5, 10);
  EXPECT_EQ(m.predict(q, imgs).probs, back.model.predict(q, imgs).probs);
}

TEST(Checkpoint, FileRoundTripAndErrors) {
  const auto path = (std::filesystem::temp_directory_path() / "dvqa_test_model.ckpt").string();
  Model m(small_config());
  model::save_checkpoint(m, path);
  const auto back = model::load_checkpoint(path);
  EXPECT_EQ(m.parameters()[3]->value, back.model.parameters()[3]->value);
  std::remove(path.c_str());
  EXPECT_THROW(model::load_checkpoint(path), IoError);
  EXPECT_THROW(model::checkpoint_from_string("{\"format\":\"other\"}"), DataError);
  EXPECT_THROW(model::checkpoint_from_string("not json"), DataError);
}
