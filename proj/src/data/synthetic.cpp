#include "data/synthetic.hpp"

#include <nlohmann/json.hpp>
#include <random>

#include "common/error.hpp"

namespace dvqa::data {

using nlohmann::json;

void GenConfig::validate() const {
  if (answers_per_type < 2) throw ConfigError("answers_per_type must be >= 2");
  if (num_types < 1) throw ConfigError("num_types must be >= 1");
  if (!(bias >= 0.0 && bias <= 1.0)) throw ConfigError("bias must lie in [0, 1]");
  if (!(visual_noise >= 0.0)) throw ConfigError("visual_noise must be >= 0");
  if (image_dim < 1) throw ConfigError("image_dim must be >= 1");
  if (filler_tokens < 1) throw ConfigError("filler_tokens must be >= 1");
  if (train_size < 1) throw ConfigError("train_size must be >= 1");
}

std::string GenConfig::to_json() const {
  return json{{"num_types", num_types},
              {"answers_per_type", answers_per_type},
              {"train_size", train_size},
              {"test_size", test_size},
              {"bias", bias},
              {"visual_noise", visual_noise},
              {"image_dim", image_dim},
              {"filler_tokens", filler_tokens},
              {"test_prior", test_prior_name(test_prior)}}
      .dump();
}

const char* test_prior_name(TestPrior p) { return p == TestPrior::Inverted ? "inverted" : "uniform"; }

TestPrior parse_test_prior(const std::string& s) {
  if (s == "inverted") return TestPrior::Inverted;
  if (s == "uniform") return TestPrior::Uniform;
  throw ConfigError("unknown test prior '" + s + "' (inverted|uniform)");
}

namespace {

void fill_split(Split& split, std::size_t n, double p_head, std::int64_t first_id, const GenConfig& cfg,
                const std::vector<std::size_t>& heads, const std::vector<std::vector<double>>& emb, Dataset& ds,
                std::mt19937_64& rng) {
  const std::size_t T = cfg.num_types, k = cfg.answers_per_type;
  std::uniform_int_distribution<std::size_t> pick_type(0, T - 1), pick_other(0, k - 2), pick_shift(0, k - 1),
      pick_filler(0, cfg.filler_tokens - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  split.instances.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = pick_type(rng);
    std::size_t c = heads[t];
    if (unit(rng) >= p_head) {
      c = pick_other(rng);
      if (c >= heads[t]) ++c;
    }
    const std::size_t r = pick_shift(rng);
    const std::size_t f = pick_filler(rng);
    const std::size_t v = (c + k - r) % k;

    std::vector<double> feat(cfg.image_dim);
    for (std::size_t d = 0; d < cfg.image_dim; ++d) feat[d] = emb[v][d] + cfg.visual_noise * gauss(rng);

    Instance inst;
    inst.id = first_id + static_cast<std::int64_t>(i);
    inst.image_id = inst.id;
    inst.question = {2 * t, 2 * t + 1, 2 * T + r, 2 * T + k + f};
    inst.question_type = t;
    inst.answers = {{t * k + c, 1.0}};
    inst.label = t * k + c;
    inst.category = ds.types.name(t);
    inst.latent_concept = static_cast<std::int64_t>(v);
    ds.images[inst.image_id] = std::move(feat);
    split.instances.push_back(std::move(inst));
  }
}

}  // namespace

Dataset generate_synthetic(const GenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t T = cfg.num_types, k = cfg.answers_per_type;
  std::mt19937_64 rng(seed);

  Dataset ds;
  ds.seed = seed;
  ds.image_dim = cfg.image_dim;
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> prefixes;
  for (std::size_t t = 0; t < T; ++t) {
    const std::string a = "type" + std::to_string(t), b = "kind" + std::to_string(t);
    ds.tokens.push_back(a);
    ds.tokens.push_back(b);
    names.push_back(a);
    prefixes.push_back({a, b});
  }
  for (std::size_t r = 0; r < k; ++r) ds.tokens.push_back("shift" + std::to_string(r));
  for (std::size_t f = 0; f < cfg.filler_tokens; ++f) ds.tokens.push_back("word" + std::to_string(f));
  ds.types = QuestionTypeTable(std::move(names), std::move(prefixes));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < k; ++c) ds.answers.add("t" + std::to_string(t) + "_a" + std::to_string(c));
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> emb(k, std::vector<double>(cfg.image_dim));
  for (auto& row : emb) {
    for (auto& x : row) x = gauss(rng);
  }
  std::uniform_int_distribution<std::size_t> pick_head(0, k - 1);
  std::vector<std::size_t> heads(T);
  for (auto& h : heads) h = pick_head(rng);

  const double test_head = cfg.test_prior == TestPrior::Inverted ? (1.0 - cfg.bias) / static_cast<double>(k - 1)
                                                                 : 1.0 / static_cast<double>(k);
  fill_split(ds.train, cfg.train_size, cfg.bias, 0, cfg, heads, emb, ds, rng);
  fill_split(ds.test, cfg.test_size, test_head, static_cast<std::int64_t>(cfg.train_size), cfg, heads, emb, ds, rng);

  json gen = json::parse(cfg.to_json());
  gen["source"] = "synthetic";
  gen["heads"] = heads;
  ds.generator_json = gen.dump();
  ds.validate();
  return ds;
}

std::vector<std::size_t> synthetic_heads(const Dataset& ds) {
  const json gen = json::parse(ds.generator_json);
  if (!gen.contains("heads")) throw DataError("dataset was not produced by the synthetic generator");
  const auto k = gen.at("answers_per_type").get<std::size_t>();
  std::vector<std::size_t> out;
  std::size_t t = 0;
  for (const auto& h : gen.at("heads")) out.push_back(t++ * k + h.get<std::size_t>());
  return out;
}

}  // namespace dvqa::data
