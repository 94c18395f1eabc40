#pragma once

// Random finite-difference gradient cases shared by the unit tests and the
// acceptance runner.

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "counterparts/counterparts.hpp"
#include "data/synthetic.hpp"
#include "diffengine/ops.hpp"
#include "diffengine/optim.hpp"
#include "losses/losses.hpp"
#include "model/model.hpp"

namespace dvqa::check {

struct GradCase {
  std::string name;
  std::vector<ad::Parameter*> params;
  std::function<ad::Var(ad::Tape&)> build;  // binds params itself, returns a scalar
  std::shared_ptr<void> keepalive;
};

// max over parameters of ||analytic - numeric|| / (||analytic|| + ||numeric||).
// Detached values are frozen at the unperturbed point during the probes.
inline double gradient_relative_error(const GradCase& c, double eps = 1e-5) {
  ad::zero_grad(c.params);
  ad::DetachMemo memo;
  {
    ad::Tape tape;
    tape.set_detach_memo(&memo);
    tape.backward(c.build(tape));
  }
  memo.replay = true;
  const auto numeric = ad::finite_diff_gradient(
      [&] {
        memo.next = 0;
        ad::Tape tape;
        tape.set_detach_memo(&memo);
        return c.build(tape).item();
      },
      c.params, eps);
  double worst = 0.0;
  for (std::size_t k = 0; k < c.params.size(); ++k) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    const auto a = c.params[k]->grad.data();
    const auto n = numeric[k].data();
    for (std::size_t i = 0; i < a.size(); ++i) {
      diff += (a[i] - n[i]) * (a[i] - n[i]);
      na += a[i] * a[i];
      nn += n[i] * n[i];
    }
    const double denom = std::sqrt(na) + std::sqrt(nn);
    if (denom > 0.0) worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

namespace detail {

struct ParamPool {
  std::vector<std::unique_ptr<ad::Parameter>> params;
  ad::Parameter* make(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -1.5, double hi = 1.5,
                      double avoid_zero = 0.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    ad::Tensor t = ad::Tensor::zeros(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) {
      double x = u(rng);
      while (std::abs(x) < avoid_zero) x = u(rng);
      t[i] = x;
    }
    params.push_back(std::make_unique<ad::Parameter>("p" + std::to_string(params.size()), std::move(t)));
    return params.back().get();
  }
};

// Contracts an arbitrary-shaped Var to a scalar with fixed random weights so
// every output entry carries a distinct gradient.
inline ad::Var contract(ad::Var v, const ad::Tensor& w) { return ad::sum(ad::mul(v, v.tape->constant(w))); }

inline ad::Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ad::Tensor t = ad::Tensor::zeros(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

}  // namespace detail

// One case per differentiable op with random shapes and values.
inline std::vector<GradCase> op_cases(std::uint64_t seed) {
  using detail::contract;
  using detail::random_tensor;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> dim(1, 5);
  std::vector<GradCase> cases;
  auto add_case = [&](std::string name, std::shared_ptr<detail::ParamPool> pool,
                      std::function<ad::Var(ad::Tape&, const std::vector<ad::Parameter*>&)> body) {
    std::vector<ad::Parameter*> ps;
    for (auto& p : pool->params) ps.push_back(p.get());
    cases.push_back({std::move(name), ps, [ps, body](ad::Tape& t) { return body(t, ps); }, pool});
  };

  const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, k);
    pool->make(rng, k, n);
    const auto w = random_tensor(rng, m, n);
    add_case("matmul", pool, [w](ad::Tape& t, const auto& p) {
      return contract(ad::matmul(t.leaf(*p[0]), t.leaf(*p[1])), w);
    });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n);
    pool->make(rng, m, n);
    const auto w = random_tensor(rng, m, n);
    add_case("add", pool, [w](ad::Tape& t, const auto& p) { return contract(ad::add(t.leaf(*p[0]), t.leaf(*p[1])), w); });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n);
    pool->make(rng, 1, n);
    const auto w = random_tensor(rng, m, n);
    add_case("add_row_broadcast", pool,
             [w](ad::Tape& t, const auto& p) { return contract(ad::add(t.leaf(*p[0]), t.leaf(*p[1])), w); });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n);
    pool->make(rng, m, n);
    const auto w = random_tensor(rng, m, n);
    add_case("sub", pool, [w](ad::Tape& t, const auto& p) { return contract(ad::sub(t.leaf(*p[0]), t.leaf(*p[1])), w); });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n);
    pool->make(rng, m, n);
    const auto w = random_tensor(rng, m, n);
    add_case("mul", pool, [w](ad::Tape& t, const auto& p) { return contract(ad::mul(t.leaf(*p[0]), t.leaf(*p[1])), w); });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n);
    const auto w = random_tensor(rng, m, n);
    add_case("mul_self", pool, [w](ad::Tape& t, const auto& p) {
      const auto x = t.leaf(*p[0]);
      return contract(ad::mul(x, x), w);
    });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n);
    const auto w = random_tensor(rng, m, n);
    add_case("scale", pool, [w](ad::Tape& t, const auto& p) { return contract(ad::scale(t.leaf(*p[0]), -2.5), w); });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n, -4.0, 4.0);
    const auto w = random_tensor(rng, m, n);
    add_case("sigmoid", pool, [w](ad::Tape& t, const auto& p) { return contract(ad::sigmoid(t.leaf(*p[0])), w); });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n, -8.0, 8.0);
    const auto w = random_tensor(rng, m, n);
    add_case("log_sigmoid", pool,
             [w](ad::Tape& t, const auto& p) { return contract(ad::log_sigmoid(t.leaf(*p[0])), w); });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n, -2.0, 2.0);
    const auto w = random_tensor(rng, m, n);
    add_case("tanh", pool, [w](ad::Tape& t, const auto& p) { return contract(ad::tanh(t.leaf(*p[0])), w); });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n, -2.0, 2.0, 0.01);  // keep clear of the kink
    const auto w = random_tensor(rng, m, n);
    add_case("relu", pool, [w](ad::Tape& t, const auto& p) { return contract(ad::relu(t.leaf(*p[0])), w); });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n);
    add_case("sum", pool, [](ad::Tape& t, const auto& p) {
      const auto s = ad::sum(t.leaf(*p[0]));
      return ad::mul(s, s);
    });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n);
    add_case("mean", pool, [](ad::Tape& t, const auto& p) {
      const auto s = ad::mean(t.leaf(*p[0]));
      return ad::mul(s, s);
    });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    const std::size_t vocab = dim(rng) + 2;
    pool->make(rng, vocab, n);
    std::uniform_int_distribution<std::size_t> tok(0, vocab - 1);
    std::vector<std::vector<std::size_t>> bags(m);
    for (auto& b : bags) {
      b.resize(dim(rng));
      for (auto& x : b) x = tok(rng);
    }
    const auto w = random_tensor(rng, m, n);
    add_case("embedding_bag", pool, [w, bags](ad::Tape& t, const auto& p) {
      return contract(ad::embedding_bag(t.leaf(*p[0]), bags), w);
    });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n);
    std::uniform_int_distribution<std::size_t> row(0, m - 1);
    std::vector<std::size_t> rows(k + 1);
    for (auto& r : rows) r = row(rng);
    const auto w = random_tensor(rng, rows.size(), n);
    add_case("gather_rows", pool,
             [w, rows](ad::Tape& t, const auto& p) { return contract(ad::gather_rows(t.leaf(*p[0]), rows), w); });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n);
    pool->make(rng, m, k);
    const auto w = random_tensor(rng, m, n + k);
    add_case("concat", pool, [w](ad::Tape& t, const auto& p) {
      return contract(ad::concat_cols(t.leaf(*p[0]), t.leaf(*p[1])), w);
    });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n);
    std::uniform_int_distribution<std::size_t> row(0, m - 1), col(0, n - 1);
    std::vector<std::size_t> rows(k + 2), cols(k + 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      rows[i] = row(rng);
      cols[i] = col(rng);
    }
    const auto w = random_tensor(rng, rows.size(), 1);
    add_case("pick", pool,
             [w, rows, cols](ad::Tape& t, const auto& p) { return contract(ad::pick(t.leaf(*p[0]), rows, cols), w); });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, n);
    const auto w = random_tensor(rng, m, n);
    // d/dx [x * detach(x)] = detach(x): the detached branch contributes nothing.
    add_case("detach", pool, [w](ad::Tape& t, const auto& p) {
      const auto x = t.leaf(*p[0]);
      return contract(ad::mul(x, ad::detach(x)), w);
    });
  }
  {
    auto pool = std::make_shared<detail::ParamPool>();
    pool->make(rng, m, k);
    pool->make(rng, k, n);
    pool->make(rng, 1, n);
    pool->make(rng, n, 2);
    add_case("three_layer_network", pool, [](ad::Tape& t, const auto& p) {
      const auto h = ad::tanh(ad::add(ad::matmul(t.leaf(*p[0]), t.leaf(*p[1])), t.leaf(*p[2])));
      return ad::mean(ad::log_sigmoid(ad::matmul(h, t.leaf(*p[3]))));
    });
  }
  return cases;
}

// The full weighted objective on a random micro-batch of a tiny model, with
// the counterpart plan drawn once and held fixed.
inline GradCase full_loss_case(std::uint64_t seed, const loss::LossConfig& cfg) {
  struct State {
    data::Dataset ds;
    std::unique_ptr<model::Model> m;
    std::vector<std::vector<std::size_t>> tokens;
    ad::Tensor images, targets;
    std::vector<std::size_t> labels;
    cp::CounterpartBatchPlan plan;
    loss::SyntheticPairs pairs;
    loss::LossConfig cfg;
  };
  auto st = std::make_shared<State>();
  data::GenConfig g;
  g.num_types = 2;
  g.answers_per_type = 3;
  g.train_size = 6;
  g.test_size = 2;
  g.image_dim = 4;
  g.visual_noise = 0.5;
  st->ds = data::generate_synthetic(g, seed);
  // Soft targets exercise the (1 - a) branch with fractional values.
  std::mt19937_64 rng(seed * 7919 + 1);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  model::ModelConfig mc{st->ds.tokens.size(), g.image_dim, st->ds.answers.size(), 3, 4, model::Fusion::Product, seed};
  if (seed % 2 == 1) mc.fusion = model::Fusion::Concat;
  st->m = std::make_unique<model::Model>(mc);
  const auto& inst = st->ds.train.instances;
  st->images = ad::Tensor::zeros(inst.size(), g.image_dim);
  st->targets = ad::Tensor::zeros(inst.size(), st->ds.answers.size());
  for (std::size_t r = 0; r < inst.size(); ++r) {
    st->tokens.push_back(inst[r].question);
    st->labels.push_back(inst[r].label);
    const auto img = st->ds.image(inst[r].image_id);
    std::copy(img.begin(), img.end(), st->images.row(r).begin());
    st->targets(r, inst[r].label) = u(rng);
  }
  std::vector<std::size_t> batch(inst.size());
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
  st->plan = cp::sample_counterparts(cp::batch_members(inst, batch), cfg.n_real, cfg.n_synthetic, rng);
  st->pairs = loss::synthetic_pairs(st->plan);
  st->cfg = cfg;
  GradCase c;
  c.name = std::string("full_loss_") + loss::variant_name(cfg.variant) + "_" + loss::policy_name(cfg.policy);
  c.params = st->m->parameters();
  c.keepalive = st;
  State* s = st.get();
  c.build = [s](ad::Tape& t) {
    const auto bp = s->m->bind(t);
    const auto fw = s->m->forward(bp, s->tokens, s->images);
    loss::BatchProbs probs{fw.probs, {}, false, s->labels};
    if (!s->pairs.anchors.empty()) {
      probs.synthetic_probs = s->m->pair_probs(bp, fw, s->pairs.donors, s->pairs.anchors);
      probs.has_synthetic = true;
    }
    return loss::total_loss(fw.logits, s->targets, probs, s->plan, s->cfg).total;
  };
  return c;
}

}  // namespace dvqa::check
