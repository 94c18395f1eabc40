#include "diffengine/optim.hpp"

#include <cmath>

#include "common/error.hpp"

namespace dvqa::ad {

void Optimizer::check_gradients() const {
  for (const Parameter* p : params_) {
    if (!p->grad.all_finite()) {
      throw NumericError("non-finite gradient in parameter '" + p->name + "' at step " + std::to_string(steps_ + 1));
    }
  }
}

Adam::Adam(std::vector<Parameter*> params, AdamOptions opts) : Optimizer(std::move(params)), opts_(opts) {
  if (!(opts_.lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::step() {
  check_gradients();
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(opts_.beta1, t);
  const double c2 = 1.0 - std::pow(opts_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k]->value.data();
    auto g = params_[k]->grad.data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
  }
}

void Sgd::step() {
  check_gradients();
  ++steps_;
  for (Parameter* p : params_) {
    auto w = p->value.data();
    auto g = p->grad.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
  }
}

std::vector<Tensor> finite_diff_gradient(const std::function<double()>& loss_fn, std::span<Parameter* const> params,
                                         double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite difference step must be positive");
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (Parameter* p : params) {
    Tensor g = Tensor::zeros_like(p->value);
    auto w = p->value.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + eps;
      const double up = loss_fn();
      w[i] = orig - eps;
      const double down = loss_fn();
      w[i] = orig;
      g[i] = (up - down) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace dvqa::ad
