#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "diffengine/tape.hpp"

namespace dvqa::ad {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Applies one update from the accumulated gradients. Throws NumericError
  // naming the parameter if any gradient entry is non-finite; no parameter is
  // modified in that case.
  virtual void step() = 0;
  std::int64_t steps() const noexcept { return steps_; }

 protected:
  explicit Optimizer(std::vector<Parameter*> params) : params_(std::move(params)) {}
  void check_gradients() const;

  std::vector<Parameter*> params_;
  std::int64_t steps_ = 0;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias-corrected first and second moments, zero-initialized.
class Adam final : public Optimizer {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions opts);
  void step() override;

 private:
  AdamOptions opts_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

class Sgd final : public Optimizer {
 public:
  Sgd(std::vector<Parameter*> params, double lr) : Optimizer(std::move(params)), lr_(lr) {}
  void step() override;

 private:
  double lr_;
};

// Central differences (f(x+eps) - f(x-eps)) / 2eps for every entry of every
// parameter. loss_fn must be a deterministic function of the parameter values.
std::vector<Tensor> finite_diff_gradient(const std::function<double()>& loss_fn, std::span<Parameter* const> params,
                                         double eps);

}  // namespace dvqa::ad
