#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "diffengine/tensor.hpp"

namespace dvqa::ad {

// A trainable tensor with its gradient accumulator. The accumulator keeps
// summing across backward() calls until zero_grad() is called.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

void zero_grad(std::span<Parameter* const> params);

enum class OpKind {
  Constant,
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  Sigmoid,
  LogSigmoid,
  Tanh,
  Relu,
  Sum,
  Mean,
  EmbeddingBag,
  GatherRows,
  Concat,
  Pick,
  Detach,
};

const char* op_name(OpKind kind);

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const std::vector<std::size_t>& shape() const { return value().shape(); }
  double item() const { return value().item(); }
};

// Arguments handed to a node's local gradient rule. din[k] is null when
// input k does not require a gradient.
struct GradContext {
  const Tensor& out;
  const Tensor& dout;
  std::span<const Tensor* const> in;
  std::span<Tensor* const> din;
};

using BackwardRule = std::function<void(const GradContext&)>;

// Values seen by detach() on one pass. In replay mode detach() returns the
// stored values in order instead of the live ones, which freezes stopped
// branches when a finite-difference probe perturbs the parameters.
struct DetachMemo {
  std::vector<Tensor> values;
  bool replay = false;
  std::size_t next = 0;
};

// Append-only record of a forward computation. Nodes are created in
// topological order, so reverse creation order is a valid backward order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Parameter& param);
  Var record(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardRule rule);

  // Accumulates d(root)/d(param) into every parameter reachable from root.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t backward_visits() const noexcept { return backward_visits_; }

  void set_detach_memo(DetachMemo* memo) noexcept { detach_memo_ = memo; }
  DetachMemo* detach_memo() const noexcept { return detach_memo_; }

 private:
  struct Node {
    OpKind kind;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::size_t backward_visits_ = 0;
  DetachMemo* detach_memo_ = nullptr;
};

}  // namespace dvqa::ad
