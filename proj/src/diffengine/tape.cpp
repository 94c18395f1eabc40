#include "diffengine/tape.hpp"

#include "common/error.hpp"

namespace dvqa::ad {

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::LogSigmoid: return "log_sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Relu: return "relu";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::EmbeddingBag: return "embedding_bag";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::Concat: return "concat";
    case OpKind::Pick: return "pick";
    case OpKind::Detach: return "detach";
  }
  return "?";
}

const Tensor& Var::value() const {
  if (!tape) throw UsageError("use of an unbound Var");
  return tape->value(id);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::Constant, std::move(value), {}, {}, nullptr, false});
  return {this, nodes_.size() - 1};
}

Var Tape::leaf(Parameter& param) {
  nodes_.push_back(Node{OpKind::Leaf, param.value, {}, {}, &param, true});
  return {this, nodes_.size() - 1};
}

Var Tape::record(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardRule rule) {
  bool needs = false;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw UsageError("tape input id out of range");
    needs = needs || nodes_[in].requires_grad;
  }
  nodes_.push_back(Node{kind, std::move(value), std::move(inputs), std::move(rule), nullptr, needs});
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var root) {
  if (root.tape != this) throw UsageError("backward root belongs to a different tape");
  const Tensor& rv = nodes_.at(root.id).value;
  if (rv.size() != 1) {
    throw UsageError("backward root must be a scalar, got shape " + shape_string(rv.shape()));
  }
  std::vector<Tensor> grads(root.id + 1);
  grads[root.id] = Tensor(rv.shape(), 1.0);

  std::vector<const Tensor*> in_vals;
  std::vector<Tensor*> in_grads;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || grads[id].empty()) continue;
    ++backward_visits_;
    if (node.kind == OpKind::Leaf) {
      auto g = node.param->grad.data();
      auto d = grads[id].data();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += d[k];
      continue;
    }
    in_vals.clear();
    in_grads.clear();
    for (std::size_t in : node.inputs) {
      in_vals.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (grads[in].empty()) grads[in] = Tensor::zeros_like(nodes_[in].value);
        in_grads.push_back(&grads[in]);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    node.rule(GradContext{node.value, grads[id], in_vals, in_grads});
    grads[id] = Tensor();
  }
}

}  // namespace dvqa::ad
