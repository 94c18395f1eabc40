#include "diffengine/ops.hpp"

#include <cmath>
#include <string>

#include "common/error.hpp"

namespace dvqa::ad {

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ConfigError(std::string(op) + ": expected rank-2 input, got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
  }
}

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw UsageError("operands recorded on different tapes");
}

template <class F>
Var unary(Var a, OpKind kind, F&& f, BackwardRule rule) {
  const Tensor& x = a.value();
  Tensor out = Tensor::zeros_like(x);
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = f(xd[i]);
  return a.tape->record(kind, std::move(out), {a.id}, std::move(rule));
}

}  // namespace

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double log_sigmoid(double x) noexcept { return -softplus(-x); }

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank2(A, "matmul");
  require_rank2(B, "matmul");
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) {
    throw ConfigError("matmul: inner dimensions differ " + shape_string(A.shape()) + " x " + shape_string(B.shape()));
  }
  Tensor C = Tensor::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    auto c = C.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A(i, p);
      if (av == 0.0) continue;
      auto brow = B.row(p);
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  return a.tape->record(OpKind::MatMul, std::move(C), {a.id, b.id}, [m, k, n](const GradContext& g) {
    const Tensor& A = *g.in[0];
    const Tensor& B = *g.in[1];
    if (Tensor* dA = g.din[0]) {
      for (std::size_t i = 0; i < m; ++i) {
        auto dc = g.dout.row(i);
        auto da = dA->row(i);
        for (std::size_t p = 0; p < k; ++p) {
          auto brow = B.row(p);
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += dc[j] * brow[j];
          da[p] += s;
        }
      }
    }
    if (Tensor* dB = g.din[1]) {
      for (std::size_t i = 0; i < m; ++i) {
        auto dc = g.dout.row(i);
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A(i, p);
          if (av == 0.0) continue;
          auto db = dB->row(p);
          for (std::size_t j = 0; j < n; ++j) db[j] += av * dc[j];
        }
      }
    }
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank2(A, "add");
  require_rank2(B, "add");
  const bool broadcast = A.shape() != B.shape();
  if (broadcast && !(B.rows() == 1 && B.cols() == A.cols())) {
    throw ConfigError("add: shape mismatch " + shape_string(A.shape()) + " vs " + shape_string(B.shape()));
  }
  Tensor out = A;
  const std::size_t cols = A.cols();
  auto od = out.data();
  auto bd = B.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += broadcast ? bd[i % cols] : bd[i];
  return a.tape->record(OpKind::Add, std::move(out), {a.id, b.id}, [broadcast, cols](const GradContext& g) {
    auto d = g.dout.data();
    if (Tensor* da = g.din[0]) {
      auto dd = da->data();
      for (std::size_t i = 0; i < d.size(); ++i) dd[i] += d[i];
    }
    if (Tensor* db = g.din[1]) {
      auto dd = db->data();
      for (std::size_t i = 0; i < d.size(); ++i) dd[broadcast ? i % cols : i] += d[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same_shape(A, B, "sub");
  Tensor out = A;
  auto od = out.data();
  auto bd = B.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] -= bd[i];
  return a.tape->record(OpKind::Sub, std::move(out), {a.id, b.id}, [](const GradContext& g) {
    auto d = g.dout.data();
    if (Tensor* da = g.din[0]) {
      auto dd = da->data();
      for (std::size_t i = 0; i < d.size(); ++i) dd[i] += d[i];
    }
    if (Tensor* db = g.din[1]) {
      auto dd = db->data();
      for (std::size_t i = 0; i < d.size(); ++i) dd[i] -= d[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same_shape(A, B, "mul");
  Tensor out = A;
  auto od = out.data();
  auto bd = B.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bd[i];
  return a.tape->record(OpKind::Mul, std::move(out), {a.id, b.id}, [](const GradContext& g) {
    auto d = g.dout.data();
    auto av = g.in[0]->data();
    auto bv = g.in[1]->data();
    if (Tensor* da = g.din[0]) {
      auto dd = da->data();
      for (std::size_t i = 0; i < d.size(); ++i) dd[i] += d[i] * bv[i];
    }
    if (Tensor* db = g.din[1]) {
      auto dd = db->data();
      for (std::size_t i = 0; i < d.size(); ++i) dd[i] += d[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary(a, OpKind::Scale, [factor](double x) { return factor * x; }, [factor](const GradContext& g) {
    auto d = g.dout.data();
    auto dd = g.din[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) dd[i] += factor * d[i];
  });
}

Var sigmoid(Var a) {
  return unary(a, OpKind::Sigmoid, [](double x) { return sigmoid(x); }, [](const GradContext& g) {
    auto d = g.dout.data();
    auto y = g.out.data();
    auto dd = g.din[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) dd[i] += d[i] * y[i] * (1.0 - y[i]);
  });
}

Var log_sigmoid(Var a) {
  return unary(a, OpKind::LogSigmoid, [](double x) { return log_sigmoid(x); }, [](const GradContext& g) {
    auto d = g.dout.data();
    auto x = g.in[0]->data();
    auto dd = g.din[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) dd[i] += d[i] * sigmoid(-x[i]);
  });
}

Var tanh(Var a) {
  return unary(a, OpKind::Tanh, [](double x) { return std::tanh(x); }, [](const GradContext& g) {
    auto d = g.dout.data();
    auto y = g.out.data();
    auto dd = g.din[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) dd[i] += d[i] * (1.0 - y[i] * y[i]);
  });
}

Var relu(Var a) {
  return unary(a, OpKind::Relu, [](double x) { return x > 0.0 ? x : 0.0; }, [](const GradContext& g) {
    auto d = g.dout.data();
    auto x = g.in[0]->data();
    auto dd = g.din[0]->data();
    for (std::size_t i = 0; i < d.size(); ++i) dd[i] += x[i] > 0.0 ? d[i] : 0.0;
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->record(OpKind::Sum, Tensor::scalar(s), {a.id}, [](const GradContext& g) {
    const double d = g.dout[0];
    for (double& v : g.din[0]->data()) v += d;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ConfigError("mean: empty input");
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->record(OpKind::Mean, Tensor::scalar(s / static_cast<double>(n)), {a.id},
                        [n](const GradContext& g) {
                          const double d = g.dout[0] / static_cast<double>(n);
                          for (double& v : g.din[0]->data()) v += d;
                        });
}

Var embedding_bag(Var table, std::span<const std::vector<std::size_t>> bags) {
  const Tensor& T = table.value();
  require_rank2(T, "embedding_bag");
  const std::size_t dim = T.cols();
  Tensor out = Tensor::zeros(bags.size(), dim);
  std::vector<std::vector<std::size_t>> kept(bags.begin(), bags.end());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (kept[i].empty()) throw ConfigError("embedding_bag: empty bag at row " + std::to_string(i));
    auto o = out.row(i);
    for (std::size_t id : kept[i]) {
      if (id >= T.rows()) {
        throw ConfigError("embedding_bag: index " + std::to_string(id) + " outside table of " +
                          std::to_string(T.rows()) + " rows");
      }
      auto r = T.row(id);
      for (std::size_t j = 0; j < dim; ++j) o[j] += r[j];
    }
    const double inv = 1.0 / static_cast<double>(kept[i].size());
    for (double& v : o) v *= inv;
  }
  return table.tape->record(OpKind::EmbeddingBag, std::move(out), {table.id},
                            [bags = std::move(kept), dim](const GradContext& g) {
                              Tensor& dT = *g.din[0];
                              for (std::size_t i = 0; i < bags.size(); ++i) {
                                auto d = g.dout.row(i);
                                const double inv = 1.0 / static_cast<double>(bags[i].size());
                                for (std::size_t id : bags[i]) {
                                  auto r = dT.row(id);
                                  for (std::size_t j = 0; j < dim; ++j) r[j] += inv * d[j];
                                }
                              }
                            });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& A = a.value();
  require_rank2(A, "gather_rows");
  const std::size_t cols = A.cols();
  Tensor out = Tensor::zeros(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= A.rows()) {
      throw ConfigError("gather_rows: row " + std::to_string(rows[i]) + " outside " + shape_string(A.shape()));
    }
    auto src = A.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return a.tape->record(OpKind::GatherRows, std::move(out), {a.id},
                        [idx = std::vector<std::size_t>(rows.begin(), rows.end()), cols](const GradContext& g) {
                          Tensor& dA = *g.din[0];
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            auto d = g.dout.row(i);
                            auto r = dA.row(idx[i]);
                            for (std::size_t j = 0; j < cols; ++j) r[j] += d[j];
                          }
                        });
}

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank2(A, "concat");
  require_rank2(B, "concat");
  if (A.rows() != B.rows()) {
    throw ConfigError("concat: row counts differ " + shape_string(A.shape()) + " vs " + shape_string(B.shape()));
  }
  const std::size_t ca = A.cols(), cb = B.cols();
  Tensor out = Tensor::zeros(A.rows(), ca + cb);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    auto o = out.row(i);
    std::copy(A.row(i).begin(), A.row(i).end(), o.begin());
    std::copy(B.row(i).begin(), B.row(i).end(), o.begin() + static_cast<std::ptrdiff_t>(ca));
  }
  return a.tape->record(OpKind::Concat, std::move(out), {a.id, b.id}, [ca, cb](const GradContext& g) {
    for (std::size_t i = 0; i < g.dout.rows(); ++i) {
      auto d = g.dout.row(i);
      if (Tensor* da = g.din[0]) {
        auto r = da->row(i);
        for (std::size_t j = 0; j < ca; ++j) r[j] += d[j];
      }
      if (Tensor* db = g.din[1]) {
        auto r = db->row(i);
        for (std::size_t j = 0; j < cb; ++j) r[j] += d[ca + j];
      }
    }
  });
}

Var pick(Var a, std::span<const std::size_t> rows, std::span<const std::size_t> cols) {
  const Tensor& A = a.value();
  require_rank2(A, "pick");
  if (rows.size() != cols.size()) throw ConfigError("pick: row and column index lists differ in length");
  Tensor out = Tensor::zeros(rows.size(), 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= A.rows() || cols[k] >= A.cols()) {
      throw ConfigError("pick: (" + std::to_string(rows[k]) + "," + std::to_string(cols[k]) + ") outside " +
                        shape_string(A.shape()));
    }
    out[k] = A(rows[k], cols[k]);
  }
  return a.tape->record(OpKind::Pick, std::move(out), {a.id},
                        [r = std::vector<std::size_t>(rows.begin(), rows.end()),
                         c = std::vector<std::size_t>(cols.begin(), cols.end())](const GradContext& g) {
                          Tensor& dA = *g.din[0];
                          for (std::size_t k = 0; k < r.size(); ++k) dA(r[k], c[k]) += g.dout[k];
                        });
}

Var detach(Var a) {
  Tensor v = a.value();
  if (auto* memo = a.tape->detach_memo()) {
    if (memo->replay) {
      if (memo->next >= memo->values.size()) throw UsageError("detach replay ran past the recorded values");
      const Tensor& frozen = memo->values[memo->next++];
      if (frozen.shape() != v.shape()) {
        throw UsageError("detach replay shape " + shape_string(frozen.shape()) + " differs from live " + shape_string(v.shape()));
      }
      v = frozen;
    } else {
      memo->values.push_back(v);
    }
  }
  return a.tape->record(OpKind::Detach, std::move(v), {}, {});
}

}  // namespace dvqa::ad
