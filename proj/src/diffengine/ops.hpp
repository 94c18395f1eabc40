#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "diffengine/tape.hpp"

namespace dvqa::ad {

// All ops record their output on the tape of their first operand. Shape
// mismatches throw ConfigError naming both shapes.

Var matmul(Var a, Var b);
// b may match a's shape or be a 1xC row broadcast over a's rows.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

Var sigmoid(Var a);
// log(sigmoid(x)) evaluated as -softplus(-x); finite for any finite x.
Var log_sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);

Var sum(Var a);
Var mean(Var a);

// Row i of the result is the mean of table rows listed in bags[i].
Var embedding_bag(Var table, std::span<const std::vector<std::size_t>> bags);
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var concat_cols(Var a, Var b);
// Column vector [a(rows[k], cols[k])]_k.
Var pick(Var a, std::span<const std::size_t> rows, std::span<const std::size_t> cols);
// Same value, no gradient flows back through it.
Var detach(Var a);

// Scalar helpers shared with the loss oracles.
double sigmoid(double x) noexcept;
double log_sigmoid(double x) noexcept;
double softplus(double x) noexcept;

}  // namespace dvqa::ad
