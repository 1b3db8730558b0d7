/*
 * Copyright 2026 The repcond Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <vector>

#include "repcond/diffmath/tape.hpp"

// Differentiable primitives. Every function records one node on the tape of
// its first Var argument; adjoints are exact for the documented semantics.
namespace repcond::diffmath {

// Elementwise, identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

// Broadcasting helpers for m x n matrices.
Var add_row(Var a, Var row);  ///< a[i, j] + row[j]
Var mul_col(Var a, Var col);  ///< a[i, j] * col[i]; col has m entries

Var matmul(Var a, Var b);

Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sqrt(Var a);
/// Nonlinearity used by every network in the project.
Var tanh(Var a);

Var sum(Var a);   ///< scalar
Var mean(Var a);  ///< scalar
Var row_sums(Var a);  ///< m x n -> m x 1
Var col_sums(Var a);  ///< m x n -> length n

/// Mean over the rows whose mask entry is true; result has length n.
/// Throws ContractError when no row is selected.
Var masked_mean_rows(Var a, const std::vector<bool>& mask);

/// Concatenation of rank-2 (or rank-1 as 1 x n) arrays. axis 0 stacks rows,
/// axis 1 joins columns.
Var concat(const std::vector<Var>& parts, int axis);

Var gather_rows(Var a, const std::vector<std::size_t>& index);
/// out[index[k], :] += a[k, :], out has `rows` rows.
Var scatter_add_rows(Var a, const std::vector<std::size_t>& index, std::size_t rows);

Var reshape(Var a, Shape shape);

/// Numerically stabilized softmax of a non-empty rank-1 array.
Var softmax(Var logits);

/// Hard clamp; the adjoint is 1 strictly inside (lo, hi) and 0 elsewhere.
Var clamp(Var a, double lo, double hi);

/// Identity forward, zero adjoint.
Var stop_gradient(Var a);

/// Euclidean norm of all entries. The adjoint at the origin is defined as 0.
Var l2_norm(Var a);

/// Cosine of two equal-length rank-1 arrays, with 1e-12 added to each norm.
/// Zero vectors give 0 and a zero gradient.
Var cosine_similarity(Var u, Var v);

/// a / max(||a||, 1e-12). Exact unit normalization for any nonzero input.
Var l2_normalize(Var a);

/// Row-wise cosine of two m x n arrays (m x 1 result), with the same zero
/// guard as cosine_similarity.
Var row_cosine_similarity(Var a, Var b);

inline constexpr double kNormEpsilon = 1e-12;

// Plain-value counterparts used outside of tapes.
Array softmax(const Array& logits);
Array clamp(const Array& a, double lo, double hi);
double cosine_similarity(const Array& u, const Array& v);

} // namespace repcond::diffmath
