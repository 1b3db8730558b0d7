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

#include "repcond/diffmath/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "repcond/errors.hpp"

namespace repcond::diffmath {

namespace {

void require_same_shape(const Array& a, const Array& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

template <typename Fn>
Array map_values(const Array& a, Fn fn) {
    Array out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = fn(a[i]);
    }
    return out;
}

// Elementwise unary op whose adjoint is out_grad * local(x, y).
template <typename Fwd, typename Local>
Var unary(Var a, Fwd fwd, Local local) {
    Tape& t = *a.tape;
    return t.record(map_values(a.value(), fwd), {a}, [a = a.id, local](Tape& t, std::uint32_t self) {
        if (Array* ga = t.grad_target(a)) {
            const Array& x = t.value(a);
            const Array& y = t.value(self);
            const Array& g = t.out_grad(self);
            for (std::size_t i = 0; i < g.size(); ++i) {
                (*ga)[i] += g[i] * local(x[i], y[i]);
            }
        }
    });
}

} // namespace

Var add(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "add");
    Array out = a.value();
    out.mat() += b.value().mat();
    return a.tape->record(std::move(out), {a, b}, [a = a.id, b = b.id](Tape& t, std::uint32_t self) {
        const Array& g = t.out_grad(self);
        if (Array* ga = t.grad_target(a)) ga->mat() += g.mat();
        if (Array* gb = t.grad_target(b)) gb->mat() += g.mat();
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "sub");
    Array out = a.value();
    out.mat() -= b.value().mat();
    return a.tape->record(std::move(out), {a, b}, [a = a.id, b = b.id](Tape& t, std::uint32_t self) {
        const Array& g = t.out_grad(self);
        if (Array* ga = t.grad_target(a)) ga->mat() += g.mat();
        if (Array* gb = t.grad_target(b)) gb->mat() -= g.mat();
    });
}

Var mul(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "mul");
    Array out(a.shape());
    out.mat() = a.value().mat().cwiseProduct(b.value().mat());
    return a.tape->record(std::move(out), {a, b}, [a = a.id, b = b.id](Tape& t, std::uint32_t self) {
        const Array& g = t.out_grad(self);
        if (Array* ga = t.grad_target(a)) ga->mat() += g.mat().cwiseProduct(t.value(b).mat());
        if (Array* gb = t.grad_target(b)) gb->mat() += g.mat().cwiseProduct(t.value(a).mat());
    });
}

Var div(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "div");
    Array out(a.shape());
    out.mat() = a.value().mat().cwiseQuotient(b.value().mat());
    return a.tape->record(std::move(out), {a, b}, [a = a.id, b = b.id](Tape& t, std::uint32_t self) {
        const Array& g = t.out_grad(self);
        const Array& bv = t.value(b);
        if (Array* ga = t.grad_target(a)) ga->mat() += g.mat().cwiseQuotient(bv.mat());
        if (Array* gb = t.grad_target(b)) {
            const Array& y = t.value(self);
            gb->mat() -= g.mat().cwiseProduct(y.mat()).cwiseQuotient(bv.mat());
        }
    });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double factor) {
    Array out = a.value();
    out.mat() *= factor;
    return a.tape->record(std::move(out), {a}, [a = a.id, factor](Tape& t, std::uint32_t self) {
        if (Array* ga = t.grad_target(a)) ga->mat() += factor * t.out_grad(self).mat();
    });
}

Var add_scalar(Var a, double offset) {
    Array out = a.value();
    out.mat().array() += offset;
    return a.tape->record(std::move(out), {a}, [a = a.id](Tape& t, std::uint32_t self) {
        if (Array* ga = t.grad_target(a)) ga->mat() += t.out_grad(self).mat();
    });
}

Var add_row(Var a, Var row) {
    const Array& av = a.value();
    const Array& rv = row.value();
    if (rv.size() != av.cols() || av.ndim() != 2) {
        throw DimensionError("add_row: " + shape_string(av.shape()) + " + " +
                             shape_string(rv.shape()));
    }
    Array out = av;
    out.mat().rowwise() += Eigen::Map<const Eigen::RowVectorXd>(rv.data().data(), rv.size());
    return a.tape->record(std::move(out), {a, row}, [a = a.id, r = row.id](Tape& t, std::uint32_t self) {
        const Array& g = t.out_grad(self);
        if (Array* ga = t.grad_target(a)) ga->mat() += g.mat();
        if (Array* gr = t.grad_target(r)) {
            Eigen::Map<Eigen::RowVectorXd>(gr->data().data(), gr->size()) += g.mat().colwise().sum();
        }
    });
}

Var mul_col(Var a, Var col) {
    const Array& av = a.value();
    const Array& cv = col.value();
    if (cv.size() != av.rows() || av.ndim() != 2) {
        throw DimensionError("mul_col: " + shape_string(av.shape()) + " * " +
                             shape_string(cv.shape()));
    }
    Eigen::Map<const Eigen::VectorXd> c(cv.data().data(), cv.size());
    Array out(av.shape());
    out.mat() = c.asDiagonal() * av.mat();
    return a.tape->record(std::move(out), {a, col}, [a = a.id, cid = col.id](Tape& t, std::uint32_t self) {
        const Array& g = t.out_grad(self);
        const Array& cv = t.value(cid);
        if (Array* ga = t.grad_target(a)) {
            Eigen::Map<const Eigen::VectorXd> c(cv.data().data(), cv.size());
            ga->mat() += c.asDiagonal() * g.mat();
        }
        if (Array* gc = t.grad_target(cid)) {
            Eigen::Map<Eigen::VectorXd>(gc->data().data(), gc->size()) +=
                g.mat().cwiseProduct(t.value(a).mat()).rowwise().sum();
        }
    });
}

Var matmul(Var a, Var b) {
    const Array& av = a.value();
    const Array& bv = b.value();
    if (av.ndim() == 0 || bv.ndim() != 2 || av.cols() != bv.rows()) {
        throw DimensionError("matmul: " + shape_string(av.shape()) + " x " +
                             shape_string(bv.shape()));
    }
    Shape shape = av.ndim() == 1 ? Shape{bv.cols()} : Shape{av.rows(), bv.cols()};
    Array out(shape);
    out.mat().noalias() = av.mat() * bv.mat();
    return a.tape->record(std::move(out), {a, b}, [a = a.id, b = b.id](Tape& t, std::uint32_t self) {
        const Array& g = t.out_grad(self);
        if (Array* ga = t.grad_target(a)) ga->mat().noalias() += g.mat() * t.value(b).mat().transpose();
        if (Array* gb = t.grad_target(b)) gb->mat().noalias() += t.value(a).mat().transpose() * g.mat();
    });
}

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a) {
    return unary(a, [](double x) { return std::sqrt(x); },
                 [](double, double y) { return 0.5 / y; });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) {
        s += v;
    }
    return a.tape->record(Array::scalar(s), {a}, [a = a.id](Tape& t, std::uint32_t self) {
        if (Array* ga = t.grad_target(a)) ga->mat().array() += t.out_grad(self)[0];
    });
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0) {
        throw DimensionError("mean of an empty array");
    }
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sums(Var a) {
    const Array& av = a.value();
    Array out(Shape{av.rows(), 1});
    out.mat() = av.mat().rowwise().sum();
    return a.tape->record(std::move(out), {a}, [a = a.id](Tape& t, std::uint32_t self) {
        if (Array* ga = t.grad_target(a)) {
            const Array& g = t.out_grad(self);
            Eigen::Map<const Eigen::VectorXd> gv(g.data().data(), g.size());
            ga->mat().colwise() += gv;
        }
    });
}

Var col_sums(Var a) {
    const Array& av = a.value();
    Array out(Shape{av.cols()});
    out.mat() = av.mat().colwise().sum();
    return a.tape->record(std::move(out), {a}, [a = a.id](Tape& t, std::uint32_t self) {
        if (Array* ga = t.grad_target(a)) {
            const Array& g = t.out_grad(self);
            ga->mat().rowwise() += Eigen::Map<const Eigen::RowVectorXd>(g.data().data(), g.size());
        }
    });
}

Var masked_mean_rows(Var a, const std::vector<bool>& mask) {
    const Array& av = a.value();
    if (mask.size() != av.rows()) {
        throw DimensionError("masked_mean_rows: mask length " + std::to_string(mask.size()) +
                             " for " + shape_string(av.shape()));
    }
    std::size_t count = 0;
    for (bool m : mask) {
        count += m ? 1 : 0;
    }
    if (count == 0) {
        throw ContractError("masked_mean_rows: mask selects no rows");
    }
    const double inv = 1.0 / static_cast<double>(count);
    Array out(Shape{av.cols()});
    for (std::size_t i = 0; i < av.rows(); ++i) {
        if (!mask[i]) continue;
        for (std::size_t j = 0; j < av.cols(); ++j) {
            out[j] += av.at(i, j);
        }
    }
    out.mat() *= inv;
    return a.tape->record(std::move(out), {a}, [a = a.id, mask, inv](Tape& t, std::uint32_t self) {
        if (Array* ga = t.grad_target(a)) {
            const Array& g = t.out_grad(self);
            for (std::size_t i = 0; i < ga->rows(); ++i) {
                if (!mask[i]) continue;
                for (std::size_t j = 0; j < ga->cols(); ++j) {
                    ga->at(i, j) += g[j] * inv;
                }
            }
        }
    });
}

Var concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) {
        throw DimensionError("concat of zero arrays");
    }
    if (axis != 0 && axis != 1) {
        throw DimensionError("concat axis must be 0 or 1");
    }
    std::size_t rows = 0;
    std::size_t cols = 0;
    for (const auto& p : parts) {
        const Array& v = p.value();
        if (axis == 0) {
            if (rows > 0 && v.cols() != cols) throw DimensionError("concat: column mismatch");
            cols = v.cols();
            rows += v.rows();
        } else {
            if (cols > 0 && v.rows() != rows) throw DimensionError("concat: row mismatch");
            rows = v.rows();
            cols += v.cols();
        }
    }
    Array out(Shape{rows, cols});
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const Array& v = p.value();
        offsets.push_back(off);
        if (axis == 0) {
            out.mat().block(off, 0, v.rows(), v.cols()) = v.mat();
            off += v.rows();
        } else {
            out.mat().block(0, off, v.rows(), v.cols()) = v.mat();
            off += v.cols();
        }
    }
    std::vector<std::uint32_t> ids;
    for (const auto& p : parts) ids.push_back(p.id);
    return parts.front().tape->record(std::move(out), parts,
        [ids, offsets, axis](Tape& t, std::uint32_t self) {
            const Array& g = t.out_grad(self);
            for (std::size_t k = 0; k < ids.size(); ++k) {
                Array* gp = t.grad_target(ids[k]);
                if (!gp) continue;
                const auto r = Eigen::Index(gp->rows());
                const auto c = Eigen::Index(gp->cols());
                if (axis == 0) {
                    gp->mat() += g.mat().block(offsets[k], 0, r, c);
                } else {
                    gp->mat() += g.mat().block(0, offsets[k], r, c);
                }
            }
        });
}

Var gather_rows(Var a, const std::vector<std::size_t>& index) {
    const Array& av = a.value();
    const std::size_t cols = av.cols();
    Array out(Shape{index.size(), cols});
    for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] >= av.rows()) {
            throw DimensionError("gather_rows: index " + std::to_string(index[k]) +
                                 " out of range for " + shape_string(av.shape()));
        }
        std::copy_n(av.data().begin() + index[k] * cols, cols, out.data().begin() + k * cols);
    }
    return a.tape->record(std::move(out), {a}, [a = a.id, index, cols](Tape& t, std::uint32_t self) {
        if (Array* ga = t.grad_target(a)) {
            const Array& g = t.out_grad(self);
            for (std::size_t k = 0; k < index.size(); ++k) {
                for (std::size_t j = 0; j < cols; ++j) {
                    (*ga)[index[k] * cols + j] += g[k * cols + j];
                }
            }
        }
    });
}

Var scatter_add_rows(Var a, const std::vector<std::size_t>& index, std::size_t rows) {
    const Array& av = a.value();
    if (index.size() != av.rows()) {
        throw DimensionError("scatter_add_rows: index length does not match rows");
    }
    const std::size_t cols = av.cols();
    Array out(Shape{rows, cols});
    for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] >= rows) {
            throw DimensionError("scatter_add_rows: index out of range");
        }
        for (std::size_t j = 0; j < cols; ++j) {
            out[index[k] * cols + j] += av[k * cols + j];
        }
    }
    return a.tape->record(std::move(out), {a}, [a = a.id, index, cols](Tape& t, std::uint32_t self) {
        if (Array* ga = t.grad_target(a)) {
            const Array& g = t.out_grad(self);
            for (std::size_t k = 0; k < index.size(); ++k) {
                for (std::size_t j = 0; j < cols; ++j) {
                    (*ga)[k * cols + j] += g[index[k] * cols + j];
                }
            }
        }
    });
}

Var reshape(Var a, Shape shape) {
    Array out = a.value().reshaped(std::move(shape));
    return a.tape->record(std::move(out), {a}, [a = a.id](Tape& t, std::uint32_t self) {
        if (Array* ga = t.grad_target(a)) {
            const Array& g = t.out_grad(self);
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        }
    });
}

Array softmax(const Array& logits) {
    if (logits.size() == 0) {
        throw DimensionError("softmax of an empty array");
    }
    const double mx = *std::max_element(logits.data().begin(), logits.data().end());
    Array out(logits.shape());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        z += out[i];
    }
    for (auto& v : out.data()) {
        v /= z;
    }
    return out;
}

Var softmax(Var logits) {
    if (logits.value().ndim() > 1 && logits.value().rows() != 1) {
        throw DimensionError("softmax expects a rank-1 array");
    }
    return logits.tape->record(softmax(logits.value()), {logits},
        [a = logits.id](Tape& t, std::uint32_t self) {
            if (Array* ga = t.grad_target(a)) {
                const Array& y = t.value(self);
                const Array& g = t.out_grad(self);
                double dot = 0.0;
                for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
                for (std::size_t i = 0; i < y.size(); ++i) (*ga)[i] += y[i] * (g[i] - dot);
            }
        });
}

Array clamp(const Array& a, double lo, double hi) {
    if (!(lo <= hi)) {
        throw ParameterError("clamp: lo > hi");
    }
    return map_values(a, [lo, hi](double x) { return std::clamp(x, lo, hi); });
}

Var clamp(Var a, double lo, double hi) {
    Array out = clamp(a.value(), lo, hi);
    return a.tape->record(std::move(out), {a}, [a = a.id, lo, hi](Tape& t, std::uint32_t self) {
        if (Array* ga = t.grad_target(a)) {
            const Array& x = t.value(a);
            const Array& g = t.out_grad(self);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (x[i] > lo && x[i] < hi) (*ga)[i] += g[i];
            }
        }
    });
}

Var stop_gradient(Var a) { return a.tape->constant(a.value()); }

Var l2_norm(Var a) {
    double ss = 0.0;
    for (double v : a.value().data()) ss += v * v;
    return a.tape->record(Array::scalar(std::sqrt(ss)), {a}, [a = a.id](Tape& t, std::uint32_t self) {
        if (Array* ga = t.grad_target(a)) {
            const double n = t.value(self)[0];
            if (n == 0.0) return;
            ga->mat() += (t.out_grad(self)[0] / n) * t.value(a).mat();
        }
    });
}

double cosine_similarity(const Array& u, const Array& v) {
    if (u.size() != v.size()) {
        throw DimensionError("cosine_similarity: length mismatch");
    }
    double uv = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    const double nu = std::sqrt(uu), nv = std::sqrt(vv);
    if (nu <= kNormEpsilon || nv <= kNormEpsilon) {
        return 0.0;
    }
    return uv / (nu * nv);
}

Var cosine_similarity(Var u, Var v) {
    const double c = cosine_similarity(u.value(), v.value());
    return u.tape->record(Array::scalar(c), {u, v}, [u = u.id, v = v.id](Tape& t, std::uint32_t self) {
        const Array& uv = t.value(u);
        const Array& vv = t.value(v);
        const double nu = uv.mat().norm(), nv = vv.mat().norm();
        if (nu <= kNormEpsilon || nv <= kNormEpsilon) return;
        const double g = t.out_grad(self)[0];
        const double c = t.value(self)[0];
        // d cos / du = v / (|u||v|) - cos * u / |u|^2
        if (Array* gu = t.grad_target(u)) {
            gu->mat() += g * (vv.mat() / (nu * nv) - c * uv.mat() / (nu * nu));
        }
        if (Array* gv = t.grad_target(v)) {
            gv->mat() += g * (uv.mat() / (nu * nv) - c * vv.mat() / (nv * nv));
        }
    });
}

Var l2_normalize(Var a) {
    const double n = std::max(a.value().mat().norm(), kNormEpsilon);
    Array out = a.value();
    out.mat() /= n;
    return a.tape->record(std::move(out), {a}, [a = a.id, n](Tape& t, std::uint32_t self) {
        if (Array* ga = t.grad_target(a)) {
            const Array& g = t.out_grad(self);
            if (n > kNormEpsilon) {
                const Array& y = t.value(self);
                const double yg = y.mat().cwiseProduct(g.mat()).sum();
                ga->mat() += (g.mat() - yg * y.mat()) / n;
            } else {
                ga->mat() += g.mat() / n;
            }
        }
    });
}

Var row_cosine_similarity(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "row_cosine_similarity");
    const Array& av = a.value();
    const Array& bv = b.value();
    const std::size_t m = av.rows();
    Array out(Shape{m, 1});
    for (std::size_t i = 0; i < m; ++i) {
        const auto ra = av.mat().row(Eigen::Index(i));
        const auto rb = bv.mat().row(Eigen::Index(i));
        const double na = ra.norm(), nb = rb.norm();
        out[i] = (na <= kNormEpsilon || nb <= kNormEpsilon) ? 0.0 : ra.dot(rb) / (na * nb);
    }
    return a.tape->record(std::move(out), {a, b}, [a = a.id, b = b.id](Tape& t, std::uint32_t self) {
        const Array& av = t.value(a);
        const Array& bv = t.value(b);
        const Array& c = t.value(self);
        const Array& g = t.out_grad(self);
        Array* ga = t.grad_target(a);
        Array* gb = t.grad_target(b);
        for (std::size_t i = 0; i < av.rows(); ++i) {
            const auto ra = av.mat().row(Eigen::Index(i));
            const auto rb = bv.mat().row(Eigen::Index(i));
            const double na = ra.norm(), nb = rb.norm();
            if (na <= kNormEpsilon || nb <= kNormEpsilon) continue;
            if (ga) ga->mat().row(Eigen::Index(i)) += g[i] * (rb / (na * nb) - c[i] * ra / (na * na));
            if (gb) gb->mat().row(Eigen::Index(i)) += g[i] * (ra / (na * nb) - c[i] * rb / (nb * nb));
        }
    });
}

} // namespace repcond::diffmath
