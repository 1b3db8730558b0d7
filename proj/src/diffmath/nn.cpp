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

#include "repcond/diffmath/nn.hpp"

#include <cmath>

namespace repcond::diffmath {

Array init_weight(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
    Array w(Shape{rows, cols});
    const double sd = scale / std::sqrt(static_cast<double>(rows));
    for (auto& v : w.data()) v = sd * rng.normal();
    return w;
}

void add_linear(ParamStore& ps, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                double scale) {
    ps.add(prefix + ".w", init_weight(in, out, rng, scale));
    ps.add(prefix + ".b", Array(Shape{out}));
}

Var affine(Var x, Var w, Var b) {
    Var xw = matmul(x, w);
    return xw.value().ndim() == 1 ? add(xw, b) : add_row(xw, b);
}

Var linear(Tape& t, ParamStore& ps, const std::string& prefix, Var x) {
    return affine(x, t.param(ps, prefix + ".w"), t.param(ps, prefix + ".b"));
}

void add_pair_mlp(ParamStore& ps, const std::string& prefix, std::size_t dim, std::size_t hidden,
                  std::size_t out, Rng& rng, double out_scale) {
    const double s = std::sqrt(1.0 / 3.0);
    ps.add(prefix + ".wi", init_weight(dim, hidden, rng, s));
    ps.add(prefix + ".wj", init_weight(dim, hidden, rng, s));
    ps.add(prefix + ".wd", init_weight(1, hidden, rng, s));
    ps.add(prefix + ".b1", Array(Shape{hidden}));
    ps.add(prefix + ".w2", init_weight(hidden, out, rng, out_scale));
    ps.add(prefix + ".b2", Array(Shape{out}));
}

Var pair_mlp(Tape& t, ParamStore& ps, const std::string& prefix, Var h, const std::vector<std::size_t>& src,
             const std::vector<std::size_t>& dst, Var d2) {
    Var hi = gather_rows(matmul(h, t.param(ps, prefix + ".wi")), src);
    Var hj = gather_rows(matmul(h, t.param(ps, prefix + ".wj")), dst);
    Var hd = matmul(d2, t.param(ps, prefix + ".wd"));
    Var hidden = tanh(add_row(add(add(hi, hj), hd), t.param(ps, prefix + ".b1")));
    return add_row(matmul(hidden, t.param(ps, prefix + ".w2")), t.param(ps, prefix + ".b2"));
}

} // namespace repcond::diffmath
