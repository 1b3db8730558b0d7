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

#include "repcond/diagnostics/diagnostics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numeric>
#include <ostream>
#include <sstream>

#include <Eigen/SVD>

#include "repcond/errors.hpp"
#include "repcond/rng.hpp"

namespace repcond::diagnostics {

namespace {

constexpr double kSpectrumFloor = 1e-10;
constexpr char kRepmMagic[5] = {'R', 'E', 'P', 'M', '1'};

Eigen::MatrixXd centered(const Array& z) {
    Eigen::MatrixXd m = z.mat();
    m.rowwise() -= m.colwise().mean();
    return m;
}

double row_distance(const Array& z, std::size_t i, std::size_t j) {
    double s = 0;
    for (std::size_t c = 0; c < z.cols(); ++c) {
        const double d = z.at(i, c) - z.at(j, c);
        s += d * d;
    }
    return std::sqrt(s);
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
    if (in.size() - pos < 8) throw CheckpointError("REPM1 data truncated at byte " + std::to_string(pos));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 8;
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

void validate(const Array& z) {
    if (z.ndim() != 2 || z.rows() < 2 || z.cols() < 1) {
        throw ParameterError("representation matrix must be N x D with N >= 2, got " + diffmath::shape_string(z.shape()));
    }
    if (!z.all_finite()) throw ParameterError("representation matrix has non-finite entries");
}

double spectral_effective_rank(const std::vector<double>& squared_singular_values) {
    double total = 0;
    for (double s : squared_singular_values) total += s;
    if (!(total > 0)) return 1.0;
    double h = 0;
    for (double s : squared_singular_values) {
        const double p = s / total;
        if (p > kSpectrumFloor) h -= p * std::log(p);
    }
    return std::exp(h);
}

std::vector<double> centered_spectrum(const Array& z) {
    validate(z);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered(z));
    std::vector<double> out;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
        const double s = svd.singularValues()[i];
        out.push_back(s * s);
    }
    return out;
}

double effective_rank(const Array& z) { return spectral_effective_rank(centered_spectrum(z)); }

LipschitzResult empirical_lipschitz(const EncodeFn& f, const std::vector<Molecule>& molecules, double epsilon,
                                    int probes, std::uint64_t seed) {
    if (probes < 1) throw ParameterError("Lipschitz estimate needs at least one probe");
    if (!(epsilon > 0)) throw ParameterError("Lipschitz perturbation radius must be positive");
    if (molecules.empty()) throw ParameterError("Lipschitz estimate needs at least one molecule");
    auto checked = [&](const Molecule& m, std::size_t idx) {
        Array out = f(m);
        if (!out.all_finite()) {
            throw NumericError("representation of molecule " + std::to_string(idx) + " is not finite");
        }
        return out;
    };
    std::vector<Array> base(std::min(molecules.size(), static_cast<std::size_t>(probes)));
    LipschitzResult res;
    for (int i = 0; i < probes; ++i) {
        const std::size_t idx = static_cast<std::size_t>(i) % molecules.size();
        const Molecule& m = molecules[idx];
        if (base[idx].size() == 0) base[idx] = checked(m, idx);
        Rng rng(derive_seed(seed, "lipschitz", static_cast<std::uint64_t>(i)));
        Array dir(m.coords.shape());
        double norm = 0;
        for (std::size_t r = 0; r < m.size(); ++r) {
            if (!m.mask[r]) continue;
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = rng.normal();
                dir.at(r, c) = v;
                norm += v * v;
            }
        }
        norm = std::sqrt(norm);
        Molecule moved = m;
        for (std::size_t k = 0; k < dir.size(); ++k) moved.coords[k] += epsilon * dir[k] / norm;
        const Array out = checked(moved, idx);
        if (out.size() != base[idx].size()) throw DimensionError("representation size changed under perturbation");
        double d = 0;
        for (std::size_t k = 0; k < out.size(); ++k) d += std::pow(out[k] - base[idx][k], 2);
        res.ratios.push_back(std::sqrt(d) / epsilon);
    }
    res.max = *std::max_element(res.ratios.begin(), res.ratios.end());
    res.mean = std::accumulate(res.ratios.begin(), res.ratios.end(), 0.0) / static_cast<double>(res.ratios.size());
    return res;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw ParameterError("percentile of an empty sample");
    if (!(q >= 0 && q <= 1)) throw ParameterError("percentile level must be in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

PairwiseStats pairwise_stats(const Array& z) {
    validate(z);
    const std::size_t n = z.rows();
    std::vector<double> d;
    d.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d.push_back(row_distance(z, i, j));
    PairwiseStats s;
    s.mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    double ss = 0;
    for (double v : d) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(d.size()));
    s.median = percentile(d, 0.5);
    s.p10 = percentile(d, 0.1);
    s.p90 = percentile(d, 0.9);
    return s;
}

double knn_smoothness(const Array& z, int k) {
    validate(z);
    const std::size_t n = z.rows();
    if (k < 1 || static_cast<std::size_t>(k) >= n) {
        throw ParameterError("k-NN needs 1 <= k < N, got k = " + std::to_string(k) + ", N = " + std::to_string(n));
    }
    double total = 0;
    std::vector<double> d;
    for (std::size_t i = 0; i < n; ++i) {
        d.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) d.push_back(row_distance(z, i, j));
        std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
        std::sort(d.begin(), d.begin() + k);
        total += std::accumulate(d.begin(), d.begin() + k, 0.0) / k;
    }
    return total / static_cast<double>(n);
}

GeometryReport geometry_report(const RepMatrix& z, const LipschitzResult& lipschitz, int knn_k) {
    GeometryReport r;
    r.source = z.source;
    r.effective_rank = effective_rank(z.data);
    r.lipschitz_mean = lipschitz.mean;
    r.lipschitz_max = lipschitz.max;
    r.pairwise = pairwise_stats(z.data);
    r.knn_k = knn_k;
    r.knn_avg_distance = knn_smoothness(z.data, knn_k);
    return r;
}

Array layer_matrix(const std::vector<encoder::LayerStack>& stacks, std::size_t layer) {
    if (stacks.empty()) throw ParameterError("no encoded molecules");
    const std::size_t d = stacks[0].graph_feats.at(layer).size();
    Array z(diffmath::Shape{stacks.size(), d});
    for (std::size_t i = 0; i < stacks.size(); ++i) {
        const Array& g = stacks[i].graph_feats.at(layer);
        if (g.size() != d) throw DimensionError("graph features differ in width across molecules");
        for (std::size_t c = 0; c < d; ++c) z.at(i, c) = g[c];
    }
    return z;
}

Array cross_layer_similarity(const std::vector<encoder::LayerStack>& stacks) {
    if (stacks.size() < 2) throw ParameterError("cross-layer similarity needs at least 2 molecules");
    const std::size_t layers = stacks[0].graph_feats.size();
    std::vector<Eigen::VectorXd> means;
    for (std::size_t l = 0; l < layers; ++l) means.push_back(layer_matrix(stacks, l).mat().colwise().mean());
    Array s(diffmath::Shape{layers, layers});
    for (std::size_t i = 0; i < layers; ++i) {
        for (std::size_t j = 0; j < layers; ++j) {
            const double denom = means[i].norm() * means[j].norm();
            s.at(i, j) = i == j ? 1.0 : (denom > 0 ? means[i].dot(means[j]) / denom : 0.0);
        }
    }
    return s;
}

PcaResult pca_layer_variance(const Array& z, int top_k) {
    const std::vector<double> spec = centered_spectrum(z);
    const double total = std::accumulate(spec.begin(), spec.end(), 0.0);
    PcaResult r;
    const std::size_t keep = top_k <= 0 ? spec.size() : std::min(spec.size(), static_cast<std::size_t>(top_k));
    for (std::size_t i = 0; i < keep; ++i) r.explained.push_back(total > 0 ? spec[i] / total : (i == 0 ? 1.0 : 0.0));
    r.effective_rank = spectral_effective_rank(spec);
    return r;
}

ProbeOutcome linear_probe(const Array& features, const std::vector<bool>& labels, const ProbeConfig& cfg) {
    validate(features);
    const std::size_t n = features.rows(), d = features.cols();
    if (labels.size() != n) throw ParameterError("one label per row is required");
    std::size_t pos = 0;
    for (bool b : labels) pos += b;
    if (pos < 5 || n - pos < 5) {
        throw ParameterError("probe needs at least 5 examples of each class, got " + std::to_string(pos) +
                             " positive and " + std::to_string(n - pos) + " negative");
    }
    // One permutation for both classes keeps the split identical when labels are swapped.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(cfg.split_seed, "probe-split"));
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    std::vector<std::size_t> train, test;
    for (bool cls : {true, false}) {
        const std::size_t total = cls ? pos : n - pos;
        const auto n_train = static_cast<std::size_t>(std::lround(cfg.train_fraction * static_cast<double>(total)));
        std::size_t seen = 0;
        for (std::size_t i : perm) {
            if (labels[i] != cls) continue;
            (seen++ < n_train ? train : test).push_back(i);
        }
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());

    Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    Eigen::VectorXd sd = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    for (std::size_t i : train)
        for (std::size_t c = 0; c < d; ++c) mu[c] += features.at(i, c);
    mu /= static_cast<double>(train.size());
    for (std::size_t i : train)
        for (std::size_t c = 0; c < d; ++c) sd[c] += std::pow(features.at(i, c) - mu[c], 2);
    for (std::size_t c = 0; c < d; ++c) {
        sd[c] = std::sqrt(sd[c] / static_cast<double>(train.size()));
        if (!(sd[c] > 1e-12)) sd[c] = 1.0;
    }
    auto design = [&](const std::vector<std::size_t>& rows) {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
        Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c < d; ++c) x(r, c) = (features.at(rows[r], c) - mu[c]) / sd[c];
            y[r] = labels[rows[r]] ? 1.0 : -1.0;
        }
        return std::pair{x, y};
    };
    const auto [xtr, ytr] = design(train);
    const auto [xte, yte] = design(test);

    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    double b = 0;
    const double inv = 1.0 / static_cast<double>(train.size());
    for (int it = 0; it < cfg.iterations; ++it) {
        const Eigen::VectorXd margin = (ytr.array() * ((xtr * w).array() + b)).matrix();
        // d/ds log(1 + exp(-y s)) = -y sigmoid(-y s)
        Eigen::VectorXd coef(margin.size());
        for (Eigen::Index r = 0; r < margin.size(); ++r) coef[r] = -ytr[r] / (1.0 + std::exp(margin[r]));
        const Eigen::VectorXd gw = inv * (xtr.transpose() * coef) + cfg.l2 * w;
        const double gb = inv * coef.sum();
        w -= cfg.lr * gw;
        b -= cfg.lr * gb;
    }

    const Eigen::VectorXd score = (xte * w).array() + b;
    double hit_pos = 0, n_pos = 0, hit_neg = 0, n_neg = 0;
    for (Eigen::Index r = 0; r < score.size(); ++r) {
        if (yte[r] > 0) {
            n_pos += 1;
            hit_pos += score[r] > 0;
        } else {
            n_neg += 1;
            hit_neg += score[r] < 0;
        }
    }
    ProbeOutcome out;
    out.balanced_accuracy = 0.5 * (hit_pos / n_pos + hit_neg / n_neg);
    out.weights.assign(w.data(), w.data() + w.size());
    out.bias = b;
    return out;
}

ProbeResult probe_layers(const std::vector<encoder::LayerStack>& stacks, const std::vector<Molecule>& molecules,
                         const std::vector<std::string>& motifs, const ProbeConfig& cfg) {
    if (stacks.size() != molecules.size()) throw ParameterError("one layer stack per molecule is required");
    ProbeResult res;
    res.motifs = motifs;
    res.config = cfg;
    const std::size_t layers = stacks.at(0).graph_feats.size();
    for (std::size_t l = 0; l < layers; ++l) {
        const Array z = layer_matrix(stacks, l);
        std::vector<double> row;
        for (const auto& motif : motifs) {
            std::vector<bool> y;
            for (const auto& m : molecules) {
                const auto it = m.motifs.find(motif);
                if (it == m.motifs.end()) throw ParameterError("molecule has no label for motif " + motif);
                y.push_back(it->second);
            }
            row.push_back(linear_probe(z, y, cfg).balanced_accuracy);
        }
        res.accuracy.push_back(row);
    }
    return res;
}

void write_geometry_csv(std::ostream& os, const std::vector<GeometryReport>& reports) {
    os << "source,effective_rank,lipschitz_mean,lipschitz_max,pairwise_mean,pairwise_std,pairwise_median,"
          "pairwise_p10,pairwise_p90,knn_k,knn_avg_distance\n";
    os << std::setprecision(10);
    for (const auto& r : reports) {
        os << r.source << ',' << r.effective_rank << ',' << r.lipschitz_mean << ',' << r.lipschitz_max << ','
           << r.pairwise.mean << ',' << r.pairwise.std << ',' << r.pairwise.median << ',' << r.pairwise.p10 << ','
           << r.pairwise.p90 << ',' << r.knn_k << ',' << r.knn_avg_distance << '\n';
    }
}

void write_probe_csv(std::ostream& os, const ProbeResult& result) {
    os << "layer";
    for (const auto& m : result.motifs) os << ',' << m;
    os << '\n' << std::fixed << std::setprecision(6);
    for (std::size_t l = 0; l < result.accuracy.size(); ++l) {
        os << 'L' << l;
        for (double a : result.accuracy[l]) os << ',' << a;
        os << '\n';
    }
    if (!result.accuracy.empty()) {
        const std::size_t last = result.accuracy.size() - 1;
        os << "L0-L" << last;
        for (std::size_t m = 0; m < result.motifs.size(); ++m) os << ',' << result.accuracy[0][m] - result.accuracy[last][m];
        os << '\n';
    }
    os << std::defaultfloat;
}

std::string encode_repm(const Array& z) {
    if (z.ndim() != 2) throw DimensionError("REPM1 stores 2-D matrices only");
    std::string out(kRepmMagic, sizeof(kRepmMagic));
    put_u64(out, z.rows());
    put_u64(out, z.cols());
    for (double v : z.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

Array decode_repm(const std::string& bytes) {
    if (bytes.size() < sizeof(kRepmMagic) || bytes.compare(0, sizeof(kRepmMagic), kRepmMagic, sizeof(kRepmMagic)) != 0) {
        throw CheckpointError("bad REPM1 magic");
    }
    std::size_t pos = sizeof(kRepmMagic);
    const std::uint64_t n = get_u64(bytes, pos);
    const std::uint64_t d = get_u64(bytes, pos);
    if (d != 0 && n > (bytes.size() - pos) / 8 / d) throw CheckpointError("REPM1 data truncated");
    Array z(diffmath::Shape{static_cast<std::size_t>(n), static_cast<std::size_t>(d)});
    for (auto& v : z.data()) v = std::bit_cast<double>(get_u64(bytes, pos));
    if (pos != bytes.size()) throw CheckpointError("REPM1 data has trailing bytes");
    return z;
}

void write_repm(const std::filesystem::path& path, const Array& z) {
    std::ofstream os(path, std::ios::binary);
    const std::string bytes = encode_repm(z);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("cannot write " + path.string());
}

Array read_repm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_repm(bytes);
}

Array read_rep_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw ParseError(path.string() + ": empty file");
    const auto header = split_csv(line);
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] != "dim" + std::to_string(c)) {
            throw ParseError(path.string() + ": header column " + std::to_string(c) + " should be dim" + std::to_string(c));
        }
    }
    std::vector<double> values;
    std::size_t rows = 0, lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw ParseError(path.string() + ": line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                             " fields, expected " + std::to_string(header.size()));
        }
        for (const auto& cell : cells) {
            std::size_t used = 0;
            double v = 0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != cell.size()) {
                throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": bad number '" + cell + "'");
            }
            values.push_back(v);
        }
        ++rows;
    }
    return Array(diffmath::Shape{rows, header.size()}, std::move(values));
}

} // namespace repcond::diagnostics
