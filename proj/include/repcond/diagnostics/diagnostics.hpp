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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "repcond/diffmath/array.hpp"
#include "repcond/encoder/encoder.hpp"
#include "repcond/molkit/molecule.hpp"

namespace repcond::diagnostics {

using diffmath::Array;
using molkit::Molecule;

/// N x D representation matrix with a label naming where it came from.
struct RepMatrix {
    Array data;
    std::string source;
};

/// Throws ParameterError unless Z is N x D with N >= 2 and all entries finite.
void validate(const Array& z);

/// exp of the Shannon entropy of the normalized spectrum; entries with
/// p <= 1e-10 are dropped. An all-zero spectrum is defined as rank 1.
double spectral_effective_rank(const std::vector<double>& squared_singular_values);

/// Column-centred SVD of Z, then spectral_effective_rank.
double effective_rank(const Array& z);

/// Squared singular values of the column-centred matrix, descending.
std::vector<double> centered_spectrum(const Array& z);

struct LipschitzResult {
    double max = 0.0;
    double mean = 0.0;
    std::vector<double> ratios;  ///< one per probe, in probe order
};

using EncodeFn = std::function<Array(const Molecule&)>;

/// Probe i perturbs molecule i mod M by a Gaussian direction over its valid
/// coordinates scaled to Frobenius norm epsilon (stream seed, i) and records
/// ||f(x + d) - f(x)|| / epsilon. Non-finite output raises NumericError
/// naming the molecule index.
LipschitzResult empirical_lipschitz(const EncodeFn& f, const std::vector<Molecule>& molecules,
                                    double epsilon = 1e-3, int probes = 100, std::uint64_t seed = 0);

struct PairwiseStats {
    double mean = 0, std = 0, median = 0, p10 = 0, p90 = 0;
};

/// Statistics of all N(N-1)/2 Euclidean distances; population std,
/// percentiles by linear interpolation between order statistics.
PairwiseStats pairwise_stats(const Array& z);

/// Linear-interpolation percentile (q in [0, 1]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

/// Mean over samples of the mean distance to the k nearest other samples.
/// ParameterError when k < 1 or k >= N.
double knn_smoothness(const Array& z, int k);

struct GeometryReport {
    std::string source;
    double effective_rank = 0;
    double lipschitz_mean = 0;
    double lipschitz_max = 0;
    PairwiseStats pairwise;
    int knn_k = 0;
    double knn_avg_distance = 0;
};

GeometryReport geometry_report(const RepMatrix& z, const LipschitzResult& lipschitz, int knn_k);

/// Cosine between dataset-mean graph features of every pair of layers.
Array cross_layer_similarity(const std::vector<encoder::LayerStack>& stacks);

struct PcaResult {
    std::vector<double> explained;  ///< descending, sums to 1 over all components
    double effective_rank = 0;
};

/// Explained-variance ratios of the first `top_k` components (all when top_k <= 0).
PcaResult pca_layer_variance(const Array& z, int top_k = 0);

struct ProbeConfig {
    double train_fraction = 0.8;
    int iterations = 500;
    double lr = 0.1;
    double l2 = 1e-4;
    std::uint64_t split_seed = 0;
};

struct ProbeOutcome {
    double balanced_accuracy = 0;
    std::vector<double> weights;  ///< on standardized features
    double bias = 0;
};

/// Logistic-regression probe: stratified train/test split drawn from one
/// seeded permutation, per-dim z-scoring from the training split, full-batch
/// gradient descent, balanced accuracy on the held-out part. ParameterError
/// unless both classes have at least 5 examples.
ProbeOutcome linear_probe(const Array& features, const std::vector<bool>& labels, const ProbeConfig& cfg = {});

struct ProbeResult {
    std::vector<std::string> motifs;
    std::vector<std::vector<double>> accuracy;  ///< [layer][motif]
    ProbeConfig config;
};

/// Probes every layer's pooled graph feature for every motif label.
ProbeResult probe_layers(const std::vector<encoder::LayerStack>& stacks, const std::vector<Molecule>& molecules,
                         const std::vector<std::string>& motifs, const ProbeConfig& cfg = {});

/// Header then one row per report.
void write_geometry_csv(std::ostream& os, const std::vector<GeometryReport>& reports);
/// Layer rows L0..L{n-1}, motif columns, then an L0 - Llast delta row.
void write_probe_csv(std::ostream& os, const ProbeResult& result);

/// Bit-exact binary matrix format: "REPM1", u64 N, u64 D, N*D f64, little endian.
void write_repm(const std::filesystem::path& path, const Array& z);
/// CheckpointError on a bad magic, truncation or trailing bytes.
Array read_repm(const std::filesystem::path& path);
std::string encode_repm(const Array& z);
Array decode_repm(const std::string& bytes);

/// CSV with a "dim0,dim1,..." header; ParseError on malformed rows.
Array read_rep_csv(const std::filesystem::path& path);

/// Row i = pooled graph feature at `layer` (0-based) of stacks[i].
Array layer_matrix(const std::vector<encoder::LayerStack>& stacks, std::size_t layer);

} // namespace repcond::diagnostics
