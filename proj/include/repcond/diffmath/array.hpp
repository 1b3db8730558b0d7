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
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace repcond::diffmath {

using Shape = std::vector<std::size_t>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Element storage. 64-byte alignment keeps Eigen's vectorized reductions
/// on the same summation order from run to run; with malloc's 16-byte
/// alignment the peeled head, and so the last bits, follow the heap layout.
using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

std::string shape_string(const Shape& shape);

/// Dense row-major float64 array of rank 0, 1 or 2.
///
/// A rank-1 array of length n behaves as a 1 x n row wherever a matrix is
/// expected, so `rows()`/`cols()` are defined for every rank.
class Array {
public:
    Array() = default;
    explicit Array(Shape shape, double fill = 0.0);
    Array(Shape shape, std::vector<double> data);

    static Array scalar(double value);
    static Array vector(std::vector<double> values);
    static Array vector(std::initializer_list<double> values);
    static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Array zeros_like(const Array& other) { return Array(other.shape_); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t ndim() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rows() const noexcept;
    std::size_t cols() const noexcept;
    bool is_scalar() const noexcept { return data_.size() == 1; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double item() const;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    Storage& values() noexcept { return data_; }
    const Storage& values() const noexcept { return data_; }

    MatrixMap mat() { return {data_.data(), Eigen::Index(rows()), Eigen::Index(cols())}; }
    ConstMatrixMap mat() const {
        return {data_.data(), Eigen::Index(rows()), Eigen::Index(cols())};
    }

    bool all_finite() const noexcept;
    Array reshaped(Shape shape) const;
    void fill(double v);

    friend bool operator==(const Array& a, const Array& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    Storage data_;
};

std::size_t shape_size(const Shape& shape);

} // namespace repcond::diffmath
