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

#include "repcond/diffmath/array.hpp"

#include <cmath>
#include <sstream>

#include "repcond/errors.hpp"

namespace repcond::diffmath {

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? ", " : "") << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)) {
    if (shape_.size() > 2) {
        throw DimensionError("arrays of rank > 2 are not supported: " + shape_string(shape_));
    }
    data_.assign(shape_size(shape_), fill);
}

Array::Array(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (shape_.size() > 2) {
        throw DimensionError("arrays of rank > 2 are not supported: " + shape_string(shape_));
    }
    if (shape_size(shape_) != data_.size()) {
        throw DimensionError("shape " + shape_string(shape_) + " does not match " +
                             std::to_string(data_.size()) + " values");
    }
}

Array Array::scalar(double value) { return Array(Shape{}, std::vector<double>{value}); }

Array Array::vector(std::vector<double> values) {
    const auto n = values.size();
    return Array(Shape{n}, std::move(values));
}

Array Array::vector(std::initializer_list<double> values) {
    return vector(std::vector<double>(values));
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Array(Shape{rows, cols}, std::move(values));
}

std::size_t Array::rows() const noexcept {
    return shape_.size() == 2 ? shape_[0] : 1;
}

std::size_t Array::cols() const noexcept {
    if (shape_.size() == 2) {
        return shape_[1];
    }
    return shape_.size() == 1 ? shape_[0] : 1;
}

double Array::item() const {
    if (data_.size() != 1) {
        throw DimensionError("item() on array of shape " + shape_string(shape_));
    }
    return data_[0];
}

bool Array::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

Array Array::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                             shape_string(shape));
    }
    if (shape.size() > 2) throw DimensionError("arrays of rank > 2 are not supported: " + shape_string(shape));
    Array out = *this;
    out.shape_ = std::move(shape);
    return out;
}

void Array::fill(double v) {
    for (auto& x : data_) {
        x = v;
    }
}

} // namespace repcond::diffmath
