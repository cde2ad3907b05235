// Copyright 2026 The CERM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cerm/rng.hpp"

namespace cerm {

/// Base error type for every contract violation in the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

/// Dense n-dimensional array of doubles in row-major order. Plain value type:
/// copies are deep and snapshots are safe to hand across threads. `grad`,
/// when attached by an optimizer step or an accumulator, always shape-matches
/// the values.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), values_(shape_numel(shape_), 0.0) {
        check_dims();
    }

    Tensor(Shape shape, std::vector<double> values)
        : shape_(std::move(shape)), values_(std::move(values)) {
        check_dims();
        if (values_.size() != shape_numel(shape_)) {
            throw Error("Tensor: " + std::to_string(values_.size()) +
                        " values do not fill shape " + shape_str(shape_));
        }
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vec(std::vector<double> v) {
        Shape s{v.size()};
        return Tensor(std::move(s), std::move(v));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols) {
        return Tensor({rows, cols});
    }

    /// Uniform init in [-limit, +limit] with limit = sqrt(6 / (fan_in + fan_out)).
    static Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
        Tensor t({fan_in, fan_out});
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& v : t.values_) v = rng.uniform(-limit, limit);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return values_.size(); }
    std::size_t rank() const { return shape_.size(); }

    std::size_t rows() const {
        require_rank2("rows");
        return shape_[0];
    }
    std::size_t cols() const {
        require_rank2("cols");
        return shape_[1];
    }

    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    double at(std::size_t r, std::size_t c) const {
        require_rank2("at");
        return values_[r * shape_[1] + c];
    }
    double& at(std::size_t r, std::size_t c) {
        require_rank2("at");
        return values_[r * shape_[1] + c];
    }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : values_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    double item() const {
        if (values_.size() != 1) {
            throw Error("Tensor::item: not a scalar, shape " + shape_str(shape_));
        }
        return values_[0];
    }

    /// Gradient slot. Same length as values when present.
    std::optional<std::vector<double>> grad;

private:
    void check_dims() const {
        for (std::size_t d : shape_) {
            if (d == 0) throw Error("Tensor: zero dimension in shape " + shape_str(shape_));
        }
    }
    void require_rank2(const char* what) const {
        if (shape_.size() != 2) {
            throw Error(std::string("Tensor::") + what + ": expected rank 2, got shape " +
                        shape_str(shape_));
        }
    }

    Shape shape_;
    std::vector<double> values_;
};

}  // namespace cerm
