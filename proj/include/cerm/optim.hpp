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
#include <map>
#include <string>
#include <vector>

#include "cerm/tensor.hpp"

namespace cerm {

/// Named parameter collections. std::map keeps iteration order stable, which
/// keeps optimizer updates and checkpoint layout deterministic.
using ParamMap = std::map<std::string, Tensor>;
using GradMap = std::map<std::string, Tensor>;

/// Per-parameter first/second moment accumulators plus the shared step count.
struct AdamState {
    struct Moments {
        std::vector<double> m, v;
    };
    std::map<std::string, Moments> moments;
    std::size_t step = 0;
};

/// One Adam update with bias correction. Default parameters beta1 = 0.9,
/// beta2 = 0.999, eps = 1e-8. Only parameters named in `grads` move; anything
/// else (frozen layers) stays bit-identical.
inline void adam_step(ParamMap& params, const GradMap& grads, AdamState& state, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (const auto& [name, grad] : grads) {
        auto it = params.find(name);
        if (it == params.end()) throw Error("adam_step: unknown parameter '" + name + "'");
        Tensor& p = it->second;
        if (!p.same_shape(grad)) {
            throw Error("adam_step: gradient shape " + shape_str(grad.shape()) +
                        " does not match parameter '" + name + "' shape " +
                        shape_str(p.shape()));
        }
        auto& mom = state.moments[name];
        if (mom.m.empty()) {
            mom.m.assign(p.size(), 0.0);
            mom.v.assign(p.size(), 0.0);
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = grad[i];
            mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g;
            mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g * g;
            const double mhat = mom.m[i] / bc1;
            const double vhat = mom.v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

/// Sums micro-batch gradients weighted by micro-batch size. For micro-batches
/// of equal size this reduces to the plain 1/k rescale, and for any partition
/// of a batch into mean-reduced micro-losses the finalized result equals the
/// mean-reduced full-batch gradient.
class GradAccumulator {
public:
    void add(const GradMap& grads, std::size_t batch_size) {
        if (batch_size == 0) throw Error("GradAccumulator::add: empty micro-batch");
        const double w = static_cast<double>(batch_size);
        for (const auto& [name, grad] : grads) {
            auto it = sum_.find(name);
            if (it == sum_.end()) {
                Tensor t(grad.shape());
                for (std::size_t i = 0; i < grad.size(); ++i) t[i] = w * grad[i];
                sum_.emplace(name, std::move(t));
            } else {
                if (!it->second.same_shape(grad)) {
                    throw Error("GradAccumulator::add: gradient shape " +
                                shape_str(grad.shape()) + " does not match accumulated '" +
                                name + "' shape " + shape_str(it->second.shape()));
                }
                for (std::size_t i = 0; i < grad.size(); ++i) it->second[i] += w * grad[i];
            }
        }
        total_weight_ += w;
        ++batches_;
    }

    GradMap finalize() const {
        if (batches_ == 0) throw Error("GradAccumulator::finalize: empty accumulation window");
        GradMap out;
        for (const auto& [name, t] : sum_) {
            Tensor g(t.shape());
            for (std::size_t i = 0; i < t.size(); ++i) g[i] = t[i] / total_weight_;
            out.emplace(name, std::move(g));
        }
        return out;
    }

    void reset() {
        sum_.clear();
        total_weight_ = 0.0;
        batches_ = 0;
    }

    std::size_t batches() const { return batches_; }

private:
    GradMap sum_;
    double total_weight_ = 0.0;
    std::size_t batches_ = 0;
};

}  // namespace cerm
