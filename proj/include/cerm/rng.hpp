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

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace cerm {

/// Deterministic random source. std::mt19937_64 is fully specified by the
/// standard, and all derived draws below are implemented by hand, so a seed
/// pins the exact stream across platforms and library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 bits of entropy.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::size_t below(std::size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        const std::uint64_t bound = n;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t draw;
        do {
            draw = next_u64();
        } while (draw >= limit);
        return static_cast<std::size_t>(draw % bound);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Fisher-Yates shuffle driven by below(), so the permutation depends only
    /// on the seed.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    /// Derive an independent child stream.
    Rng fork() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ull); }

private:
    std::mt19937_64 engine_;
};

}  // namespace cerm
