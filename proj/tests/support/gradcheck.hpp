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

// Independent gradient oracle used across the test suites: central finite
// differences over a scalar-valued function of flat parameter vectors. Keeps
// no dependency on the tape the implementation uses.

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cerm/tensor.hpp"

namespace gradcheck {

// f maps the flattened inputs to a scalar loss. Central differences with the
// given step; relative error guarded by max(1, |analytic|, |numeric|) so that
// near-zero gradients do not blow up the ratio.
struct Report {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    bool ok(double tol) const { return max_rel_err <= tol; }
};

inline double rel_err(double a, double b) {
    const double denom = std::max({1.0, std::fabs(a), std::fabs(b)});
    return std::fabs(a - b) / denom;
}

inline Report check(std::vector<double> x,
                    const std::function<double(const std::vector<double>&)>& f,
                    const std::vector<double>& analytic, double h = 1e-5) {
    Report rep;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        const double numeric = (fp - fm) / (2.0 * h);
        const double err = rel_err(analytic[i], numeric);
        if (err > rep.max_rel_err) {
            rep.max_rel_err = err;
            rep.worst_index = i;
            rep.analytic_at_worst = analytic[i];
            rep.numeric_at_worst = numeric;
        }
    }
    return rep;
}

inline std::vector<double> random_values(std::size_t n, cerm::Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

}  // namespace gradcheck
