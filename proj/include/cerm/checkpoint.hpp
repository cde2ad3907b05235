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

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cerm/optim.hpp"
#include "cerm/tensor.hpp"

namespace cerm {

/// Self-describing parameter container.
///
/// Layout (text, one record per line):
///   CERM-CKPT-1
///   meta <key> <value...>
///   tensor <name> <rank> <dim...>
///   <size space-separated values, printed with %.17g so doubles round-trip>
///   end
struct Checkpoint {
    std::map<std::string, std::string> meta;
    ParamMap tensors;

    static constexpr const char* kMagic = "CERM-CKPT-1";
};

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("save_checkpoint: cannot open '" + path + "' for writing");
    out << Checkpoint::kMagic << '\n';
    for (const auto& [k, v] : ckpt.meta) out << "meta " << k << ' ' << v << '\n';
    for (const auto& [name, t] : ckpt.tensors) {
        out << "tensor " << name << ' ' << t.rank();
        for (std::size_t d : t.shape()) out << ' ' << d;
        out << '\n';
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (i) out << ' ';
            out << detail::format_double(t[i]);
        }
        out << '\n';
    }
    out << "end\n";
    if (!out) throw Error("save_checkpoint: write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_checkpoint: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != Checkpoint::kMagic) {
        throw Error("load_checkpoint: '" + path + "' is not a " + Checkpoint::kMagic +
                    " file");
    }
    Checkpoint ckpt;
    bool saw_end = false;
    while (std::getline(in, line)) {
        if (line == "end") {
            saw_end = true;
            break;
        }
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "meta") {
            std::string key;
            ls >> key;
            std::string rest;
            std::getline(ls, rest);
            if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
            ckpt.meta[key] = rest;
        } else if (kind == "tensor") {
            std::string name;
            std::size_t rank = 0;
            ls >> name >> rank;
            Shape shape(rank);
            for (std::size_t i = 0; i < rank; ++i) {
                if (!(ls >> shape[i])) throw Error("load_checkpoint: bad tensor header: " + line);
            }
            std::string data_line;
            if (!std::getline(in, data_line)) {
                throw Error("load_checkpoint: missing values for tensor '" + name + "'");
            }
            const std::size_t n = shape_numel(shape);
            std::vector<double> values(n);
            const char* p = data_line.c_str();
            char* next = nullptr;
            for (std::size_t i = 0; i < n; ++i) {
                values[i] = std::strtod(p, &next);
                if (next == p) {
                    throw Error("load_checkpoint: tensor '" + name + "' expects " +
                                std::to_string(n) + " values, found " + std::to_string(i));
                }
                p = next;
            }
            ckpt.tensors.emplace(name, Tensor(std::move(shape), std::move(values)));
        } else {
            throw Error("load_checkpoint: unrecognized record: " + line);
        }
    }
    if (!saw_end) throw Error("load_checkpoint: '" + path + "' is truncated (no end record)");
    return ckpt;
}

}  // namespace cerm
