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
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cerm/graph.hpp"
#include "cerm/marker.hpp"
#include "cerm/optim.hpp"
#include "cerm/tokenizer.hpp"

namespace cerm {

enum class EncoderBackend { kPrecomputed, kTinyTransformer };
enum class Pooling { kFirstToken, kMean };

/// Contextual sentence encoder settings. The tiny transformer is a trainable
/// stand-in for a pretrained contextual model: token embeddings plus
/// sinusoidal positions through `layers` self-attention blocks, pooled and
/// projected to a sentence vector. `trainable_suffix` is the number of final
/// blocks that receive gradients; everything earlier stays frozen.
struct EncoderConfig {
    EncoderBackend backend = EncoderBackend::kTinyTransformer;
    std::size_t dim = 64;
    std::size_t layers = 2;
    std::size_t heads = 2;
    std::size_t ffn_dim = 128;
    std::size_t max_len = 128;
    std::size_t trainable_suffix = 2;
    Pooling pooling = Pooling::kFirstToken;

    void validate() const {
        if (dim == 0 || heads == 0 || dim % heads != 0) {
            throw Error("EncoderConfig: dim " + std::to_string(dim) +
                        " must be divisible by heads " + std::to_string(heads));
        }
        if (trainable_suffix > layers) {
            throw Error("EncoderConfig: trainable_suffix " + std::to_string(trainable_suffix) +
                        " exceeds layer count " + std::to_string(layers));
        }
        if (max_len < 2) throw Error("EncoderConfig: max_len must be at least 2");
    }
};

/// Frozen sentence vectors keyed by sentence id, loaded from line-delimited
/// "id <tab> values" records.
class PrecomputedVectors {
public:
    PrecomputedVectors() = default;

    static PrecomputedVectors load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("PrecomputedVectors::load: cannot open '" + path + "'");
        PrecomputedVectors out;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const std::size_t tab = line.find('\t');
            if (tab == std::string::npos) {
                throw Error("PrecomputedVectors::load: line " + std::to_string(line_no) +
                            " has no tab separator");
            }
            const std::string id = line.substr(0, tab);
            std::vector<double> values;
            std::istringstream vs(line.substr(tab + 1));
            double v;
            while (vs >> v) values.push_back(v);
            if (values.empty()) {
                throw Error("PrecomputedVectors::load: line " + std::to_string(line_no) +
                            " has no values");
            }
            if (out.dim_ == 0) out.dim_ = values.size();
            if (values.size() != out.dim_) {
                throw Error("PrecomputedVectors::load: line " + std::to_string(line_no) +
                            " has " + std::to_string(values.size()) + " values, expected " +
                            std::to_string(out.dim_));
            }
            out.by_id_.emplace(id, std::move(values));
        }
        return out;
    }

    void insert(const std::string& id, std::vector<double> values) {
        if (dim_ == 0) dim_ = values.size();
        by_id_[id] = std::move(values);
    }

    std::size_t dim() const { return dim_; }

    const std::vector<double>& lookup(const std::string& id) const {
        auto it = by_id_.find(id);
        if (it == by_id_.end()) {
            throw Error("PrecomputedVectors: no vector stored for sentence id '" + id + "'");
        }
        return it->second;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw Error("PrecomputedVectors::save: cannot open '" + path + "'");
        char buf[40];
        for (const auto& [id, values] : by_id_) {
            out << id << '\t';
            for (std::size_t i = 0; i < values.size(); ++i) {
                if (i) out << ' ';
                std::snprintf(buf, sizeof(buf), "%.17g", values[i]);
                out << buf;
            }
            out << '\n';
        }
    }

private:
    std::map<std::string, std::vector<double>> by_id_;
    std::size_t dim_ = 0;
};

namespace enc {

inline std::string block_prefix(std::size_t layer) {
    return "enc.block" + std::to_string(layer) + ".";
}

/// Fresh tiny-transformer parameters. Weight matrices use the shared uniform
/// fan-in/fan-out init, gains start at 1, every bias at 0.
inline ParamMap init_params(const EncoderConfig& cfg, std::size_t vocab_size, Rng& rng) {
    cfg.validate();
    ParamMap p;
    p.emplace("enc.embed", Tensor::glorot(vocab_size, cfg.dim, rng));
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string pre = block_prefix(l);
        for (const auto& [wname, bname] : {std::pair{"wq", "bq"}, {"wk", "bk"},
                                           {"wv", "bv"}, {"wo", "bo"}}) {
            p.emplace(pre + wname, Tensor::glorot(cfg.dim, cfg.dim, rng));
            p.emplace(pre + bname, Tensor({cfg.dim}));
        }
        Tensor ones({cfg.dim});
        for (double& v : ones.values()) v = 1.0;
        p.emplace(pre + "ln1.gain", ones);
        p.emplace(pre + "ln1.bias", Tensor({cfg.dim}));
        p.emplace(pre + "ln2.gain", ones);
        p.emplace(pre + "ln2.bias", Tensor({cfg.dim}));
        p.emplace(pre + "ffn.w1", Tensor::glorot(cfg.dim, cfg.ffn_dim, rng));
        p.emplace(pre + "ffn.b1", Tensor({cfg.ffn_dim}));
        p.emplace(pre + "ffn.w2", Tensor::glorot(cfg.ffn_dim, cfg.dim, rng));
        p.emplace(pre + "ffn.b2", Tensor({cfg.dim}));
    }
    p.emplace("enc.head.w", Tensor::glorot(cfg.dim, cfg.dim, rng));
    p.emplace("enc.head.b", Tensor({cfg.dim}));
    return p;
}

/// Parameter names that receive gradients for a trainable suffix of size k:
/// the last k blocks plus the pooling head. k = 0 freezes the encoder
/// entirely; token embeddings are never fine-tuned.
inline std::set<std::string> trainable_names(const EncoderConfig& cfg, std::size_t k) {
    if (k > cfg.layers) {
        throw Error("trainable suffix " + std::to_string(k) + " exceeds layer count " +
                    std::to_string(cfg.layers));
    }
    std::set<std::string> names;
    if (k == 0) return names;
    for (std::size_t l = cfg.layers - k; l < cfg.layers; ++l) {
        const std::string pre = block_prefix(l);
        for (const char* name : {"wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1.gain",
                                 "ln1.bias", "ln2.gain", "ln2.bias", "ffn.w1", "ffn.b1",
                                 "ffn.w2", "ffn.b2"}) {
            names.insert(pre + name);
        }
    }
    names.insert("enc.head.w");
    names.insert("enc.head.b");
    return names;
}

inline Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
    Tensor pe({length, dim});
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < dim; i += 2) {
            const double angle = static_cast<double>(pos) /
                                 std::pow(10000.0, static_cast<double>(i) /
                                                       static_cast<double>(dim));
            pe.at(pos, i) = std::sin(angle);
            if (i + 1 < dim) pe.at(pos, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

/// Runs the tiny transformer over a marked sentence. `param` leases named
/// parameters into the caller's graph, so one graph can share leases across
/// several encoded sentences.
inline Value encode_tiny(Graph& g, const MarkedSentence& marked, const TokenVocab& vocab,
                         const EncoderConfig& cfg,
                         const std::function<Value(const std::string&)>& param) {
    std::vector<std::size_t> ids = vocab.encode(marked.tokens, /*add_start=*/true);
    if (ids.size() > cfg.max_len) ids.resize(cfg.max_len);  // truncate from the right
    const std::size_t dh = cfg.dim / cfg.heads;

    Value x = gather_rows(param("enc.embed"), ids);
    x = add(x, g.constant(sinusoidal_positions(ids.size(), cfg.dim)));

    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string pre = block_prefix(l);
        Value h = layer_norm(x, param(pre + "ln1.gain"), param(pre + "ln1.bias"));
        Value q = linear(h, param(pre + "wq"), param(pre + "bq"));
        Value k = linear(h, param(pre + "wk"), param(pre + "bk"));
        Value v = linear(h, param(pre + "wv"), param(pre + "bv"));
        std::vector<Value> heads;
        for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
            Value qh = slice_cols(q, hd * dh, (hd + 1) * dh);
            Value kh = slice_cols(k, hd * dh, (hd + 1) * dh);
            Value vh = slice_cols(v, hd * dh, (hd + 1) * dh);
            Value scores = scale(matmul(qh, transpose(kh)),
                                 1.0 / std::sqrt(static_cast<double>(dh)));
            heads.push_back(matmul(softmax(scores, 1), vh));
        }
        Value attn = linear(concat_cols(heads), param(pre + "wo"), param(pre + "bo"));
        x = add(x, attn);
        Value h2 = layer_norm(x, param(pre + "ln2.gain"), param(pre + "ln2.bias"));
        Value ffn = linear(relu(linear(h2, param(pre + "ffn.w1"), param(pre + "ffn.b1"))),
                           param(pre + "ffn.w2"), param(pre + "ffn.b2"));
        x = add(x, ffn);
    }

    Value pooled = cfg.pooling == Pooling::kFirstToken ? row(x, 0) : mean_rows(x);
    return linear(pooled, param("enc.head.w"), param("enc.head.b"));
}

}  // namespace enc
}  // namespace cerm
