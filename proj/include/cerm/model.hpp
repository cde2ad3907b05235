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

#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cerm/checkpoint.hpp"
#include "cerm/embedding.hpp"
#include "cerm/encoder.hpp"
#include "cerm/graph.hpp"
#include "cerm/marker.hpp"
#include "cerm/optim.hpp"

namespace cerm {

/// Fixed class order everywhere: files, metrics, argmax tie-breaks.
enum class Label : int { kNegative = 0, kNeutral = 1, kPositive = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr const char* kClassOrder = "negative,neutral,positive";

inline const char* label_name(Label l) {
    switch (l) {
        case Label::kNegative: return "negative";
        case Label::kNeutral: return "neutral";
        case Label::kPositive: return "positive";
    }
    throw Error("label_name: bad label");
}

inline std::optional<Label> parse_label(const std::string& s) {
    if (s == "negative") return Label::kNegative;
    if (s == "neutral") return Label::kNeutral;
    if (s == "positive") return Label::kPositive;
    return std::nullopt;
}

struct ModelConfig {
    std::size_t static_dim = 200;
    std::size_t hidden = 100;  // D1 and D2 share this width by construction
    std::size_t pair_depth = 1;
    std::size_t sent_depth = 1;
    EncoderConfig encoder;
    std::uint64_t seed = 1;
};

/// Raw forward results at eval time.
struct ForwardOutput {
    Tensor h_pair;  // output of the entity-combination path
    Tensor h_sent;  // output of the sentence path
    Tensor probs;   // distribution over {negative, neutral, positive}
};

class ModelSession;

/// The CERM head: entity-combination layers over concatenated static entity
/// embeddings, sentence layers over the contextual encoding, and a softmax
/// classifier over the concatenation of both paths.
class CermModel {
public:
    CermModel(ModelConfig cfg, const EmbeddingTable* table, TokenVocab vocab)
        : cfg_(cfg), table_(table), vocab_(std::move(vocab)) {
        cfg_.encoder.validate();
        validate_table();
        Rng rng(cfg_.seed);
        init_head_params(rng);
        if (cfg_.encoder.backend == EncoderBackend::kTinyTransformer) {
            ParamMap enc_params = enc::init_params(cfg_.encoder, vocab_.size(), rng);
            params_.insert(enc_params.begin(), enc_params.end());
        }
    }

    CermModel(ModelConfig cfg, const EmbeddingTable* table, PrecomputedVectors vectors)
        : cfg_(cfg), table_(table), vectors_(std::move(vectors)) {
        if (cfg_.encoder.backend != EncoderBackend::kPrecomputed) {
            throw Error("CermModel: precomputed vectors require the precomputed backend");
        }
        if (vectors_.dim() != 0 && vectors_.dim() != cfg_.encoder.dim) {
            throw Error("CermModel: precomputed vector dim " + std::to_string(vectors_.dim()) +
                        " does not match encoder dim " + std::to_string(cfg_.encoder.dim));
        }
        validate_table();
        Rng rng(cfg_.seed);
        init_head_params(rng);
    }

    const ModelConfig& config() const { return cfg_; }
    const EmbeddingTable& table() const { return *table_; }
    const TokenVocab& token_vocab() const { return vocab_; }
    const PrecomputedVectors& vectors() const { return vectors_; }

    ParamMap& params() { return params_; }
    const ParamMap& params() const { return params_; }

    /// Restricts encoder gradients to the last k attention blocks plus the
    /// pooling head. k = 0 freezes the whole encoder.
    void set_trainable_suffix(std::size_t k) {
        if (k > cfg_.encoder.layers) {
            throw Error("set_trainable_suffix: " + std::to_string(k) +
                        " exceeds layer count " + std::to_string(cfg_.encoder.layers));
        }
        cfg_.encoder.trainable_suffix = k;
    }

    std::set<std::string> trainable_names() const {
        std::set<std::string> names;
        for (const auto& [name, t] : params_) {
            if (name.rfind("enc.", 0) != 0) names.insert(name);
        }
        if (cfg_.encoder.backend == EncoderBackend::kTinyTransformer) {
            auto enc_names = enc::trainable_names(cfg_.encoder, cfg_.encoder.trainable_suffix);
            names.insert(enc_names.begin(), enc_names.end());
        }
        return names;
    }

    ForwardOutput forward(const std::string& e1, const std::string& e2,
                          const std::string& sentence,
                          std::optional<std::string> sentence_id = std::nullopt) const;

    Tensor forward_pair_only(const std::string& e1, const std::string& e2) const;
    Tensor forward_sentence_only(const MarkedSentence& marked) const;

    /// Argmax over probs; ties resolve to the first class in the fixed order
    /// (negative < neutral < positive).
    Label predict(const std::string& e1, const std::string& e2, const std::string& sentence,
                  std::optional<std::string> sentence_id = std::nullopt) const {
        const ForwardOutput out = forward(e1, e2, sentence, std::move(sentence_id));
        std::size_t best = 0;
        for (std::size_t j = 1; j < kNumClasses; ++j) {
            if (out.probs[j] > out.probs[best]) best = j;
        }
        return static_cast<Label>(static_cast<int>(best));
    }

    void save(const std::string& path) const {
        Checkpoint ckpt;
        ckpt.meta["class_order"] = kClassOrder;
        ckpt.meta["static_dim"] = std::to_string(cfg_.static_dim);
        ckpt.meta["hidden"] = std::to_string(cfg_.hidden);
        ckpt.meta["pair_depth"] = std::to_string(cfg_.pair_depth);
        ckpt.meta["sent_depth"] = std::to_string(cfg_.sent_depth);
        ckpt.meta["backend"] = cfg_.encoder.backend == EncoderBackend::kTinyTransformer
                                   ? "tiny-transformer"
                                   : "precomputed";
        ckpt.meta["enc_dim"] = std::to_string(cfg_.encoder.dim);
        ckpt.meta["enc_layers"] = std::to_string(cfg_.encoder.layers);
        ckpt.meta["enc_heads"] = std::to_string(cfg_.encoder.heads);
        ckpt.meta["enc_ffn_dim"] = std::to_string(cfg_.encoder.ffn_dim);
        ckpt.meta["enc_max_len"] = std::to_string(cfg_.encoder.max_len);
        ckpt.meta["enc_trainable_suffix"] = std::to_string(cfg_.encoder.trainable_suffix);
        ckpt.meta["enc_pooling"] =
            cfg_.encoder.pooling == Pooling::kFirstToken ? "first" : "mean";
        if (cfg_.encoder.backend == EncoderBackend::kTinyTransformer) {
            ckpt.meta["token_vocab"] = join(vocab_.tokens());
        }
        ckpt.tensors = params_;
        save_checkpoint(ckpt, path);
    }

    static CermModel load(const std::string& path, const EmbeddingTable* table,
                          PrecomputedVectors vectors = {}) {
        Checkpoint ckpt = load_checkpoint(path);
        auto meta_num = [&](const std::string& key) -> std::size_t {
            auto it = ckpt.meta.find(key);
            if (it == ckpt.meta.end()) {
                throw Error("CermModel::load: checkpoint missing meta '" + key + "'");
            }
            return static_cast<std::size_t>(std::stoull(it->second));
        };
        ModelConfig cfg;
        cfg.static_dim = meta_num("static_dim");
        cfg.hidden = meta_num("hidden");
        cfg.pair_depth = meta_num("pair_depth");
        cfg.sent_depth = meta_num("sent_depth");
        cfg.encoder.dim = meta_num("enc_dim");
        cfg.encoder.layers = meta_num("enc_layers");
        cfg.encoder.heads = meta_num("enc_heads");
        cfg.encoder.ffn_dim = meta_num("enc_ffn_dim");
        cfg.encoder.max_len = meta_num("enc_max_len");
        cfg.encoder.trainable_suffix = meta_num("enc_trainable_suffix");
        cfg.encoder.pooling =
            ckpt.meta["enc_pooling"] == "mean" ? Pooling::kMean : Pooling::kFirstToken;
        cfg.encoder.backend = ckpt.meta["backend"] == "precomputed"
                                  ? EncoderBackend::kPrecomputed
                                  : EncoderBackend::kTinyTransformer;

        CermModel model = [&] {
            if (cfg.encoder.backend == EncoderBackend::kTinyTransformer) {
                TokenVocab vocab = TokenVocab::from_tokens(
                    split_whitespace(ckpt.meta["token_vocab"]));
                return CermModel(cfg, table, std::move(vocab));
            }
            return CermModel(cfg, table, std::move(vectors));
        }();
        for (auto& [name, tensor] : ckpt.tensors) {
            auto it = model.params_.find(name);
            if (it == model.params_.end()) {
                throw Error("CermModel::load: unexpected tensor '" + name + "' in checkpoint");
            }
            if (!it->second.same_shape(tensor)) {
                throw Error("CermModel::load: tensor '" + name + "' has shape " +
                            shape_str(tensor.shape()) + ", model expects " +
                            shape_str(it->second.shape()));
            }
            it->second = std::move(tensor);
        }
        return model;
    }

private:
    void validate_table() const {
        if (table_ == nullptr) throw Error("CermModel: embedding table required");
        if (table_->dim() != cfg_.static_dim) {
            throw Error("CermModel: embedding dim " + std::to_string(table_->dim()) +
                        " does not match configured static_dim " +
                        std::to_string(cfg_.static_dim));
        }
        if (cfg_.hidden == 0) throw Error("CermModel: hidden width must be positive");
        if (cfg_.pair_depth == 0 || cfg_.sent_depth == 0) {
            throw Error("CermModel: layer depth must be at least 1");
        }
    }

    void init_head_params(Rng& rng) {
        std::size_t in = 2 * cfg_.static_dim;
        for (std::size_t l = 0; l < cfg_.pair_depth; ++l) {
            params_.emplace("d1.w" + std::to_string(l), Tensor::glorot(in, cfg_.hidden, rng));
            params_.emplace("d1.b" + std::to_string(l), Tensor({cfg_.hidden}));
            in = cfg_.hidden;
        }
        in = cfg_.encoder.dim;
        for (std::size_t l = 0; l < cfg_.sent_depth; ++l) {
            params_.emplace("d2.w" + std::to_string(l), Tensor::glorot(in, cfg_.hidden, rng));
            params_.emplace("d2.b" + std::to_string(l), Tensor({cfg_.hidden}));
            in = cfg_.hidden;
        }
        params_.emplace("cls.w", Tensor::glorot(2 * cfg_.hidden, kNumClasses, rng));
        params_.emplace("cls.b", Tensor({kNumClasses}));
    }

    ModelConfig cfg_;
    const EmbeddingTable* table_ = nullptr;
    TokenVocab vocab_;
    PrecomputedVectors vectors_;
    ParamMap params_;

    friend class ModelSession;
};

/// Binds one model into one graph: parameters are leased on first use and
/// shared across every forward built through the session, so pair, sentence,
/// and classifier paths of several examples contribute to one backward pass.
class ModelSession {
public:
    ModelSession(Graph& graph, const CermModel& model, bool train)
        : graph_(graph), model_(model), train_(train),
          trainable_(train ? model.trainable_names() : std::set<std::string>{}) {}

    struct Forward {
        Value h_pair, h_sent, probs;
    };

    Value pair_path(const std::string& e1, const std::string& e2) {
        require_distinct(e1, e2);
        Value z1 = graph_.constant(Tensor::vec(model_.table_->embed_entity(e1)));
        Value z2 = graph_.constant(Tensor::vec(model_.table_->embed_entity(e2)));
        Value x = concat(z1, z2);
        for (std::size_t l = 0; l < model_.cfg_.pair_depth; ++l) {
            x = relu(linear(x, param("d1.w" + std::to_string(l)),
                            param("d1.b" + std::to_string(l))));
        }
        return x;
    }

    Value sentence_path(const MarkedSentence& marked) {
        Value s = sentence_vector(marked);
        for (std::size_t l = 0; l < model_.cfg_.sent_depth; ++l) {
            s = relu(linear(s, param("d2.w" + std::to_string(l)),
                            param("d2.b" + std::to_string(l))));
        }
        return s;
    }

    Value classify(Value h_pair, Value h_sent) {
        return softmax(linear(concat(h_pair, h_sent), param("cls.w"), param("cls.b")));
    }

    Forward forward(const std::string& e1, const std::string& e2,
                    const MarkedSentence& marked) {
        Forward out;
        out.h_pair = pair_path(e1, e2);
        out.h_sent = sentence_path(marked);
        out.probs = classify(out.h_pair, out.h_sent);
        return out;
    }

    Forward forward(const std::string& e1, const std::string& e2, const std::string& sentence,
                    std::optional<std::string> sentence_id = std::nullopt) {
        return forward(e1, e2, mark_ctx(sentence, e1, e2, std::move(sentence_id)));
    }

    /// Gradients of every trainable parameter leased by this session. Valid
    /// after Graph::backward.
    GradMap trainable_grads() const {
        GradMap grads;
        for (const auto& [name, value] : leased_) {
            if (value.needs_grad()) grads.emplace(name, value.grad());
        }
        return grads;
    }

    Value param(const std::string& name) {
        auto it = leased_.find(name);
        if (it != leased_.end()) return it->second;
        auto pit = model_.params_.find(name);
        if (pit == model_.params_.end()) {
            throw Error("ModelSession: unknown parameter '" + name + "'");
        }
        const bool requires_grad = train_ && trainable_.count(name) > 0;
        Value v = graph_.input(pit->second, requires_grad);
        leased_.emplace(name, v);
        return v;
    }

private:
    Value sentence_vector(const MarkedSentence& marked) {
        if (model_.cfg_.encoder.backend == EncoderBackend::kPrecomputed) {
            if (!marked.sentence_id) {
                throw Error("encode: precomputed backend needs a sentence id");
            }
            return graph_.constant(
                Tensor::vec(model_.vectors_.lookup(*marked.sentence_id)));
        }
        return enc::encode_tiny(graph_, marked, model_.vocab_, model_.cfg_.encoder,
                                [this](const std::string& name) { return param(name); });
    }

    void require_distinct(const std::string& e1, const std::string& e2) const {
        if (fold_case(e1) == fold_case(e2)) {
            throw Error("forward: entity pair must satisfy e1 != e2, got '" + e1 + "' twice");
        }
    }

    Graph& graph_;
    const CermModel& model_;
    bool train_;
    std::set<std::string> trainable_;
    std::map<std::string, Value> leased_;
};

inline ForwardOutput CermModel::forward(const std::string& e1, const std::string& e2,
                                        const std::string& sentence,
                                        std::optional<std::string> sentence_id) const {
    Graph g;
    ModelSession session(g, *this, /*train=*/false);
    ModelSession::Forward f = session.forward(e1, e2, sentence, std::move(sentence_id));
    return {f.h_pair.tensor(), f.h_sent.tensor(), f.probs.tensor()};
}

inline Tensor CermModel::forward_pair_only(const std::string& e1, const std::string& e2) const {
    Graph g;
    ModelSession session(g, *this, /*train=*/false);
    return session.pair_path(e1, e2).tensor();
}

inline Tensor CermModel::forward_sentence_only(const MarkedSentence& marked) const {
    Graph g;
    ModelSession session(g, *this, /*train=*/false);
    return session.sentence_path(marked).tensor();
}

}  // namespace cerm
