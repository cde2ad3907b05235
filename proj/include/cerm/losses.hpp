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
#include <optional>
#include <string>
#include <vector>

#include "cerm/augment.hpp"
#include "cerm/data.hpp"
#include "cerm/graph.hpp"
#include "cerm/model.hpp"
#include "cerm/rng.hpp"

namespace cerm {

inline constexpr double kLogFloor = 1e-12;

struct LossWeights {
    double ce = 1.0;
    double consistency = 1.0;
    double cosine = 1.0;
};

/// Per-step loss components. total is exactly
/// (ce_w * ce + con_w * consistency) + cos_w * cosine, in that association
/// order, with no hidden scaling.
struct LossBreakdown {
    double ce = 0.0;
    double consistency = 0.0;
    double cosine = 0.0;
    double total = 0.0;
    LossWeights weights;
};

struct LossConfig {
    LossWeights weights;
    std::size_t consistency_draws = 1;  // augmented samples per unlabeled input
    double margin = 0.0;
    bool stop_gradient_clean = true;    // treat clean prediction as a fixed target
    bool negative_replaces_e1 = false;  // default forms (e1, random) pairs
    EdaConfig eda;
};

/// Uniform draws from the entity vocabulary, resampled until the draw differs
/// from both entities of the anchor pair.
class NegativeSampler {
public:
    NegativeSampler(std::vector<std::string> entities, std::uint64_t seed)
        : entities_(std::move(entities)), rng_(seed) {}

    const std::vector<std::string>& entities() const { return entities_; }

    std::string draw(const std::string& e1, const std::string& e2) {
        if (entities_.size() <= 2) {
            throw Error("NegativeSampler: entity vocabulary of size " +
                        std::to_string(entities_.size()) +
                        " cannot supply a negative distinct from both entities");
        }
        const std::string f1 = fold_case(e1), f2 = fold_case(e2);
        for (;;) {
            const std::string& candidate = entities_[rng_.below(entities_.size())];
            if (candidate != f1 && candidate != f2) return candidate;
        }
    }

private:
    std::vector<std::string> entities_;
    Rng rng_;
};

// -- supervised cross-entropy ---------------------------------------------------

/// Mean over the batch of -log p(true class), log floored at 1e-12.
inline Value ce_loss(Graph& g, const std::vector<Value>& probs, const std::vector<Label>& labels) {
    if (probs.empty()) throw Error("ce_loss: empty batch");
    if (probs.size() != labels.size()) {
        throw Error("ce_loss: " + std::to_string(probs.size()) + " rows vs " +
                    std::to_string(labels.size()) + " labels");
    }
    Value total = g.constant(0.0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        Tensor onehot({kNumClasses});
        onehot[static_cast<std::size_t>(labels[i])] = 1.0;
        total = add(total, scale(dot(log_floor(probs[i], kLogFloor), g.constant(onehot)), -1.0));
    }
    return scale(total, 1.0 / static_cast<double>(probs.size()));
}

/// Plain-number cross entropy for callers outside a tape.
inline double ce_loss_value(const std::vector<Tensor>& probs, const std::vector<Label>& labels) {
    if (probs.empty()) throw Error("ce_loss: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i][static_cast<std::size_t>(labels[i])];
        total -= std::log(p > kLogFloor ? p : kLogFloor);
    }
    return total / static_cast<double>(probs.size());
}

// -- unsupervised consistency ----------------------------------------------------

/// KL(p || q) = sum_j p_j (log p_j - log q_j) where p is a constant target.
/// Only the log q side carries gradient.
inline Value kl_to_constant(Graph& g, const Tensor& clean_probs, Value aug_probs) {
    double plogp = 0.0;
    for (std::size_t j = 0; j < clean_probs.size(); ++j) {
        const double p = clean_probs[j];
        plogp += p * std::log(p > kLogFloor ? p : kLogFloor);
    }
    Value cross = dot(g.constant(clean_probs), log_floor(aug_probs, kLogFloor));
    return sub(g.constant(plogp), cross);
}

/// KL divergence between the model's prediction on each unlabeled input and
/// its prediction on EDA-perturbed versions, averaged over the batch and over
/// `consistency_draws` perturbations. The clean distribution is a fixed
/// target unless stop_gradient_clean is off.
inline Value consistency_loss(Graph& g, ModelSession& session, const CermModel& model,
                              const Dataset& unlabeled, const LossConfig& cfg, Rng& rng) {
    if (unlabeled.empty()) return g.constant(0.0);
    if (cfg.consistency_draws < 1) {
        throw Error("consistency_loss: need at least one augmentation draw");
    }
    Value total = g.constant(0.0);
    for (const Example& ex : unlabeled) {
        const std::vector<std::string> clean_tokens = tokenize_text(ex.sentence);

        std::optional<Tensor> clean_target;
        Value clean_in_graph;
        if (cfg.stop_gradient_clean) {
            clean_target = model.forward(ex.e1, ex.e2, ex.sentence, ex.id).probs;
        } else {
            clean_in_graph = session.forward(ex.e1, ex.e2, mark_ctx_tokens(clean_tokens, ex.e1,
                                                                           ex.e2, ex.id))
                                 .probs;
        }

        Value sample_total = g.constant(0.0);
        for (std::size_t k = 0; k < cfg.consistency_draws; ++k) {
            // a draw that loses a required entity is resampled
            MarkedSentence marked;
            bool ok = false;
            for (int attempt = 0; attempt < 8 && !ok; ++attempt) {
                const std::vector<std::string> perturbed =
                    eda(clean_tokens, ex.e1, ex.e2, cfg.eda, rng);
                try {
                    marked = mark_ctx_tokens(perturbed, ex.e1, ex.e2, ex.id);
                    ok = true;
                } catch (const Error&) {
                }
            }
            if (!ok) marked = mark_ctx_tokens(clean_tokens, ex.e1, ex.e2, ex.id);

            Value aug_probs = session.forward(ex.e1, ex.e2, marked).probs;
            Value kl;
            if (cfg.stop_gradient_clean) {
                kl = kl_to_constant(g, *clean_target, aug_probs);
            } else {
                Value plogp = dot(clean_in_graph, log_floor(clean_in_graph, kLogFloor));
                Value cross = dot(clean_in_graph, log_floor(aug_probs, kLogFloor));
                kl = sub(plogp, cross);
            }
            sample_total = add(sample_total, kl);
        }
        total = add(total, scale(sample_total,
                                 1.0 / static_cast<double>(cfg.consistency_draws)));
    }
    return scale(total, 1.0 / static_cast<double>(unlabeled.size()));
}

// -- relevancy (cosine embedding) --------------------------------------------------

/// 1 - cos(pos, sent) + max(0, cos(neg, sent) - m). In [0, 3] for m = 0.
inline Value cosine_phi(Value h_pair_pos, Value h_pair_neg, Value h_sent, double m = 0.0) {
    Graph& g = *h_sent.graph();
    Value aligned = sub(g.constant(1.0), cosine_similarity(h_pair_pos, h_sent));
    Value hinge = relu(sub(cosine_similarity(h_pair_neg, h_sent), g.constant(m)));
    return add(aligned, hinge);
}

inline double cosine_phi_value(const std::vector<double>& h_pos,
                               const std::vector<double>& h_neg,
                               const std::vector<double>& h_sent, double m = 0.0) {
    Graph g;
    return cosine_phi(g.constant(Tensor::vec(h_pos)), g.constant(Tensor::vec(h_neg)),
                      g.constant(Tensor::vec(h_sent)), m)
        .item();
}

/// Mean of cosine_phi over the unlabeled batch with one negative entity drawn
/// per sample per step (single-sample estimate of the expectation over the
/// entity vocabulary).
inline Value cosine_loss(Graph& g, ModelSession& session, const Dataset& unlabeled,
                         NegativeSampler& sampler, const LossConfig& cfg) {
    if (unlabeled.empty()) return g.constant(0.0);
    Value total = g.constant(0.0);
    for (const Example& ex : unlabeled) {
        Value h_pos = session.pair_path(ex.e1, ex.e2);
        const std::string negative = sampler.draw(ex.e1, ex.e2);
        Value h_neg = cfg.negative_replaces_e1 ? session.pair_path(negative, ex.e2)
                                               : session.pair_path(ex.e1, negative);
        Value h_sent = session.sentence_path(mark_ctx(ex.sentence, ex.e1, ex.e2, ex.id));
        total = add(total, cosine_phi(h_pos, h_neg, h_sent, cfg.margin));
    }
    return scale(total, 1.0 / static_cast<double>(unlabeled.size()));
}

// -- joint objective -----------------------------------------------------------------

struct JointLoss {
    Value total;
    LossBreakdown breakdown;
};

/// Weighted sum of the three objectives over one labeled and one unlabeled
/// batch. An empty unlabeled batch zeroes the unsupervised components.
inline JointLoss joint_loss(Graph& g, ModelSession& session, const CermModel& model,
                            const Dataset& labeled, const Dataset& unlabeled,
                            NegativeSampler& sampler, const LossConfig& cfg, Rng& rng) {
    if (labeled.empty()) {
        throw Error("joint_loss: labeled batch must be non-empty");
    }
    std::vector<Value> probs;
    std::vector<Label> labels;
    for (const Example& ex : labeled) {
        if (!ex.label) throw Error("joint_loss: unlabeled example '" + ex.id +
                                   "' in the labeled batch");
        probs.push_back(session.forward(ex.e1, ex.e2, mark_ctx(ex.sentence, ex.e1, ex.e2, ex.id))
                            .probs);
        labels.push_back(*ex.label);
    }
    Value ce = ce_loss(g, probs, labels);
    Value con = consistency_loss(g, session, model, unlabeled, cfg, rng);
    Value cos = cosine_loss(g, session, unlabeled, sampler, cfg);

    Value total = add(add(scale(ce, cfg.weights.ce), scale(con, cfg.weights.consistency)),
                      scale(cos, cfg.weights.cosine));

    JointLoss out{total, {}};
    out.breakdown.ce = ce.item();
    out.breakdown.consistency = con.item();
    out.breakdown.cosine = cos.item();
    out.breakdown.total = total.item();
    out.breakdown.weights = cfg.weights;
    return out;
}

}  // namespace cerm
