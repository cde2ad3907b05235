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

// Shared test fixtures.

#pragma once

#include <string>
#include <vector>

#include "cerm/embedding.hpp"
#include "cerm/rng.hpp"

namespace fixtures {

inline const std::vector<std::string>& cluster_a() {
    static const std::vector<std::string> v{"a1", "a2", "a3"};
    return v;
}

inline const std::vector<std::string>& cluster_b() {
    static const std::vector<std::string> v{"b1", "b2", "b3"};
    return v;
}

/// Two-cluster corpus: tokens within a cluster co-occur, clusters never mix.
inline std::vector<std::vector<std::string>> cluster_corpus(std::size_t sentences,
                                                            std::size_t length,
                                                            std::uint64_t seed) {
    cerm::Rng rng(seed);
    std::vector<std::vector<std::string>> corpus;
    corpus.reserve(sentences);
    for (std::size_t s = 0; s < sentences; ++s) {
        const auto& cluster = (s % 2 == 0) ? cluster_a() : cluster_b();
        std::vector<std::string> sentence;
        for (std::size_t i = 0; i < length; ++i) {
            sentence.push_back(cluster[rng.below(cluster.size())]);
        }
        corpus.push_back(std::move(sentence));
    }
    return corpus;
}

inline double mean_cosine(const cerm::EmbeddingTable& table,
                          const std::vector<std::string>& left,
                          const std::vector<std::string>& right) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < left.size(); ++i) {
        for (std::size_t j = 0; j < right.size(); ++j) {
            if (&left == &right && j <= i) continue;
            const auto a = table.embed_word(left[i]);
            const auto b = table.embed_word(right[j]);
            double ab = 0.0, aa = 0.0, bb = 0.0;
            for (std::size_t d = 0; d < a.size(); ++d) {
                ab += a[d] * b[d];
                aa += a[d] * a[d];
                bb += b[d] * b[d];
            }
            total += ab / std::sqrt(aa * bb);
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

/// Within-cluster minus cross-cluster mean cosine after training on the
/// cluster corpus.
inline double cluster_margin(std::uint64_t seed, std::size_t sentences = 200,
                             cerm::SkipgramConfig cfg = {}) {
    auto corpus = cluster_corpus(sentences, 6, seed + 1000);
    cfg.seed = seed;
    const cerm::EmbeddingTable table = cerm::train_skipgram(corpus, cfg);
    const double within = (mean_cosine(table, cluster_a(), cluster_a()) +
                           mean_cosine(table, cluster_b(), cluster_b())) /
                          2.0;
    const double cross = mean_cosine(table, cluster_a(), cluster_b());
    return within - cross;
}

inline cerm::SkipgramConfig small_skipgram_config() {
    cerm::SkipgramConfig cfg;
    cfg.dim = 32;
    cfg.window = 5;
    cfg.epochs = 5;
    cfg.buckets = 1 << 12;
    return cfg;
}

}  // namespace fixtures
