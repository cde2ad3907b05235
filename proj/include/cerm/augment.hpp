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
#include <map>
#include <string>
#include <vector>

#include "cerm/embedding.hpp"
#include "cerm/marker.hpp"
#include "cerm/rng.hpp"
#include "cerm/tensor.hpp"
#include "cerm/tokenizer.hpp"

namespace cerm {

enum class EdaOp { kSynonymReplace, kRandomInsert, kRandomSwap, kRandomDelete };

/// Line-delimited "word <tab> comma-separated synonyms".
class SynonymLexicon {
public:
    void add(const std::string& word, std::vector<std::string> synonyms) {
        map_[fold_case(word)] = std::move(synonyms);
    }

    static SynonymLexicon load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("SynonymLexicon::load: cannot open '" + path + "'");
        SynonymLexicon lex;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const std::size_t tab = line.find('\t');
            if (tab == std::string::npos || tab == 0) {
                throw Error("SynonymLexicon::load: " + path + ":" + std::to_string(line_no) +
                            ": expected 'word<tab>synonyms'");
            }
            std::vector<std::string> synonyms;
            std::string item;
            std::istringstream rest(line.substr(tab + 1));
            while (std::getline(rest, item, ',')) {
                if (!item.empty()) synonyms.push_back(fold_case(item));
            }
            lex.add(line.substr(0, tab), std::move(synonyms));
        }
        return lex;
    }

    std::vector<std::string> lookup(const std::string& word) const {
        auto it = map_.find(fold_case(word));
        return it == map_.end() ? std::vector<std::string>{} : it->second;
    }

    bool empty() const { return map_.empty(); }

private:
    std::map<std::string, std::vector<std::string>> map_;
};

/// Perturbation settings. Exactly one enabled operation is applied per call,
/// to n = max(1, round(rate * length)) positions. Tokens belonging to e1, e2
/// or [CTX] markers are protected: never deleted, replaced, swapped away, or
/// split by an insertion.
struct EdaConfig {
    double rate = 0.2;
    std::vector<EdaOp> operations{EdaOp::kSynonymReplace, EdaOp::kRandomInsert,
                                  EdaOp::kRandomSwap, EdaOp::kRandomDelete};
    const SynonymLexicon* lexicon = nullptr;        // synonym source: file mode
    const EmbeddingTable* embeddings = nullptr;     // synonym source: nearest neighbors
    std::size_t embedding_neighbors = 5;

    void validate() const {
        if (rate < 0.0 || rate > 1.0) {
            throw Error("EdaConfig: rate must be in [0, 1], got " + std::to_string(rate));
        }
        if (rate > 0.0 && operations.empty()) {
            throw Error("EdaConfig: at least one operation must be enabled");
        }
    }
};

/// Synonym candidates for one token: lexicon lookup, or the top nearest
/// embedding neighbors excluding the token itself. Tokens without candidates
/// yield an empty list, which the replacement operation skips.
inline std::vector<std::string> synonyms(const std::string& token, const EdaConfig& cfg) {
    if (cfg.lexicon != nullptr) return cfg.lexicon->lookup(token);
    if (cfg.embeddings != nullptr) {
        std::vector<std::string> out;
        for (const auto& [word, cosine] : cfg.embeddings->nearest(token, cfg.embedding_neighbors)) {
            out.push_back(word);
        }
        return out;
    }
    return {};
}

namespace detail {

/// Span ids per token: -1 for free tokens, a shared non-negative id for each
/// protected entity occurrence or [CTX] marker.
inline std::vector<int> protected_spans(const std::vector<std::string>& tokens,
                                        const std::string& e1, const std::string& e2) {
    const std::vector<std::string> ent1 = tokenize_text(e1);
    const std::vector<std::string> ent2 = tokenize_text(e2);
    std::vector<int> span(tokens.size(), -1);
    int next_span = 0;
    std::size_t i = 0;
    while (i < tokens.size()) {
        if (tokens[i] == kCtxToken) {
            span[i] = next_span++;
            ++i;
            continue;
        }
        const bool m1 = span_matches(tokens, i, ent1);
        const bool m2 = span_matches(tokens, i, ent2);
        if (m1 || m2) {
            const std::size_t len =
                (m1 && m2) ? std::max(ent1.size(), ent2.size()) : (m1 ? ent1.size() : ent2.size());
            for (std::size_t j = 0; j < len; ++j) span[i + j] = next_span;
            ++next_span;
            i += len;
            continue;
        }
        ++i;
    }
    return span;
}

inline std::vector<std::size_t> free_positions(const std::vector<int>& span) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < span.size(); ++i) {
        if (span[i] < 0) out.push_back(i);
    }
    return out;
}

/// First n elements of a seeded partial shuffle.
inline std::vector<std::size_t> sample_positions(std::vector<std::size_t> pool, std::size_t n,
                                                 Rng& rng) {
    for (std::size_t i = 0; i < n && i < pool.size(); ++i) {
        std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    }
    pool.resize(std::min(n, pool.size()));
    return pool;
}

}  // namespace detail

/// Easy Data Augmentation over an unmarked token sequence. Picks one enabled
/// operation uniformly at random and applies it to n eligible positions.
/// Length change is exactly +n (insert), -n (delete) or 0; when fewer than n
/// eligible positions exist for insert/swap/delete the input comes back
/// unchanged. rate 0 is the identity. Fully determined by (input, seed,
/// config).
inline std::vector<std::string> eda(const std::vector<std::string>& tokens,
                                    const std::string& e1, const std::string& e2,
                                    const EdaConfig& cfg, Rng& rng) {
    cfg.validate();
    if (tokens.empty()) throw Error("eda: empty sentence");
    if (cfg.rate == 0.0) return tokens;

    const std::size_t n = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(cfg.rate * static_cast<double>(tokens.size()))));
    const EdaOp op = cfg.operations[rng.below(cfg.operations.size())];

    std::vector<int> span = detail::protected_spans(tokens, e1, e2);
    std::vector<std::size_t> eligible = detail::free_positions(span);

    std::vector<std::string> out = tokens;
    switch (op) {
        case EdaOp::kSynonymReplace: {
            std::vector<std::size_t> order = detail::sample_positions(eligible, eligible.size(), rng);
            std::size_t replaced = 0;
            for (std::size_t pos : order) {
                if (replaced == n) break;
                const std::vector<std::string> cands = synonyms(out[pos], cfg);
                if (cands.empty()) continue;  // no candidates: skip this token
                out[pos] = cands[rng.below(cands.size())];
                ++replaced;
            }
            break;
        }
        case EdaOp::kRandomInsert: {
            if (eligible.empty()) return tokens;
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t src = eligible[rng.below(eligible.size())];
                const std::vector<std::string> cands = synonyms(out[src], cfg);
                const std::string word =
                    cands.empty() ? out[src] : cands[rng.below(cands.size())];
                // valid slots never split a protected span
                std::vector<std::size_t> slots;
                for (std::size_t s = 0; s <= out.size(); ++s) {
                    if (s > 0 && s < out.size() && span[s - 1] >= 0 && span[s - 1] == span[s]) {
                        continue;
                    }
                    slots.push_back(s);
                }
                const std::size_t slot = slots[rng.below(slots.size())];
                out.insert(out.begin() + static_cast<std::ptrdiff_t>(slot), word);
                span.insert(span.begin() + static_cast<std::ptrdiff_t>(slot), -1);
                for (std::size_t i = 0; i < eligible.size(); ++i) {
                    if (eligible[i] >= slot) ++eligible[i];
                }
                eligible.push_back(slot);
            }
            break;
        }
        case EdaOp::kRandomSwap: {
            if (eligible.size() < 2) return tokens;
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t a = eligible[rng.below(eligible.size())];
                std::size_t b = a;
                while (b == a) b = eligible[rng.below(eligible.size())];
                std::swap(out[a], out[b]);
            }
            break;
        }
        case EdaOp::kRandomDelete: {
            if (eligible.size() < n) return tokens;
            std::vector<std::size_t> picks = detail::sample_positions(eligible, n, rng);
            std::sort(picks.begin(), picks.end());
            for (std::size_t i = picks.size(); i-- > 0;) {
                out.erase(out.begin() + static_cast<std::ptrdiff_t>(picks[i]));
            }
            break;
        }
    }
    return out;
}

/// String-level convenience used by the CLI.
inline std::string eda_sentence(const std::string& sentence, const std::string& e1,
                                const std::string& e2, const EdaConfig& cfg, Rng& rng) {
    return join(eda(tokenize_text(sentence), e1, e2, cfg, rng));
}

}  // namespace cerm
