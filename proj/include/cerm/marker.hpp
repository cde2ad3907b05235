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

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cerm/tensor.hpp"
#include "cerm/tokenizer.hpp"

namespace cerm {

/// A sentence with every occurrence of the two target entities wrapped in
/// [CTX] markers. Spans index entity occurrences in `tokens`; removing all
/// [CTX] tokens reproduces the unmarked token sequence.
struct MarkedSentence {
    std::string original;
    std::vector<std::string> tokens;
    std::vector<std::pair<std::size_t, std::size_t>> e1_spans;  // [begin, end)
    std::vector<std::pair<std::size_t, std::size_t>> e2_spans;
    std::optional<std::string> sentence_id;
};

namespace detail {

inline bool span_matches(const std::vector<std::string>& tokens, std::size_t pos,
                         const std::vector<std::string>& entity) {
    if (entity.empty() || pos + entity.size() > tokens.size()) return false;
    for (std::size_t i = 0; i < entity.size(); ++i) {
        if (tokens[pos + i] != entity[i]) return false;
    }
    return true;
}

}  // namespace detail

/// Wraps every occurrence of e1 and e2 in `tokens` with [CTX] before and
/// after. Matching is case-insensitive exact token-span match; at positions
/// where both entities match, the longer span wins. Already-wrapped
/// occurrences are left alone, which makes the operation idempotent.
inline MarkedSentence mark_ctx_tokens(const std::vector<std::string>& raw_tokens,
                                      const std::string& e1, const std::string& e2,
                                      std::optional<std::string> sentence_id = std::nullopt) {
    const std::vector<std::string> ent1 = tokenize_text(e1);
    const std::vector<std::string> ent2 = tokenize_text(e2);
    if (ent1.empty()) throw Error("mark_ctx: entity '" + e1 + "' is empty");
    if (ent2.empty()) throw Error("mark_ctx: entity '" + e2 + "' is empty");

    struct Occurrence {
        std::size_t pos, len;
        bool is_e1;
        bool wrapped;
    };
    std::vector<Occurrence> occurrences;
    bool saw_e1 = false, saw_e2 = false;
    std::size_t i = 0;
    while (i < raw_tokens.size()) {
        const bool m1 = detail::span_matches(raw_tokens, i, ent1);
        const bool m2 = detail::span_matches(raw_tokens, i, ent2);
        if (!m1 && !m2) {
            ++i;
            continue;
        }
        bool is_e1 = m1;
        if (m1 && m2) is_e1 = ent1.size() >= ent2.size();
        const std::size_t len = is_e1 ? ent1.size() : ent2.size();
        const bool wrapped = i > 0 && raw_tokens[i - 1] == kCtxToken &&
                             i + len < raw_tokens.size() && raw_tokens[i + len] == kCtxToken;
        occurrences.push_back({i, len, is_e1, wrapped});
        (is_e1 ? saw_e1 : saw_e2) = true;
        i += len;
    }
    if (!saw_e1) throw Error("mark_ctx: entity '" + e1 + "' not found in sentence");
    if (!saw_e2) throw Error("mark_ctx: entity '" + e2 + "' not found in sentence");

    MarkedSentence out;
    out.sentence_id = std::move(sentence_id);
    std::size_t next_occ = 0;
    for (std::size_t pos = 0; pos < raw_tokens.size();) {
        if (next_occ < occurrences.size() && occurrences[next_occ].pos == pos) {
            const Occurrence& occ = occurrences[next_occ];
            if (!occ.wrapped) out.tokens.emplace_back(kCtxToken);
            const std::size_t begin = out.tokens.size();
            for (std::size_t t = 0; t < occ.len; ++t) out.tokens.push_back(raw_tokens[pos + t]);
            auto& spans = occ.is_e1 ? out.e1_spans : out.e2_spans;
            spans.emplace_back(begin, out.tokens.size());
            if (!occ.wrapped) out.tokens.emplace_back(kCtxToken);
            pos += occ.len;
            ++next_occ;
        } else {
            out.tokens.push_back(raw_tokens[pos]);
            ++pos;
        }
    }
    return out;
}

inline MarkedSentence mark_ctx(const std::string& sentence, const std::string& e1,
                               const std::string& e2,
                               std::optional<std::string> sentence_id = std::nullopt) {
    MarkedSentence out = mark_ctx_tokens(tokenize_text(sentence), e1, e2, std::move(sentence_id));
    out.original = sentence;
    return out;
}

}  // namespace cerm
