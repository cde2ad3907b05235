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

#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cerm/tensor.hpp"
#include "cerm/text.hpp"

namespace cerm {

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kCtxToken = "[CTX]";
inline constexpr const char* kStartToken = "[CLS]";

/// Case-folded whitespace/punctuation tokenization. Punctuation characters
/// become single-character tokens, except that the [CTX] marker literal is
/// kept whole.
inline std::vector<std::string> tokenize_text(std::string_view text) {
    const std::string folded = fold_case(text);
    std::vector<std::string> out;
    std::size_t i = 0;
    const std::size_t n = folded.size();
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(folded[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        if (folded.compare(i, 5, "[ctx]") == 0) {
            out.emplace_back(kCtxToken);
            i += 5;
            continue;
        }
        if (std::ispunct(c)) {
            out.emplace_back(1, folded[i]);
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n) {
            const unsigned char cj = static_cast<unsigned char>(folded[j]);
            if (std::isspace(cj) || std::ispunct(cj)) break;
            ++j;
        }
        out.push_back(folded.substr(i, j - i));
        i = j;
    }
    return out;
}

/// Word-id vocabulary for the contextual path with the four reserved tokens
/// at fixed ids. Unknown words map to [UNK].
class TokenVocab {
public:
    TokenVocab() {
        for (const char* tok : {kPadToken, kUnkToken, kCtxToken, kStartToken}) {
            ids_.emplace(tok, tokens_.size());
            tokens_.emplace_back(tok);
        }
    }

    static TokenVocab build(const std::vector<std::string>& sentences,
                            std::size_t min_count = 1) {
        std::map<std::string, std::size_t> freq;
        for (const std::string& s : sentences) {
            for (const std::string& tok : tokenize_text(s)) ++freq[tok];
        }
        TokenVocab vocab;
        for (const auto& [tok, count] : freq) {
            if (count < min_count) continue;
            if (vocab.ids_.count(tok)) continue;
            vocab.ids_.emplace(tok, vocab.tokens_.size());
            vocab.tokens_.push_back(tok);
        }
        return vocab;
    }

    static TokenVocab from_tokens(const std::vector<std::string>& tokens) {
        TokenVocab vocab;
        for (const std::string& tok : tokens) {
            if (vocab.ids_.count(tok)) continue;
            vocab.ids_.emplace(tok, vocab.tokens_.size());
            vocab.tokens_.push_back(tok);
        }
        return vocab;
    }

    std::size_t size() const { return tokens_.size(); }

    std::size_t pad_id() const { return 0; }
    std::size_t unk_id() const { return 1; }
    std::size_t ctx_id() const { return 2; }
    std::size_t start_id() const { return 3; }

    std::size_t id(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? unk_id() : it->second;
    }

    const std::string& token(std::size_t id) const {
        if (id >= tokens_.size()) throw Error("TokenVocab: id " + std::to_string(id) + " out of range");
        return tokens_[id];
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

    std::vector<std::size_t> encode(const std::vector<std::string>& tokens,
                                    bool add_start = true) const {
        std::vector<std::size_t> out;
        out.reserve(tokens.size() + 1);
        if (add_start) out.push_back(start_id());
        for (const std::string& tok : tokens) out.push_back(id(tok));
        return out;
    }

    std::vector<std::size_t> encode_text(const std::string& text, bool add_start = true) const {
        return encode(tokenize_text(text), add_start);
    }

    /// Joins tokens with single spaces, dropping [PAD] and [CLS].
    std::string decode(const std::vector<std::size_t>& ids) const {
        std::vector<std::string> parts;
        for (std::size_t i : ids) {
            if (i == pad_id() || i == start_id()) continue;
            parts.push_back(token(i));
        }
        return join(parts);
    }

private:
    std::map<std::string, std::size_t> ids_;
    std::vector<std::string> tokens_;
};

}  // namespace cerm
