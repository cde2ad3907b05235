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
#include <string>
#include <string_view>
#include <vector>

namespace cerm {

inline std::string fold_case(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) out.push_back(static_cast<char>(std::tolower(c)));
    return out;
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

/// Case-folded whitespace tokens with surrounding punctuation stripped.
/// Used for embedding corpora and entity phrases, where "ginger," and
/// "ginger" must be the same token.
inline std::vector<std::string> word_tokens(std::string_view s) {
    std::vector<std::string> out;
    for (std::string& tok : split_whitespace(fold_case(s))) {
        std::size_t b = 0, e = tok.size();
        while (b < e && std::ispunct(static_cast<unsigned char>(tok[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(tok[e - 1]))) --e;
        if (e > b) out.push_back(tok.substr(b, e - b));
    }
    return out;
}

inline std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ") {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += sep;
        out += tokens[i];
    }
    return out;
}

}  // namespace cerm
