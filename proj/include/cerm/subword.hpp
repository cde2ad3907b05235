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

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cerm/tensor.hpp"

namespace cerm {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Character n-grams of the boundary-wrapped word "<word>", lengths in
/// [n_min, n_max].
inline std::vector<std::string> ngrams(const std::string& word, std::size_t n_min,
                                       std::size_t n_max) {
    if (word.empty()) throw Error("ngrams: word must be non-empty");
    if (n_min < 1 || n_min > n_max) {
        throw Error("ngrams: invalid range [" + std::to_string(n_min) + ", " +
                    std::to_string(n_max) + "]");
    }
    const std::string wrapped = "<" + word + ">";
    std::vector<std::string> out;
    for (std::size_t n = n_min; n <= n_max && n <= wrapped.size(); ++n) {
        for (std::size_t i = 0; i + n <= wrapped.size(); ++i) {
            out.push_back(wrapped.substr(i, n));
        }
    }
    return out;
}

/// Word vocabulary plus the n-gram hashing scheme shared by training and
/// lookup. N-grams map to bucket ids by FNV-1a modulo the bucket count.
struct SubwordVocab {
    std::vector<std::string> words;             // id -> token, frequency order
    std::map<std::string, std::size_t> word_ids;
    std::vector<std::size_t> counts;            // id -> corpus frequency, > 0
    std::size_t n_min = 1;
    std::size_t n_max = 6;
    std::size_t buckets = std::size_t{1} << 21;

    std::size_t size() const { return words.size(); }

    std::size_t bucket_of(std::string_view gram) const { return fnv1a64(gram) % buckets; }

    /// Bucket ids for a word's n-grams (word row not included).
    std::vector<std::size_t> gram_buckets(const std::string& word) const {
        std::vector<std::size_t> out;
        for (const std::string& g : ngrams(word, n_min, n_max)) out.push_back(bucket_of(g));
        return out;
    }
};

}  // namespace cerm
