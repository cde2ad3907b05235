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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cerm/rng.hpp"
#include "cerm/subword.hpp"
#include "cerm/tensor.hpp"
#include "cerm/text.hpp"

namespace cerm {

/// Subword skip-gram training settings. The shipped defaults are the
/// paper-defaults profile: dimension 200, 5 negatives, window 30, initial
/// learning rate 0.1, n-grams of length 1..6.
struct SkipgramConfig {
    std::size_t dim = 200;
    std::size_t negatives = 5;
    std::size_t window = 30;
    double initial_lr = 0.1;
    std::size_t epochs = 5;
    std::size_t min_count = 1;
    std::size_t n_min = 1;
    std::size_t n_max = 6;
    std::size_t buckets = std::size_t{1} << 21;
    double unigram_power = 0.75;
    double subsample = 0.0;  // frequent-word subsampling threshold, 0 = off
    std::uint64_t seed = 1;
};

/// Trained static word/subword vectors. A lookup never fails on a non-empty
/// string: in-vocabulary words average their word row with their n-gram
/// bucket rows, everything else falls back to the bucket rows alone. Lookups
/// on a finished table are read-only and safe for concurrent readers.
class EmbeddingTable {
public:
    EmbeddingTable() = default;

    EmbeddingTable(SubwordVocab vocab, std::size_t dim, bool with_buckets)
        : vocab_(std::move(vocab)),
          dim_(dim),
          word_vecs_(vocab_.size() * dim, 0.0),
          bucket_vecs_(with_buckets ? vocab_.buckets * dim : 0, 0.0),
          has_buckets_(with_buckets) {}

    std::size_t dim() const { return dim_; }
    const SubwordVocab& vocab() const { return vocab_; }
    bool has_subwords() const { return has_buckets_; }

    double* word_row(std::size_t id) { return word_vecs_.data() + id * dim_; }
    const double* word_row(std::size_t id) const { return word_vecs_.data() + id * dim_; }
    double* bucket_row(std::size_t b) { return bucket_vecs_.data() + b * dim_; }
    const double* bucket_row(std::size_t b) const { return bucket_vecs_.data() + b * dim_; }

    /// Mean of the word row (when in vocabulary) and the word's n-gram bucket
    /// rows. Defined for every non-empty string; with no usable rows (plain
    /// text table, unseen word) the result is a zero vector.
    std::vector<double> embed_word(const std::string& word) const {
        if (word.empty()) throw Error("embed_word: empty string");
        const std::string folded = fold_case(word);
        std::vector<double> out(dim_, 0.0);
        std::size_t rows = 0;
        auto it = vocab_.word_ids.find(folded);
        if (it != vocab_.word_ids.end()) {
            const double* r = word_row(it->second);
            for (std::size_t i = 0; i < dim_; ++i) out[i] += r[i];
            ++rows;
        }
        if (has_buckets_) {
            for (std::size_t b : vocab_.gram_buckets(folded)) {
                const double* r = bucket_row(b);
                for (std::size_t i = 0; i < dim_; ++i) out[i] += r[i];
                ++rows;
            }
        }
        if (rows > 1) {
            for (double& v : out) v /= static_cast<double>(rows);
        }
        return out;
    }

    /// Mean of embed_word over the whitespace tokens of an entity phrase.
    std::vector<double> embed_entity(const std::string& phrase) const {
        const std::vector<std::string> tokens = split_whitespace(phrase);
        if (tokens.empty()) throw Error("embed_entity: empty entity string");
        std::vector<double> out(dim_, 0.0);
        for (const std::string& tok : tokens) {
            const std::vector<double> v = embed_word(tok);
            for (std::size_t i = 0; i < dim_; ++i) out[i] += v[i];
        }
        for (double& v : out) v /= static_cast<double>(tokens.size());
        return out;
    }

    /// Top-k vocabulary words by cosine to `token`'s composed embedding, the
    /// token itself excluded. Ties broken by vocabulary id.
    std::vector<std::pair<std::string, double>> nearest(const std::string& token,
                                                        std::size_t k) const {
        const std::vector<double> q = embed_word(token);
        const double qn = norm(q);
        const std::string folded = fold_case(token);
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t id = 0; id < vocab_.size(); ++id) {
            if (vocab_.words[id] == folded) continue;
            const std::vector<double> v = embed_word(vocab_.words[id]);
            const double vn = norm(v);
            double c = 0.0;
            if (qn > 0.0 && vn > 0.0) {
                for (std::size_t i = 0; i < dim_; ++i) c += q[i] * v[i];
                c /= qn * vn;
            }
            scored.emplace_back(-c, id);
        }
        std::sort(scored.begin(), scored.end());
        if (scored.size() > k) scored.resize(k);
        std::vector<std::pair<std::string, double>> out;
        for (const auto& [negc, id] : scored) out.emplace_back(vocab_.words[id], -negc);
        return out;
    }

    /// Text section "<vocab> <dim>" + one line per word, followed by a binary
    /// subword section when the table has bucket vectors.
    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("EmbeddingTable::save: cannot open '" + path + "'");
        out << vocab_.size() << ' ' << dim_ << '\n';
        char buf[40];
        for (std::size_t id = 0; id < vocab_.size(); ++id) {
            out << vocab_.words[id];
            const double* r = word_row(id);
            for (std::size_t i = 0; i < dim_; ++i) {
                std::snprintf(buf, sizeof(buf), "%.17g", r[i]);
                out << ' ' << buf;
            }
            out << '\n';
        }
        if (has_buckets_) {
            out << kSubwordMagic << ' ' << vocab_.n_min << ' ' << vocab_.n_max << ' '
                << vocab_.buckets << '\n';
            out.write(reinterpret_cast<const char*>(bucket_vecs_.data()),
                      static_cast<std::streamsize>(bucket_vecs_.size() * sizeof(double)));
        }
        if (!out) throw Error("EmbeddingTable::save: write to '" + path + "' failed");
    }

    /// Accepts both the native format and plain "<vocab> <dim>" word-vector
    /// text files without a subword section.
    static EmbeddingTable load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("EmbeddingTable::load: cannot open '" + path + "'");
        std::string header;
        if (!std::getline(in, header)) throw Error("EmbeddingTable::load: empty file " + path);
        std::istringstream hs(header);
        std::size_t vocab_size = 0, dim = 0;
        if (!(hs >> vocab_size >> dim) || dim == 0) {
            throw Error("EmbeddingTable::load: bad header in '" + path + "': " + header);
        }
        SubwordVocab vocab;
        EmbeddingTable table;
        table.dim_ = dim;
        table.word_vecs_.resize(vocab_size * dim);
        std::string line;
        for (std::size_t id = 0; id < vocab_size; ++id) {
            if (!std::getline(in, line)) {
                throw Error("EmbeddingTable::load: expected " + std::to_string(vocab_size) +
                            " word lines in '" + path + "', got " + std::to_string(id));
            }
            const std::size_t sp = line.find(' ');
            if (sp == std::string::npos) {
                throw Error("EmbeddingTable::load: malformed word line " +
                            std::to_string(id + 2) + " in '" + path + "'");
            }
            const std::string word = line.substr(0, sp);
            vocab.word_ids.emplace(word, id);
            vocab.words.push_back(word);
            vocab.counts.push_back(1);
            const char* p = line.c_str() + sp;
            char* next = nullptr;
            for (std::size_t i = 0; i < dim; ++i) {
                table.word_vecs_[id * dim + i] = std::strtod(p, &next);
                if (next == p) {
                    throw Error("EmbeddingTable::load: word '" + word + "' has fewer than " +
                                std::to_string(dim) + " values");
                }
                p = next;
            }
        }
        if (std::getline(in, line) && line.rfind(kSubwordMagic, 0) == 0) {
            std::istringstream ms(line.substr(std::string(kSubwordMagic).size()));
            if (!(ms >> vocab.n_min >> vocab.n_max >> vocab.buckets)) {
                throw Error("EmbeddingTable::load: bad subword header in '" + path + "'");
            }
            table.bucket_vecs_.resize(vocab.buckets * dim);
            in.read(reinterpret_cast<char*>(table.bucket_vecs_.data()),
                    static_cast<std::streamsize>(table.bucket_vecs_.size() * sizeof(double)));
            if (static_cast<std::size_t>(in.gcount()) !=
                table.bucket_vecs_.size() * sizeof(double)) {
                throw Error("EmbeddingTable::load: truncated subword section in '" + path + "'");
            }
            table.has_buckets_ = true;
        }
        table.vocab_ = std::move(vocab);
        return table;
    }

    static constexpr const char* kSubwordMagic = "CERM-SUBWORD-1";

private:
    static double norm(const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    }

    SubwordVocab vocab_;
    std::size_t dim_ = 0;
    std::vector<double> word_vecs_;
    std::vector<double> bucket_vecs_;
    bool has_buckets_ = false;
};

namespace detail {

/// Cumulative unigram^power table for negative draws, word2vec style.
class NegativeTable {
public:
    NegativeTable(const std::vector<std::size_t>& counts, double power, std::size_t size)
        : table_(size) {
        double total = 0.0;
        for (std::size_t c : counts) total += std::pow(static_cast<double>(c), power);
        std::size_t word = 0;
        double cum = std::pow(static_cast<double>(counts[0]), power) / total;
        for (std::size_t i = 0; i < size; ++i) {
            table_[i] = word;
            if (static_cast<double>(i + 1) / static_cast<double>(size) > cum &&
                word + 1 < counts.size()) {
                ++word;
                cum += std::pow(static_cast<double>(counts[word]), power) / total;
            }
        }
    }

    std::size_t draw(Rng& rng) const { return table_[rng.below(table_.size())]; }

private:
    std::vector<std::size_t> table_;
};

}  // namespace detail

/// Builds the frequency-ordered vocabulary for a tokenized corpus.
inline SubwordVocab build_vocab(const std::vector<std::vector<std::string>>& corpus,
                                const SkipgramConfig& cfg) {
    std::map<std::string, std::size_t> freq;
    for (const auto& sentence : corpus) {
        for (const std::string& tok : sentence) ++freq[fold_case(tok)];
    }
    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    SubwordVocab vocab;
    vocab.n_min = cfg.n_min;
    vocab.n_max = cfg.n_max;
    vocab.buckets = cfg.buckets;
    for (const auto& [word, count] : items) {
        if (count < cfg.min_count) continue;
        vocab.word_ids.emplace(word, vocab.words.size());
        vocab.words.push_back(word);
        vocab.counts.push_back(count);
    }
    return vocab;
}

/// Skip-gram with negative sampling over words plus character n-gram buckets.
/// Deterministic for a fixed seed: single-threaded, sentences visited in
/// corpus order, learning rate decaying linearly from initial_lr to 0 over
/// epochs * corpus tokens.
inline EmbeddingTable train_skipgram(const std::vector<std::vector<std::string>>& corpus,
                                     const SkipgramConfig& cfg) {
    if (corpus.empty()) throw Error("train_skipgram: empty corpus");
    SubwordVocab vocab = build_vocab(corpus, cfg);
    if (vocab.size() == 0) {
        throw Error("train_skipgram: corpus empty after min-count filtering");
    }

    EmbeddingTable table(std::move(vocab), cfg.dim, true);
    const SubwordVocab& v = table.vocab();

    Rng rng(cfg.seed);
    const double init_span = 0.5 / static_cast<double>(cfg.dim);
    for (std::size_t id = 0; id < v.size(); ++id) {
        double* r = table.word_row(id);
        for (std::size_t i = 0; i < cfg.dim; ++i) r[i] = rng.uniform(-init_span, init_span);
    }
    // bucket rows are touched lazily; initialize only the ones actually used
    std::map<std::size_t, bool> seeded_buckets;
    std::vector<std::vector<std::size_t>> word_grams(v.size());
    for (std::size_t id = 0; id < v.size(); ++id) {
        word_grams[id] = v.gram_buckets(v.words[id]);
        for (std::size_t b : word_grams[id]) {
            if (!seeded_buckets.emplace(b, true).second) continue;
            double* r = table.bucket_row(b);
            for (std::size_t i = 0; i < cfg.dim; ++i) r[i] = rng.uniform(-init_span, init_span);
        }
    }

    // context (output) vectors, zero-initialized as usual
    std::vector<double> output(v.size() * cfg.dim, 0.0);

    detail::NegativeTable negatives(v.counts, cfg.unigram_power,
                                    std::max<std::size_t>(v.size(), 1u << 20));

    std::size_t corpus_tokens = 0;
    std::vector<std::vector<std::size_t>> id_corpus;
    id_corpus.reserve(corpus.size());
    std::size_t total_count = 0;
    for (std::size_t c : v.counts) total_count += c;
    for (const auto& sentence : corpus) {
        std::vector<std::size_t> ids;
        for (const std::string& tok : sentence) {
            auto it = v.word_ids.find(fold_case(tok));
            if (it == v.word_ids.end()) continue;
            if (cfg.subsample > 0.0) {
                const double f = static_cast<double>(v.counts[it->second]) /
                                 static_cast<double>(total_count);
                const double keep = std::sqrt(cfg.subsample / f) + cfg.subsample / f;
                if (keep < 1.0 && !rng.bernoulli(keep)) continue;
            }
            ids.push_back(it->second);
        }
        corpus_tokens += ids.size();
        id_corpus.push_back(std::move(ids));
    }
    if (corpus_tokens == 0) throw Error("train_skipgram: no trainable tokens in corpus");

    const double total_steps = static_cast<double>(cfg.epochs * corpus_tokens);
    std::size_t processed = 0;
    std::vector<double> hidden(cfg.dim), grad_hidden(cfg.dim);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& ids : id_corpus) {
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const double lr =
                    cfg.initial_lr *
                    std::max(0.0, 1.0 - static_cast<double>(processed) / total_steps);
                ++processed;
                const std::size_t center = ids[i];
                const std::size_t span = 1 + rng.below(cfg.window);
                const std::size_t lo = i >= span ? i - span : 0;
                const std::size_t hi = std::min(ids.size(), i + span + 1);
                for (std::size_t j = lo; j < hi; ++j) {
                    if (j == i) continue;
                    const std::size_t context = ids[j];

                    const auto& grams = word_grams[center];
                    const double inv_rows = 1.0 / static_cast<double>(1 + grams.size());
                    for (std::size_t d = 0; d < cfg.dim; ++d)
                        hidden[d] = table.word_row(center)[d];
                    for (std::size_t b : grams) {
                        const double* r = table.bucket_row(b);
                        for (std::size_t d = 0; d < cfg.dim; ++d) hidden[d] += r[d];
                    }
                    for (std::size_t d = 0; d < cfg.dim; ++d) hidden[d] *= inv_rows;

                    std::fill(grad_hidden.begin(), grad_hidden.end(), 0.0);
                    for (std::size_t n = 0; n <= cfg.negatives; ++n) {
                        std::size_t target;
                        double label;
                        if (n == 0) {
                            target = context;
                            label = 1.0;
                        } else {
                            target = negatives.draw(rng);
                            if (target == context) continue;
                            label = 0.0;
                        }
                        double* ctx_row = output.data() + target * cfg.dim;
                        double f = 0.0;
                        for (std::size_t d = 0; d < cfg.dim; ++d) f += hidden[d] * ctx_row[d];
                        const double sigma = 1.0 / (1.0 + std::exp(-f));
                        const double g = (label - sigma) * lr;
                        for (std::size_t d = 0; d < cfg.dim; ++d) {
                            grad_hidden[d] += g * ctx_row[d];
                            ctx_row[d] += g * hidden[d];
                        }
                    }
                    // subword trainer convention: the full hidden gradient is
                    // applied to every contributing row
                    double* wr = table.word_row(center);
                    for (std::size_t d = 0; d < cfg.dim; ++d) wr[d] += grad_hidden[d];
                    for (std::size_t b : grams) {
                        double* br = table.bucket_row(b);
                        for (std::size_t d = 0; d < cfg.dim; ++d) br[d] += grad_hidden[d];
                    }
                }
            }
        }
    }
    return table;
}

}  // namespace cerm
