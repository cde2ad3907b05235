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

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cerm/model.hpp"
#include "cerm/rng.hpp"
#include "cerm/text.hpp"
#include "cerm/tokenizer.hpp"

namespace cerm {

/// One (e1, e2, sentence) record. Labeled iff `label` is present; the loader
/// guarantees e1 != e2 and that both entities occur in the sentence.
struct Example {
    std::string id;
    std::string e1;
    std::string e2;
    std::string sentence;
    std::optional<Label> label;
    std::optional<std::string> e1_category;
    std::optional<std::string> e2_category;

    bool labeled() const { return label.has_value(); }
};

using Dataset = std::vector<Example>;

inline bool entity_occurs(const std::vector<std::string>& sentence_tokens,
                          const std::string& entity) {
    const std::vector<std::string> ent = tokenize_text(entity);
    if (ent.empty()) return false;
    for (std::size_t i = 0; i + ent.size() <= sentence_tokens.size(); ++i) {
        bool match = true;
        for (std::size_t j = 0; j < ent.size(); ++j) {
            if (sentence_tokens[i + j] != ent[j]) {
                match = false;
                break;
            }
        }
        if (match) return true;
    }
    return false;
}

inline void validate_example(const Example& ex, const std::string& where) {
    if (ex.e1.empty() || ex.e2.empty()) {
        throw Error(where + ": empty entity");
    }
    if (fold_case(ex.e1) == fold_case(ex.e2)) {
        throw Error(where + ": e1 == e2 ('" + ex.e1 + "')");
    }
    const std::vector<std::string> tokens = tokenize_text(ex.sentence);
    if (!entity_occurs(tokens, ex.e1)) {
        throw Error(where + ": entity '" + ex.e1 + "' does not occur in sentence");
    }
    if (!entity_occurs(tokens, ex.e2)) {
        throw Error(where + ": entity '" + ex.e2 + "' does not occur in sentence");
    }
}

// -- dataset file format -------------------------------------------------------

/// Line-delimited JSON records: {"id", "e1", "e2", "sentence", "label"?,
/// "categories"?}. Labeled and unlabeled files share the schema.
inline Dataset load_examples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("load_examples: cannot open '" + path + "'");
    Dataset out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(where + ": malformed JSON: " + e.what());
        }
        Example ex;
        for (const char* field : {"id", "e1", "e2", "sentence"}) {
            if (!j.contains(field)) {
                throw Error(where + ": missing field '" + field + "'");
            }
        }
        ex.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
        if (!j["e1"].is_string() || !j["e2"].is_string() || !j["sentence"].is_string()) {
            throw Error(where + ": e1, e2 and sentence must be strings");
        }
        ex.e1 = j["e1"].get<std::string>();
        ex.e2 = j["e2"].get<std::string>();
        ex.sentence = j["sentence"].get<std::string>();
        if (j.contains("label") && !j["label"].is_null()) {
            if (!j["label"].is_string()) throw Error(where + ": label must be a string");
            const std::string raw = j["label"].get<std::string>();
            ex.label = parse_label(raw);
            if (!ex.label) {
                throw Error(where + ": label '" + raw +
                            "' is not one of negative/neutral/positive");
            }
        }
        if (j.contains("categories") && !j["categories"].is_null()) {
            const auto& cats = j["categories"];
            if (!cats.is_array() || cats.size() != 2) {
                throw Error(where + ": categories must be a 2-element array");
            }
            if (cats[0].is_string()) ex.e1_category = cats[0].get<std::string>();
            if (cats[1].is_string()) ex.e2_category = cats[1].get<std::string>();
        }
        validate_example(ex, where);
        out.push_back(std::move(ex));
    }
    return out;
}

inline void save_examples(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("save_examples: cannot open '" + path + "' for writing");
    for (const Example& ex : data) {
        nlohmann::json j;
        j["id"] = ex.id;
        j["e1"] = ex.e1;
        j["e2"] = ex.e2;
        j["sentence"] = ex.sentence;
        if (ex.label) j["label"] = label_name(*ex.label);
        if (ex.e1_category || ex.e2_category) {
            j["categories"] = {ex.e1_category ? nlohmann::json(*ex.e1_category) : nullptr,
                               ex.e2_category ? nlohmann::json(*ex.e2_category) : nullptr};
        }
        out << j.dump() << '\n';
    }
    if (!out) throw Error("save_examples: write to '" + path + "' failed");
}

// -- entity lexicon -------------------------------------------------------------

/// Entity surface form -> category, unique after case folding.
class EntityLexicon {
public:
    void add(const std::string& surface, const std::string& category) {
        if (surface.empty()) throw Error("EntityLexicon: empty surface form");
        const std::string key = fold_case(surface);
        if (!entries_.emplace(key, Entry{surface, category}).second) {
            throw Error("EntityLexicon: duplicate surface form '" + key + "'");
        }
    }

    static EntityLexicon load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("EntityLexicon::load: cannot open '" + path + "'");
        EntityLexicon lex;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const std::size_t tab = line.find('\t');
            if (tab == std::string::npos || tab == 0) {
                throw Error("EntityLexicon::load: " + path + ":" + std::to_string(line_no) +
                            ": expected 'surface<tab>category'");
            }
            lex.add(line.substr(0, tab), line.substr(tab + 1));
        }
        return lex;
    }

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

    std::optional<std::string> category_of(const std::string& surface) const {
        auto it = entries_.find(fold_case(surface));
        if (it == entries_.end()) return std::nullopt;
        return it->second.category;
    }

    /// Surfaces tokenized for the longest-match scan, grouped by first token.
    std::map<std::string, std::vector<std::vector<std::string>>> token_index() const {
        std::map<std::string, std::vector<std::vector<std::string>>> index;
        for (const auto& [key, entry] : entries_) {
            std::vector<std::string> tokens = tokenize_text(key);
            if (tokens.empty()) continue;
            index[tokens.front()].push_back(std::move(tokens));
        }
        for (auto& [first, spans] : index) {
            std::sort(spans.begin(), spans.end(),
                      [](const auto& a, const auto& b) { return a.size() > b.size(); });
        }
        return index;
    }

private:
    struct Entry {
        std::string surface;
        std::string category;
    };
    std::map<std::string, Entry> entries_;
};

// -- pair extraction -------------------------------------------------------------

/// Finds all lexicon entities in each sentence by longest-match
/// case-insensitive token scan and emits one unlabeled Example per unordered
/// distinct entity pair, in first-occurrence order. Overlapping mentions
/// resolve to the longer span; the scan resumes after it.
inline Dataset extract_pairs(const std::vector<std::string>& sentences,
                             const EntityLexicon& lexicon) {
    if (lexicon.empty()) throw Error("extract_pairs: lexicon is empty");
    const auto index = lexicon.token_index();
    Dataset out;
    std::size_t next_id = 0;
    for (const std::string& sentence : sentences) {
        const std::vector<std::string> tokens = tokenize_text(sentence);
        std::vector<std::string> found;  // folded surfaces, first-occurrence order
        std::set<std::string> seen;
        std::size_t i = 0;
        while (i < tokens.size()) {
            auto it = index.find(tokens[i]);
            bool matched = false;
            if (it != index.end()) {
                for (const auto& span : it->second) {  // longest first
                    if (i + span.size() > tokens.size()) continue;
                    bool ok = true;
                    for (std::size_t j = 0; j < span.size(); ++j) {
                        if (tokens[i + j] != span[j]) {
                            ok = false;
                            break;
                        }
                    }
                    if (!ok) continue;
                    const std::string surface = join(span);
                    if (seen.insert(surface).second) found.push_back(surface);
                    i += span.size();
                    matched = true;
                    break;
                }
            }
            if (!matched) ++i;
        }
        for (std::size_t a = 0; a < found.size(); ++a) {
            for (std::size_t b = a + 1; b < found.size(); ++b) {
                Example ex;
                ex.id = "pair-" + std::to_string(next_id++);
                ex.e1 = found[a];
                ex.e2 = found[b];
                ex.sentence = sentence;
                ex.e1_category = lexicon.category_of(found[a]);
                ex.e2_category = lexicon.category_of(found[b]);
                out.push_back(std::move(ex));
            }
        }
    }
    return out;
}

// -- annotation resolution --------------------------------------------------------

/// Majority vote over exactly three annotations; a three-way disagreement
/// drops the data point.
inline std::optional<Label> resolve_labels(const std::vector<Label>& annotations) {
    if (annotations.size() != 3) {
        throw Error("resolve_labels: expected exactly 3 annotations, got " +
                    std::to_string(annotations.size()));
    }
    std::array<std::size_t, kNumClasses> counts{};
    for (Label l : annotations) ++counts[static_cast<std::size_t>(l)];
    for (std::size_t j = 0; j < kNumClasses; ++j) {
        if (counts[j] >= 2) return static_cast<Label>(static_cast<int>(j));
    }
    return std::nullopt;
}

// -- splits ------------------------------------------------------------------------

/// Seeded uniform shuffle, then split at round(ratio * N). Exact partition.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double ratio,
                                                 std::uint64_t seed) {
    if (data.empty()) throw Error("split_dataset: empty input");
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw Error("split_dataset: ratio must be in (0, 1), got " + std::to_string(ratio));
    }
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    const std::size_t cut = static_cast<std::size_t>(
        std::lround(ratio * static_cast<double>(data.size())));
    Dataset train, test;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < cut ? train : test).push_back(data[order[i]]);
    }
    return {std::move(train), std::move(test)};
}

// -- statistics ---------------------------------------------------------------------

struct DatasetStats {
    std::size_t labeled = 0;
    std::array<std::size_t, kNumClasses> per_label{};  // negative, neutral, positive
    std::size_t unlabeled = 0;
    double word_avg = 0.0;
    std::size_t word_min = 0;
    std::size_t word_max = 0;
    std::size_t unique_entities = 0;
    std::map<std::string, std::size_t> entities_per_category;
};

inline DatasetStats stats(const Dataset& data) {
    DatasetStats s;
    std::size_t word_total = 0;
    std::set<std::string> entities;
    std::map<std::string, std::set<std::string>> by_category;
    bool first = true;
    for (const Example& ex : data) {
        if (ex.label) {
            ++s.labeled;
            ++s.per_label[static_cast<std::size_t>(*ex.label)];
        } else {
            ++s.unlabeled;
        }
        const std::size_t words = split_whitespace(ex.sentence).size();
        word_total += words;
        if (first || words < s.word_min) s.word_min = words;
        if (first || words > s.word_max) s.word_max = words;
        first = false;
        for (const auto& [entity, category] :
             {std::pair{ex.e1, ex.e1_category}, {ex.e2, ex.e2_category}}) {
            const std::string key = fold_case(entity);
            entities.insert(key);
            if (category) by_category[*category].insert(key);
        }
    }
    if (!data.empty()) {
        s.word_avg = static_cast<double>(word_total) / static_cast<double>(data.size());
    }
    s.unique_entities = entities.size();
    for (const auto& [category, surfaces] : by_category) {
        s.entities_per_category[category] = surfaces.size();
    }
    return s;
}

/// Statistics block in the shape of the dataset table: labeled counts with
/// per-label breakdown, unlabeled count, word counts, unique entities per
/// category.
inline std::string format_stats(const DatasetStats& s) {
    std::ostringstream os;
    os << "Labelled data count    " << s.labeled << '\n';
    os << "  - Positive           " << s.per_label[static_cast<std::size_t>(Label::kPositive)]
       << '\n';
    os << "  - Negative           " << s.per_label[static_cast<std::size_t>(Label::kNegative)]
       << '\n';
    os << "  - Neutral            " << s.per_label[static_cast<std::size_t>(Label::kNeutral)]
       << '\n';
    os << "Unlabeled data count   " << s.unlabeled << '\n';
    os << "Word count" << '\n';
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", s.word_avg);
    os << "  - Average            " << buf << '\n';
    os << "  - Min                " << s.word_min << '\n';
    os << "  - Max                " << s.word_max << '\n';
    os << "# of unique entities   " << s.unique_entities << '\n';
    for (const auto& [category, count] : s.entities_per_category) {
        os << "  - " << category;
        for (std::size_t i = category.size(); i < 19; ++i) os << ' ';
        os << count << '\n';
    }
    return os.str();
}

// -- ABSA re-encoding ------------------------------------------------------------------

/// Re-encodes an aspect-sentiment record as an entity-pair record: the aspect
/// becomes e2 and is appended to the sentence unconditionally.
inline Example absa_encode(const std::string& target, const std::string& aspect,
                           const std::string& sentence) {
    if (aspect.empty() || tokenize_text(aspect).empty()) {
        throw Error("absa_encode: empty aspect");
    }
    if (!entity_occurs(tokenize_text(sentence), target)) {
        throw Error("absa_encode: target '" + target + "' does not occur in sentence");
    }
    Example ex;
    ex.e1 = target;
    ex.e2 = aspect;
    ex.sentence = sentence + " " + aspect;
    return ex;
}

/// All distinct entity surfaces in a dataset, case-folded, sorted. This is
/// the negative-sampling vocabulary.
inline std::vector<std::string> entity_vocabulary(const Dataset& data) {
    std::set<std::string> entities;
    for (const Example& ex : data) {
        entities.insert(fold_case(ex.e1));
        entities.insert(fold_case(ex.e2));
    }
    return {entities.begin(), entities.end()};
}

}  // namespace cerm
