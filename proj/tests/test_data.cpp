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

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "cerm/data.hpp"

using namespace cerm;

namespace {

EntityLexicon fixture_lexicon() {
    EntityLexicon lex;
    lex.add("ginger", "Consumable");
    lex.add("nausea", "Disease");
    lex.add("vitamin d", "Nutrient");
    lex.add("vitamin", "Nutrient");
    lex.add("aspirin", "Chemical");
    lex.add("brca1", "Gene");
    return lex;
}

Dataset stats_fixture() {
    return {
        {"1", "ginger", "nausea", "ginger eases nausea", Label::kPositive, "Consumable",
         "Disease"},
        {"2", "aspirin", "nausea", "aspirin causes nausea", Label::kNegative, "Chemical",
         "Disease"},
        {"3", "ginger", "aspirin", "ginger and aspirin interact mildly", Label::kNeutral,
         "Consumable", "Chemical"},
        {"4", "brca1", "aspirin", "brca1 responds to aspirin", std::nullopt, "Gene", "Chemical"},
        {"5", "vitamin d", "nausea", "vitamin d reduces nausea", std::nullopt, "Nutrient",
         "Disease"},
    };
}

}  // namespace

TEST_CASE("extract_pairs emits one pair per unordered entity combination") {
    EntityLexicon lex = fixture_lexicon();
    SECTION("two entities, one pair") {
        Dataset out = extract_pairs({"ginger may ease nausea"}, lex);
        REQUIRE(out.size() == 1);
        CHECK(out[0].e1 == "ginger");
        CHECK(out[0].e2 == "nausea");
        CHECK_FALSE(out[0].labeled());
        CHECK(out[0].e1_category == "Consumable");
    }
    SECTION("three entities, three pairs") {
        Dataset out = extract_pairs({"ginger with aspirin eases nausea"}, lex);
        CHECK(out.size() == 3);
    }
    SECTION("one entity, nothing") {
        CHECK(extract_pairs({"ginger is a root"}, lex).empty());
        CHECK(extract_pairs({"nothing relevant here"}, lex).empty());
    }
    SECTION("pair count is k(k-1)/2") {
        Dataset out = extract_pairs({"ginger aspirin nausea brca1 and vitamin d interact"}, lex);
        CHECK(out.size() == 5 * 4 / 2);
    }
    SECTION("repeated mentions count once") {
        Dataset out = extract_pairs({"ginger ginger nausea ginger"}, lex);
        CHECK(out.size() == 1);
    }
    SECTION("longest match wins over a prefix entity") {
        Dataset out = extract_pairs({"vitamin d helps nausea"}, lex);
        REQUIRE(out.size() == 1);
        CHECK(out[0].e1 == "vitamin d");
        CHECK(out[0].e2 == "nausea");
    }
    SECTION("case-insensitive matching") {
        Dataset out = extract_pairs({"Ginger eases NAUSEA"}, lex);
        REQUIRE(out.size() == 1);
    }
    SECTION("empty lexicon rejected") {
        CHECK_THROWS_AS(extract_pairs({"a"}, EntityLexicon{}), Error);
    }
}

TEST_CASE("majority vote labeling") {
    using L = Label;
    CHECK(resolve_labels({L::kPositive, L::kPositive, L::kNegative}) == L::kPositive);
    CHECK(resolve_labels({L::kNeutral, L::kNeutral, L::kNeutral}) == L::kNeutral);
    CHECK(resolve_labels({L::kPositive, L::kNegative, L::kNeutral}) == std::nullopt);
    CHECK_THROWS_AS(resolve_labels({L::kPositive, L::kPositive}), Error);
    CHECK_THROWS_AS(resolve_labels({L::kPositive, L::kPositive, L::kPositive, L::kPositive}),
                    Error);
}

TEST_CASE("seeded split partitions the dataset") {
    Dataset data;
    for (int i = 0; i < 10; ++i) {
        Example ex;
        ex.id = std::to_string(i);
        ex.e1 = "a";
        ex.e2 = "b";
        ex.sentence = "a and b";
        data.push_back(ex);
    }
    auto [train, test] = split_dataset(data, 0.7, 5);
    CHECK(train.size() == 7);
    CHECK(test.size() == 3);

    SECTION("same seed, same split") {
        auto [train2, test2] = split_dataset(data, 0.7, 5);
        for (std::size_t i = 0; i < train.size(); ++i) CHECK(train[i].id == train2[i].id);
    }
    SECTION("partition is exact") {
        std::set<std::string> ids;
        for (const auto& ex : train) ids.insert(ex.id);
        for (const auto& ex : test) ids.insert(ex.id);
        CHECK(ids.size() == 10);
    }
    SECTION("bad inputs rejected") {
        CHECK_THROWS_AS(split_dataset({}, 0.7, 1), Error);
        CHECK_THROWS_AS(split_dataset(data, 0.0, 1), Error);
        CHECK_THROWS_AS(split_dataset(data, 1.0, 1), Error);
    }
}

TEST_CASE("dataset statistics") {
    const DatasetStats s = stats(stats_fixture());
    CHECK(s.labeled == 3);
    CHECK(s.per_label[static_cast<std::size_t>(Label::kPositive)] == 1);
    CHECK(s.per_label[static_cast<std::size_t>(Label::kNegative)] == 1);
    CHECK(s.per_label[static_cast<std::size_t>(Label::kNeutral)] == 1);
    CHECK(s.unlabeled == 2);
    CHECK(s.word_min == 3);
    CHECK(s.word_max == 5);
    CHECK(s.word_avg == Catch::Approx((3 + 3 + 5 + 4 + 5) / 5.0));
    CHECK(s.unique_entities == 5);
    CHECK(s.entities_per_category.at("Disease") == 1);
    CHECK(s.entities_per_category.at("Chemical") == 1);

    SECTION("permutation invariance") {
        Dataset shuffled = stats_fixture();
        std::reverse(shuffled.begin(), shuffled.end());
        const DatasetStats s2 = stats(shuffled);
        CHECK(s2.labeled == s.labeled);
        CHECK(s2.word_avg == s.word_avg);
        CHECK(s2.unique_entities == s.unique_entities);
    }
    SECTION("word count shape") {
        Dataset two{
            {"1", "a", "b", "a sees b", Label::kPositive, {}, {}},
            {"2", "a", "b", "a b c d e", std::nullopt, {}, {}},
        };
        const DatasetStats st = stats(two);
        CHECK(st.word_avg == Catch::Approx(4.0));
        CHECK(st.word_min == 3);
        CHECK(st.word_max == 5);
    }
    SECTION("formatted block carries the headline counts") {
        const std::string block = format_stats(s);
        CHECK(block.find("Labelled data count    3") != std::string::npos);
        CHECK(block.find("Unlabeled data count   2") != std::string::npos);
        CHECK(block.find("# of unique entities   5") != std::string::npos);
    }
}

TEST_CASE("absa re-encoding appends the aspect") {
    const Example ex = absa_encode("location1", "safety", "location1 is quiet");
    CHECK(ex.e1 == "location1");
    CHECK(ex.e2 == "safety");
    CHECK(ex.sentence == "location1 is quiet safety");

    SECTION("aspect already present is still appended") {
        const Example dup = absa_encode("location1", "quiet", "location1 is quiet");
        CHECK(dup.sentence == "location1 is quiet quiet");
    }
    SECTION("errors") {
        CHECK_THROWS_AS(absa_encode("location1", "", "location1 is quiet"), Error);
        CHECK_THROWS_AS(absa_encode("location2", "safety", "location1 is quiet"), Error);
    }
}

TEST_CASE("dataset files round-trip") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "cerm_test_data.jsonl";
    const Dataset data = stats_fixture();
    save_examples(data, path.string());
    const Dataset back = load_examples(path.string());
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back[i].id == data[i].id);
        CHECK(back[i].e1 == data[i].e1);
        CHECK(back[i].e2 == data[i].e2);
        CHECK(back[i].sentence == data[i].sentence);
        CHECK(back[i].label == data[i].label);
        CHECK(back[i].e1_category == data[i].e1_category);
    }
    fs::remove(path);
}

TEST_CASE("dataset loader fails loudly with line numbers") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "cerm_test_bad_data.jsonl";
    auto expect_error_with = [&](const std::string& content, const std::string& needle) {
        std::ofstream out(path);
        out << content;
        out.close();
        try {
            load_examples(path.string());
            FAIL("expected load error for: " + content);
        } catch (const Error& e) {
            INFO(e.what());
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };

    expect_error_with(R"({"id":"1","e1":"a","e2":"b","sentence":"a b"})" "\n" "not json\n", ":2");
    expect_error_with(R"({"id":"1","e1":"a","e2":"b"})" "\n", "sentence");
    expect_error_with(R"({"id":"1","e1":"a","e2":"b","sentence":"a b","label":"meh"})" "\n",
                      "meh");
    expect_error_with(R"({"id":"1","e1":"a","e2":"a","sentence":"a a"})" "\n", "e1 == e2");
    expect_error_with(R"({"id":"1","e1":"a","e2":"b","sentence":"a only"})" "\n",
                      "does not occur");
    fs::remove(path);
}

TEST_CASE("entity lexicon validation") {
    namespace fs = std::filesystem;
    EntityLexicon lex;
    lex.add("Ginger", "Consumable");
    CHECK_THROWS_AS(lex.add("ginger", "Chemical"), Error);  // duplicate after folding
    CHECK_THROWS_AS(lex.add("", "Chemical"), Error);
    CHECK(lex.category_of("GINGER") == "Consumable");

    const fs::path path = fs::temp_directory_path() / "cerm_test_lex.tsv";
    {
        std::ofstream out(path);
        out << "ginger\tConsumable\nvitamin d\tNutrient\n";
    }
    EntityLexicon loaded = EntityLexicon::load(path.string());
    CHECK(loaded.size() == 2);
    {
        std::ofstream out(path);
        out << "no-tab\n";
    }
    CHECK_THROWS_AS(EntityLexicon::load(path.string()), Error);
    fs::remove(path);
}
