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

#include <filesystem>
#include <fstream>

#include "cerm/embedding.hpp"
#include "cerm/subword.hpp"
#include "support/fixtures.hpp"

using namespace cerm;

TEST_CASE("ngrams enumerate the wrapped word") {
    CHECK(ngrams("ab", 2, 2) == std::vector<std::string>{"<a", "ab", "b>"});
    CHECK(ngrams("a", 1, 1) == std::vector<std::string>{"<", "a", ">"});
    CHECK_THROWS_AS(ngrams("ab", 3, 2), Error);
    CHECK_THROWS_AS(ngrams("ab", 0, 2), Error);
    CHECK_THROWS_AS(ngrams("", 1, 2), Error);
}

TEST_CASE("ngrams cover every length in range") {
    const auto grams = ngrams("abc", 1, 6);  // wrapped "<abc>" has length 5
    // lengths 1..5 of a 5-char string: 5 + 4 + 3 + 2 + 1
    CHECK(grams.size() == 15);
    CHECK(grams.front() == "<");
    CHECK(grams.back() == "<abc>");
}

TEST_CASE("skip-gram on two-cluster corpus separates clusters") {
    const double margin = fixtures::cluster_margin(7, 200, fixtures::small_skipgram_config());
    INFO("within-minus-cross margin " << margin);
    CHECK(margin > 0.1);
}

TEST_CASE("degenerate one-token corpus trains without error") {
    std::vector<std::vector<std::string>> corpus{{"tok", "tok", "tok", "tok"}};
    SkipgramConfig cfg = fixtures::small_skipgram_config();
    const EmbeddingTable table = train_skipgram(corpus, cfg);
    const auto v = table.embed_word("tok");
    CHECK(v.size() == cfg.dim);
    for (double x : v) CHECK(std::isfinite(x));
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto corpus = fixtures::cluster_corpus(40, 5, 3);
    SkipgramConfig cfg = fixtures::small_skipgram_config();
    cfg.seed = 9;
    const EmbeddingTable t1 = train_skipgram(corpus, cfg);
    const EmbeddingTable t2 = train_skipgram(corpus, cfg);
    for (const std::string& w : {"a1", "a2", "b3"}) {
        CHECK(t1.embed_word(w) == t2.embed_word(w));
    }
}

TEST_CASE("empty corpora are rejected") {
    SkipgramConfig cfg;
    CHECK_THROWS_AS(train_skipgram({}, cfg), Error);
    cfg.min_count = 5;
    CHECK_THROWS_AS(train_skipgram({{"once"}}, cfg), Error);
}

TEST_CASE("lookups are total and fixed-dimension") {
    auto corpus = fixtures::cluster_corpus(40, 5, 3);
    const EmbeddingTable table = train_skipgram(corpus, fixtures::small_skipgram_config());

    SECTION("unseen word resolves through n-gram buckets") {
        const auto v = table.embed_word("xqzt");
        CHECK(v.size() == 32);
        bool nonzero = false;
        for (double x : v) {
            CHECK(std::isfinite(x));
            if (x != 0.0) nonzero = true;
        }
        CHECK(nonzero);
    }
    SECTION("empty strings rejected") {
        CHECK_THROWS_AS(table.embed_word(""), Error);
        CHECK_THROWS_AS(table.embed_entity("   "), Error);
    }
    SECTION("one-token entity equals embed_word") {
        CHECK(table.embed_entity("a1") == table.embed_word("a1"));
    }
    SECTION("two-token entity is the componentwise mean") {
        const auto a = table.embed_word("a1");
        const auto b = table.embed_word("b2");
        const auto e = table.embed_entity("a1 b2");
        for (std::size_t i = 0; i < e.size(); ++i) {
            CHECK(e[i] == Catch::Approx((a[i] + b[i]) / 2.0).margin(1e-15));
        }
    }
    SECTION("lookup is case-insensitive") {
        CHECK(table.embed_word("A1") == table.embed_word("a1"));
    }
}

TEST_CASE("nearest neighbors respect cluster structure") {
    auto corpus = fixtures::cluster_corpus(200, 6, 21);
    SkipgramConfig cfg = fixtures::small_skipgram_config();
    cfg.seed = 5;
    const EmbeddingTable table = train_skipgram(corpus, cfg);
    const auto nn = table.nearest("a1", 2);
    REQUIRE(nn.size() == 2);
    for (const auto& [word, cosine] : nn) {
        INFO(word << " cos " << cosine);
        CHECK((word == "a2" || word == "a3"));
    }
}

TEST_CASE("embedding file round-trips exactly and accepts plain text") {
    namespace fs = std::filesystem;
    auto corpus = fixtures::cluster_corpus(30, 5, 17);
    SkipgramConfig cfg = fixtures::small_skipgram_config();
    cfg.buckets = 1 << 8;
    const EmbeddingTable table = train_skipgram(corpus, cfg);

    const fs::path path = fs::temp_directory_path() / "cerm_test_emb.vec";
    table.save(path.string());
    const EmbeddingTable back = EmbeddingTable::load(path.string());
    CHECK(back.has_subwords());
    CHECK(back.dim() == table.dim());
    for (const std::string& w : {"a1", "b2", "zzz-unseen"}) {
        CHECK(back.embed_word(w) == table.embed_word(w));
    }
    fs::remove(path);

    const fs::path plain = fs::temp_directory_path() / "cerm_test_plain.vec";
    {
        std::ofstream out(plain);
        out << "2 3\n";
        out << "hello 1 0 0.5\n";
        out << "world 0 2 -1\n";
    }
    const EmbeddingTable pt = EmbeddingTable::load(plain.string());
    CHECK_FALSE(pt.has_subwords());
    CHECK(pt.embed_word("hello") == std::vector<double>{1, 0, 0.5});
    CHECK(pt.embed_word("unseen") == std::vector<double>{0, 0, 0});
    fs::remove(plain);
}

TEST_CASE("embedding loader reports malformed files") {
    namespace fs = std::filesystem;
    const fs::path bad = fs::temp_directory_path() / "cerm_test_bad.vec";
    {
        std::ofstream out(bad);
        out << "3 4\nonly-one-line 1 2 3 4\n";
    }
    CHECK_THROWS_AS(EmbeddingTable::load(bad.string()), Error);
    {
        std::ofstream out(bad);
        out << "1 4\nshort 1 2\n";
    }
    CHECK_THROWS_AS(EmbeddingTable::load(bad.string()), Error);
    fs::remove(bad);
}
