#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "conceptcil/concept_pool.hpp"
#include "support.hpp"
#include "tfidf_oracle.hpp"

using namespace conceptcil;

using testsupport::oracle_similarity;
using testsupport::random_phrase;

TEST(Tokenize, Examples) {
    EXPECT_EQ(tokenize("Black-and-White Stripes"),
              (std::vector<std::string>{"black", "and", "white", "stripes"}));
    EXPECT_EQ(tokenize("thickened discolored nail"),
              (std::vector<std::string>{"thickened", "discolored", "nail"}));
    EXPECT_TRUE(tokenize("!!!").empty());
}

TEST(Similarity, WorkedPair) {
    const double s = pairwise_similarity("black and white stripes", "black and white patches");
    // 6 shared n-grams at weight 1, 4 unique per side at ln(1.5)+1: 6 / (6 + 4·(ln 1.5 + 1)²).
    const double w = std::log(1.5) + 1.0;
    EXPECT_NEAR(s, 6.0 / (6.0 + 4.0 * w * w), 1e-15);
    EXPECT_NEAR(s, 0.43161341897075145, 1e-12);
    EXPECT_NEAR(s, 0.4316, 1e-4);
}

TEST(Similarity, IdentityAndDisjoint) {
    EXPECT_EQ(pairwise_similarity("red lesion", "red lesion"), 1.0);
    EXPECT_EQ(pairwise_similarity("Red  Lesion", "red-lesion"), 1.0);
    EXPECT_EQ(pairwise_similarity("red lesion", "bumpy surface"), 0.0);
    EXPECT_THROW(pairwise_similarity("!!!", "red"), EmptyConceptError);
}

TEST(Similarity, MatchesBruteForceOracle) {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 200; ++i) {
        const std::string a = random_phrase(rng), b = random_phrase(rng);
        EXPECT_NEAR(pairwise_similarity(a, b), oracle_similarity(a, b), 1e-9) << a << " | " << b;
    }
}

TEST(Similarity, SymmetricAndBounded) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 300; ++i) {
        const std::string a = random_phrase(rng), b = random_phrase(rng);
        const double ab = pairwise_similarity(a, b);
        EXPECT_EQ(ab, pairwise_similarity(b, a));
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, 1.0);
        EXPECT_EQ(pairwise_similarity(a, a), 1.0);
    }
}

TEST(Pool, FirstClassAddsEverything) {
    ConceptPool pool(0.5, 3);
    const auto d = pool.filter_and_insert("a", {"red lesion", "bumpy surface", "white scale"});
    ASSERT_EQ(d.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_TRUE(d[i].added());
        EXPECT_EQ(d[i].id, i);
    }
    EXPECT_EQ(pool.class_concepts("a"), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Pool, ExactDuplicateIsReplaced) {
    ConceptPool pool(0.5, 3);
    pool.filter_and_insert("a", {"thickened discolored nail"});
    const auto d = pool.filter_and_insert("b", {"thickened discolored nail"});
    EXPECT_FALSE(d[0].added());
    EXPECT_EQ(d[0].id, 0u);
    EXPECT_EQ(d[0].max_similarity, 1.0);
    EXPECT_EQ(pool.size(), 1u);
    EXPECT_EQ(pool.class_concepts("b"), (std::vector<std::size_t>{0}));
}

TEST(Pool, WorkedThresholdCase) {
    ConceptPool loose(0.5, 3);
    loose.filter_and_insert("zebra", {"black and white stripes"});
    const auto kept = loose.filter_and_insert("cow", {"black and white patches"});
    EXPECT_TRUE(kept[0].added());
    EXPECT_EQ(loose.size(), 2u);

    ConceptPool tight(0.4, 3);
    tight.filter_and_insert("zebra", {"black and white stripes"});
    const auto merged = tight.filter_and_insert("cow", {"black and white patches"});
    EXPECT_FALSE(merged[0].added());
    EXPECT_EQ(merged[0].id, 0u);
    EXPECT_EQ(tight.size(), 1u);
}

TEST(Pool, IntraClassDuplicatesCollapse) {
    ConceptPool pool(0.5, 3);
    pool.filter_and_insert("a", {"red scaly patch"});
    pool.filter_and_insert("b", {"red scaly patch", "red scaly patch", "smooth blue ring"});
    EXPECT_EQ(pool.class_concepts("b"), (std::vector<std::size_t>{0, 1}));
}

TEST(Pool, TiesGoToLowestId) {
    ConceptPool pool(0.15, 3);
    pool.filter_and_insert("a", {"red ring"});
    pool.filter_and_insert("b", {"blue spot"});
    ASSERT_EQ(pool.size(), 2u);
    // "red spot" shares exactly one word with each pooled concept, so both scores are equal.
    ASSERT_EQ(pairwise_similarity("red spot", "red ring"), pairwise_similarity("red spot", "blue spot"));
    const auto d = pool.filter_and_insert("c", {"red spot"});
    ASSERT_FALSE(d[0].added());
    EXPECT_EQ(d[0].id, 0u);
}

TEST(Pool, Errors) {
    ConceptPool pool(0.5, 2);
    pool.filter_and_insert("a", {"red"});
    EXPECT_THROW(pool.filter_and_insert("a", {"blue"}), DuplicateClassError);
    EXPECT_THROW(pool.filter_and_insert("b", {"blue", "!!!"}), EmptyConceptError);
    EXPECT_THROW(pool.filter_and_insert("c", {"x", "y", "z"}), ConfigError);
    // Failed submissions leave the pool untouched.
    EXPECT_EQ(pool.size(), 1u);
    EXPECT_FALSE(pool.has_class("b"));
}

TEST(Pool, PostFilterInvariantExhaustive) {
    std::mt19937_64 rng(31);
    for (double tau : {0.3, 0.5, 0.7}) {
        ConceptPool pool(tau, 3);
        for (int c = 0; c < 60; ++c) {
            pool.filter_and_insert("class" + std::to_string(c),
                                   {random_phrase(rng), random_phrase(rng), random_phrase(rng)});
        }
        const auto& cs = pool.concepts();
        for (std::size_t i = 0; i < cs.size(); ++i) {
            EXPECT_EQ(cs[i].id, i);
            for (std::size_t j = i + 1; j < cs.size(); ++j)
                EXPECT_LE(pairwise_similarity(cs[i].text, cs[j].text), tau) << cs[i].text << " | " << cs[j].text;
        }
        for (const auto& [name, ids] : pool.class_map()) {
            EXPECT_LE(ids.size(), 3u);
            EXPECT_TRUE(std::is_sorted(ids.begin(), ids.end()));
            for (std::size_t id : ids) EXPECT_LT(id, cs.size());
        }
    }
}

TEST(Pool, DeterministicReplay) {
    auto build = [] {
        std::mt19937_64 rng(5);
        ConceptPool pool(0.5, 3);
        for (int c = 0; c < 20; ++c)
            pool.filter_and_insert("c" + std::to_string(c), {random_phrase(rng), random_phrase(rng)});
        return pool;
    };
    EXPECT_EQ(build().to_json(), build().to_json());
    EXPECT_EQ(build().fingerprint(), build().fingerprint());
}

TEST(Pool, AttachEmbeddingsAlignment) {
    ConceptPool pool(0.5, 3);
    pool.filter_and_insert("a", {"red lesion", "bumpy surface", "white scale"});
    EXPECT_THROW(pool.attach_embeddings(Matrix(2, 4)), AlignmentError);
    EXPECT_FALSE(pool.has_embeddings());
    Matrix h(3, 4);
    for (std::size_t i = 0; i < 3; ++i) h(i, 0) = static_cast<double>(i);
    pool.attach_embeddings(h);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(pool.embedding(i)[0], static_cast<double>(i));

    pool.filter_and_insert("b", {"glossy teal rim"});
    EXPECT_FALSE(pool.has_embeddings());
    EXPECT_THROW(pool.features(), AlignmentError);
    EXPECT_THROW(pool.append_embeddings(Matrix(2, 4)), AlignmentError);
    pool.append_embeddings(Matrix(1, 4, 7.0));
    EXPECT_EQ(pool.features().rows(), 4u);
    EXPECT_EQ(pool.embedding(3)[2], 7.0);
}

TEST(PoolFile, SaveLoadSaveIsByteIdentical) {
    const auto dir = testsupport::scratch("pool_roundtrip");
    ConceptPool pool(0.5, 3);
    pool.filter_and_insert("zebra", {"black and white stripes", "long mane"});
    pool.filter_and_insert("cow", {"black and white patches", "black and white stripes"});
    Matrix h(pool.size(), 3);
    for (std::size_t i = 0; i < h.size(); ++i) h.data()[i] = 0.1 * static_cast<double>(i) - 0.35;
    pool.attach_embeddings(h);
    save_pool(pool, dir / "a.json");
    save_pool_embeddings(pool, dir / "a.cemb");
    const ConceptPool back = load_pool(dir / "a.json", dir / "a.cemb");
    save_pool(back, dir / "b.json");
    EXPECT_EQ(detail::read_text_file(dir / "a.json"), detail::read_text_file(dir / "b.json"));
    EXPECT_EQ(back.features(), h);  // non-float values force the 64-bit variant
    EXPECT_EQ(back.concepts().size(), pool.concepts().size());
    for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back.concepts()[i].text, pool.concepts()[i].text);
    EXPECT_EQ(back.class_map(), pool.class_map());
    EXPECT_EQ(back.tau(), 0.5);
    EXPECT_EQ(back.k(), 3u);
}

TEST(PoolFile, IntegrityAndParseErrors) {
    const auto dir = testsupport::scratch("pool_errors");
    detail::write_text_file(dir / "dangling.json",
                            R"({"version":1,"tau":0.5,"k":3,"concepts":[{"id":0,"text":"a","origin_class":"x"}],)"
                            R"("class_map":{"x":[0,4]}})");
    EXPECT_THROW(load_pool(dir / "dangling.json"), IntegrityError);
    detail::write_text_file(dir / "badid.json",
                            R"({"version":1,"tau":0.5,"k":3,"concepts":[{"id":1,"text":"a","origin_class":"x"}],)"
                            R"("class_map":{}})");
    EXPECT_THROW(load_pool(dir / "badid.json"), IntegrityError);
    detail::write_text_file(dir / "missing.json", R"({"version":1,"tau":0.5,"k":3,"concepts":[{"id":0}],"class_map":{}})");
    try {
        load_pool(dir / "missing.json");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("concepts[0].text"), std::string::npos);
    }
    detail::write_text_file(dir / "broken.json", R"({"version":1,"tau":)");
    try {
        load_pool(dir / "broken.json");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
    }
}
