#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "revgan/corpus.hpp"

using namespace revgan;

namespace {

std::string record(const std::string& user, const std::string& product, const std::string& text, int stars = 4) {
    return R"({"user_id":")" + user + R"(","product_id":")" + product + R"(","review_text":")" + text +
           R"(","description_text":"A lamp.","stars":)" + std::to_string(stars) + "}";
}

RawRecord raw(const std::string& text) {
    RawRecord r;
    r.user_id = "u";
    r.product_id = "p";
    r.review_text = text;
    r.stars = 3;
    return r;
}

}  // namespace

TEST_CASE("sentence splitting") {
    using V = std::vector<std::string>;
    CHECK(split_sentences("Great pick. Loved it.") == V{"Great pick.", "Loved it."});
    CHECK(split_sentences("no punctuation at all") == V{"no punctuation at all"});
    CHECK(split_sentences("Wow!! Really?Yes.") == V{"Wow!!", "Really?", "Yes."});
    CHECK(split_sentences("  ...  ") == V{"..."});
    CHECK(split_sentences("").empty());
}

TEST_CASE("word tokens") {
    using V = std::vector<std::string>;
    CHECK(word_tokens("Loved it, really!") == V{"loved", "it", ",", "really", "!"});
    CHECK(word_tokens("Don't stop") == V{"don't", "stop"});
    CHECK(word_tokens("'quoted'") == V{"'", "quoted", "'"});
}

TEST_CASE("vocabulary ordering, cap and unk") {
    const Vocabulary v = build_vocab({raw("a a b")}, 10);
    CHECK(v.id("a") == 4);
    CHECK(v.id("b") == 5);
    CHECK(v.size() == 6);

    const Vocabulary capped = build_vocab({raw("a a b")}, 1);
    CHECK(capped.size() == 5);
    CHECK(tokenize("a b", capped).token_ids == std::vector<TokenId>{4, Vocabulary::unk, Vocabulary::eos});

    CHECK(tokenize("zxqv", v).token_ids == std::vector<TokenId>{Vocabulary::unk, Vocabulary::eos});
    CHECK_THROWS_AS(build_vocab({}), InputError);

    SUBCASE("ties break lexicographically") {
        const Vocabulary t = build_vocab({raw("c b a c")}, 10);
        CHECK(t.id("c") == 4);
        CHECK(t.id("a") == 5);
        CHECK(t.id("b") == 6);
    }
}

TEST_CASE("vocabulary is bijective and survives a file round trip") {
    const auto records = parse_records(
        record("u1", "p1", "Loved it. The lamp is bright!") + "\n" + record("u2", "p1", "Too dim, sadly.") + "\n");
    const Vocabulary v = build_vocab(records.records);
    for (TokenId i = Vocabulary::special_count; i < v.size(); ++i) CHECK(v.id(v.token(i)) == i);

    const auto path = std::filesystem::temp_directory_path() / "revgan_vocab_test.txt";
    v.save(path);
    const Vocabulary back = Vocabulary::load(path);
    std::ifstream f(path);
    std::string first;
    std::getline(f, first);
    std::filesystem::remove(path);
    CHECK(first == v.token(4));
    CHECK(back.serialize() == v.serialize());
    CHECK(back.hash() == v.hash());
}

TEST_CASE("tokenize and detokenize round trip in-vocabulary text") {
    const auto records = parse_records(record("u", "p", "Loved it, really! The lamp's light is warm.") + "\n");
    const Vocabulary v = build_vocab(records.records);
    for (const std::string s : {"loved it, really!", "the lamp's light is warm."}) {
        CHECK(detokenize(tokenize(s, v), v) == s);
    }
    CHECK(tokenize("loved it", v).token_ids == std::vector<TokenId>{v.id("loved"), v.id("it"), Vocabulary::eos});

    SUBCASE("truncation keeps eos") {
        std::string longer;
        for (int i = 0; i < 50; ++i) longer += "it ";
        const Sentence s = tokenize(longer, v, 8);
        CHECK(s.token_ids.size() == 8);
        CHECK(s.token_ids.back() == Vocabulary::eos);
    }
}

TEST_CASE("record loading skips malformed lines and rejects corrupt files") {
    const std::string good = record("u1", "p1", "Nice.") + "\n" + record("u2", "p2", "Bad.", 1) + "\n" +
                             record("u3", "p1", "Fine.", 3) + "\n";
    const LoadResult r = parse_records(good + "{not json}\n\n");
    CHECK(r.records.size() == 3);
    CHECK(r.skipped == 1);
    CHECK(r.diagnostics.size() == 1);

    CHECK(parse_records(good + record("u", "p", "Stars out of range.", 9) + "\n").skipped == 1);
    CHECK(parse_records(good + record("u", "p", "   ") + "\n").skipped == 1);
    CHECK_THROWS_AS(parse_records("garbage\nmore garbage\n" + record("u", "p", "ok") + "\n"), InputError);
    CHECK_THROWS_AS(load_records("/nonexistent/reviews.jsonl"), InputError);

    const LoadResult fixture = load_records(REVGAN_TEST_DATA "/reviews20.jsonl");
    CHECK(fixture.records.size() == 20);
    CHECK(fixture.skipped == 0);
}

TEST_CASE("documents keep one description per product") {
    const LoadResult fixture = load_records(REVGAN_TEST_DATA "/reviews20.jsonl");
    const Vocabulary v = build_vocab(fixture.records);
    const DocumentSet set = make_documents(fixture.records, v);
    CHECK(set.reviews.size() == 20);
    CHECK(set.descriptions.size() == 4);
    CHECK(set.reviews[0].sentences.size() == 2);
    CHECK(set.reviews[0].user_id == "u0");
}

TEST_CASE("batching") {
    std::vector<Sentence> five;
    for (TokenId i = 0; i < 5; ++i) five.push_back(Sentence{{4 + i, Vocabulary::eos}});
    const auto batches = make_batches(five, 2, 7);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].batch_size == 2);
    CHECK(batches[1].batch_size == 2);
    CHECK(batches[2].batch_size == 1);

    const auto again = make_batches(five, 2, 7);
    for (std::size_t i = 0; i < batches.size(); ++i) CHECK(batches[i].ids == again[i].ids);

    std::multiset<TokenId> seen;
    for (const auto& b : batches)
        for (std::size_t r = 0; r < b.batch_size; ++r) seen.insert(b.at(r, 0));
    CHECK(seen == std::multiset<TokenId>{4, 5, 6, 7, 8});

    const Sentence a{{4, 4, 2}}, b{{5, 5, 5, 5, 5, 5, 2}}, c{{6, 6, 6, 2}};
    const Batch batch = make_batch({&a, &b, &c});
    CHECK(batch.padded_len == 7);
    CHECK(batch.lengths == std::vector<std::size_t>{3, 7, 4});
    for (std::size_t r = 0; r < 3; ++r) {
        const double m = std::accumulate(batch.mask.begin() + static_cast<long>(r * 7),
                                         batch.mask.begin() + static_cast<long>(r * 7 + 7), 0.0);
        CHECK(m == static_cast<double>(batch.lengths[r]));
    }
    CHECK(batch.at(0, 5) == Vocabulary::pad);
}

TEST_CASE("token count is conserved by document batching") {
    const LoadResult fixture = load_records(REVGAN_TEST_DATA "/reviews20.jsonl");
    const Vocabulary v = build_vocab(fixture.records);
    const DocumentSet set = make_documents(fixture.records, v);
    std::size_t tokens = 0;
    for (const auto& d : set.reviews)
        for (const auto& s : d.sentences) tokens += s.token_ids.size();
    double batched = 0;
    for (const auto& b : make_batches(set.reviews, 4, 3)) batched += std::accumulate(b.mask.begin(), b.mask.end(), 0.0);
    CHECK(batched == static_cast<double>(tokens));
}
