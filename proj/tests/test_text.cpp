#include "doctest.h"

#include "kgqa/text.hpp"
#include "test_util.hpp"

using namespace kgqa;

TEST_CASE("tokenize lowercases and splits on punctuation") {
  TokenSeq t = tokenize("what position does carlos gomez play?");
  REQUIRE(t.tokens == std::vector<std::string>{"what", "position", "does",
                                               "carlos", "gomez", "play"});
  TokenSeq w = tokenize("Wind");
  CHECK(w.tokens == std::vector<std::string>{"wind"});
}

TEST_CASE("tokenize collapses whitespace and keeps offsets") {
  TokenSeq t = tokenize("a  b");
  REQUIRE(t.tokens == std::vector<std::string>{"a", "b"});
  CHECK(t.offsets[0] == std::pair<size_t, size_t>{0, 1});
  CHECK(t.offsets[1] == std::pair<size_t, size_t>{3, 4});
  // offsets are ordered and non-overlapping
  for (size_t i = 1; i < t.offsets.size(); ++i)
    CHECK(t.offsets[i - 1].second <= t.offsets[i].first);
}

TEST_CASE("tokenize rejects empty input") {
  CHECK_THROWS_AS(tokenize(""), input_error);
  CHECK_THROWS_AS(tokenize("   ?!"), input_error);
}

static EmbeddingTable make_table(const std::vector<std::string>& vocab,
                                 uint32_t dim, uint64_t seed = 4) {
  Rng rng(seed);
  return EmbeddingTable(vocab, dim, rng);
}

TEST_CASE("encode: single token question gives its own row as h_q") {
  EmbeddingTable tab = make_table({"wind", "fire"}, 8);
  QuestionEncoding enc = tab.encode(tokenize("wind"));
  CHECK(enc.h_q == tab.row(tab.row_of("wind")));
}

TEST_CASE("encode: OOV tokens hit the unknown row") {
  EmbeddingTable tab = make_table({"wind"}, 8);
  QuestionEncoding enc = tab.encode(tokenize("zzz qqq"));
  CHECK(enc.token_embs[0] == tab.row(EmbeddingTable::kUnknownRow));
  CHECK(enc.h_q == tab.row(EmbeddingTable::kUnknownRow));
}

TEST_CASE("encode: h_q is the mean of two known rows") {
  EmbeddingTable tab = make_table({"a", "b"}, 4);
  QuestionEncoding enc = tab.encode(tokenize("a b"));
  Vec u = tab.row(tab.row_of("a")), v = tab.row(tab.row_of("b"));
  for (uint32_t d = 0; d < 4; ++d)
    CHECK(enc.h_q[d] == doctest::Approx((u[d] + v[d]) / 2).epsilon(1e-15));
}

TEST_CASE("span_embed") {
  EmbeddingTable tab = make_table({"a", "b", "c"}, 4);
  QuestionEncoding enc = tab.encode(tokenize("a b c"));
  CHECK(span_embed(enc, 1, 1) == enc.token_embs[1]);
  // full span equals h_q exactly (shared mean)
  Vec full = span_embed(enc, 0, 2);
  for (uint32_t d = 0; d < 4; ++d) CHECK(full[d] == enc.h_q[d]);
  Vec half = span_embed(enc, 0, 1);
  for (uint32_t d = 0; d < 4; ++d)
    CHECK(half[d] ==
          doctest::Approx((enc.token_embs[0][d] + enc.token_embs[1][d]) / 2));
  CHECK_THROWS_AS(span_embed(enc, 2, 1), input_error);
  CHECK_THROWS_AS(span_embed(enc, 0, 3), input_error);
}

TEST_CASE("permutation covariance of encode") {
  EmbeddingTable tab = make_table({"a", "b", "c"}, 6);
  QuestionEncoding e1 = tab.encode(tokenize("a b c"));
  QuestionEncoding e2 = tab.encode(tokenize("c a b"));
  CHECK(e1.h_q == e2.h_q);
  CHECK(e1.token_embs[0] == e2.token_embs[1]);
  CHECK(e1.token_embs[2] == e2.token_embs[0]);
}

TEST_CASE("encode_backward: zero upstream gives zero gradient") {
  EmbeddingTable tab = make_table({"a", "b"}, 4);
  TokenSeq toks = tokenize("a b");
  Vec grads(tab.data().size(), 0.0);
  tab.encode_backward(toks, Vec(4, 0.0), {Vec(4, 0.0), Vec(4, 0.0)}, grads);
  for (double g : grads) CHECK(g == 0.0);
}

TEST_CASE("encode_backward: single token routes h_q gradient to its row") {
  EmbeddingTable tab = make_table({"a"}, 3);
  TokenSeq toks = tokenize("a");
  Vec g = {1.0, 2.0, 3.0};
  Vec grads(tab.data().size(), 0.0);
  tab.encode_backward(toks, g, {}, grads);
  uint32_t r = tab.row_of("a");
  for (uint32_t d = 0; d < 3; ++d) CHECK(grads[r * 3 + d] == g[d]);
  for (uint32_t d = 0; d < 3; ++d) CHECK(grads[d] == 0.0);  // unknown row untouched
}

TEST_CASE("encode_backward matches finite differences") {
  Rng rng(21);
  EmbeddingTable tab = make_table({"red", "green", "blue"}, 5, 17);
  TokenSeq toks = tokenize("red blue red zzz");
  // random linear objective on h_q and token embeddings
  Vec wh(5), wt0(5), wt1(5), wt2(5), wt3(5);
  for (Vec* w : {&wh, &wt0, &wt1, &wt2, &wt3})
    for (double& v : *w) v = rng.uniform(-1, 1);
  std::vector<Vec> wt = {wt0, wt1, wt2, wt3};

  auto objective = [&](const EmbeddingTable& t) {
    QuestionEncoding enc = t.encode(toks);
    double s = dot(enc.h_q, wh);
    for (size_t k = 0; k < 4; ++k) s += dot(enc.token_embs[k], wt[k]);
    return s;
  };
  Vec grads(tab.data().size(), 0.0);
  tab.encode_backward(toks, wh, wt, grads);

  const double h = 1e-6;
  EmbeddingTable mut = tab;
  for (size_t i = 0; i < mut.data().size(); ++i) {
    double orig = mut.data()[i];
    mut.data()[i] = orig + h;
    double lp = objective(mut);
    mut.data()[i] = orig - h;
    double lm = objective(mut);
    mut.data()[i] = orig;
    double fd = (lp - lm) / (2 * h);
    if (std::abs(fd) < 1e-8 && std::abs(grads[i]) < 1e-8) continue;
    CHECK(std::abs(fd - grads[i]) / std::max(std::abs(fd), std::abs(grads[i])) <
          1e-4);
  }
}

TEST_CASE("vocab file reading") {
  auto path = std::filesystem::temp_directory_path() / "kgqa_vocab_test.txt";
  {
    std::ofstream f(path);
    f << "alpha\nbeta\n";
  }
  auto toks = EmbeddingTable::read_vocab_file(path.string());
  REQUIRE(toks.size() == 2);
  EmbeddingTable tab = make_table(toks, 4);
  CHECK(tab.row_of("alpha") == 1);  // row 0 reserved for unknown
  CHECK(tab.row_of("beta") == 2);
  std::filesystem::remove(path);
}
