#include <doctest.h>

#include <cmath>
#include <set>

#include "diff3m/conditioning.hpp"
#include "oracle.hpp"

using namespace diff3m;

namespace {

std::shared_ptr<const RecordSchema> schema_of(std::vector<std::string> names) {
  auto s = std::make_shared<RecordSchema>();
  s->units.assign(names.size(), "");
  s->names = std::move(names);
  return s;
}

TokenizerParams tokenizer_for(const std::shared_ptr<const RecordSchema>& s, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Index f = static_cast<Index>(s->size());
  return {*s, oracle::random_tensor({f, d}, rng), oracle::random_tensor({f, d}, rng)};
}

}  // namespace

TEST_CASE("tokenizer examples") {
  auto s = schema_of({"a", "b", "c"});
  const TokenizerParams p = tokenizer_for(s, 4, 1);

  SUBCASE("zero values give the biases") {
    CHECK(tokenize_record(make_record(s, {0, 0, 0}), p) == p.bias);
  }
  SUBCASE("d=1 affine map") {
    auto one = schema_of({"x"});
    const TokenizerParams q{*one, Tensor({1, 1}, {2.0}), Tensor({1, 1}, {1.0})};
    CHECK(tokenize_record(make_record(one, {3.0}), q)[0] == 7.0);
  }
  SUBCASE("changing one feature moves only its own token") {
    const Tensor a = tokenize_record(make_record(s, {1.0, 2.0, 3.0}), p);
    const Tensor b = tokenize_record(make_record(s, {1.0, 4.0, 3.0}), p);
    for (Index j = 0; j < 3; ++j) {
      const bool same = (a.matrix().row(j).array() == b.matrix().row(j).array()).all();
      CHECK(same == (j != 1));
    }
  }
  SUBCASE("schema mismatch is rejected") {
    auto other = schema_of({"a", "b", "d"});
    CHECK_THROWS_AS(tokenize_record(make_record(other, {0, 0, 0}), p), DataError);
  }
}

TEST_CASE("record construction and parsing") {
  auto s = schema_of({"bmi", "age"});
  const PatientRecord r = parse_record(s, "age=40,bmi=22.5");
  CHECK(r.values == std::vector<double>{22.5, 40.0});
  CHECK_THROWS_AS(parse_record(s, "bmi=22"), DataError);
  CHECK_THROWS_AS(parse_record(s, "bmi=22,age=4,x=1"), DataError);
  CHECK_THROWS_AS(parse_record(s, "bmi=22,age=abc"), DataError);
  CHECK_THROWS_AS(parse_record(s, "bmi=22,bmi=3,age=1"), DataError);
  CHECK_THROWS_AS(make_record(s, {1.0}), DataError);
  CHECK_THROWS_AS(make_record(s, {1.0, NAN}), DataError);
  CHECK(s->index_of("age") == 1);
  CHECK_THROWS_AS(s->index_of("zzz"), DataError);
}

TEST_CASE("IECA examples") {
  SUBCASE("single token") {
    const Tensor F({1, 3}, {0.1, 0.2, 0.3});
    const ConditionEmbedding c = ieca(F, Tensor({1, 3}, {5, -1, 2}));
    CHECK(c.weights[0] == 1.0);
    CHECK(c.c_r == F);
  }
  SUBCASE("identical tokens give uniform weights") {
    const Tensor F({4, 2}, {1, 2, 1, 2, 1, 2, 1, 2});
    const ConditionEmbedding c = ieca(F, Tensor({1, 2}, {0.3, 0.7}));
    for (Index j = 0; j < 4; ++j) CHECK(c.weights[j] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(c.c_r[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(c.c_r[1] == doctest::Approx(2.0).epsilon(1e-15));
  }
  SUBCASE("two tokens, d=1, against a hand-rolled softmax") {
    const ConditionEmbedding c = ieca(Tensor({2, 1}, {1, 3}), Tensor({1, 1}, {1}));
    const auto w = oracle::softmax({1.0, 3.0});
    CHECK(c.weights[0] == doctest::Approx(w[0]).epsilon(1e-15));
    CHECK(c.weights[1] == doctest::Approx(w[1]).epsilon(1e-15));
    CHECK(c.c_r[0] == doctest::Approx(w[0] * 1 + w[1] * 3).epsilon(1e-15));
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(ieca(Tensor({2, 3}), Tensor({1, 2})), ShapeError);
    CHECK_THROWS_AS(ieca(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
  }
}

TEST_CASE("IECA weight properties on random inputs") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor F = oracle::random_tensor({5, 6}, rng, -3, 3);
    const Tensor e = oracle::random_tensor({1, 6}, rng, -3, 3);
    const ConditionEmbedding c = ieca(F, e);
    CHECK((c.weights.array() >= 0).all());
    CHECK(std::abs(c.weights.array().sum() - 1.0) < 1e-9);
    // Positive scaling of e preserves the ordering of the weights.
    Tensor e2 = e;
    e2.array() *= 2.5;
    const ConditionEmbedding c2 = ieca(F, e2);
    for (Index a = 0; a < 5; ++a)
      for (Index b = 0; b < 5; ++b)
        if (c.weights[a] < c.weights[b]) CHECK(c2.weights[a] <= c2.weights[b]);
  }
}

TEST_CASE("a dominant logit pulls c_r onto its token") {
  Tensor F({3, 2}, {10, 0, 0, 1, -1, -1});
  const ConditionEmbedding c = ieca(F, Tensor({1, 2}, {50, 0}));
  CHECK(c.c_r[0] == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(c.c_r[1] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("timestamp embedding") {
  const Tensor z = timestamp_embedding(0, 8);
  CHECK(z == Tensor({1, 8}, {0, 1, 0, 1, 0, 1, 0, 1}));
  const Tensor e = timestamp_embedding(17, 6);
  CHECK(e[0] == doctest::Approx(std::sin(17.0)));
  CHECK(e[3] == doctest::Approx(std::cos(17.0 / std::pow(10000.0, 2.0 / 6.0))));
  CHECK(e.array().square().sum() <= 6.0 + 1e-12);
  CHECK_THROWS_AS(timestamp_embedding(3, 7), ConfigError);

  std::set<std::vector<double>> seen;
  for (int t = 0; t < 1000; ++t) {
    const Tensor v = timestamp_embedding(t, 64);
    seen.insert(std::vector<double>(v.data(), v.data() + v.size()));
  }
  CHECK(seen.size() == 1000);
}

TEST_CASE("image encoder") {
  EncoderConfig cfg;
  std::mt19937_64 rng(41);
  ParamStore p;
  init_encoder(p, "enc", cfg, rng);
  const Tensor x = oracle::random_tensor({32, 32}, rng);

  CHECK(encode_image(x, p, "enc", cfg).shape() == Shape{1, 64});
  CHECK(encode_image(x, p, "enc", cfg) == encode_image(x, p, "enc", cfg));
  const Tensor y = oracle::random_tensor({32, 32}, rng);
  CHECK(!(encode_image(x, p, "enc", cfg) == encode_image(y, p, "enc", cfg)));
  CHECK_THROWS_AS(encode_image(Tensor({16, 16}), p, "enc", cfg), ShapeError);

  EncoderConfig nobias = cfg;
  nobias.use_bias = false;
  ParamStore q;
  init_encoder(q, "enc", nobias, rng);
  CHECK((encode_image(Tensor::zeros({32, 32}), q, "enc", nobias).array() == 0.0).all());
}

TEST_CASE("record normalizer") {
  auto s = schema_of({"a", "b"});
  std::vector<PatientRecord> rs{make_record(s, {1, 5}), make_record(s, {3, 5})};
  const RecordNormalizer n = RecordNormalizer::fit(rs);
  CHECK(n.mean == Tensor({2}, {2, 5}));
  CHECK(n.scale == Tensor({2}, {1, 1}));
  CHECK(n.apply(rs[0]) == Tensor({2}, {-1, 0}));
  CHECK_THROWS_AS(RecordNormalizer::fit({}), DataError);
}
