#include <doctest.h>

#include "diff3m/detection.hpp"
#include "fixtures.hpp"
#include "oracle.hpp"

using namespace diff3m;

namespace {

struct Setup {
  Split data = fixtures::small_split(6, 5, "test");
  TrainConfig cfg = fixtures::small_config();
  Model model = init_training(cfg, fixtures::small_split(6)).model;
  NoiseSchedule sched = cfg.schedule();
};

}  // namespace

TEST_CASE("score and map examples") {
  const Tensor x({2, 2}, {0.1, 0.2, 0.3, 0.4});
  CHECK(anomaly_score(x, x, ScoreKind::mse) == 0.0);
  CHECK(anomaly_score(x, x, ScoreKind::maxabs) == 0.0);
  CHECK((anomaly_map(x, x).array() == 0.0).all());

  Tensor y = x;
  y[2] += 0.5;
  CHECK(anomaly_score(x, y, "maxabs") == doctest::Approx(0.5));
  CHECK(anomaly_score(x, y, "mse") == doctest::Approx(0.25 / 4));
  CHECK((anomaly_map(Tensor::ones({3, 3}), Tensor::zeros({3, 3})).array() == 1.0).all());
  CHECK_THROWS_AS(anomaly_score(x, y, "l1"), ConfigError);
  CHECK_THROWS_AS(anomaly_map(x, Tensor({4})), ShapeError);
}

TEST_CASE("scores match a straightforward recomputation") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = oracle::random_tensor({5, 7}, rng), b = oracle::random_tensor({5, 7}, rng);
    double sq = 0.0, mx = 0.0;
    for (Index i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      sq += d * d;
      mx = std::max(mx, std::abs(d));
    }
    CHECK(anomaly_score(a, b, ScoreKind::mse) == doctest::Approx(sq / a.size()).epsilon(1e-14));
    CHECK(anomaly_score(a, b, ScoreKind::maxabs) == mx);
  }
}

TEST_CASE("t_prime = 0 reconstructs the input exactly") {
  Setup s;
  const AnomalyResult r = detect(s.data.images[0], s.data.records[0], s.model, s.sched, {0, 1});
  CHECK(r.x0_hat == s.data.images[0]);
  CHECK(r.score_mse == 0.0);
  CHECK(r.score_maxabs == 0.0);
}

TEST_CASE("detection is deterministic and self-consistent") {
  Setup s;
  const DetectOptions opts{40, 8};
  const auto a = detect_batch(s.data.images, s.data.records, s.model, s.sched, opts);
  const auto b = detect_batch(s.data.images, s.data.records, s.model, s.sched, opts);
  REQUIRE(a.size() == s.data.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x0_hat == b[i].x0_hat);
    CHECK(a[i].score_mse == b[i].score_mse);
    CHECK((a[i].anomaly_map.array() >= 0.0).all());
    CHECK(a[i].score_maxabs == a[i].anomaly_map.array().maxCoeff());
    CHECK(a[i].score_mse == doctest::Approx(a[i].anomaly_map.array().square().mean()).epsilon(1e-14));
    CHECK(a[i].t_prime == 40);
  }
  // Batched and single-sample paths agree.
  const AnomalyResult one = detect(s.data.images[2], s.data.records[2], s.model, s.sched, opts);
  CHECK((one.x0_hat.array() - a[2].x0_hat.array()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("every variant runs through detection") {
  const Split data = fixtures::small_split(4, 5, "test");
  for (Variant v : {Variant::ddpm, Variant::pcm, Variant::full}) {
    const TrainConfig cfg = fixtures::small_config(v);
    const Model m = init_training(cfg, fixtures::small_split(4)).model;
    const AnomalyResult r = detect(data.images[0], data.records[0], m, cfg.schedule(), {10, 3});
    CHECK(all_finite(r.x0_hat));
  }
}

TEST_CASE("detection input errors") {
  Setup s;
  CHECK_THROWS_AS(detect(s.data.images[0], s.data.records[0], s.model, s.sched, {1000, 1}), ConfigError);
  CHECK_THROWS_AS(detect(s.data.images[0], s.data.records[0], s.model, s.sched, {-1, 1}), ConfigError);
  CHECK_THROWS_AS(detect(Tensor({8, 8}), s.data.records[0], s.model, s.sched, {5, 1}), ShapeError);
  auto other = std::make_shared<RecordSchema>(*phantom_schema());
  other->names[0] = "mass_index";
  const PatientRecord r = make_record(other, s.data.records[0].values);
  CHECK_THROWS_AS(detect(s.data.images[0], r, s.model, s.sched, {5, 1}), DataError);
  CHECK_THROWS_AS(detect(s.data.images[0], s.data.records[0], s.model, s.sched, {5, 0}), ConfigError);
}
