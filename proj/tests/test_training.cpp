#include <doctest.h>

#include "diff3m/checkpoint.hpp"
#include "diff3m/training.hpp"
#include "fixtures.hpp"

using namespace diff3m;

TEST_CASE("loss examples") {
  const Tensor a({2}, {1.0, -1.0}), b({2}, {0.0, 0.0});
  CHECK(diff3m_loss(a, a, b, b, 0.5) == 0.0);
  // Both terms equal v.
  CHECK(diff3m_loss(a, b, a, b, 0.5) == doctest::Approx(1.0));
  CHECK(diff3m_loss(a, b, b, b, 0.25) == doctest::Approx(0.25));
  // Near lambda = 1 only the noise term survives.
  CHECK(diff3m_loss(a, b, Tensor({2}, {100.0, 100.0}), b, 1.0 - 1e-12) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_THROWS_AS(diff3m_loss(a, b, a, b, 0.0), ConfigError);
  CHECK_THROWS_AS(diff3m_loss(a, b, a, b, 1.0), ConfigError);
  CHECK_THROWS_AS(diff3m_loss(a, Tensor({3}), a, b, 0.5), ShapeError);
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.lambda = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.iterations = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_phase("pretrain") == Phase::pretrain);
  CHECK_THROWS_AS(parse_phase("warm"), ConfigError);
}

TEST_CASE("a zero learning rate step leaves parameters bit-identical") {
  const Split data = fixtures::small_split(8);
  TrainConfig cfg = fixtures::small_config();
  cfg.learning_rate = 0.0;
  TrainState st = init_training(cfg, data);
  const ParamStore before = st.model.params;
  std::mt19937_64 rng(1);
  const StepMetrics m = train_step(st, data, {0, 1, 2, 3}, cfg.schedule(), cfg, rng);
  CHECK(m.step == 1);
  CHECK(m.total > 0.0);
  for (const auto& [name, t] : before) CHECK(st.model.params.at(name) == t);
}

TEST_CASE("metrics report both terms and combine them with lambda") {
  const Split data = fixtures::small_split(8);
  TrainConfig cfg = fixtures::small_config();
  cfg.lambda = 0.3;
  TrainState st = init_training(cfg, data);
  std::mt19937_64 rng(2);
  const StepMetrics m = train_step(st, data, {0, 1}, cfg.schedule(), cfg, rng);
  CHECK(m.total == doctest::Approx(0.3 * m.noise_mse + 0.7 * m.recon_mse).epsilon(1e-12));
  CHECK(format_metrics(m).find('\t') != std::string::npos);
}

TEST_CASE("equal seeds give identical loss traces and parameters") {
  const Split data = fixtures::small_split(12);
  const TrainConfig cfg = fixtures::small_config();
  std::vector<double> trace[2];
  ParamStore params[2];
  for (int run = 0; run < 2; ++run) {
    TrainState st = init_training(cfg, data);
    train(st, data, cfg, [&](const StepMetrics& m) { trace[run].push_back(m.total); });
    params[run] = st.model.params;
  }
  CHECK(trace[0].size() == cfg.iterations);
  CHECK(trace[0] == trace[1]);
  CHECK(params[0] == params[1]);

  TrainConfig other = cfg;
  other.seed = 9;
  TrainState st = init_training(other, data);
  std::vector<double> t3;
  train(st, data, other, [&](const StepMetrics& m) { t3.push_back(m.total); });
  CHECK(t3 != trace[0]);
}

TEST_CASE("batches are drawn per step so training can stop and continue") {
  const Split data = fixtures::small_split(12);
  TrainConfig cfg = fixtures::small_config();
  TrainState whole = init_training(cfg, data);
  train(whole, data, cfg);

  TrainConfig first = cfg;
  first.iterations = 2;
  TrainState split = init_training(cfg, data);
  train(split, data, first);
  train(split, data, cfg);
  CHECK(split.iteration == cfg.iterations);
  CHECK(split.model.params == whole.model.params);
}

TEST_CASE("anomalous samples are refused") {
  Split data = fixtures::small_split(8);
  data.labels[3] = 1;
  const TrainConfig cfg = fixtures::small_config();
  TrainState st = init_training(cfg, data);
  std::mt19937_64 rng(3);
  CHECK_THROWS_AS(train_step(st, data, {0, 3}, cfg.schedule(), cfg, rng), DataError);
  CHECK_THROWS_AS(train(st, data, cfg), DataError);
}

TEST_CASE("gradients reach the tokenizer and encoder through c_r") {
  const Split data = fixtures::small_split(8);
  const TrainConfig cfg = fixtures::small_config();
  const TrainState st = init_training(cfg, data);
  std::mt19937_64 rng(4);
  const Gradients g = loss_gradients(st.model, data, {0, 1, 2, 3}, cfg.schedule(), cfg, rng);
  for (const char* name : {"tok.w", "tok.b", "enc.conv0.w", "enc.proj.w"}) {
    INFO(name);
    CHECK((g.at(name).array() != 0.0).any());
  }
}

TEST_CASE("pretrain phase uses the noise term only") {
  const Split data = fixtures::small_split(8);
  TrainConfig cfg = fixtures::small_config();
  cfg.phase = Phase::pretrain;
  const TrainState st = init_training(cfg, data);
  std::mt19937_64 rng(5);
  StepMetrics m;
  const Gradients g = loss_gradients(st.model, data, {0, 1}, cfg.schedule(), cfg, rng, &m);
  CHECK(m.total == m.noise_mse);
  CHECK((g.at("mpg.out.w").array() == 0.0).all());
  CHECK((g.at("tok.w").array() != 0.0).any());
}

TEST_CASE("the ddpm variant trains NP alone") {
  const Split data = fixtures::small_split(8);
  const TrainConfig cfg = fixtures::small_config(Variant::ddpm);
  TrainState st = init_training(cfg, data);
  train(st, data, cfg);
  CHECK(st.model.params.count("mpg.out.w") == 0);
  CHECK(st.model.params.count("tok.w") == 0);
}

TEST_CASE("resuming and training zero steps reproduces the checkpoint bytes") {
  const Split data = fixtures::small_split(8);
  const TrainConfig cfg = fixtures::small_config();
  TrainState st = init_training(cfg, data);
  train(st, data, cfg);
  const std::string bytes = serialize_checkpoint({cfg, st.model, st.iteration});

  Checkpoint ck = parse_checkpoint(bytes);
  TrainState resumed{ck.model, {}, ck.iteration};
  train(resumed, data, ck.config);
  CHECK(serialize_checkpoint({ck.config, resumed.model, resumed.iteration}) == bytes);
  CHECK(checkpoint_metadata(bytes).at("lambda") == "0.5");
}
