#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "diff3m/checkpoint.hpp"
#include "diff3m/detection.hpp"
#include "diff3m/evaluation.hpp"
#include "diff3m/pgm.hpp"
#include "diff3m/run_config.hpp"
#include "diff3m/synthdata.hpp"
#include "diff3m/training.hpp"

using namespace diff3m;

namespace {

struct GenArgs {
  std::string out;
  std::size_t n_train = 2000;
  std::size_t n_normal = 200;
  std::size_t n_anomaly = 200;
  std::uint64_t seed = 0;
  bool confounded = false;
};

struct TrainArgs {
  std::string data, config, out, phase = "joint", variant = "full", resume, log;
};

struct DetectArgs {
  std::string ckpt, image, record, config, score, map;
  int t_prime = -1;
  int stride = 0;
};

struct EvalArgs {
  std::string ckpt, data, config, scores, from_scores;
  int t_prime = -1;
  int stride = 0;
};

struct AttnArgs {
  std::string ckpt, data, split = "test";
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

RunConfig run_config(const std::string& path) {
  return path.empty() ? RunConfig{} : RunConfig::load(path);
}

// Command-line overrides on top of the config file.
DetectOptions detect_options(const RunConfig& rc, int t_prime, int stride) {
  DetectOptions o = rc.detect_options();
  if (t_prime >= 0) o.t_prime = t_prime;
  if (stride > 0) o.stride = stride;
  return o;
}

void check_t_prime(const DetectOptions& o, const Checkpoint& ck) {
  if (o.t_prime >= ck.config.steps_T) {
    throw ConfigError("--t-prime " + std::to_string(o.t_prime) + " must be below T = " +
                      std::to_string(ck.config.steps_T));
  }
}

int cmd_gen_data(const GenArgs& a) {
  DatasetSpec spec;
  spec.seed = a.seed;
  spec.gen.confounded = a.confounded;
  spec.train_normal = a.n_train;
  spec.test_normal = a.n_normal;
  spec.test_anomalous = a.n_anomaly;
  std::cout << generate_dataset(a.out, spec).serialize();
  return 0;
}

int cmd_train(const TrainArgs& a) {
  const RunConfig rc = run_config(a.config);
  TrainConfig cfg = rc.train_config(parse_variant(a.variant), parse_phase(a.phase));
  cfg.validate();
  const Split data = load_split(a.data, "train");

  TrainState state;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume);
    const TrainConfig& p = ck.config;
    if (p.steps_T != cfg.steps_T || p.beta_start != cfg.beta_start || p.beta_end != cfg.beta_end ||
        p.seed != cfg.seed || p.model.image_size != cfg.model.image_size ||
        p.model.d_embed != cfg.model.d_embed || p.model.variant != cfg.model.variant) {
      throw ConfigError("--resume checkpoint was trained with a different configuration");
    }
    if (!(*data.schema == ck.model.schema)) {
      throw DataError("--resume checkpoint schema does not match the dataset");
    }
    state.model = std::move(ck.model);
    state.adam.options.learning_rate = cfg.learning_rate;
    state.iteration = ck.iteration;
  } else {
    state = init_training(cfg, data);
  }

  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log);
    if (!log_file) throw IoError("cannot open log file " + a.log);
  }
  std::ostream& log = a.log.empty() ? std::cout : log_file;
  train(state, data, cfg, [&](const StepMetrics& m) { log << format_metrics(m) << '\n'; });
  save_checkpoint(a.out, {cfg, state.model, state.iteration});
  return 0;
}

int cmd_detect(const DetectArgs& a) {
  const RunConfig rc = run_config(a.config);
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const DetectOptions opts = detect_options(rc, a.t_prime, a.stride);
  check_t_prime(opts, ck);
  const ScoreKind kind = a.score.empty() ? rc.score_kind : parse_score_kind(a.score);

  const Tensor image = read_pgm(a.image);
  auto schema = std::make_shared<const RecordSchema>(ck.model.schema);
  const PatientRecord record = parse_record(schema, a.record);
  const AnomalyResult r = detect(image, record, ck.model, ck.config.schedule(), opts);

  if (!a.map.empty()) write_pgm(a.map, normalize_min_max(r.anomaly_map));
  std::cout << "score_kind\tscore\tscore_mse\tscore_maxabs\tt_prime\n"
            << to_string(kind) << '\t' << fmt(r.score(kind)) << '\t' << fmt(r.score_mse) << '\t'
            << fmt(r.score_maxabs) << '\t' << r.t_prime << '\n';
  return 0;
}

struct ScoreTable {
  std::vector<double> mse, maxabs;
  std::vector<int> labels;
};

ScoreTable read_scores(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  ScoreTable t;
  std::getline(in, line);
  if (line.rfind("id\tscore_mse\tscore_maxabs\tlabel", 0) != 0) {
    throw DataError(path + ": expected header 'id\\tscore_mse\\tscore_maxabs\\tlabel'");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id;
    double mse = 0, maxabs = 0;
    int label = -1;
    if (!(row >> id >> mse >> maxabs >> label) || (label != 0 && label != 1)) {
      throw DataError(path + ": malformed row " + std::to_string(lineno));
    }
    t.mse.push_back(mse);
    t.maxabs.push_back(maxabs);
    t.labels.push_back(label);
  }
  return t;
}

int cmd_eval(const EvalArgs& a) {
  ScoreTable t;
  if (!a.from_scores.empty()) {
    t = read_scores(a.from_scores);
  } else {
    if (a.ckpt.empty() || a.data.empty()) throw ConfigError("eval needs --ckpt and --data (or --from-scores)");
    const RunConfig rc = run_config(a.config);
    const Checkpoint ck = load_checkpoint(a.ckpt);
    const DetectOptions opts = detect_options(rc, a.t_prime, a.stride);
    check_t_prime(opts, ck);
    const Split test = load_split(a.data, "test");
    const NoiseSchedule sched = ck.config.schedule();

    std::string table = "id\tscore_mse\tscore_maxabs\tlabel\n";
    constexpr std::size_t chunk = 100;
    for (std::size_t start = 0; start < test.size(); start += chunk) {
      const std::size_t end = std::min(test.size(), start + chunk);
      std::vector<Tensor> images(test.images.begin() + static_cast<std::ptrdiff_t>(start),
                                 test.images.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<PatientRecord> records(test.records.begin() + static_cast<std::ptrdiff_t>(start),
                                         test.records.begin() + static_cast<std::ptrdiff_t>(end));
      const auto results = detect_batch(images, records, ck.model, sched, opts);
      for (std::size_t i = start; i < end; ++i) {
        const AnomalyResult& r = results[i - start];
        t.mse.push_back(r.score_mse);
        t.maxabs.push_back(r.score_maxabs);
        t.labels.push_back(test.labels[i]);
        table += image_file_name(i) + '\t' + fmt(r.score_mse) + '\t' +
                 fmt(r.score_maxabs) + '\t' + std::to_string(test.labels[i]) + '\n';
      }
    }
    if (!a.scores.empty()) write_file(a.scores, table);
  }
  const MetricReport mse = metric_report(t.mse, t.labels, ScoreKind::mse);
  const MetricReport maxabs = metric_report(t.maxabs, t.labels, ScoreKind::maxabs);
  std::cout << format_metric_reports(mse, maxabs);
  return 0;
}

int cmd_attn_report(const AttnArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const Split split = load_split(a.data, a.split);
  std::cout << format_attention_report(attention_report(split, ck.model));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal diffusion anomaly detection on image/record pairs"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic phantom dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--n-train", gen.n_train, "Normal training samples")->capture_default_str();
  g->add_option("--n-normal", gen.n_normal, "Normal test samples")->capture_default_str();
  g->add_option("--n-anomaly", gen.n_anomaly, "Anomalous test samples")->capture_default_str();
  g->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  g->add_flag("--confounded", gen.confounded, "Widen the normal anatomy distribution");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train on the normal training split");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--config", tr.config, "key=value run config");
  t->add_option("--out", tr.out, "Checkpoint to write")->required();
  t->add_option("--phase", tr.phase, "pretrain | joint")->capture_default_str();
  t->add_option("--variant", tr.variant, "ddpm | pcm | full")->capture_default_str();
  t->add_option("--resume", tr.resume, "Continue from this checkpoint");
  t->add_option("--log", tr.log, "Metric log file (default: stdout)");

  DetectArgs de;
  auto* d = app.add_subcommand("detect", "Score one image/record pair");
  d->add_option("--ckpt", de.ckpt, "Checkpoint")->required();
  d->add_option("--image", de.image, "Input PGM image")->required();
  d->add_option("--record", de.record, "Record as name=value,...")->required();
  d->add_option("--config", de.config, "key=value run config");
  d->add_option("--t-prime", de.t_prime, "Noise level");
  d->add_option("--stride", de.stride, "DDIM step spacing");
  d->add_option("--score", de.score, "mse | maxabs");
  d->add_option("--map", de.map, "Write the normalized anomaly map (PGM)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "AUROC/AUPRC on the test split");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint");
  e->add_option("--data", ev.data, "Dataset directory");
  e->add_option("--config", ev.config, "key=value run config");
  e->add_option("--t-prime", ev.t_prime, "Noise level");
  e->add_option("--stride", ev.stride, "DDIM step spacing");
  e->add_option("--scores", ev.scores, "Write per-sample scores (TSV)");
  e->add_option("--from-scores", ev.from_scores, "Compute metrics from a scores TSV instead");

  AttnArgs at;
  auto* r = app.add_subcommand("attn-report", "Per-feature attention weights");
  r->add_option("--ckpt", at.ckpt, "Checkpoint")->required();
  r->add_option("--data", at.data, "Dataset directory")->required();
  r->add_option("--split", at.split, "train | test")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (g->parsed()) return cmd_gen_data(gen);
    if (t->parsed()) return cmd_train(tr);
    if (d->parsed()) return cmd_detect(de);
    if (e->parsed()) return cmd_eval(ev);
    if (r->parsed()) return cmd_attn_report(at);
  } catch (const DataError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 3;
  } catch (const ShapeError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
  return 2;
}
