#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "diff3m/pgm.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "diff3m_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt";
  const std::string cmd = std::string(DIFF3M_CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
                          (work_dir() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, diff3m::read_file(out)};
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

void write(const std::string& name, const std::string& text) { std::ofstream(path(name)) << text; }

// Dataset and checkpoint shared by the tests below.
void ensure_trained() {
  static bool done = false;
  if (done) return;
  REQUIRE(run("gen-data --out " + path("data") + " --n-train 12 --n-normal 3 --n-anomaly 3 --seed 2").code == 0);
  write("tiny.cfg", "iters = 3\nbatch_size = 4\nd_embed = 16\n");
  REQUIRE(run("train --data " + path("data") + " --config " + path("tiny.cfg") + " --out " +
              path("model.ckpt") + " --log " + path("train.log")).code == 0);
  done = true;
}

std::string record_arg() {
  return "bmi=24,height=170,weight=69,bp_systolic=120,bp_diastolic=80,age=50,sex=1,view=0";
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run("--help").code == 0);
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("train --data x").code == 2);
  CHECK(run("detect --ckpt a --image b --record c --t-prime notanumber").code == 2);
}

TEST_CASE("gen-data prints the manifest and train logs every step") {
  ensure_trained();
  CHECK(fs::exists(path("data/manifest.txt")));
  std::ifstream log(path("train.log"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    ++lines;
    CHECK(std::count(line.begin(), line.end(), '\t') == 3);
  }
  CHECK(lines == 3);
}

TEST_CASE("detect") {
  ensure_trained();
  const std::string base = "detect --ckpt " + path("model.ckpt") + " --image " +
                           path("data/test/00000.pgm") + " --record " + record_arg();
  const Run zero = run(base + " --t-prime 0");
  REQUIRE(zero.code == 0);
  CHECK(zero.out == "score_kind\tscore\tscore_mse\tscore_maxabs\tt_prime\nmse\t0\t0\t0\t0\n");

  const Run a = run(base + " --t-prime 30 --stride 10 --score maxabs --map " + path("map.pgm"));
  const Run b = run(base + " --t-prime 30 --stride 10 --score maxabs");
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.find("\nmaxabs\t") != std::string::npos);
  CHECK(diff3m::read_pgm(path("map.pgm")).shape() == diff3m::Shape{32, 32});

  CHECK(run(base + " --t-prime 1000").code == 2);
  CHECK(run(base + " --score l1").code == 2);
  CHECK(run("detect --ckpt " + path("missing.ckpt") + " --image " + path("data/test/00000.pgm") +
            " --record " + record_arg()).code == 2);
  CHECK(run("detect --ckpt " + path("model.ckpt") + " --image " + path("data/test/00000.pgm") +
            " --record bmi=24").code == 3);
  write("bad.pgm", "P5\n32 32\n255\nabc");
  CHECK(run("detect --ckpt " + path("model.ckpt") + " --image " + path("bad.pgm") + " --record " +
            record_arg()).code == 3);
  write("garbage.ckpt", "not a checkpoint");
  CHECK(run("detect --ckpt " + path("garbage.ckpt") + " --image " + path("data/test/00000.pgm") +
            " --record " + record_arg()).code == 3);
}

TEST_CASE("eval") {
  ensure_trained();
  const std::string base = "eval --ckpt " + path("model.ckpt") + " --data " + path("data");
  const Run a = run(base + " --t-prime 20 --stride 10 --scores " + path("scores.tsv"));
  REQUIRE(a.code == 0);
  CHECK(a.out.rfind("n_normal\tn_anomalous\tauroc_mse", 0) == 0);
  CHECK(a.out.find("\n3\t3\t") != std::string::npos);
  // Metrics recomputed from the written scores agree.
  CHECK(run("eval --from-scores " + path("scores.tsv")).out == a.out);

  write("perfect.tsv", "id\tscore_mse\tscore_maxabs\tlabel\na\t0.1\t0.1\t0\nb\t0.2\t0.3\t1\n");
  CHECK(run("eval --from-scores " + path("perfect.tsv")).out ==
        "n_normal\tn_anomalous\tauroc_mse\tauroc_maxabs\tauprc_mse\tauprc_maxabs\n1\t1\t1.000000\t1.000000\t1.000000\t1.000000\n");
  write("oneclass.tsv", "id\tscore_mse\tscore_maxabs\tlabel\na\t0.1\t0.1\t0\n");
  CHECK(run("eval --from-scores " + path("oneclass.tsv")).code == 3);

  REQUIRE(run("gen-data --out " + path("normals") + " --n-train 4 --n-normal 3 --n-anomaly 0").code == 0);
  CHECK(run("eval --ckpt " + path("model.ckpt") + " --data " + path("normals") + " --t-prime 0").code == 3);
  CHECK(run("eval --ckpt " + path("model.ckpt") + " --data " + path("nowhere")).code == 2);
  CHECK(run("eval --data " + path("data")).code == 2);
}

TEST_CASE("train rejects bad inputs") {
  ensure_trained();
  write("unknown.cfg", "iters = 3\nwarp_speed = 9\n");
  CHECK(run("train --data " + path("data") + " --config " + path("unknown.cfg") + " --out " +
            path("x.ckpt")).code == 2);
  CHECK(run("train --data " + path("data") + " --out " + path("x.ckpt") + " --variant big").code == 2);

  // An anomalous sample smuggled into the training split.
  fs::copy(path("data"), path("dirty"), fs::copy_options::recursive);
  const fs::path records = path("dirty/train/records.csv");
  std::string text = diff3m::read_file(records);
  const auto eol = text.find('\n', text.find('\n') + 1);
  REQUIRE(text[eol - 1] == '0');
  text[eol - 1] = '1';
  diff3m::write_file(records, text);
  const fs::path manifest = path("dirty/manifest.txt");
  std::string m = diff3m::read_file(manifest);
  m.replace(m.find("train_normal=12"), 15, "train_normal=11");
  m.replace(m.find("train_anomalous=0"), 17, "train_anomalous=1");
  diff3m::write_file(manifest, m);
  CHECK(run("train --data " + path("dirty") + " --config " + path("tiny.cfg") + " --out " +
            path("x.ckpt")).code == 3);
}

TEST_CASE("resume with zero further steps reproduces the checkpoint") {
  ensure_trained();
  write("same.cfg", "iters = 3\nbatch_size = 4\nd_embed = 16\n");
  // iters is the total target, so resuming at iteration 3 trains nothing.
  REQUIRE(run("train --data " + path("data") + " --config " + path("same.cfg") + " --resume " +
              path("model.ckpt") + " --out " + path("resumed.ckpt") + " --log " + path("r.log")).code == 0);
  CHECK(diff3m::read_file(path("resumed.ckpt")) == diff3m::read_file(path("model.ckpt")));
}

TEST_CASE("attn-report") {
  ensure_trained();
  const Run r = run("attn-report --ckpt " + path("model.ckpt") + " --data " + path("data"));
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string line;
  int rows = -1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 8);
  CHECK(run("attn-report --ckpt " + path("model.ckpt") + " --data " + path("data") + " --split val").code == 2);
}
