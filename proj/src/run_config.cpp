#include "diff3m/run_config.hpp"

#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "diff3m/pgm.hpp"

namespace diff3m {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T number(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    T v;
    if constexpr (std::is_floating_point_v<T>) {
      v = static_cast<T>(std::stod(text, &used));
    } else if constexpr (std::is_signed_v<T>) {
      v = static_cast<T>(std::stoll(text, &used));
    } else {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
      v = static_cast<T>(std::stoull(text, &used));
    }
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  const std::map<std::string, std::function<void(const std::string&)>> setters{
      {"T", [&](const std::string& v) { c.T = number<int>("T", v); }},
      {"beta_start", [&](const std::string& v) { c.beta_start = number<double>("beta_start", v); }},
      {"beta_end", [&](const std::string& v) { c.beta_end = number<double>("beta_end", v); }},
      {"image_size", [&](const std::string& v) { c.image_size = number<Index>("image_size", v); }},
      {"d_embed", [&](const std::string& v) { c.d_embed = number<Index>("d_embed", v); }},
      {"lambda", [&](const std::string& v) { c.lambda = number<double>("lambda", v); }},
      {"lr", [&](const std::string& v) { c.lr = number<double>("lr", v); }},
      {"batch_size", [&](const std::string& v) { c.batch_size = number<std::size_t>("batch_size", v); }},
      {"iters", [&](const std::string& v) { c.iters = number<std::size_t>("iters", v); }},
      {"seed", [&](const std::string& v) { c.seed = number<std::uint64_t>("seed", v); }},
      {"ddim_stride", [&](const std::string& v) { c.ddim_stride = number<int>("ddim_stride", v); }},
      {"t_prime", [&](const std::string& v) { c.t_prime = number<int>("t_prime", v); }},
      {"score_kind", [&](const std::string& v) { c.score_kind = parse_score_kind(v); }},
  };
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' given twice");
    it->second(trim(line.substr(eq + 1)));
  }
  if (c.ddim_stride < 1) throw ConfigError("ddim_stride must be positive");
  if (c.t_prime < 0) throw ConfigError("t_prime must be nonnegative");
  c.train_config().validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  try {
    return parse(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string RunConfig::serialize() const {
  std::string s;
  auto kv = [&](const char* k, const std::string& v) { s += std::string(k) + '=' + v + '\n'; };
  kv("T", std::to_string(T));
  kv("beta_start", num(beta_start));
  kv("beta_end", num(beta_end));
  kv("image_size", std::to_string(image_size));
  kv("d_embed", std::to_string(d_embed));
  kv("lambda", num(lambda));
  kv("lr", num(lr));
  kv("batch_size", std::to_string(batch_size));
  kv("iters", std::to_string(iters));
  kv("seed", std::to_string(seed));
  kv("ddim_stride", std::to_string(ddim_stride));
  kv("t_prime", std::to_string(t_prime));
  kv("score_kind", to_string(score_kind));
  return s;
}

TrainConfig RunConfig::train_config(Variant variant, Phase phase) const {
  TrainConfig t;
  t.steps_T = T;
  t.beta_start = beta_start;
  t.beta_end = beta_end;
  t.lambda = lambda;
  t.learning_rate = lr;
  t.batch_size = batch_size;
  t.iterations = iters;
  t.seed = seed;
  t.phase = phase;
  t.model.image_size = image_size;
  t.model.d_embed = d_embed;
  t.model.variant = variant;
  return t;
}

}  // namespace diff3m
