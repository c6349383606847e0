#include "fedrap/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fedrap {
namespace {

std::string_view strip(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_value(std::string_view key, std::string_view v) {
  v = strip(v);
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("config key '" + std::string(key) + "': cannot parse '" +
                                std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  v = strip(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key '" + std::string(key) + "': expected a boolean");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void ExperimentConfig::set(std::string_view raw_key, std::string_view value) {
  std::string key(strip(raw_key));
  for (auto& ch : key)
    if (ch == '-') ch = '_';
  value = strip(value);
  if (key == "dataset") dataset = value;
  else if (key == "format") format = value;
  else if (key == "split") split = value;
  else if (key == "min_interactions") min_interactions = parse_value<int>(key, value);
  else if (key == "eval_negatives") eval_negatives = parse_value<int>(key, value);
  else if (key == "variant") variant = value;
  else if (key == "schedule") schedule = value;
  else if (key == "mu_schedule") mu_schedule = value;
  else if (key == "seed") seed = parse_value<std::uint64_t>(key, value);
  else if (key == "rounds") hp.t1 = parse_value<int>(key, value);
  else if (key == "local_epochs") hp.t2 = parse_value<int>(key, value);
  else if (key == "dim") hp.k = parse_value<int>(key, value);
  else if (key == "eta") hp.eta = parse_value<double>(key, value);
  else if (key == "v1") hp.v1 = parse_value<double>(key, value);
  else if (key == "v2") hp.v2 = parse_value<double>(key, value);
  else if (key == "batch_size") hp.batch_size = parse_value<int>(key, value);
  else if (key == "reg_sign") hp.reg_sign = parse_reg_sign(value);
  else if (key == "dp") dp = parse_bool(key, value);
  else if (key == "tau") tau = parse_value<double>(key, value);
  else if (key == "z") z = parse_value<double>(key, value);
  else if (key == "clients_per_round") clients_per_round = parse_value<int>(key, value);
  else if (key == "exclude_previous") exclude_previous = parse_bool(key, value);
  else if (key == "workers") workers = parse_value<int>(key, value);
  else if (key == "full_eval_every") full_eval_every = parse_value<int>(key, value);
  else if (key == "init_scale") init_scale = parse_value<double>(key, value);
  else if (key == "out") out = value;
  else if (key == "checkpoint_every") checkpoint_every = parse_value<int>(key, value);
  else if (key == "save_checkpoint") save_checkpoint = parse_bool(key, value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

void ExperimentConfig::merge_text(std::string_view text) {
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto view = strip(line);
    if (view.empty()) continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    set(view.substr(0, eq), view.substr(eq + 1));
  }
}

void ExperimentConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  merge_text(buf.str());
}

std::string ExperimentConfig::to_text() const {
  std::map<std::string, std::string> kv{
      {"dataset", dataset},
      {"format", format},
      {"split", split},
      {"min_interactions", std::to_string(min_interactions)},
      {"eval_negatives", std::to_string(eval_negatives)},
      {"variant", variant},
      {"schedule", schedule},
      {"mu_schedule", mu_schedule.empty() ? schedule : mu_schedule},
      {"seed", std::to_string(seed)},
      {"rounds", std::to_string(hp.t1)},
      {"local_epochs", std::to_string(hp.t2)},
      {"dim", std::to_string(hp.k)},
      {"eta", fmt_double(hp.eta)},
      {"v1", fmt_double(hp.v1)},
      {"v2", fmt_double(hp.v2)},
      {"batch_size", std::to_string(hp.batch_size)},
      {"reg_sign", std::string(to_string(hp.reg_sign))},
      {"dp", dp ? "true" : "false"},
      {"tau", fmt_double(tau)},
      {"z", fmt_double(z)},
      {"clients_per_round", std::to_string(clients_per_round)},
      {"exclude_previous", exclude_previous ? "true" : "false"},
      {"workers", std::to_string(workers)},
      {"full_eval_every", std::to_string(full_eval_every)},
      {"init_scale", fmt_double(init_scale)},
      {"out", out},
      {"checkpoint_every", std::to_string(checkpoint_every)},
      {"save_checkpoint", save_checkpoint ? "true" : "false"},
  };
  std::string text;
  for (const auto& [k, v] : kv) text += k + " = " + v + "\n";
  return text;
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ExperimentConfig::hash() const {
  // Worker count and output location do not change results.
  auto copy = *this;
  copy.workers = 1;
  copy.out.clear();
  return fnv1a_hex(copy.to_text());
}

VariantSpec ExperimentConfig::variant_spec() const {
  VariantSpec v;
  v.kind = parse_variant_kind(variant);
  v.lambda_schedule = parse_schedule_kind(schedule);
  v.mu_schedule = parse_schedule_kind(mu_schedule.empty() ? schedule : mu_schedule);
  v.dp.enabled = dp;
  v.dp.tau = tau;
  v.dp.z = z;
  return v;
}

RuntimeOptions ExperimentConfig::runtime_options() const {
  RuntimeOptions o;
  o.clients_per_round = clients_per_round;
  o.exclude_previous = exclude_previous;
  o.workers = workers;
  o.full_eval_every = full_eval_every;
  o.init_scale = init_scale;
  return o;
}

void ExperimentConfig::validate() const {
  hp.validate();
  if (hp.t1 < 1 || hp.t2 < 1) throw std::invalid_argument("rounds and local_epochs must be >= 1");
  auto v = variant_spec();
  if (v.dp.enabled) v.dp.validate();
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (clients_per_round < 0) throw std::invalid_argument("clients_per_round must be >= 0");
  if (!(init_scale >= 0.0)) throw std::invalid_argument("init_scale must be >= 0");
  if (format != "auto") parse_rating_format(format);
}

SplitManifest ingest_dataset(const std::filesystem::path& path, std::optional<RatingFormat> format,
                             int min_interactions, int eval_negatives, std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open ratings file " + path.string());
  const auto fmt = format ? *format : detect_rating_format(in);
  auto filtered = binarize_and_filter(parse_ratings(in, fmt), min_interactions);
  SplitManifest out;
  out.seed = seed;
  out.clients = leave_one_out_split(filtered, seed, eval_negatives);
  out.meta = std::move(filtered.meta);
  return out;
}

SplitManifest load_split(const ExperimentConfig& config) {
  if (!config.split.empty()) return read_split_manifest(config.split);
  if (config.dataset.empty()) throw std::invalid_argument("no dataset or split given");
  std::optional<RatingFormat> fmt;
  if (config.format != "auto") fmt = parse_rating_format(config.format);
  return ingest_dataset(config.dataset, fmt, config.min_interactions, config.eval_negatives,
                        config.seed);
}

}  // namespace fedrap
