#include "fedrap/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

namespace fedrap {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

// Numeric ids sort numerically, everything else lexicographically; numbers first.
bool natural_less(const std::string& a, const std::string& b) {
  auto na = parse_number<long long>(a);
  auto nb = parse_number<long long>(b);
  if (na && nb) return *na != *nb ? *na < *nb : a < b;
  if (na != nb) return na.has_value();
  return a < b;
}

std::int64_t recency_key(const std::optional<std::int64_t>& ts) {
  return ts.value_or(std::numeric_limits<std::int64_t>::min());
}

bool more_recent(const Positive& a, const Positive& b) {
  auto ka = recency_key(a.timestamp), kb = recency_key(b.timestamp);
  return ka != kb ? ka > kb : a.order > b.order;
}

}  // namespace

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

RatingFormat parse_rating_format(std::string_view name) {
  if (name == "tab" || name == "tsv") return RatingFormat::tab;
  if (name == "double-colon" || name == "::") return RatingFormat::double_colon;
  throw std::invalid_argument("unknown rating format '" + std::string(name) +
                              "' (expected tab or double-colon)");
}

std::string_view to_string(RatingFormat format) {
  return format == RatingFormat::tab ? "tab" : "double-colon";
}

RatingFormat detect_rating_format(std::istream& in) {
  auto pos = in.tellg();
  std::string line;
  RatingFormat format = RatingFormat::tab;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (line.find("::") != std::string::npos) format = RatingFormat::double_colon;
    break;
  }
  in.clear();
  in.seekg(pos);
  return format;
}

std::vector<RawInteraction> parse_ratings(std::istream& in, RatingFormat format) {
  const std::string_view sep = format == RatingFormat::tab ? "\t" : "::";
  std::vector<RawInteraction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty()) continue;
    auto fields = split(view, sep);
    if (fields.size() != 3 && fields.size() != 4) {
      throw ParseError(line_no, "expected 3 or 4 fields, got " + std::to_string(fields.size()));
    }
    RawInteraction r;
    r.user_id = std::string(trim(fields[0]));
    r.item_id = std::string(trim(fields[1]));
    if (r.user_id.empty() || r.item_id.empty()) throw ParseError(line_no, "empty user or item id");
    auto rating = parse_number<double>(fields[2]);
    if (!rating) throw ParseError(line_no, "rating is not a number");
    if (!(*rating >= 0.0)) throw ParseError(line_no, "rating must be non-negative");
    r.rating = *rating;
    if (fields.size() == 4) {
      r.timestamp = parse_number<std::int64_t>(fields[3]);
      if (!r.timestamp) throw ParseError(line_no, "timestamp is not an integer");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RawInteraction> parse_ratings_file(const std::filesystem::path& path,
                                               RatingFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open ratings file " + path.string());
  return parse_ratings(in, format);
}

std::size_t FilteredDataset::interaction_count() const {
  std::size_t total = 0;
  for (const auto& p : positives) total += p.size();
  return total;
}

double FilteredDataset::density() const {
  return static_cast<double>(interaction_count()) /
         (static_cast<double>(meta.n) * static_cast<double>(meta.m));
}

FilteredDataset binarize_and_filter(const std::vector<RawInteraction>& interactions,
                                    int min_interactions) {
  if (min_interactions < 1) throw std::invalid_argument("min_interactions must be >= 1");

  // Latest occurrence per (user, item).
  std::map<std::pair<std::string, std::string>, std::size_t> latest;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    const auto& r = interactions[i];
    auto [it, inserted] = latest.try_emplace({r.user_id, r.item_id}, i);
    if (!inserted) {
      const auto& kept = interactions[it->second];
      if (recency_key(r.timestamp) >= recency_key(kept.timestamp)) it->second = i;
    }
  }

  std::map<std::string, std::vector<std::size_t>> by_user;
  for (const auto& [key, idx] : latest) {
    if (interactions[idx].rating > 0.0) by_user[key.first].push_back(idx);
  }

  std::vector<std::string> users;
  std::map<std::string, bool> item_seen;
  for (const auto& [user, rows] : by_user) {
    if (rows.size() < static_cast<std::size_t>(min_interactions)) continue;
    users.push_back(user);
    for (auto idx : rows) item_seen[interactions[idx].item_id] = true;
  }
  if (users.empty()) {
    throw DatasetError("no user has at least " + std::to_string(min_interactions) +
                       " positive interactions");
  }

  std::vector<std::string> items;
  items.reserve(item_seen.size());
  for (const auto& [item, _] : item_seen) items.push_back(item);
  std::sort(users.begin(), users.end(), natural_less);
  std::sort(items.begin(), items.end(), natural_less);

  FilteredDataset out;
  auto& meta = out.meta;
  meta.n = users.size();
  meta.m = items.size();
  meta.user_ids = users;
  meta.item_ids = items;
  for (std::size_t i = 0; i < users.size(); ++i) meta.user_index[users[i]] = static_cast<int>(i);
  for (std::size_t j = 0; j < items.size(); ++j) meta.item_index[items[j]] = static_cast<int>(j);

  out.positives.resize(meta.n);
  for (std::size_t u = 0; u < users.size(); ++u) {
    auto& list = out.positives[u];
    for (auto idx : by_user[users[u]]) {
      const auto& r = interactions[idx];
      list.push_back({meta.item_index.at(r.item_id), r.timestamp, idx});
    }
    std::sort(list.begin(), list.end(),
              [](const Positive& a, const Positive& b) { return a.item < b.item; });
  }
  return out;
}

bool ClientDataset::is_positive(int item) const {
  return item == test_positive ||
         std::binary_search(train_positives.begin(), train_positives.end(), item);
}

std::vector<ClientDataset> leave_one_out_split(const FilteredDataset& data, std::uint64_t seed,
                                               int eval_negatives) {
  if (eval_negatives < 0) throw std::invalid_argument("eval_negatives must be >= 0");
  const auto m = data.meta.m;
  std::vector<ClientDataset> clients;
  clients.reserve(data.meta.n);
  for (std::size_t u = 0; u < data.meta.n; ++u) {
    const auto& pos = data.positives[u];
    if (pos.size() < 2) {
      throw DatasetError("user '" + data.meta.user_ids[u] +
                         "' needs at least 2 positives for a leave-one-out split");
    }
    ClientDataset c;
    c.client_id = static_cast<int>(u);
    c.item_count = m;
    auto held = std::min_element(pos.begin(), pos.end(), more_recent);
    c.test_positive = held->item;
    for (const auto& p : pos)
      if (p.item != c.test_positive) c.train_positives.push_back(p.item);

    std::vector<int> candidates;
    candidates.reserve(m - pos.size());
    std::size_t cursor = 0;
    for (int j = 0; j < static_cast<int>(m); ++j) {
      if (cursor < pos.size() && pos[cursor].item == j) {
        ++cursor;
        continue;
      }
      candidates.push_back(j);
    }
    if (candidates.size() < static_cast<std::size_t>(eval_negatives)) {
      throw DatasetError("user '" + data.meta.user_ids[u] + "' has only " +
                         std::to_string(candidates.size()) + " unrated items; " +
                         std::to_string(eval_negatives) + " evaluation negatives are required");
    }
    auto rng = make_stream(seed, StreamTag::eval_negatives, {static_cast<std::uint64_t>(u)});
    c.eval_negatives.reserve(eval_negatives);
    std::sample(candidates.begin(), candidates.end(), std::back_inserter(c.eval_negatives),
                eval_negatives, rng);
    clients.push_back(std::move(c));
  }
  return clients;
}

TrainingBatch sample_train_negatives(const ClientDataset& client, Rng& rng) {
  if (client.train_positives.empty()) {
    throw std::invalid_argument("client " + std::to_string(client.client_id) +
                                " has no training positives");
  }
  const auto m = client.item_count;
  const std::size_t excluded = client.train_positives.size() + (client.test_positive >= 0 ? 1 : 0);
  if (m <= excluded) {
    throw DatasetError("client " + std::to_string(client.client_id) +
                       " has no items left to sample negatives from");
  }
  const auto count = client.train_positives.size() *
                     static_cast<std::size_t>(client.negatives_per_positive);
  TrainingBatch out;
  out.reserve(count);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(m) - 1);
  while (out.size() < count) {
    int j = pick(rng);
    if (!client.is_positive(j)) out.push_back({j, 0.0});
  }
  return out;
}

void write_split_manifest(const std::filesystem::path& path, const SplitManifest& manifest) {
  nlohmann::json j;
  j["format"] = "fedrap-split";
  j["version"] = 1;
  j["seed"] = manifest.seed;
  j["n"] = manifest.meta.n;
  j["m"] = manifest.meta.m;
  j["user_ids"] = manifest.meta.user_ids;
  j["item_ids"] = manifest.meta.item_ids;
  auto& users = j["clients"] = nlohmann::json::array();
  for (const auto& c : manifest.clients) {
    users.push_back({{"client_id", c.client_id},
                     {"test_positive", c.test_positive},
                     {"train_positives", c.train_positives},
                     {"eval_negatives", c.eval_negatives},
                     {"negatives_per_positive", c.negatives_per_positive}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split manifest " + path.string());
  out << j.dump(1) << '\n';
}

SplitManifest read_split_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open split manifest " + path.string());
  auto j = nlohmann::json::parse(in);
  if (j.value("format", "") != "fedrap-split") {
    throw std::runtime_error(path.string() + " is not a split manifest");
  }
  SplitManifest out;
  out.seed = j.at("seed").get<std::uint64_t>();
  auto& meta = out.meta;
  meta.n = j.at("n").get<std::size_t>();
  meta.m = j.at("m").get<std::size_t>();
  meta.user_ids = j.at("user_ids").get<std::vector<std::string>>();
  meta.item_ids = j.at("item_ids").get<std::vector<std::string>>();
  if (meta.user_ids.size() != meta.n || meta.item_ids.size() != meta.m) {
    throw std::runtime_error("split manifest id tables do not match n/m");
  }
  for (std::size_t i = 0; i < meta.n; ++i) meta.user_index[meta.user_ids[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < meta.m; ++i) meta.item_index[meta.item_ids[i]] = static_cast<int>(i);
  for (const auto& c : j.at("clients")) {
    ClientDataset d;
    d.client_id = c.at("client_id").get<int>();
    d.item_count = meta.m;
    d.test_positive = c.at("test_positive").get<int>();
    d.train_positives = c.at("train_positives").get<std::vector<int>>();
    d.eval_negatives = c.at("eval_negatives").get<std::vector<int>>();
    d.negatives_per_positive = c.value("negatives_per_positive", 4);
    out.clients.push_back(std::move(d));
  }
  return out;
}

}  // namespace fedrap
