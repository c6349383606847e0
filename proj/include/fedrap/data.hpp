#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fedrap/rng.hpp"

namespace fedrap {

struct RawInteraction {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::optional<std::int64_t> timestamp;
};

enum class RatingFormat { tab, double_colon };

RatingFormat parse_rating_format(std::string_view name);
std::string_view to_string(RatingFormat format);

/// Guesses the field separator from the first non-empty line ("::" wins).
RatingFormat detect_rating_format(std::istream& in);

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One interaction per line: user<sep>item<sep>rating[<sep>timestamp].
/// Blank lines are skipped. Throws ParseError with the 1-based line number.
std::vector<RawInteraction> parse_ratings(std::istream& in, RatingFormat format);
std::vector<RawInteraction> parse_ratings_file(const std::filesystem::path& path,
                                               RatingFormat format);

struct DatasetMeta {
  std::size_t n = 0;  // users
  std::size_t m = 0;  // items
  std::vector<std::string> user_ids;  // dense index -> original id
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, int> user_index;
  std::unordered_map<std::string, int> item_index;
};

// A retained positive. `order` is the file position of the kept occurrence
// and breaks timestamp ties.
struct Positive {
  int item = 0;
  std::optional<std::int64_t> timestamp;
  std::size_t order = 0;
};

struct FilteredDataset {
  DatasetMeta meta;
  std::vector<std::vector<Positive>> positives;  // per user, sorted by item

  std::size_t interaction_count() const;
  double density() const;
};

/// Deduplicates (user, item) pairs keeping the latest occurrence, turns every
/// positive rating into an implicit 1, drops users with fewer than
/// `min_interactions` positives and then items nobody kept. Ids are re-densified
/// in natural order (numeric when both ids are integers).
FilteredDataset binarize_and_filter(const std::vector<RawInteraction>& interactions,
                                    int min_interactions = 10);

struct ClientDataset {
  int client_id = 0;
  std::size_t item_count = 0;          // m
  std::vector<int> train_positives;    // sorted
  int test_positive = -1;
  std::vector<int> eval_negatives;
  int negatives_per_positive = 4;

  bool is_positive(int item) const;  // train or test
};

inline constexpr int kDefaultEvalNegatives = 99;

/// Holds out each user's most recent positive and samples `eval_negatives`
/// unrated items from the stream (seed, client_id).
std::vector<ClientDataset> leave_one_out_split(const FilteredDataset& data, std::uint64_t seed,
                                               int eval_negatives = kDefaultEvalNegatives);

struct Interaction {
  int item = 0;
  double label = 0.0;
};

using TrainingBatch = std::vector<Interaction>;

/// negatives_per_positive * |train_positives| items drawn uniformly with
/// replacement from items outside train_positives and test_positive.
TrainingBatch sample_train_negatives(const ClientDataset& client, Rng& rng);

// Split manifest (JSON). Records everything needed to rebuild the per-client
// datasets in another process.
struct SplitManifest {
  std::uint64_t seed = 0;
  DatasetMeta meta;
  std::vector<ClientDataset> clients;
};

void write_split_manifest(const std::filesystem::path& path, const SplitManifest& manifest);
SplitManifest read_split_manifest(const std::filesystem::path& path);

}  // namespace fedrap
