#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "fedrap/data.hpp"
#include "fedrap/runtime.hpp"

namespace fedrap {

// Flat experiment configuration. The file form is one `key = value` per line;
// `#` starts a comment. Keys match the long CLI flags with '-' spelled '_'.
struct ExperimentConfig {
  std::string dataset;
  std::string format = "auto";  // tab | double-colon | auto
  std::string split;            // existing split manifest; overrides dataset splitting
  int min_interactions = 10;
  int eval_negatives = kDefaultEvalNegatives;
  std::string variant = "fedrap";
  std::string schedule = "tanh";
  std::string mu_schedule;      // empty: same as schedule
  std::uint64_t seed = 0;
  HyperParams hp;
  bool dp = false;
  double tau = 0.1;
  double z = 1.0;
  int clients_per_round = 0;
  bool exclude_previous = false;
  int workers = 1;
  int full_eval_every = 10;
  double init_scale = 0.01;
  std::string out = "runs/latest";
  int checkpoint_every = 0;     // 0: only the final round
  bool save_checkpoint = true;

  /// Throws std::invalid_argument for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  void merge_text(std::string_view text);
  void merge_file(const std::filesystem::path& path);

  /// Resolved configuration in the file form, keys sorted.
  std::string to_text() const;
  /// FNV-1a of to_text(), 16 hex digits.
  std::string hash() const;

  VariantSpec variant_spec() const;
  RuntimeOptions runtime_options() const;
  void validate() const;
};

std::string fnv1a_hex(std::string_view text);

/// Parse, filter and split a ratings file; `format` nullopt sniffs the separator.
SplitManifest ingest_dataset(const std::filesystem::path& path, std::optional<RatingFormat> format,
                             int min_interactions, int eval_negatives, std::uint64_t seed);

/// Split named by config.split when set, otherwise ingested from config.dataset.
SplitManifest load_split(const ExperimentConfig& config);

}  // namespace fedrap
