#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fedrap {

// Privacy mechanism parameters in force for a round, so an external
// accountant can compute epsilon afterwards.
struct PrivacyEcho {
  bool enabled = false;
  double tau = 0.0;
  double z = 0.0;
  double eta = 0.0;
  int n_s = 0;
  double sigma = 0.0;
};

struct RoundReport {
  int round = 0;  // 1-based
  std::string variant;
  double hr10 = 0.0;    // over the clients trained this round, with their own C^(i)
  double ndcg10 = 0.0;
  double mean_loss = 0.0;
  double c_frac_gt_1e1 = 0.0;
  double c_frac_gt_1e2 = 0.0;
  std::size_t nonzero_c_entries = 0;
  double bytes_up_estimate = 0.0;
  int participants = 0;
  double lambda = 0.0;
  double mu = 0.0;
  std::optional<double> full_hr10;  // full-population pass with the aggregated C
  std::optional<double> full_ndcg10;
  PrivacyEcho dp;

  double headline_hr() const { return full_hr10.value_or(hr10); }
  double headline_ndcg() const { return full_ndcg10.value_or(ndcg10); }
};

/// Compact single-line JSON, no trailing newline.
std::string to_json_line(const RoundReport& report);
RoundReport parse_report_line(std::string_view line);
std::vector<RoundReport> read_report_lines(std::istream& in);
std::vector<RoundReport> read_report_file(const std::filesystem::path& path);

}  // namespace fedrap
