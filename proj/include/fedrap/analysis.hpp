#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fedrap/model.hpp"
#include "fedrap/report.hpp"

namespace fedrap {

struct SparsityReport {
  double frac_abs_gt_1e1 = 0.0;  // |c| > 0.1
  double frac_abs_gt_1e2 = 0.0;  // |c| > 0.01
  double exact_zero_frac = 0.0;
  std::size_t nonzero_count = 0;
  std::size_t total = 0;
};

SparsityReport sparsity_stats(const Matrix& c);

// Upload size model: dense is m*k 8-byte values; sparse is a COO sketch of
// 8-byte value + 4-byte flat index per nonzero plus an 8-byte header.
struct CommReport {
  double dense_bytes = 0.0;
  double sparse_bytes = 0.0;
  double savings_ratio = 0.0;  // dense / sparse
};

CommReport comm_estimate(const SparsityReport& report, std::size_t m, std::size_t k);

struct RunRecord {
  std::string variant;
  std::uint64_t seed = 0;
  std::string dataset;
  std::vector<RoundReport> reports;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
};

MeanStd mean_std(const std::vector<double>& values);

struct ComparisonRow {
  std::string variant;
  std::size_t runs = 0;
  int rounds = 0;
  MeanStd final_hr;
  MeanStd final_ndcg;
  MeanStd best_hr;
  MeanStd best_ndcg;
};

/// Final- and best-round HR@10 / NDCG@10 per variant across repeated seeds.
/// Every run must share the dataset and round count, and every variant must
/// cover the same seeds.
std::vector<ComparisonRow> compare_variants(const std::map<std::string, std::vector<RunRecord>>& runs);

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);

}  // namespace fedrap
