#include "fedrap/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>
#include <stdexcept>

namespace fedrap {

SparsityReport sparsity_stats(const Matrix& c) {
  SparsityReport r;
  r.total = static_cast<std::size_t>(c.size());
  if (r.total == 0) return r;
  std::size_t gt1 = 0, gt2 = 0;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double a = std::abs(c.data()[i]);
    if (a > 0.1) ++gt1;
    if (a > 0.01) ++gt2;
    if (a != 0.0) ++r.nonzero_count;
  }
  const double total = static_cast<double>(r.total);
  r.frac_abs_gt_1e1 = static_cast<double>(gt1) / total;
  r.frac_abs_gt_1e2 = static_cast<double>(gt2) / total;
  r.exact_zero_frac = static_cast<double>(r.total - r.nonzero_count) / total;
  return r;
}

CommReport comm_estimate(const SparsityReport& report, std::size_t m, std::size_t k) {
  if (report.total != 0 && report.total != m * k) {
    throw std::invalid_argument("comm_estimate: report does not match an m x k matrix");
  }
  CommReport out;
  out.dense_bytes = static_cast<double>(m * k) * 8.0;
  out.sparse_bytes = static_cast<double>(report.nonzero_count) * (8.0 + 4.0) + 8.0;
  out.savings_ratio = out.dense_bytes / out.sparse_bytes;
  return out;
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean_std: no values");
  // Welford.
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  return {mean, n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0};
}

std::vector<ComparisonRow> compare_variants(
    const std::map<std::string, std::vector<RunRecord>>& runs) {
  if (runs.empty()) throw std::invalid_argument("compare_variants: nothing to compare");
  const RunRecord* reference = nullptr;
  std::multiset<std::uint64_t> reference_seeds;
  std::vector<ComparisonRow> rows;
  for (const auto& [variant, records] : runs) {
    if (records.empty()) throw std::invalid_argument("variant " + variant + " has no runs");
    std::multiset<std::uint64_t> seeds;
    ComparisonRow row;
    row.variant = variant;
    row.runs = records.size();
    std::vector<double> final_hr, final_ndcg, best_hr, best_ndcg;
    for (const auto& run : records) {
      if (run.reports.empty()) throw std::invalid_argument("run of " + variant + " has no rounds");
      if (!reference) reference = &run;
      if (run.dataset != reference->dataset) {
        throw std::invalid_argument("runs use different datasets: '" + run.dataset + "' vs '" +
                                    reference->dataset + "'");
      }
      if (run.reports.size() != reference->reports.size()) {
        throw std::invalid_argument("runs have different round counts");
      }
      seeds.insert(run.seed);
      const auto& last = run.reports.back();
      final_hr.push_back(last.headline_hr());
      final_ndcg.push_back(last.headline_ndcg());
      double bh = 0.0, bn = 0.0;
      for (const auto& r : run.reports) {
        bh = std::max(bh, r.headline_hr());
        bn = std::max(bn, r.headline_ndcg());
      }
      best_hr.push_back(bh);
      best_ndcg.push_back(bn);
    }
    if (rows.empty()) {
      reference_seeds = seeds;
    } else if (seeds != reference_seeds) {
      throw std::invalid_argument("variant " + variant + " was run with a different seed set");
    }
    row.rounds = static_cast<int>(reference->reports.size());
    row.final_hr = mean_std(final_hr);
    row.final_ndcg = mean_std(final_ndcg);
    row.best_hr = mean_std(best_hr);
    row.best_ndcg = mean_std(best_ndcg);
    rows.push_back(row);
  }
  return rows;
}

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "variant,runs,rounds,final_hr10_mean,final_hr10_std,final_ndcg10_mean,final_ndcg10_std,"
         "best_hr10_mean,best_hr10_std,best_ndcg10_mean,best_ndcg10_std\n";
  out << std::setprecision(6) << std::fixed;
  for (const auto& r : rows) {
    out << r.variant << ',' << r.runs << ',' << r.rounds << ',' << r.final_hr.mean << ','
        << r.final_hr.std << ',' << r.final_ndcg.mean << ',' << r.final_ndcg.std << ','
        << r.best_hr.mean << ',' << r.best_hr.std << ',' << r.best_ndcg.mean << ','
        << r.best_ndcg.std << '\n';
  }
}

}  // namespace fedrap
