#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fedrap {

// One held-out positive ranked against sampled negatives.
struct RankingCase {
  std::vector<double> scores;
  std::size_t positive_position = 0;
};

struct MetricSummary {
  double hr = 0.0;
  double ndcg = 0.0;
  int k = 10;
  std::size_t users = 0;
};

/// 1-based rank of the positive under a descending sort. Ties are resolved
/// against the positive: it is placed after every equal score.
int rank_position(const RankingCase& c);

double hr_at_k(int rank, int k);
/// 1 / log2(rank + 1) inside the cutoff, 0 outside.
double ndcg_at_k(int rank, int k);

MetricSummary evaluate_population(std::span<const RankingCase> cases, int k = 10);

}  // namespace fedrap
