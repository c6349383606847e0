#include "fedrap/eval.hpp"

#include <cmath>
#include <stdexcept>

namespace fedrap {

int rank_position(const RankingCase& c) {
  if (c.positive_position >= c.scores.size()) {
    throw std::invalid_argument("rank_position: positive index out of range");
  }
  const double target = c.scores[c.positive_position];
  int rank = 1;
  for (std::size_t i = 0; i < c.scores.size(); ++i) {
    const double s = c.scores[i];
    if (!std::isfinite(s)) throw std::domain_error("rank_position: non-finite score");
    if (i != c.positive_position && s >= target) ++rank;
  }
  return rank;
}

double hr_at_k(int rank, int k) {
  if (rank < 1 || k < 1) throw std::invalid_argument("hr_at_k: rank and k must be >= 1");
  return rank <= k ? 1.0 : 0.0;
}

double ndcg_at_k(int rank, int k) {
  if (rank < 1 || k < 1) throw std::invalid_argument("ndcg_at_k: rank and k must be >= 1");
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

MetricSummary evaluate_population(std::span<const RankingCase> cases, int k) {
  if (cases.empty()) throw std::invalid_argument("evaluate_population: no cases");
  MetricSummary out;
  out.k = k;
  out.users = cases.size();
  for (const auto& c : cases) {
    const int rank = rank_position(c);
    out.hr += hr_at_k(rank, k);
    out.ndcg += ndcg_at_k(rank, k);
  }
  out.hr /= static_cast<double>(cases.size());
  out.ndcg /= static_cast<double>(cases.size());
  return out;
}

}  // namespace fedrap
