#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fedrap/eval.hpp"

using namespace fedrap;

namespace {

// Rank by sorting: descending score, and among equal scores the positive
// goes last.
int rank_by_sorting(const RankingCase& c) {
  std::vector<std::size_t> order(c.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (c.scores[a] != c.scores[b]) return c.scores[a] > c.scores[b];
    if (a == c.positive_position) return false;
    if (b == c.positive_position) return true;
    return a < b;
  });
  return static_cast<int>(std::find(order.begin(), order.end(), c.positive_position) -
                          order.begin()) +
         1;
}

RankingCase random_case(std::mt19937_64& rng) {
  // Coarse scores so ties happen often.
  std::uniform_int_distribution<int> level(0, 20);
  std::uniform_int_distribution<std::size_t> pos(0, 99);
  RankingCase c;
  for (int i = 0; i < 100; ++i) c.scores.push_back(level(rng) * 0.5);
  c.positive_position = pos(rng);
  return c;
}

}  // namespace

TEST(RankPosition, Basics) {
  EXPECT_EQ(rank_position({{5.0, 1.0, 2.0}, 0}), 1);
  EXPECT_EQ(rank_position({{3.0, 3.0, 3.0, 3.0, 1.0}, 0}), 4);
  EXPECT_EQ(rank_position({{1.0, 3.0, 3.0, 3.0, 1.0}, 4}), 5);
}

TEST(RankPosition, PermutationInvariant) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    auto c = random_case(rng);
    const int r = rank_position(c);
    const double pos_score = c.scores[c.positive_position];
    c.scores.erase(c.scores.begin() + static_cast<std::ptrdiff_t>(c.positive_position));
    std::shuffle(c.scores.begin(), c.scores.end(), rng);
    c.scores.insert(c.scores.begin(), pos_score);
    c.positive_position = 0;
    EXPECT_EQ(rank_position(c), r);
  }
}

TEST(RankPosition, MatchesSortingOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    auto c = random_case(rng);
    EXPECT_EQ(rank_position(c), rank_by_sorting(c));
  }
}

TEST(RankPosition, Errors) {
  EXPECT_THROW(rank_position({{1.0}, 1}), std::invalid_argument);
  EXPECT_THROW(rank_position({{1.0, std::nan("")}, 0}), std::domain_error);
  EXPECT_THROW(rank_position({{1.0, INFINITY}, 0}), std::domain_error);
}

TEST(Metrics, HitRatio) {
  EXPECT_EQ(hr_at_k(1, 10), 1.0);
  EXPECT_EQ(hr_at_k(10, 10), 1.0);
  EXPECT_EQ(hr_at_k(11, 10), 0.0);
}

TEST(Metrics, Ndcg) {
  EXPECT_EQ(ndcg_at_k(1, 10), 1.0);
  EXPECT_DOUBLE_EQ(ndcg_at_k(3, 10), 0.5);
  EXPECT_EQ(ndcg_at_k(11, 10), 0.0);
  EXPECT_THROW(ndcg_at_k(0, 10), std::invalid_argument);
}

TEST(Population, SmallCases) {
  std::vector<RankingCase> top = {{{2, 1}, 0}, {{5, 0, 0}, 0}};
  auto s = evaluate_population(top);
  EXPECT_EQ(s.hr, 1.0);
  EXPECT_EQ(s.ndcg, 1.0);
  EXPECT_EQ(s.users, 2u);

  RankingCase eleventh;
  eleventh.scores.push_back(0.0);
  for (int i = 0; i < 10; ++i) eleventh.scores.push_back(1.0 + i);
  std::vector<RankingCase> mixed = {{{1.0, 0.0}, 0}, eleventh};
  auto m = evaluate_population(mixed, 10);
  EXPECT_EQ(m.hr, 0.5);
  EXPECT_EQ(m.ndcg, 0.5);
  EXPECT_THROW(evaluate_population(std::vector<RankingCase>{}), std::invalid_argument);
}

TEST(Population, MatchesPerCaseLoop) {
  std::mt19937_64 rng(3);
  std::vector<RankingCase> cases;
  for (int i = 0; i < 1000; ++i) cases.push_back(random_case(rng));
  double hr = 0.0, ndcg = 0.0;
  for (const auto& c : cases) {
    const int r = rank_by_sorting(c);
    if (r <= 10) {
      hr += 1.0;
      ndcg += std::log(2.0) / std::log(r + 1.0);
    }
  }
  auto s = evaluate_population(cases, 10);
  EXPECT_NEAR(s.hr, hr / 1000.0, 1e-12);
  EXPECT_NEAR(s.ndcg, ndcg / 1000.0, 1e-12);
}
