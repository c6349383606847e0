#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "fedrap/runtime.hpp"
#include "test_util.hpp"

using namespace fedrap;
using fedrap::testing::random_matrix;

namespace {

std::vector<ClientDataset> toy_clients(int n = 24, int m = 140, int per_user = 12,
                                       std::uint64_t seed = 3) {
  return leave_one_out_split(fedrap::testing::synthetic_dataset(n, m, per_user), seed);
}

HyperParams small_hp(int rounds = 3, int epochs = 2) {
  HyperParams hp;
  hp.k = 8;
  hp.t1 = rounds;
  hp.t2 = epochs;
  hp.eta = 0.1;
  return hp;
}

VariantSpec spec(VariantKind kind) {
  VariantSpec v;
  v.kind = kind;
  return v;
}

std::vector<std::string> report_lines(const TrainingResult& r) {
  std::vector<std::string> out;
  for (const auto& rep : r.reports) out.push_back(to_json_line(rep));
  return out;
}

// Rebuilds the entries client_update trains on in a given epoch.
TrainingBatch epoch_entries(const ClientDataset& data, std::uint64_t seed, int round, int epoch) {
  auto rng = make_stream(seed, StreamTag::train_negatives,
                         {static_cast<std::uint64_t>(data.client_id),
                          static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(epoch)});
  auto batch = sample_train_negatives(data, rng);
  for (int j : data.train_positives) batch.push_back({j, 1.0});
  return batch;
}

}  // namespace

TEST(SampleClients, FullParticipationAndInfeasible) {
  Rng rng(1);
  EXPECT_EQ(sample_clients(5, 5, rng).clients, (std::vector<int>{0, 1, 2, 3, 4}));
  const std::vector<int> exclude{0, 1, 2};
  EXPECT_THROW(sample_clients(5, 3, rng, exclude), std::invalid_argument);
  EXPECT_THROW(sample_clients(5, 6, rng), std::invalid_argument);
  auto plan = sample_clients(5, 2, rng, exclude);
  EXPECT_EQ(plan.clients, (std::vector<int>{3, 4}));
}

TEST(SampleClients, UniformFrequency) {
  Rng rng(2);
  std::vector<int> hits(100, 0);
  for (int round = 0; round < 10000; ++round) {
    auto plan = sample_clients(100, 10, rng);
    ASSERT_EQ(plan.clients.size(), 10u);
    std::set<int> distinct(plan.clients.begin(), plan.clients.end());
    ASSERT_EQ(distinct.size(), 10u);
    for (int c : plan.clients) ++hits[static_cast<std::size_t>(c)];
  }
  for (int h : hits) {
    EXPECT_GE(h, 900);
    EXPECT_LE(h, 1100);
  }
}

TEST(Aggregate, Examples) {
  std::mt19937_64 rng(3);
  Matrix m = random_matrix(4, 3, rng);
  std::vector<Matrix> same(5, m);
  EXPECT_LT((aggregate(same) - m).cwiseAbs().maxCoeff(), 1e-15);
  std::vector<Matrix> two{Matrix::Zero(4, 3), m};
  EXPECT_EQ(aggregate(two), Matrix(m / 2.0));
  EXPECT_THROW(aggregate(std::vector<Matrix>{}), std::invalid_argument);
  std::vector<Matrix> bad{m, Matrix::Zero(3, 3)};
  EXPECT_THROW(aggregate(bad), ShapeError);
}

TEST(Aggregate, MatchesElementwiseOracle) {
  std::mt19937_64 rng(4);
  std::vector<Matrix> in;
  for (int i = 0; i < 7; ++i) in.push_back(random_matrix(5, 4, rng));
  auto out = aggregate(in);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 4; ++c) {
      double s = 0.0;
      for (const auto& x : in) s += x(r, c);
      EXPECT_NEAR(out(r, c), s / 7.0, 1e-12);
    }
  }
}

TEST(Variants, Names) {
  for (auto name : {"fedrap", "fedrap-c", "fedrap-d", "fedrap-no", "fedrap-l2", "centrap"}) {
    EXPECT_EQ(to_string(parse_variant_kind(name)), name);
  }
  EXPECT_THROW(parse_variant_kind("pfedrec"), std::invalid_argument);
  VariantSpec v;
  v.lambda_schedule = ScheduleKind::square;
  v.mu_schedule = ScheduleKind::square;
  v.dp.enabled = true;
  EXPECT_EQ(v.name(), "fedrap-square-noise");
  EXPECT_EQ(spec(VariantKind::fedrap_l2).penalty(), GlobalPenalty::frobenius);
  HyperParams hp;
  EXPECT_EQ(spec(VariantKind::fedrap_c).lambda_at(hp, 50), 0.0);
  EXPECT_EQ(spec(VariantKind::fedrap_no).mu_at(hp, 50), 0.0);
  EXPECT_GT(spec(VariantKind::fedrap_no).lambda_at(hp, 50), 0.0);
}

TEST(ClientUpdate, ZeroEpochsChangeNothing) {
  auto data = toy_clients();
  auto hp = small_hp(1, 0);
  const auto v = spec(VariantKind::fedrap);
  auto server = init_server(data[0].item_count, hp, v, 0.1, 1);
  auto clients = init_clients(data, hp, v, 0.1, 1);
  const auto before = clients[0];
  auto out = client_update(clients[0], server.c, hp, v, {0, 0.1, 0.1, 1, 1});
  EXPECT_EQ(out.upload.c, server.c);
  EXPECT_EQ(clients[0].u, before.u);
  EXPECT_EQ(clients[0].d, before.d);
}

TEST(ClientUpdate, ZeroStepKeepsGlobal) {
  auto data = toy_clients();
  auto hp = small_hp(1, 2);
  hp.eta = 0.0;
  const auto v = spec(VariantKind::fedrap);
  auto server = init_server(data[0].item_count, hp, v, 0.1, 1);
  auto clients = init_clients(data, hp, v, 0.1, 1);
  auto out = client_update(clients[0], server.c, hp, v, {0, 0.3, 0.0, 1, 1});
  EXPECT_EQ(out.upload.c, server.c);
}

TEST(ClientUpdate, OneEpochIsOneReferenceStep) {
  auto data = toy_clients();
  auto hp = small_hp(1, 1);
  const auto v = spec(VariantKind::fedrap);
  auto server = init_server(data[0].item_count, hp, v, 0.1, 9);
  auto clients = init_clients(data, hp, v, 0.1, 9);
  const auto start = clients[2];
  const double lambda = 0.05, mu = 0.01;
  auto out = client_update(clients[2], server.c, hp, v, {4, lambda, mu, 9, 1});
  auto batch = epoch_entries(start.data, 9, 4, 0);
  auto ref = sgd_step_with_prox(start.u, server.c, start.d, batch, lambda, mu, hp.eta,
                                hp.reg_sign);
  EXPECT_LT((out.upload.c - ref.c).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((clients[2].d - ref.d).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((clients[2].u - ref.u).cwiseAbs().maxCoeff(), 1e-12);
  // The ranking covers the held-out positive and the evaluation negatives.
  EXPECT_EQ(out.ranking.scores.size(), start.data.eval_negatives.size() + 1);
  EXPECT_EQ(out.ranking.positive_position, 0u);
}

TEST(ClientUpdate, UploadCarriesOnlyGlobalEmbedding) {
  auto data = toy_clients();
  auto hp = small_hp(1, 1);
  const auto v = spec(VariantKind::fedrap);
  auto server = init_server(data[0].item_count, hp, v, 0.1, 1);
  auto clients = init_clients(data, hp, v, 0.1, 1);
  auto out = client_update(clients[0], server.c, hp, v, {0, 0.1, 0.1, 1, 1});
  auto j = nlohmann::json::parse(out.upload.serialize());
  std::set<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
  EXPECT_EQ(keys, std::set<std::string>{"C"});
  EXPECT_EQ(j["C"]["rows"], server.c.rows());
  EXPECT_EQ(j["C"]["values"].size(), static_cast<std::size_t>(server.c.size()));
}

TEST(ClientUpdate, NoiseIsAddedOncePerRound) {
  auto data = toy_clients();
  auto hp = small_hp(1, 2);
  auto v = spec(VariantKind::fedrap);
  v.dp.enabled = true;
  v.dp.z = 0.0;
  auto server = init_server(data[0].item_count, hp, v, 0.1, 1);
  auto a = init_clients(data, hp, v, 0.1, 1);
  auto b = a;
  auto quiet = client_update(a[0], server.c, hp, v, {0, 0.1, 0.0, 1, 10});
  v.dp.z = 1.0;
  auto noisy = client_update(b[0], server.c, hp, v, {0, 0.1, 0.0, 1, 10});
  const double sigma = noise_sigma(1.0, hp.eta, v.dp.tau, 10);
  const Matrix diff = noisy.upload.c - quiet.upload.c;
  const double n = static_cast<double>(diff.size());
  const double sd = std::sqrt(diff.squaredNorm() / n);
  EXPECT_NEAR(sd, sigma, 0.1 * sigma);
  // Local state does not see the noise.
  EXPECT_EQ(a[0].d, b[0].d);
}

TEST(ClientUpdate, ShapeChecks) {
  auto data = toy_clients();
  auto hp = small_hp();
  const auto v = spec(VariantKind::fedrap);
  auto clients = init_clients(data, hp, v, 0.1, 1);
  EXPECT_THROW(client_update(clients[0], Matrix::Zero(3, 3), hp, v, {}), ShapeError);
}

TEST(Training, ZeroRoundsReturnsInitialState) {
  auto hp = small_hp(0, 1);
  const auto v = spec(VariantKind::fedrap);
  auto data = toy_clients();
  auto server = init_server(data[0].item_count, hp, v, 0.1, 1);
  auto clients = init_clients(data, hp, v, 0.1, 1);
  auto result = run_training(v, clients, server, hp, {}, 1);
  EXPECT_TRUE(result.reports.empty());
  EXPECT_EQ(result.server.c, server.c);
  EXPECT_EQ(result.clients[3].d, clients[3].d);
}

TEST(Training, ReportsEveryRound) {
  auto hp = small_hp(4, 1);
  RuntimeOptions opts;
  opts.full_eval_every = 2;
  std::vector<RoundReport> streamed;
  TrainingHooks hooks;
  hooks.on_report = [&](const RoundReport& r) { streamed.push_back(r); };
  auto result = run_training(spec(VariantKind::fedrap), toy_clients(), hp, opts, 5, hooks);
  ASSERT_EQ(result.reports.size(), 4u);
  ASSERT_EQ(streamed.size(), 4u);
  EXPECT_EQ(result.reports[0].round, 1);
  EXPECT_FALSE(result.reports[0].full_hr10.has_value());
  EXPECT_TRUE(result.reports[1].full_hr10.has_value());
  EXPECT_TRUE(result.reports[3].full_hr10.has_value());
  EXPECT_EQ(result.reports[0].lambda, 0.0);
  EXPECT_NEAR(result.reports[2].lambda, hp.v1 * std::tanh(0.2), 1e-15);
  EXPECT_EQ(result.reports[0].participants, 24);
  EXPECT_GT(result.reports[0].bytes_up_estimate, 0.0);
}

TEST(Training, DeterministicAcrossWorkerCounts) {
  auto hp = small_hp(3, 2);
  RuntimeOptions one, many;
  one.clients_per_round = 10;
  many.clients_per_round = 10;
  many.workers = 3;
  for (auto kind : {VariantKind::fedrap, VariantKind::centrap}) {
    auto a = run_training(spec(kind), toy_clients(), hp, one, 11);
    auto b = run_training(spec(kind), toy_clients(), hp, many, 11);
    EXPECT_EQ(report_lines(a), report_lines(b));
    EXPECT_EQ(a.server.c, b.server.c);
    for (std::size_t i = 0; i < a.clients.size(); ++i) EXPECT_EQ(a.clients[i].d, b.clients[i].d);
  }
}

TEST(Training, SeedChangesTheRun) {
  auto hp = small_hp(2, 1);
  auto a = run_training(spec(VariantKind::fedrap), toy_clients(), hp, {}, 1);
  auto b = run_training(spec(VariantKind::fedrap), toy_clients(), hp, {}, 2);
  EXPECT_NE(a.server.c, b.server.c);
}

TEST(Training, ZeroSparsityWeightMatchesNoVariant) {
  auto hp = small_hp(3, 2);
  hp.v2 = 0.0;
  auto a = run_training(spec(VariantKind::fedrap), toy_clients(), hp, {}, 4);
  hp.v2 = 0.5;  // ignored by fedrap-no
  auto b = run_training(spec(VariantKind::fedrap_no), toy_clients(), hp, {}, 4);
  EXPECT_EQ(a.server.c, b.server.c);
  ASSERT_EQ(a.reports.size(), b.reports.size());
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    EXPECT_EQ(a.reports[i].hr10, b.reports[i].hr10);
    EXPECT_EQ(a.reports[i].mean_loss, b.reports[i].mean_loss);
  }
}

TEST(Training, ExcludePreviousNeverRepeats) {
  auto hp = small_hp(6, 1);
  RuntimeOptions opts;
  opts.clients_per_round = 8;
  opts.exclude_previous = true;
  std::vector<std::vector<int>> picks;
  TrainingHooks hooks;
  hooks.on_round_end = [&](const ServerState& s, std::span<const ClientState>) {
    picks.push_back(s.previous_selection);
  };
  run_training(spec(VariantKind::fedrap), toy_clients(), hp, opts, 6, hooks);
  ASSERT_EQ(picks.size(), 6u);
  for (std::size_t r = 1; r < picks.size(); ++r) {
    for (int c : picks[r]) {
      EXPECT_EQ(std::count(picks[r - 1].begin(), picks[r - 1].end(), c), 0);
    }
  }
  opts.clients_per_round = 13;
  EXPECT_THROW(run_training(spec(VariantKind::fedrap), toy_clients(), hp, opts, 6),
               std::invalid_argument);
}

TEST(Training, VariantShapes) {
  auto hp = small_hp(1, 1);
  auto c_only = run_training(spec(VariantKind::fedrap_c), toy_clients(), hp, {}, 1);
  EXPECT_GT(c_only.server.c.size(), 0);
  EXPECT_EQ(c_only.clients[0].d.size(), 0);
  auto d_only = run_training(spec(VariantKind::fedrap_d), toy_clients(), hp, {}, 1);
  EXPECT_EQ(d_only.server.c.size(), 0);
  EXPECT_GT(d_only.clients[0].d.size(), 0);
  EXPECT_EQ(d_only.reports[0].bytes_up_estimate, 0.0);
  auto l2 = run_training(spec(VariantKind::fedrap_l2), toy_clients(), small_hp(4, 2), {}, 1);
  EXPECT_EQ((l2.server.c.array() == 0.0).count(), 0);
}

TEST(Training, CentralizedUsesEveryone) {
  auto hp = small_hp(2, 2);
  RuntimeOptions opts;
  opts.clients_per_round = 5;  // ignored
  auto r = run_training(spec(VariantKind::centrap), toy_clients(), hp, opts, 1);
  EXPECT_EQ(r.reports[0].participants, 24);
}

TEST(Training, DivergenceIsReportedWithEarlierRounds) {
  auto hp = small_hp(5, 2);
  hp.eta = 1e6;
  RuntimeOptions opts;
  opts.init_scale = 1.0;
  std::vector<RoundReport> seen;
  TrainingHooks hooks;
  hooks.on_report = [&](const RoundReport& r) { seen.push_back(r); };
  try {
    run_training(spec(VariantKind::fedrap), toy_clients(), hp, opts, 1, hooks);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(static_cast<std::size_t>(e.round()), seen.size());
  }
}

// Five users with the same positives on items 0-4: C alone should fit them.
TEST(Training, GlobalOnlyFitsUniformPreferences) {
  std::vector<ClientDataset> split;
  for (int u = 0; u < 5; ++u) {
    ClientDataset c;
    c.client_id = u;
    c.item_count = 10;
    c.train_positives = {0, 1, 2, 3};
    c.test_positive = 4;
    c.eval_negatives = {5, 6, 7, 8};
    split.push_back(c);
  }
  auto hp = small_hp(60, 5);
  hp.eta = 0.5;
  hp.v2 = 0.0;
  RuntimeOptions opts;
  opts.init_scale = 0.1;
  auto r = run_training(spec(VariantKind::fedrap_c), split, hp, opts, 1);
  EXPECT_LT(r.reports.back().mean_loss, 0.1);
}

TEST(Training, CostIsLinearInParticipants) {
  auto data = toy_clients(400, 300, 20);
  auto hp = small_hp(2, 10);
  // Wall time of the second round alone, so setup does not count.
  auto time_round = [&](int n_s) {
    RuntimeOptions opts;
    opts.clients_per_round = n_s;
    opts.full_eval_every = 0;
    double best = 1e9;
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<std::chrono::steady_clock::time_point> ends;
      TrainingHooks hooks;
      hooks.on_round_end = [&](const ServerState&, std::span<const ClientState>) {
        ends.push_back(std::chrono::steady_clock::now());
      };
      run_training(spec(VariantKind::fedrap), data, hp, opts, 1, hooks);
      best = std::min(best, std::chrono::duration<double>(ends[1] - ends[0]).count());
    }
    return best;
  };
  const double per_client = time_round(100) / 100.0;
  for (int n_s : {200, 400}) {
    const double ratio = time_round(n_s) / n_s / per_client;
    EXPECT_GT(ratio, 0.7) << n_s;
    EXPECT_LT(ratio, 1.3) << n_s;
  }
}
