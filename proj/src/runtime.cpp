#include "fedrap/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <nlohmann/json.hpp>
#include <thread>

#include "fedrap/analysis.hpp"

namespace fedrap {
namespace {

// Clients are processed in blocks of this size and their uploads summed in
// client order, so the aggregate does not depend on the worker count.
constexpr std::size_t kBlockSize = 64;

template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = dist(rng);
  return out;
}

double upload_bytes(const Matrix& c) {
  const auto comm = comm_estimate(sparsity_stats(c), static_cast<std::size_t>(c.rows()),
                                  static_cast<std::size_t>(c.cols()));
  return std::min(comm.dense_bytes, comm.sparse_bytes);
}

struct PassOutput {
  Matrix aggregated;
  std::vector<RankingCase> rankings;
  double loss_sum = 0.0;
  double bytes_up = 0.0;
};

PassOutput run_pass(std::vector<ClientState>& clients, const std::vector<int>& selected,
                    const Matrix& c, const HyperParams& hp, const VariantSpec& variant,
                    const RoundContext& ctx, int workers) {
  PassOutput out;
  out.rankings.reserve(selected.size());
  Matrix sum;
  for (std::size_t start = 0; start < selected.size(); start += kBlockSize) {
    const auto len = std::min(kBlockSize, selected.size() - start);
    std::vector<ClientUpdateResult> results(len);
    parallel_for(len, workers, [&](std::size_t i) {
      results[i] = client_update(clients[static_cast<std::size_t>(selected[start + i])], c, hp,
                                 variant, ctx);
    });
    for (auto& r : results) {
      if (variant.has_global()) {
        out.bytes_up += upload_bytes(r.upload.c);
        if (sum.size() == 0) {
          sum = std::move(r.upload.c);
        } else {
          sum += r.upload.c;
        }
      }
      out.loss_sum += r.mean_loss;
      out.rankings.push_back(std::move(r.ranking));
    }
  }
  if (variant.has_global() && !selected.empty()) {
    sum /= static_cast<double>(selected.size());
    out.aggregated = std::move(sum);
  }
  return out;
}

}  // namespace

VariantKind parse_variant_kind(std::string_view name) {
  if (name == "fedrap") return VariantKind::fedrap;
  if (name == "fedrap-c") return VariantKind::fedrap_c;
  if (name == "fedrap-d") return VariantKind::fedrap_d;
  if (name == "fedrap-no") return VariantKind::fedrap_no;
  if (name == "fedrap-l2") return VariantKind::fedrap_l2;
  if (name == "centrap") return VariantKind::centrap;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

std::string_view to_string(VariantKind kind) {
  switch (kind) {
    case VariantKind::fedrap: return "fedrap";
    case VariantKind::fedrap_c: return "fedrap-c";
    case VariantKind::fedrap_d: return "fedrap-d";
    case VariantKind::fedrap_no: return "fedrap-no";
    case VariantKind::fedrap_l2: return "fedrap-l2";
    case VariantKind::centrap: return "centrap";
  }
  return "?";
}

std::string VariantSpec::name() const {
  std::string out(to_string(kind));
  if (lambda_schedule == mu_schedule && lambda_schedule != ScheduleKind::tanh) {
    out += "-";
    out += to_string(lambda_schedule);
  } else if (lambda_schedule != mu_schedule) {
    out += "-";
    out += to_string(lambda_schedule);
    out += "/";
    out += to_string(mu_schedule);
  }
  if (dp.enabled) out += "-noise";
  return out;
}

GlobalPenalty VariantSpec::penalty() const {
  switch (kind) {
    case VariantKind::fedrap_l2: return GlobalPenalty::frobenius;
    case VariantKind::fedrap_no:
    case VariantKind::fedrap_d: return GlobalPenalty::none;
    default: return GlobalPenalty::l1_prox;
  }
}

double VariantSpec::lambda_at(const HyperParams& hp, int a) const {
  // The difference term couples C and D; without both it is switched off.
  if (!has_local() || !has_global()) return 0.0;
  return weight({lambda_schedule, hp.v1}, a);
}

double VariantSpec::mu_at(const HyperParams& hp, int a) const {
  if (penalty() == GlobalPenalty::none) return 0.0;
  return weight({mu_schedule, hp.v2}, a);
}

RoundPlan sample_clients(int n, int n_s, Rng& rng, std::span<const int> exclude) {
  if (n < 1 || n_s < 1 || n_s > n) {
    throw std::invalid_argument("sample_clients: need 1 <= n_s <= n (n_s=" + std::to_string(n_s) +
                                ", n=" + std::to_string(n) + ")");
  }
  std::vector<int> eligible;
  eligible.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (std::find(exclude.begin(), exclude.end(), i) == exclude.end()) eligible.push_back(i);
  }
  if (static_cast<int>(eligible.size()) < n_s) {
    throw std::invalid_argument(
        "cannot select " + std::to_string(n_s) + " clients while excluding the previous round's " +
        std::to_string(n - static_cast<int>(eligible.size())) +
        "; lower clients_per_round or disable exclude_previous");
  }
  RoundPlan plan;
  if (static_cast<int>(eligible.size()) == n_s) {
    plan.clients = std::move(eligible);
    return plan;
  }
  plan.clients.reserve(static_cast<std::size_t>(n_s));
  std::sample(eligible.begin(), eligible.end(), std::back_inserter(plan.clients), n_s, rng);
  return plan;
}

std::string ClientUpload::serialize() const {
  nlohmann::json j;
  j["C"] = {{"rows", c.rows()},
            {"cols", c.cols()},
            {"values", std::vector<double>(c.data(), c.data() + c.size())}};
  return j.dump();
}

DivergenceError::DivergenceError(int round, int client, double loss)
    : std::runtime_error("training diverged in round " + std::to_string(round + 1) + " at client " +
                         std::to_string(client) + " (objective " + std::to_string(loss) + ")"),
      round_(round),
      client_(client) {}

RankingCase score_client(const ClientState& state, const Matrix& c) {
  const bool has_c = c.size() > 0;
  const bool has_d = state.d.size() > 0;
  RankingCase out;
  out.positive_position = 0;
  out.scores.reserve(state.data.eval_negatives.size() + 1);
  Vector x(state.u.size());
  auto score = [&](int j) {
    x.setZero();
    if (has_c) x += c.row(j);
    if (has_d) x += state.d.row(j);
    out.scores.push_back(state.u.dot(x));
  };
  score(state.data.test_positive);
  for (int j : state.data.eval_negatives) score(j);
  return out;
}

ClientUpdateResult client_update(ClientState& state, const Matrix& c_in, const HyperParams& hp,
                                 const VariantSpec& variant, const RoundContext& ctx) {
  const auto m = static_cast<Eigen::Index>(state.data.item_count);
  if (state.u.size() != hp.k) throw ShapeError("client_update: user embedding has wrong width");
  if (variant.has_global() && (c_in.rows() != m || c_in.cols() != hp.k)) {
    throw ShapeError("client_update: global item embedding has wrong shape");
  }
  if (variant.has_local() && (state.d.rows() != m || state.d.cols() != hp.k)) {
    throw ShapeError("client_update: local item embedding has wrong shape");
  }

  ClientUpdateResult out;
  Matrix& c = out.upload.c;
  if (variant.has_global()) c = c_in;

  StepOptions opts;
  opts.lambda = ctx.lambda;
  opts.mu = ctx.mu;
  opts.eta = hp.eta;
  opts.sign = hp.reg_sign;
  opts.penalty = variant.penalty();
  opts.clip_tau = variant.dp.enabled ? variant.dp.tau : 0.0;

  const auto client = static_cast<std::uint64_t>(state.client_id);
  const auto round = static_cast<std::uint64_t>(ctx.round);
  const int epochs = ctx.epochs < 0 ? hp.t2 : ctx.epochs;
  const auto batch_size = static_cast<std::size_t>(hp.batch_size);
  StepScratch scratch;
  TrainingBatch entries;
  for (int e = ctx.epoch_begin; e < ctx.epoch_begin + epochs; ++e) {
    const auto epoch = static_cast<std::uint64_t>(e);
    auto neg_rng = make_stream(ctx.seed, StreamTag::train_negatives, {client, round, epoch});
    entries = sample_train_negatives(state.data, neg_rng);
    for (int j : state.data.train_positives) entries.push_back({j, 1.0});
    auto shuffle_rng = make_stream(ctx.seed, StreamTag::batch_shuffle, {client, round, epoch});
    std::shuffle(entries.begin(), entries.end(), shuffle_rng);

    double bce = 0.0;
    for (std::size_t start = 0; start < entries.size(); start += batch_size) {
      const auto len = std::min(batch_size, entries.size() - start);
      const auto stats = train_step(state.u, c, state.d,
                                    std::span<const Interaction>(entries).subspan(start, len),
                                    opts, scratch);
      const double objective = stats.bce + stats.difference;
      if (!std::isfinite(objective) || std::abs(objective) > ctx.divergence_limit) {
        throw DivergenceError(ctx.round, state.client_id, objective);
      }
      bce += stats.bce;
    }
    out.mean_loss = entries.empty() ? 0.0 : bce / static_cast<double>(entries.size());
  }

  if (variant.dp.enabled && variant.has_global()) {
    auto noise_rng = make_stream(ctx.seed, StreamTag::dp_noise,
                                 {client, round, static_cast<std::uint64_t>(ctx.epoch_begin)});
    add_gaussian_noise_inplace(c, noise_sigma(variant.dp.z, hp.eta, variant.dp.tau, ctx.n_s),
                               noise_rng);
  }
  out.ranking = score_client(state, c);
  return out;
}

Matrix aggregate(std::span<const Matrix> received) {
  if (received.empty()) throw std::invalid_argument("aggregate: nothing received");
  Matrix sum = received.front();
  for (std::size_t i = 1; i < received.size(); ++i) {
    if (received[i].rows() != sum.rows() || received[i].cols() != sum.cols()) {
      throw ShapeError("aggregate: uploads differ in shape");
    }
    sum += received[i];
  }
  sum /= static_cast<double>(received.size());
  return sum;
}

ServerState init_server(std::size_t m, const HyperParams& hp, const VariantSpec& variant,
                        double init_scale, std::uint64_t seed) {
  ServerState s;
  if (variant.has_global()) {
    s.c = uniform_matrix(static_cast<Eigen::Index>(m), hp.k, init_scale,
                         make_stream(seed, StreamTag::init_global_items));
  }
  return s;
}

std::vector<ClientState> init_clients(std::vector<ClientDataset> datasets, const HyperParams& hp,
                                      const VariantSpec& variant, double init_scale,
                                      std::uint64_t seed) {
  std::vector<ClientState> out;
  out.reserve(datasets.size());
  for (auto& data : datasets) {
    ClientState s;
    s.client_id = data.client_id;
    const auto id = static_cast<std::uint64_t>(data.client_id);
    s.u = uniform_matrix(1, hp.k, init_scale, make_stream(seed, StreamTag::init_user, {id}));
    if (variant.has_local()) {
      s.d = uniform_matrix(static_cast<Eigen::Index>(data.item_count), hp.k, init_scale,
                           make_stream(seed, StreamTag::init_local_items, {id}));
    }
    s.data = std::move(data);
    out.push_back(std::move(s));
  }
  return out;
}

TrainingResult run_training(const VariantSpec& variant, std::vector<ClientState> clients,
                            ServerState server, const HyperParams& hp, const RuntimeOptions& opts,
                            std::uint64_t seed, const TrainingHooks& hooks) {
  hp.validate();
  if (variant.dp.enabled) variant.dp.validate();
  if (clients.empty()) throw std::invalid_argument("run_training: no clients");
  const int n = static_cast<int>(clients.size());
  for (int i = 0; i < n; ++i) {
    if (clients[static_cast<std::size_t>(i)].client_id != i) {
      throw std::invalid_argument("run_training: client ids must be 0..n-1 in order");
    }
  }
  const bool centralized = variant.kind == VariantKind::centrap;
  const int n_s = centralized || opts.clients_per_round == 0 ? n : opts.clients_per_round;
  if (n_s < 1 || n_s > n) throw std::invalid_argument("clients_per_round must be in [1, n]");
  const auto m = static_cast<Eigen::Index>(clients.front().data.item_count);
  if (variant.has_global() && (server.c.rows() != m || server.c.cols() != hp.k)) {
    throw ShapeError("run_training: server C has the wrong shape");
  }

  TrainingResult result;
  for (int a = server.round; a < hp.t1; ++a) {
    RoundContext ctx;
    ctx.round = a;
    ctx.lambda = variant.lambda_at(hp, a);
    ctx.mu = variant.mu_at(hp, a);
    ctx.seed = seed;
    ctx.n_s = n_s;
    ctx.divergence_limit = opts.divergence_limit;

    std::vector<int> selected;
    PassOutput pass;
    if (centralized) {
      // Every client, synchronised after each local epoch.
      selected.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) selected[static_cast<std::size_t>(i)] = i;
      ctx.epochs = 1;
      for (int e = 0; e < std::max(hp.t2, 1); ++e) {
        ctx.epoch_begin = e;
        if (hp.t2 == 0) ctx.epochs = 0;
        pass = run_pass(clients, selected, server.c, hp, variant, ctx, opts.workers);
        if (variant.has_global()) server.c = std::move(pass.aggregated);
      }
    } else {
      auto rng = make_stream(seed, StreamTag::client_sampling, {static_cast<std::uint64_t>(a)});
      std::span<const int> exclude;
      if (opts.exclude_previous) exclude = server.previous_selection;
      selected = sample_clients(n, n_s, rng, exclude).clients;
      pass = run_pass(clients, selected, server.c, hp, variant, ctx, opts.workers);
      if (variant.has_global()) server.c = std::move(pass.aggregated);
    }
    server.previous_selection = selected;
    server.round = a + 1;

    RoundReport report;
    report.round = a + 1;
    report.variant = variant.name();
    const auto metrics = evaluate_population(pass.rankings, opts.eval_k);
    report.hr10 = metrics.hr;
    report.ndcg10 = metrics.ndcg;
    report.mean_loss = pass.loss_sum / static_cast<double>(selected.size());
    if (variant.has_global()) {
      const auto sp = sparsity_stats(server.c);
      report.c_frac_gt_1e1 = sp.frac_abs_gt_1e1;
      report.c_frac_gt_1e2 = sp.frac_abs_gt_1e2;
      report.nonzero_c_entries = sp.nonzero_count;
    }
    report.bytes_up_estimate = pass.bytes_up;
    report.participants = static_cast<int>(selected.size());
    report.lambda = ctx.lambda;
    report.mu = ctx.mu;
    if (variant.dp.enabled) {
      report.dp = {true, variant.dp.tau, variant.dp.z, hp.eta, n_s,
                   noise_sigma(variant.dp.z, hp.eta, variant.dp.tau, n_s)};
    }
    const bool full_pass = (opts.full_eval_every > 0 && report.round % opts.full_eval_every == 0) ||
                           report.round == hp.t1;
    if (full_pass) {
      std::vector<RankingCase> cases(clients.size());
      parallel_for(clients.size(), opts.workers,
                   [&](std::size_t i) { cases[i] = score_client(clients[i], server.c); });
      const auto full = evaluate_population(cases, opts.eval_k);
      report.full_hr10 = full.hr;
      report.full_ndcg10 = full.ndcg;
    }
    result.reports.push_back(report);
    if (hooks.on_report) hooks.on_report(report);
    if (hooks.on_round_end) hooks.on_round_end(server, clients);
  }
  result.server = std::move(server);
  result.clients = std::move(clients);
  return result;
}

TrainingResult run_training(const VariantSpec& variant, std::vector<ClientDataset> datasets,
                            const HyperParams& hp, const RuntimeOptions& opts, std::uint64_t seed,
                            const TrainingHooks& hooks) {
  if (datasets.empty()) throw std::invalid_argument("run_training: no clients");
  const auto m = datasets.front().item_count;
  auto server = init_server(m, hp, variant, opts.init_scale, seed);
  auto clients = init_clients(std::move(datasets), hp, variant, opts.init_scale, seed);
  return run_training(variant, std::move(clients), std::move(server), hp, opts, seed, hooks);
}

}  // namespace fedrap
