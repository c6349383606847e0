#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedrap/curriculum.hpp"
#include "fedrap/data.hpp"
#include "fedrap/eval.hpp"
#include "fedrap/model.hpp"
#include "fedrap/privacy.hpp"
#include "fedrap/report.hpp"

namespace fedrap {

enum class VariantKind { fedrap, fedrap_c, fedrap_d, fedrap_no, fedrap_l2, centrap };

VariantKind parse_variant_kind(std::string_view name);
std::string_view to_string(VariantKind kind);

struct VariantSpec {
  VariantKind kind = VariantKind::fedrap;
  ScheduleKind lambda_schedule = ScheduleKind::tanh;
  ScheduleKind mu_schedule = ScheduleKind::tanh;
  PrivacyConfig dp;

  // Label used in reports, e.g. "fedrap", "fedrap-sin", "fedrap-noise".
  std::string name() const;
  bool has_local() const { return kind != VariantKind::fedrap_c; }
  bool has_global() const { return kind != VariantKind::fedrap_d; }
  GlobalPenalty penalty() const;

  double lambda_at(const HyperParams& hp, int a) const;
  double mu_at(const HyperParams& hp, int a) const;
};

struct RuntimeOptions {
  int clients_per_round = 0;      // 0 means every client, every round
  bool exclude_previous = false;  // never pick a client two rounds in a row
  int workers = 1;
  int eval_k = 10;
  int full_eval_every = 10;       // full-population pass cadence (and the final round)
  double init_scale = 0.01;       // U[-s, s] initialisation
  double divergence_limit = 1e6;
};

// Lives on the client across rounds; never sent to the server.
struct ClientState {
  int client_id = 0;
  Vector u;
  Matrix d;  // empty when the variant has no local item embedding
  ClientDataset data;
};

struct ServerState {
  Matrix c;  // empty when the variant has no global item embedding
  int round = 0;
  std::vector<int> previous_selection;
};

struct RoundPlan {
  std::vector<int> clients;  // sorted, distinct
};

/// Uniform draw of n_s distinct clients from [0, n) minus `exclude`.
RoundPlan sample_clients(int n, int n_s, Rng& rng, std::span<const int> exclude = {});

// Everything a client sends to the server in one round.
struct ClientUpload {
  Matrix c;

  /// Wire form: {"C": {"rows": m, "cols": k, "values": [...]}}.
  std::string serialize() const;
};

struct RoundContext {
  int round = 0;  // a, 0-based
  double lambda = 0.0;
  double mu = 0.0;
  std::uint64_t seed = 0;
  int n_s = 1;
  int epoch_begin = 0;
  int epochs = -1;  // -1: hp.t2
  double divergence_limit = 1e6;
};

struct ClientUpdateResult {
  ClientUpload upload;
  RankingCase ranking;  // positive at index 0, scored with the updated C^(i)
  double mean_loss = 0.0;  // mean BCE per entry over the last local epoch
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int round, int client, double loss);
  int round() const noexcept { return round_; }
  int client() const noexcept { return client_; }

 private:
  int round_;
  int client_;
};

/// Local epochs of train_step on (u, C^(i), D^(i)). Mutates state.u and
/// state.d; returns the updated copy of C.
ClientUpdateResult client_update(ClientState& state, const Matrix& c_in, const HyperParams& hp,
                                 const VariantSpec& variant, const RoundContext& ctx);

/// Elementwise mean. Summation runs in list order.
Matrix aggregate(std::span<const Matrix> received);

/// Logit scores of the held-out positive (index 0) and the eval negatives.
RankingCase score_client(const ClientState& state, const Matrix& c);

ServerState init_server(std::size_t m, const HyperParams& hp, const VariantSpec& variant,
                        double init_scale, std::uint64_t seed);
std::vector<ClientState> init_clients(std::vector<ClientDataset> datasets, const HyperParams& hp,
                                      const VariantSpec& variant, double init_scale,
                                      std::uint64_t seed);

struct TrainingHooks {
  std::function<void(const RoundReport&)> on_report;
  std::function<void(const ServerState&, std::span<const ClientState>)> on_round_end;
};

struct TrainingResult {
  ServerState server;
  std::vector<ClientState> clients;
  std::vector<RoundReport> reports;
};

/// Runs hp.t1 rounds. Reports are handed to hooks.on_report as they are
/// produced, so a DivergenceError still leaves the earlier rounds behind.
TrainingResult run_training(const VariantSpec& variant, std::vector<ClientState> clients,
                            ServerState server, const HyperParams& hp, const RuntimeOptions& opts,
                            std::uint64_t seed, const TrainingHooks& hooks = {});

TrainingResult run_training(const VariantSpec& variant, std::vector<ClientDataset> datasets,
                            const HyperParams& hp, const RuntimeOptions& opts, std::uint64_t seed,
                            const TrainingHooks& hooks = {});

}  // namespace fedrap
