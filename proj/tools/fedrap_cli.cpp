#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fedrap/analysis.hpp"
#include "fedrap/checkpoint.hpp"
#include "fedrap/config.hpp"
#include "fedrap/matrix_io.hpp"
#include "fedrap/runtime.hpp"

namespace fs = std::filesystem;
using namespace fedrap;

namespace {

// Config keys exposed as --flags. Values given on the command line are
// applied on top of --config.
const std::vector<std::pair<std::string, std::string>> kValueFlags = {
    {"dataset", "Ratings file (tab or '::' separated)"},
    {"format", "Ratings format: tab, double-colon or auto"},
    {"split", "Existing split manifest to train on instead of --dataset"},
    {"min-interactions", "Drop users with fewer positives"},
    {"eval-negatives", "Sampled negatives per held-out positive"},
    {"variant", "fedrap, fedrap-c, fedrap-d, fedrap-no, fedrap-l2 or centrap"},
    {"seed", "Run seed"},
    {"rounds", "Global rounds t1"},
    {"local-epochs", "Local epochs t2"},
    {"dim", "Embedding dimension k"},
    {"eta", "Learning rate"},
    {"v1", "Cap of the difference-regularizer weight"},
    {"v2", "Cap of the sparsity weight"},
    {"schedule", "Weight schedule: tanh, fixed, sin, square or frac"},
    {"mu-schedule", "Separate schedule for the sparsity weight"},
    {"batch-size", "Mini-batch size"},
    {"reg-sign", "encourage-difference or penalize-difference"},
    {"tau", "Clipping threshold for the C gradient"},
    {"z", "Noise multiplier"},
    {"clients-per-round", "Clients sampled per round (0 = all)"},
    {"workers", "Worker threads for client updates"},
    {"full-eval-every", "Full-population evaluation cadence in rounds"},
    {"init-scale", "Uniform initialisation half-width"},
    {"checkpoint-every", "Checkpoint interval in rounds (0 = final only)"},
    {"out", "Output directory"},
};

struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  bool dp = false;
  bool exclude_previous = false;
  bool no_checkpoint = false;

  void attach(CLI::App* app, const std::vector<std::string>& only = {}) {
    app->add_option("--config", config_path, "Flat key = value experiment config");
    for (const auto& [name, help] : kValueFlags) {
      if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
      app->add_option("--" + name, values[name], help);
    }
    if (only.empty()) {
      app->add_flag("--dp", dp, "Clip and noise the uploaded C (Gaussian mechanism)");
      app->add_flag("--exclude-previous", exclude_previous,
                    "Never select a client in two consecutive rounds");
      app->add_flag("--no-checkpoint", no_checkpoint, "Do not write the final checkpoint");
    }
  }

  ExperimentConfig resolve(const CLI::App* app) const {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg.merge_file(config_path);
    for (const auto& [name, value] : values) {
      if (app->count("--" + name) > 0) cfg.set(name, value);
    }
    if (dp) cfg.dp = true;
    if (exclude_previous) cfg.exclude_previous = true;
    if (no_checkpoint) cfg.save_checkpoint = false;
    cfg.validate();
    return cfg;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

nlohmann::json dataset_stats(const SplitManifest& split) {
  std::size_t interactions = 0;
  for (const auto& c : split.clients) interactions += c.train_positives.size() + 1;
  const double density = static_cast<double>(interactions) /
                         (static_cast<double>(split.meta.n) * static_cast<double>(split.meta.m));
  return {{"users", split.meta.n},      {"items", split.meta.m},
          {"interactions", interactions}, {"density", density},
          {"sparsity", 1.0 - density},  {"seed", split.seed}};
}

int cmd_ingest(const ExperimentConfig& cfg) {
  auto split = load_split(cfg);
  fs::create_directories(cfg.out);
  write_split_manifest(fs::path(cfg.out) / "split.json", split);
  auto stats = dataset_stats(split);
  write_text(fs::path(cfg.out) / "dataset_stats.json", stats.dump(1) + "\n");
  std::cout << stats.dump() << '\n';
  return 0;
}

int cmd_train(ExperimentConfig cfg) {
  const fs::path out = cfg.out;
  fs::create_directories(out);
  write_text(out / "config.resolved", cfg.to_text());
  auto split = load_split(cfg);
  write_split_manifest(out / "split.json", split);

  const auto variant = cfg.variant_spec();
  const auto opts = cfg.runtime_options();
  std::ofstream reports(out / "reports.jsonl");
  const auto started = std::chrono::steady_clock::now();

  CheckpointManifest manifest;
  manifest.seed = cfg.seed;
  manifest.config_hash = cfg.hash();
  manifest.variant = variant.name();
  manifest.n = split.meta.n;
  manifest.m = split.meta.m;
  manifest.k = cfg.hp.k;

  TrainingHooks hooks;
  hooks.on_report = [&](const RoundReport& r) {
    reports << to_json_line(r) << '\n' << std::flush;
    std::fprintf(stderr, "round %3d  hr10 %.4f  ndcg10 %.4f  loss %.4f  C>1e-2 %.4f%s\n", r.round,
                 r.hr10, r.ndcg10, r.mean_loss, r.c_frac_gt_1e2,
                 r.full_hr10 ? ("  full hr10 " + std::to_string(*r.full_hr10)).c_str() : "");
  };
  hooks.on_round_end = [&](const ServerState& server, std::span<const ClientState> clients) {
    const bool last = server.round == cfg.hp.t1;
    const bool periodic = cfg.checkpoint_every > 0 && server.round % cfg.checkpoint_every == 0;
    if (!cfg.save_checkpoint || !(last || periodic)) return;
    manifest.round = server.round;
    char name[32];
    std::snprintf(name, sizeof name, "checkpoint_%04d", server.round);
    save_checkpoint(out / name, manifest, server, clients);
    if (last) save_checkpoint(out / "checkpoint", manifest, server, clients);
  };

  auto result = run_training(variant, std::move(split.clients), cfg.hp, opts, cfg.seed, hooks);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  nlohmann::ordered_json summary{{"variant", variant.name()},
                                 {"seed", cfg.seed},
                                 {"config_hash", cfg.hash()},
                                 {"rounds", result.reports.size()},
                                 {"seconds", seconds}};
  if (!result.reports.empty()) {
    const auto& last = result.reports.back();
    summary["hr10"] = last.headline_hr();
    summary["ndcg10"] = last.headline_ndcg();
  }
  if (result.server.c.size() > 0) {
    const auto sp = sparsity_stats(result.server.c);
    const auto comm = comm_estimate(sp, static_cast<std::size_t>(result.server.c.rows()),
                                    static_cast<std::size_t>(result.server.c.cols()));
    summary["c_frac_gt_1e1"] = sp.frac_abs_gt_1e1;
    summary["c_frac_gt_1e2"] = sp.frac_abs_gt_1e2;
    summary["c_exact_zero_frac"] = sp.exact_zero_frac;
    summary["c_dense_bytes"] = comm.dense_bytes;
    summary["c_sparse_bytes"] = comm.sparse_bytes;
    summary["c_savings_ratio"] = comm.savings_ratio;
  }
  write_text(out / "summary.json", summary.dump(1) + "\n");
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_evaluate(const fs::path& run_dir, fs::path checkpoint, fs::path split_path, int k) {
  if (checkpoint.empty()) checkpoint = run_dir / "checkpoint";
  if (split_path.empty()) split_path = run_dir / "split.json";
  const auto manifest = read_checkpoint_manifest(checkpoint);
  auto split = read_split_manifest(split_path);
  if (split.meta.n != manifest.n || split.meta.m != manifest.m) {
    throw std::runtime_error("checkpoint and split disagree on n or m");
  }
  const Matrix c = load_checkpoint_global(checkpoint);
  const Matrix users = load_checkpoint_users(checkpoint);
  std::vector<RankingCase> cases;
  cases.reserve(split.clients.size());
  for (auto& data : split.clients) {
    ClientState state;
    state.client_id = data.client_id;
    state.u = users.row(data.client_id);
    state.d = load_checkpoint_local(checkpoint, data.client_id);
    state.data = std::move(data);
    cases.push_back(score_client(state, c));
  }
  const auto summary = evaluate_population(cases, k);
  nlohmann::ordered_json j{{"variant", manifest.variant}, {"round", manifest.round},
                           {"k", summary.k},              {"users", summary.users},
                           {"hr", summary.hr},            {"ndcg", summary.ndcg}};
  std::cout << j.dump() << '\n';
  return 0;
}

RunRecord load_run(const fs::path& dir) {
  ExperimentConfig cfg;
  cfg.merge_file(dir / "config.resolved");
  RunRecord run;
  run.seed = cfg.seed;
  run.dataset = cfg.split.empty() ? fs::path(cfg.dataset).filename().string() : cfg.split;
  run.reports = read_report_file(dir / "reports.jsonl");
  run.variant = run.reports.empty() ? cfg.variant : run.reports.front().variant;
  return run;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out) {
  std::map<std::string, std::vector<RunRecord>> runs;
  for (const auto& d : dirs) {
    auto run = load_run(d);
    runs[run.variant].push_back(std::move(run));
  }
  const auto rows = compare_variants(runs);
  if (out.empty() || out == "-") {
    write_comparison_csv(std::cout, rows);
  } else {
    fs::path path = out;
    if (fs::is_directory(path)) path /= "comparison.csv";
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    write_comparison_csv(f, rows);
    std::cout << "wrote " << path.string() << '\n';
  }
  return 0;
}

int cmd_export(const fs::path& run_dir, fs::path checkpoint, fs::path dest,
               const std::vector<int>& clients, const std::string& format) {
  if (checkpoint.empty()) checkpoint = run_dir / "checkpoint";
  if (dest.empty()) dest = run_dir / "embeddings";
  fs::create_directories(dest);
  const bool text = format == "text";
  if (!text && format != "binary") throw std::invalid_argument("--format must be text or binary");
  const char* ext = text ? ".txt" : ".bin";
  auto dump = [&](const fs::path& name, const Matrix& m) {
    const auto path = dest / (name.string() + ext);
    text ? write_matrix_text(path, m) : write_matrix_binary(path, m);
    std::cout << "wrote " << path.string() << " (" << m.rows() << " x " << m.cols() << ")\n";
  };
  const Matrix c = load_checkpoint_global(checkpoint);
  if (c.size() > 0) dump("C", c);
  for (int i : clients) {
    const Matrix d = load_checkpoint_local(checkpoint, i);
    if (d.size() == 0) throw std::runtime_error("checkpoint has no D for client " + std::to_string(i));
    dump("D_" + std::to_string(i), d);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated recommendation with additive personalization"};
  app.require_subcommand(1);

  ConfigFlags ingest_flags, train_flags;
  auto* ingest = app.add_subcommand("ingest", "Parse, filter and split a ratings file");
  ingest_flags.attach(ingest, {"dataset", "format", "min-interactions", "eval-negatives", "seed", "out"});

  auto* train = app.add_subcommand("train", "Run federated training and write round reports");
  train_flags.attach(train);

  std::string eval_run, eval_checkpoint, eval_split;
  int eval_k = 10;
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on its leave-one-out split");
  evaluate->add_option("--out", eval_run, "Run directory written by train");
  evaluate->add_option("--checkpoint", eval_checkpoint, "Checkpoint directory");
  evaluate->add_option("--split", eval_split, "Split manifest");
  evaluate->add_option("-k,--top-k", eval_k, "Cutoff K")->check(CLI::PositiveNumber);

  std::vector<std::string> compare_dirs;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "Tabulate final and best metrics across runs");
  compare->add_option("runs", compare_dirs, "Run directories")->required();
  compare->add_option("--out", compare_out, "CSV path or directory ('-' for stdout)");

  std::string export_run, export_checkpoint, export_dest, export_format = "text";
  std::vector<int> export_clients;
  auto* export_cmd = app.add_subcommand("export-embeddings", "Dump C and selected D^(i)");
  export_cmd->add_option("--out", export_run, "Run directory written by train");
  export_cmd->add_option("--checkpoint", export_checkpoint, "Checkpoint directory");
  export_cmd->add_option("--dest", export_dest, "Destination directory");
  export_cmd->add_option("--clients", export_clients, "Client indices whose D to export")
      ->delimiter(',');
  export_cmd->add_option("--format", export_format, "text or binary");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) return cmd_ingest(ingest_flags.resolve(ingest));
    if (train->parsed()) return cmd_train(train_flags.resolve(train));
    if (evaluate->parsed()) return cmd_evaluate(eval_run, eval_checkpoint, eval_split, eval_k);
    if (compare->parsed()) return cmd_compare(compare_dirs, compare_out);
    if (export_cmd->parsed()) {
      return cmd_export(export_run, export_checkpoint, export_dest, export_clients, export_format);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
