#include "fedrap/checkpoint.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "fedrap/matrix_io.hpp"

namespace fedrap {

namespace fs = std::filesystem;

void save_checkpoint(const fs::path& dir, const CheckpointManifest& manifest,
                     const ServerState& server, std::span<const ClientState> clients) {
  fs::create_directories(dir);
  nlohmann::ordered_json j{{"format", "fedrap-checkpoint"}, {"version", 1},
                           {"round", manifest.round},       {"seed", manifest.seed},
                           {"config_hash", manifest.config_hash},
                           {"variant", manifest.variant},   {"n", manifest.n},
                           {"m", manifest.m},               {"k", manifest.k}};
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write checkpoint in " + dir.string());
    out << j.dump(1) << '\n';
  }
  if (server.c.size() > 0) write_matrix_binary(dir / "C.bin", server.c);
  Matrix users(static_cast<Eigen::Index>(clients.size()), manifest.k);
  bool any_local = false;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    users.row(static_cast<Eigen::Index>(i)) = clients[i].u;
    any_local = any_local || clients[i].d.size() > 0;
  }
  write_matrix_binary(dir / "U.bin", users);
  if (any_local) {
    fs::create_directories(dir / "D");
    for (const auto& c : clients) {
      write_matrix_binary(dir / "D" / (std::to_string(c.client_id) + ".bin"), c.d);
    }
  }
}

CheckpointManifest read_checkpoint_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("no checkpoint manifest in " + dir.string());
  auto j = nlohmann::json::parse(in);
  CheckpointManifest m;
  m.round = j.at("round").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.variant = j.at("variant").get<std::string>();
  m.n = j.at("n").get<std::size_t>();
  m.m = j.at("m").get<std::size_t>();
  m.k = j.at("k").get<int>();
  return m;
}

Matrix load_checkpoint_global(const fs::path& dir) {
  if (!fs::exists(dir / "C.bin")) return {};
  return read_matrix_binary(dir / "C.bin");
}

Matrix load_checkpoint_users(const fs::path& dir) { return read_matrix_binary(dir / "U.bin"); }

Matrix load_checkpoint_local(const fs::path& dir, int client) {
  const auto path = dir / "D" / (std::to_string(client) + ".bin");
  if (!fs::exists(path)) return {};
  return read_matrix_binary(path);
}

}  // namespace fedrap
