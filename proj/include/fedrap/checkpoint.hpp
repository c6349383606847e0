#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "fedrap/runtime.hpp"

namespace fedrap {

struct CheckpointManifest {
  int round = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string variant;
  std::size_t n = 0;
  std::size_t m = 0;
  int k = 0;
};

// Layout: manifest.json, C.bin (absent for fedrap-d), U.bin (n x k user
// embeddings) and D/<client>.bin (absent for fedrap-c), all in the binary
// matrix format of matrix_io.hpp.
void save_checkpoint(const std::filesystem::path& dir, const CheckpointManifest& manifest,
                     const ServerState& server, std::span<const ClientState> clients);

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& dir);
Matrix load_checkpoint_global(const std::filesystem::path& dir);
Matrix load_checkpoint_users(const std::filesystem::path& dir);
/// Empty matrix when the checkpoint has no local item embeddings.
Matrix load_checkpoint_local(const std::filesystem::path& dir, int client);

}  // namespace fedrap
