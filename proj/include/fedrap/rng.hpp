#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedrap {

using Rng = std::mt19937_64;

// Purposes that get their own random stream. Values are part of the on-disk
// reproducibility contract; append, never renumber.
enum class StreamTag : std::uint64_t {
  eval_negatives = 1,
  train_negatives = 2,
  batch_shuffle = 3,
  init_user = 4,
  init_local_items = 5,
  init_global_items = 6,
  client_sampling = 7,
  dp_noise = 8,
};

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream from a run seed and a key path such as
/// (tag, client, round, epoch). The result depends only on the key values,
/// never on the order in which streams are created, so any parallel schedule
/// sees the same numbers.
inline Rng make_stream(std::uint64_t seed, StreamTag tag,
                       std::initializer_list<std::uint64_t> keys = {}) {
  std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(tag)));
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return Rng(h);
}

}  // namespace fedrap
