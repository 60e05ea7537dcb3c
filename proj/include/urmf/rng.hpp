#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace urmf {

// Deterministic generator keyed by a tuple of integers, e.g. (seed, epoch,
// step). Distinct keys give independent streams.
inline std::mt19937_64 keyed_rng(std::initializer_list<std::uint64_t> key) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * key.size());
  for (std::uint64_t k : key) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace urmf
