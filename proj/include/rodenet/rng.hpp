#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

namespace rodenet {

using Rng = std::mt19937_64;

inline constexpr std::string_view kGeneratorName = "mt19937_64+splitmix64";

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a step, offset differs from the published basis
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Named, indexed sub-stream of a master seed. Streams depend only on
/// (seed, name, index), never on the order in which they are requested.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view name,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(master ^ hash_name(name)) + splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
  return Rng(derive_seed(master, name, index));
}

inline std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  return rng;
}

}  // namespace rodenet
