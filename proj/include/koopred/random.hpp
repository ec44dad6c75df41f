#pragma once

#include <cstdint>

namespace koopred {

// splitmix64 finalizer; used to derive independent sub-seeds from a base
// seed so that e.g. the noise stream and the k-means stream of one Monte
// Carlo run never alias.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  return splitmix64(base ^ splitmix64(salt));
}

}  // namespace koopred
