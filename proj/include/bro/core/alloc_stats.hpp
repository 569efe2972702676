#pragma once

#include <cstddef>

namespace bro {

// Per-thread tally of buffer allocations made by Tensor, CTensor and Mat.
// The benchmark harness uses it as a device-independent memory proxy.
struct AllocStats {
  std::size_t allocations = 0;
  std::size_t bytes = 0;
};

inline AllocStats& alloc_stats() {
  thread_local AllocStats stats;
  return stats;
}

inline void reset_alloc_stats() { alloc_stats() = AllocStats{}; }

inline void note_alloc(std::size_t bytes) {
  if (bytes == 0) return;
  auto& s = alloc_stats();
  ++s.allocations;
  s.bytes += bytes;
}

}  // namespace bro
