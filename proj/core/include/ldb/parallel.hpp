#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace ldb {

// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware
// concurrency). Each index is processed exactly once; callers write results
// into per-index slots so reductions stay schedule independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  unsigned threads = 0);

// Generator for an independent stream derived from (seed, stream).
[[nodiscard]] std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace ldb
