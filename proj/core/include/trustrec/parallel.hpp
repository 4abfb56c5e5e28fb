#pragma once

#include <cstddef>
#include <functional>

namespace trustrec {

// Worker count: TRUSTREC_THREADS if set and positive, otherwise the
// hardware concurrency (at least 1).
std::size_t thread_budget();

// Runs body(begin, end) over contiguous chunks of [0, n). Chunks are
// disjoint; callers that write per-index results get deterministic output.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 64);

}  // namespace trustrec
