#pragma once

#include <cstddef>
#include <functional>

namespace rigkit {

/// Worker count: RIGKIT_THREADS when set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
size_t workerCount();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunks are
/// disjoint, so bodies writing only to their own index range need no
/// synchronization. Runs inline when one worker suffices.
void parallelFor(size_t n, const std::function<void(size_t, size_t)>& body, size_t minChunk = 256);

} // namespace rigkit
