#include "rigkit/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace rigkit {

size_t workerCount() {
  if (const char* env = std::getenv("RIGKIT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) {
        return size_t(v);
      }
    } catch (const std::exception&) {
      // fall through to the hardware default
    }
  }
  return std::max<size_t>(1, std::thread::hardware_concurrency());
}

void parallelFor(size_t n, const std::function<void(size_t, size_t)>& body, size_t minChunk) {
  const size_t workers = std::min(workerCount(), std::max<size_t>(1, n / std::max<size_t>(1, minChunk)));
  if (workers <= 1) {
    if (n > 0) {
      body(0, n);
    }
    return;
  }
  const size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  for (size_t w = 1; w < workers; ++w) {
    const size_t begin = w * chunk;
    const size_t end = std::min(n, begin + chunk);
    if (begin < end) {
      threads.emplace_back(body, begin, end);
    }
  }
  body(0, std::min(n, chunk));
  for (auto& t : threads) {
    t.join();
  }
}

} // namespace rigkit
