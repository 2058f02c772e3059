#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace btc {

// Worker cap: BTC_THREADS env var, 0 or unset means hardware concurrency.
inline unsigned worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("BTC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return hw;
}

// Index-parallel loop. Callers keep determinism by writing results into
// per-index slots and reducing sequentially afterwards.
template <typename F>
void parallel_for(std::size_t count, F&& body) {
  const unsigned workers = std::min<std::size_t>(worker_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> threads;
  for (unsigned w = 0; w < workers; ++w)
    threads.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) body(i);
    });
  for (auto& t : threads) t.join();
}

}  // namespace btc
