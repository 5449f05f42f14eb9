#include "poupinn/threading.hpp"

#include <atomic>
#include <exception>
#include <mutex>

namespace poupinn {

namespace {
std::atomic<int> g_threads{0};  // 0 = not set yet, use hardware concurrency
}

int thread_count() {
  int n = g_threads.load(std::memory_order_relaxed);
  if (n <= 0) {
    n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
  }
  return n;
}

void set_thread_count(int n) { g_threads.store(n, std::memory_order_relaxed); }

void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (chunk == 0) chunk = 1;
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  const int workers = std::min<int>(thread_count(), static_cast<int>(n_chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c)
      fn(c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    try {
      for (;;) {
        const std::size_t c = next.fetch_add(1, std::memory_order_relaxed);
        if (c >= n_chunks) break;
        fn(c * chunk, std::min(n, (c + 1) * chunk));
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
      next.store(n_chunks, std::memory_order_relaxed);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers) - 1);
  for (int t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t chunk = std::max<std::size_t>(1, n / (8 * static_cast<std::size_t>(thread_count()) + 1));
  parallel_chunks(n, chunk, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace poupinn
