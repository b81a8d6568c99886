#include "timecast/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace timecast {

int worker_count() {
  static const int n = [] {
    if (const char* env = std::getenv("TIMECAST_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
  }();
  return n;
}

void parallel_tasks(int n_tasks, const std::function<void(int)>& fn) {
  if (n_tasks <= 0) return;
  const int workers = std::min(worker_count(), n_tasks);
  if (workers <= 1) {
    for (int t = 0; t < n_tasks; ++t) fn(t);
    return;
  }

  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex err_mutex;

  auto run = [&] {
    while (true) {
      const int t = next.fetch_add(1, std::memory_order_relaxed);
      if (t >= n_tasks) break;
      try {
        fn(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!failed.exchange(true)) first_error = std::current_exception();
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (failed) std::rethrow_exception(first_error);
}

}  // namespace timecast
