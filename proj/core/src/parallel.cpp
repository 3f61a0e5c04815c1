#include "nemo/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace nemo {

int worker_count() {
  if (const char* env = std::getenv("NEMO_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
    return 1;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, int)>& fn) {
  const int workers = std::min<std::size_t>(worker_count(), std::max<std::size_t>(n, 1));
  if (workers <= 1 || n == 0) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers - 1));
  const std::size_t chunk = (n + workers - 1) / workers;
  for (int w = 1; w < workers; ++w) {
    const std::size_t begin = std::min(n, chunk * static_cast<std::size_t>(w));
    const std::size_t end = std::min(n, begin + chunk);
    threads.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
  }
  fn(0, std::min(n, chunk), 0);
  for (auto& t : threads) t.join();
}

}  // namespace nemo
