#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace scrambling {

/// Worker count from SCRAMBLING_WORKERS, else the hardware concurrency.
inline unsigned worker_count() {
  if (const char* env = std::getenv("SCRAMBLING_WORKERS")) {
    try {
      int n = std::stoi(env);
      if (n >= 1) return static_cast<unsigned>(n);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(block, begin, end) for every block of `block_size` consecutive
/// items out of `n_items`. Blocks are claimed dynamically; callers store
/// results per block and reduce in block order, so output does not depend
/// on the number of workers.
template <typename Fn>
void for_each_block(std::size_t n_items, std::size_t block_size, Fn&& fn,
                    unsigned workers = worker_count()) {
  if (n_items == 0) return;
  block_size = std::max<std::size_t>(1, block_size);
  const std::size_t n_blocks = (n_items + block_size - 1) / block_size;
  auto run_block = [&](std::size_t b) {
    const std::size_t begin = b * block_size;
    fn(b, begin, std::min(n_items, begin + block_size));
  };
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n_blocks));
  if (workers <= 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) run_block(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t b = next++; b < n_blocks; b = next++) {
        try {
          run_block(b);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n_blocks;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline std::size_t block_count(std::size_t n_items, std::size_t block_size) {
  return block_size == 0 ? 0 : (n_items + block_size - 1) / block_size;
}

}  // namespace scrambling
