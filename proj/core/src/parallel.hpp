#pragma once

#include <algorithm>
#include <thread>
#include <vector>

#include "musreg/threads.hpp"

namespace musreg::detail {

/// Runs body(i) for i in [0, n) across worker_threads() threads. Each index is
/// handled by exactly one thread, so bodies writing disjoint outputs give
/// schedule-independent results.
template <typename Body>
void parallel_for(int n, Body&& body) {
  const int workers = std::clamp(worker_threads(), 1, std::max(n, 1));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::jthread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) body(i);
    });
  }
}

}  // namespace musreg::detail
