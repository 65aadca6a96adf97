#include "musreg/threads.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace musreg {

namespace {
std::atomic<int> g_requested{0};
}  // namespace

void set_worker_threads(int count) { g_requested.store(std::max(count, 0)); }

int worker_threads() {
  const int requested = g_requested.load();
  if (requested > 0) return requested;
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

}  // namespace musreg
