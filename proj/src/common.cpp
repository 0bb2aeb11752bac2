#include "pilotwave/common.hpp"

#include <algorithm>
#include <cstdlib>

namespace pilotwave {

const char* to_string(AbortReason r) {
  switch (r) {
    case AbortReason::None: return "none";
    case AbortReason::NodeProximity: return "node";
    case AbortReason::LeftBox: return "left_box";
    case AbortReason::RateBound: return "rate_bound";
  }
  return "unknown";
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t substream_seed(uint64_t seed, StreamTag tag, uint64_t index) {
  uint64_t s = splitmix64(seed ^ (static_cast<uint64_t>(tag) * 0x9e3779b97f4a7c15ull));
  return splitmix64(s ^ (index + 0x2545f4914f6cdd1dull));
}

std::mt19937_64 make_rng(uint64_t seed, StreamTag tag, uint64_t index) {
  return std::mt19937_64(substream_seed(seed, tag, index));
}

int default_worker_count() {
  if (const char* env = std::getenv("PILOTWAVE_WORKERS")) {
    int w = std::atoi(env);
    if (w >= 1) return w;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

void parallel_for_chunks(std::size_t n, int workers,
                         const std::function<void(std::size_t, std::size_t)>& chunk) {
  if (n == 0) return;
  if (workers <= 0) workers = default_worker_count();
  std::size_t w = std::min<std::size_t>(workers, n);
  if (w <= 1) {
    chunk(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(w);
  std::size_t base = n / w, extra = n % w, start = 0;
  for (std::size_t t = 0; t < w; ++t) {
    std::size_t len = base + (t < extra ? 1 : 0);
    pool.emplace_back(chunk, start, start + len);
    start += len;
  }
  for (auto& th : pool) th.join();
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string version_string() { return "0.1.0"; }

}  // namespace pilotwave
