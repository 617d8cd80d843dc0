#ifndef OCT4D_PROFILE_HPP
#define OCT4D_PROFILE_HPP

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>

namespace oct4d::prof {

// Opt-in wall-clock accounting per op family (OCT4D_PROF=1). Zero cost when
// disabled beyond one branch per op call.

inline bool enabled() {
  static const bool on = [] {
    const char* e = std::getenv("OCT4D_PROF");
    return e && e[0] == '1';
  }();
  return on;
}

struct Counter {
  const char* name;
  std::atomic<int64_t> ns{0};
  std::atomic<int64_t> calls{0};
};

inline Counter& counter(int idx) {
  static Counter counters[12] = {
      {"conv.fwd"}, {"conv.bwd_dx"}, {"conv.bwd_dw"}, {"conv.im2col"}, {"conv.gemm"},
      {"pool"},     {"relu"},        {"concat"},      {"linear"},      {"elementwise"},
      {"alloc"},    {"other"},
  };
  return counters[idx];
}

enum Slot {
  kConvFwd = 0,
  kConvBwdDx = 1,
  kConvBwdDw = 2,
  kIm2col = 3,
  kGemm = 4,
  kPool = 5,
  kRelu = 6,
  kConcat = 7,
  kLinear = 8,
  kElementwise = 9,
  kAlloc = 10,
  kOther = 11,
};

class Scope {
 public:
  explicit Scope(int slot) : slot_(slot), on_(enabled()) {
    if (on_) t0_ = std::chrono::steady_clock::now();
  }
  ~Scope() {
    if (!on_) return;
    auto dt = std::chrono::steady_clock::now() - t0_;
    counter(slot_).ns.fetch_add(std::chrono::duration_cast<std::chrono::nanoseconds>(dt).count(),
                                std::memory_order_relaxed);
    counter(slot_).calls.fetch_add(1, std::memory_order_relaxed);
  }

 private:
  int slot_;
  bool on_;
  std::chrono::steady_clock::time_point t0_;
};

inline void report() {
  if (!enabled()) return;
  std::fprintf(stderr, "-- op profile --\n");
  for (int i = 0; i < 12; ++i) {
    auto& c = counter(i);
    if (c.calls.load() == 0) continue;
    std::fprintf(stderr, "%-12s %8.2fs  (%lld calls)\n", c.name,
                 static_cast<double>(c.ns.load()) * 1e-9,
                 static_cast<long long>(c.calls.load()));
  }
}

inline void reset() {
  for (int i = 0; i < 12; ++i) {
    counter(i).ns.store(0);
    counter(i).calls.store(0);
  }
}

}  // namespace oct4d::prof

#endif
