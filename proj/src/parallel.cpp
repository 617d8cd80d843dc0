#include "oct4d/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace oct4d {
namespace {

int resolve_default_threads() {
  if (const char* env = std::getenv("OCT4D_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

std::atomic<int> g_threads{0};  // 0 = not yet resolved

// Lazily started pool. Workers block on a condition variable between jobs;
// a job is a (begin,end) range plus the block function.
class Pool {
 public:
  static Pool& instance() {
    static Pool p;
    return p;
  }

  void run_blocks(int64_t n, int workers, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    workers = static_cast<int>(std::min<int64_t>(workers, n));
    if (workers <= 1) {
      fn(0, n);
      return;
    }
    ensure_started(workers - 1);
    std::vector<std::pair<int64_t, int64_t>> ranges;
    int64_t chunk = (n + workers - 1) / workers;
    for (int64_t b = 0; b < n; b += chunk) ranges.emplace_back(b, std::min(n, b + chunk));

    {
      std::unique_lock<std::mutex> lk(mu_);
      job_fn_ = &fn;
      job_ranges_ = std::move(ranges);
      job_next_ = 1;  // range 0 runs on the calling thread
      job_pending_ = static_cast<int>(job_ranges_.size()) - 1;
      job_id_++;
    }
    cv_.notify_all();
    fn(job_ranges_[0].first, job_ranges_[0].second);
    help_and_wait();
  }

 private:
  Pool() = default;
  ~Pool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void ensure_started(int n) {
    std::unique_lock<std::mutex> lk(mu_);
    while (static_cast<int>(threads_.size()) < n)
      threads_.emplace_back([this] { worker(); });
  }

  void worker() {
    uint64_t seen = 0;
    while (true) {
      std::pair<int64_t, int64_t> range;
      const std::function<void(int64_t, int64_t)>* fn = nullptr;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return stop_ || (job_id_ != seen && job_next_ < (int64_t)job_ranges_.size()); });
        if (stop_) return;
        range = job_ranges_[job_next_++];
        if (job_next_ >= (int64_t)job_ranges_.size()) seen = job_id_;
        fn = job_fn_;
      }
      (*fn)(range.first, range.second);
      {
        std::unique_lock<std::mutex> lk(mu_);
        if (--job_pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  void help_and_wait() {
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [&] { return job_pending_ == 0; });
  }

  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  std::vector<std::thread> threads_;
  const std::function<void(int64_t, int64_t)>* job_fn_ = nullptr;
  std::vector<std::pair<int64_t, int64_t>> job_ranges_;
  int64_t job_next_ = 0;
  int job_pending_ = 0;
  uint64_t job_id_ = 0;
  bool stop_ = false;
};

}  // namespace

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, -1);
#endif
}

int thread_count() {
  int n = g_threads.load(std::memory_order_relaxed);
  if (n == 0) {
    n = resolve_default_threads();
    g_threads.store(n, std::memory_order_relaxed);
  }
  return n;
}

void set_thread_count(int n) {
  g_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed);
}

void parallel_for_blocks(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  Pool::instance().run_blocks(n, thread_count(), fn);
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  parallel_for_blocks(n, [&fn](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace oct4d
