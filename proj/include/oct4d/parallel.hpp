#ifndef OCT4D_PARALLEL_HPP
#define OCT4D_PARALLEL_HPP

#include <cstdint>
#include <functional>

namespace oct4d {

// Worker count for intra-op parallelism. Resolution order: explicit
// set_thread_count(), OCT4D_THREADS env var, hardware concurrency.
// A count of 1 is the serial mode: all work runs on the calling thread.
int thread_count();
void set_thread_count(int n);

// Keeps freed arena memory for reuse instead of returning it to the OS;
// training steps allocate and free the same large activation buffers every
// iteration and the default trim/mmap policy costs real system time.
void tune_allocator();

// Runs fn(i) for i in [0, n). Work is split into contiguous index blocks,
// one per worker. Each index is processed by exactly one thread with the
// same per-index arithmetic as serial mode, so results never depend on the
// worker count; only cross-item reductions (done by callers, in index
// order) pin the summation order.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

// Block variant: fn(begin, end) per contiguous range, for loops that want
// per-thread scratch.
void parallel_for_blocks(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace oct4d

#endif
