#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace poupinn {

// Global worker count; the CLI sets this from --threads.
int thread_count();
void set_thread_count(int n);

// Runs fn(begin, end) over fixed-size chunks of [0, n). Chunk boundaries do
// not depend on the thread count, so any per-chunk reduction combined in
// chunk order yields identical results for every --threads value.
void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t)>& fn);

// Convenience: element-wise loop, chunked internally.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace poupinn
