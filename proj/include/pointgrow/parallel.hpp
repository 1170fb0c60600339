#pragma once

#include <cstddef>
#include <functional>

namespace pointgrow {

/// Worker cap from POINTGROW_THREADS (default: hardware concurrency, min 1).
int default_thread_count();

/// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
/// executed exactly once; callers write results into per-index slots and
/// reduce in index order afterwards, so results do not depend on `threads`.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

}  // namespace pointgrow
