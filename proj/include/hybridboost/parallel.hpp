#pragma once

#include <cstddef>
#include <functional>

namespace hybridboost {

/// Worker count used by batch-parallel kernels. Defaults to 1, or to
/// HYBRIDBOOST_THREADS when that variable is set at first use.
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, n). Work is split into contiguous chunks; callers
/// must write to disjoint per-index outputs so results do not depend on the
/// thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace hybridboost
