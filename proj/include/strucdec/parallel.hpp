#pragma once

#include <cstddef>
#include <functional>

namespace strucdec {

/// Worker count: STRUCDEC_THREADS if set, else hardware concurrency.
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Each index is executed exactly once; callers
/// must write to disjoint outputs so results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace strucdec
