#pragma once

#include <cstddef>
#include <functional>

namespace pbooth::nn {

// Runs body(i) for i in [0, n) on up to `threads` workers. Each index must
// write only to its own output slot; callers reduce afterwards in index order
// so results do not depend on scheduling.
void ParallelFor(std::size_t n, std::size_t threads,
                 const std::function<void(std::size_t)>& body);

std::size_t DefaultThreadCount();

}  // namespace pbooth::nn
