#pragma once

#include <cstdint>
#include <functional>

namespace geodisagg {

/// requested <= 0 means one thread per available core.
int resolve_threads(int requested);

/// Runs body(0..count-1) on up to `threads` workers. Results must be written by
/// index so the outcome does not depend on scheduling. The first exception (by
/// index) is rethrown after all workers finish.
void parallel_for(int count, int threads, const std::function<void(int)>& body);

/// Independent stream seed derived from a master seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace geodisagg
