#pragma once

#include <cstddef>
#include <functional>

namespace ppa {

// Requested <= 0 falls back to the PARCELLATE_THREADS environment variable,
// then to the hardware concurrency.
std::size_t resolve_thread_count(int requested);

// Runs fn(i) for i in [0, n). Workers pull indices from a shared counter;
// callers must write results into pre-sized slots so the output never
// depends on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace ppa
