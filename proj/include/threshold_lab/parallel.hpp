#pragma once

#include <cstddef>
#include <functional>

namespace threshold_lab {

/// Worker count used by parallel_for; 0 restores the hardware default.
void set_thread_count(unsigned count);
unsigned thread_count();

/// Runs body(i) for i in [0, n) on a worker pool. Results written per index and
/// reduced in index order afterwards do not depend on the worker count.
/// The first exception thrown by a worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace threshold_lab
