// Copyright (c) 2026 bonefield contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>

namespace bonefield {

// Global worker count used by parallel kernels. Defaults to the hardware
// concurrency; set_num_threads(1) forces fully serial execution. Results are
// bitwise identical for any thread count: work is split into fixed
// contiguous ranges and every output element is written by exactly one
// worker with a fixed inner summation order.
void set_num_threads(int n);
int num_threads();

// Runs fn(begin, end) over [0, n) split into at most num_threads() chunks.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace bonefield
