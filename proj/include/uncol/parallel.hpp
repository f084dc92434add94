// Copyright 2026 The uncol Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace uncol {

// Worker cap: UNCOL_THREADS if set and positive, otherwise the hardware
// concurrency (at least 1).
int worker_count();

// Runs fn(i) for i in [0, n) on up to worker_count() threads. Callers write
// into per-index slots and reduce in index order, so results do not depend on
// the thread count. The first exception thrown by fn is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace uncol
