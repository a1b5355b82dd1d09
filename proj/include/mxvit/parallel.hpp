// Copyright 2026 The mxvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace mxvit {

// Calls fn(i) for i in [0, n) on up to `threads` workers with a fixed
// strided partition. Each index is handled exactly once, so results written
// per index do not depend on the thread count. If calls throw, the
// exception from the smallest failing index is rethrown.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace mxvit
