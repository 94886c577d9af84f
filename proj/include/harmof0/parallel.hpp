/*
 * Copyright 2026 The HarmoF0 Toolkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace harmof0 {

// Worker-count control. Kernels split work so that every output element is
// produced by exactly one worker with a fixed reduction order, which makes
// results independent of the count.

inline int worker_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_worker_count(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

/// Applies HARMOF0_THREADS when set to a positive integer.
inline void configure_workers_from_env() {
  if (const char* env = std::getenv("HARMOF0_THREADS")) {
    try {
      set_worker_count(std::stoi(env));
    } catch (...) {
      // ignore malformed values
    }
  }
}

}  // namespace harmof0
