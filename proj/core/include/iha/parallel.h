/*
 * Copyright 2026 The IHA Audit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef IHA_PARALLEL_H_
#define IHA_PARALLEL_H_

#include <cstddef>
#include <functional>

#include "absl/status/status.h"

namespace iha {

// Runs task(i) for i in [0, count) on at most `threads` workers. Tasks must
// not share mutable state. Returns the error of the lowest failing index, so
// the reported failure does not depend on scheduling.
absl::Status ParallelFor(std::size_t count, int threads,
                         const std::function<absl::Status(std::size_t)>& task);

// Worker count from IHA_THREADS, else hardware concurrency (at least 1).
int DefaultThreadCount();

}  // namespace iha

#endif  // IHA_PARALLEL_H_
