// Copyright 2026 The ConvForge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CONVFORGE_PARALLEL_H_
#define CONVFORGE_PARALLEL_H_

#include <functional>

namespace convforge {

// Worker cap: CONVFORGE_THREADS if set and positive, else the hardware
// concurrency (at least 1).
int MaxWorkers();

// Runs fn(0..n-1) on up to MaxWorkers() threads. Each index runs exactly
// once; the first exception thrown is rethrown after all workers stop.
// Callers write results into per-index slots so output does not depend on
// scheduling.
void ParallelFor(int n, const std::function<void(int)>& fn);

}  // namespace convforge

#endif  // CONVFORGE_PARALLEL_H_
