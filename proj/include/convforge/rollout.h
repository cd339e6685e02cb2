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

#ifndef CONVFORGE_ROLLOUT_H_
#define CONVFORGE_ROLLOUT_H_

#include <array>
#include <cstdint>
#include <vector>

#include "convforge/agent.h"
#include "convforge/env.h"

namespace convforge {

struct EpisodeTrace {
  std::vector<EnvState> states;  // state before each step
  std::vector<JointAction> actions;
  std::vector<double> rewards;
};

struct EpisodeResult {
  double total_return = 0.0;
};

// Plays one episode with `first` on side 0 and `second` on side 1. Neural
// agents act greedily. Seeds for the environment and both agents' sampling
// derive from `seed`.
EpisodeResult PlayEpisode(const AgentHandle& first, const AgentHandle& second,
                          const EnvConfig& config, std::uint64_t seed,
                          EpisodeTrace* trace = nullptr);

// Mean undiscounted return of an agent paired with a copy of itself.
double SelfPlayReturn(const AgentHandle& agent, const EnvConfig& config,
                      int n_episodes, std::uint64_t seed);

}  // namespace convforge

#endif  // CONVFORGE_ROLLOUT_H_
