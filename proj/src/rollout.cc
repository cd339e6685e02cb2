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

#include "convforge/rollout.h"

#include "convforge/error.h"
#include "convforge/random.h"

namespace convforge {

EpisodeResult PlayEpisode(const AgentHandle& first, const AgentHandle& second,
                          const EnvConfig& config, std::uint64_t seed,
                          EpisodeTrace* trace) {
  first.ValidateFor(config);
  second.ValidateFor(config);
  const std::array<const AgentHandle*, 2> agents = {&first, &second};
  auto [state, obs] = Reset(config, DeriveSeed(seed, {0}));
  std::array<Rng, 2> rngs = {Rng(DeriveSeed(seed, {1})), Rng(DeriveSeed(seed, {2}))};
  std::array<RecurrentState, 2> recs = {first.InitialState(),
                                        second.InitialState()};
  EpisodeResult result;
  bool done = false;
  while (!done) {
    JointAction act;
    for (int s = 0; s < 2; ++s) {
      act[s] = Act(*agents[s], config, recs[s], obs[s], rngs[s], /*greedy=*/true);
    }
    if (trace) {
      trace->states.push_back(state);
      trace->actions.push_back(act);
    }
    auto [next, step] = Step(state, config, act);
    state = next;
    obs = std::move(step.observations);
    result.total_return += step.reward;
    if (trace) trace->rewards.push_back(step.reward);
    done = step.done;
  }
  return result;
}

double SelfPlayReturn(const AgentHandle& agent, const EnvConfig& config,
                      int n_episodes, std::uint64_t seed) {
  CONVFORGE_CHECK(n_episodes >= 1, "self-play evaluation needs >= 1 episode");
  double sum = 0.0;
  for (int e = 0; e < n_episodes; ++e) {
    sum += PlayEpisode(agent, agent, config,
                       DeriveSeed(seed, {static_cast<std::uint64_t>(e)}))
               .total_return;
  }
  return sum / n_episodes;
}

}  // namespace convforge
