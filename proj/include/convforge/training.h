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

#ifndef CONVFORGE_TRAINING_H_
#define CONVFORGE_TRAINING_H_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "convforge/agent.h"
#include "convforge/env.h"
#include "convforge/ppo.h"

namespace convforge {

struct UpdateRecord {
  int update = 0;
  std::int64_t env_steps = 0;
  int episodes = 0;
  double mean_return = 0.0;  // completed episodes in this rollout
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

struct TrainReport {
  std::vector<UpdateRecord> updates;
  double j_sp = 0.0;

  // One JSON object per update, then a final {"J_SP": ...} line.
  std::string ToJsonLines() const;
};

inline constexpr int kJspEvalEpisodes = 100;

struct TrainOptions {
  std::string id;
  Level level = Level::kZero;
  // Structured progress lines, one per update, when set.
  std::ostream* progress = nullptr;
};

// Collects learner transitions for PPO. In self-play the learner controls
// both sides and both sides' transitions enter the batch. Against a pool,
// each episode draws a partner and the learner's side uniformly; partners
// act greedily and are never updated.
class RolloutCollector {
 public:
  RolloutCollector(const EnvConfig& config, std::vector<AgentHandle> pool,
                   std::uint64_t seed);

  RolloutBatch Collect(const PolicyParams& params, int min_steps);

  // Returns of episodes finished since the last call.
  std::vector<double> TakeEpisodeReturns();
  // Index into the pool of every episode's partner, in episode order.
  const std::vector<int>& partner_history() const { return partner_history_; }

 private:
  void BeginEpisode();

  EnvConfig config_;
  std::vector<AgentHandle> pool_;
  bool self_play_;
  Rng rng_;
  std::uint64_t episode_counter_ = 0;
  std::vector<int> partner_history_;

  bool need_reset_ = true;
  EnvState state_;
  JointObservation obs_;
  std::array<RecurrentState, 2> recs_;
  std::array<Segment, 2> open_;
  int partner_ = -1;
  int learner_side_ = 0;
  Rng partner_rng_;
  double episode_return_ = 0.0;
  std::vector<double> finished_returns_;
};

// Shared-parameter self-play; the result is tagged with its greedy J_SP.
std::pair<AgentHandle, TrainReport> TrainSelfPlay(const EnvConfig& env_config,
                                                  const PPOConfig& ppo_config,
                                                  std::uint64_t seed,
                                                  const TrainOptions& options);

// Best response to the uniform mixture over `partner_pool`. The checkpoint
// records the pool's ids and the union of the partners' capability sets.
std::pair<AgentHandle, TrainReport> TrainBestResponse(
    const std::vector<AgentHandle>& partner_pool, const EnvConfig& env_config,
    const PPOConfig& ppo_config, std::uint64_t seed, const TrainOptions& options);

}  // namespace convforge

#endif  // CONVFORGE_TRAINING_H_
