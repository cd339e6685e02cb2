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

#ifndef CONVFORGE_ENV_H_
#define CONVFORGE_ENV_H_

// The two cooperative two-agent environments: a repeated matrix game where
// reward requires matching actions, and point-mass rendezvous where reward
// requires both agents to sit on the same landmark.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace convforge {

enum class EnvId { kMatrix, kPmr };
enum class RewardMode { kUniform, kDifferentiated };

std::string EnvIdName(EnvId id);
EnvId ParseEnvId(const std::string& name);
std::string RewardModeName(RewardMode mode);
RewardMode ParseRewardMode(const std::string& name);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct PmrPhysics {
  double dt = 0.1;
  double accel_magnitude = 1.0;
  double velocity_cap = 0.5;
  double damping = 0.95;
  double capture_radius = 0.15;
  double spawn_half_width = 0.2;
};

inline constexpr int kPmrNumActions = 9;  // null + 8 compass directions
inline constexpr int kNoAction = -1;

struct EnvConfig {
  EnvId env_id = EnvId::kMatrix;
  RewardMode reward_mode = RewardMode::kUniform;
  int num_conventions = 4;
  int horizon = 10;
  std::vector<double> payoff_values;
  PmrPhysics pmr_physics;
  std::vector<Vec2> landmark_positions;

  // Defaults: diagonal payoffs 1.0 (uniform) or [1, .75, .5, .25]
  // (differentiated); T=10 matrix / T=50 pmr; landmarks at (+-0.6, +-0.6).
  static EnvConfig Make(EnvId env_id, RewardMode mode);

  // Throws Error naming the first violated invariant.
  void Validate() const;

  int ObsDim() const;
  int NumActions() const;
  double MaxPayoff() const;
  // Stable identifier used for caching and manifests.
  std::string Key() const;
};

void to_json(nlohmann::json& j, const EnvConfig& c);
void from_json(const nlohmann::json& j, EnvConfig& c);

struct EnvState {
  int step_index = 0;
  std::array<int, 2> last_action = {kNoAction, kNoAction};  // matrix
  std::array<Vec2, 2> position{};                            // pmr
  std::array<Vec2, 2> velocity{};                            // pmr
  std::uint64_t rng_state = 0;
};

nlohmann::json StateToJson(const EnvState& state, const EnvConfig& config);

using Observation = std::vector<double>;
using JointObservation = std::array<Observation, 2>;
using JointAction = std::array<int, 2>;

struct StepResult {
  JointObservation observations;
  double reward = 0.0;
  bool done = false;
};

std::pair<EnvState, JointObservation> Reset(const EnvConfig& config,
                                            std::uint64_t seed);
std::pair<EnvState, StepResult> Step(const EnvState& state,
                                     const EnvConfig& config,
                                     const JointAction& joint_action);

// Observation for one agent; the partner's slot is the other index.
Observation Observe(const EnvState& state, const EnvConfig& config,
                    int agent);

// Acceleration vector of a discrete pmr action.
Vec2 PmrAcceleration(const EnvConfig& config, int action);

// Discrete acceleration that brings a point mass at (position, velocity)
// closest to the landmark on the next step (null when already at rest on
// it). Ties go to the lowest action index.
int GoToLandmarkAction(const EnvConfig& config, const Vec2& position,
                       const Vec2& velocity, int landmark);

// Index of the landmark nearest to a point (lowest index on ties).
int NearestLandmark(const EnvConfig& config, const Vec2& position);

struct MonteCarloEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  int episodes = 0;
};

inline constexpr int kMaxReturnEpisodes = 1000;
inline constexpr std::uint64_t kEvalSpawnSeed = 0x5EED0FE7A1ULL;

// Return of a team that both play convention i optimally. Matrix: T times
// the diagonal payoff. Pmr: scripted GoToLandmark(i) pair averaged over
// kMaxReturnEpisodes seeded spawns. Cached per (config, i).
double MaxConventionReturn(const EnvConfig& config, int convention);
MonteCarloEstimate ScriptedRendezvousReturn(const EnvConfig& config,
                                            int convention, int episodes);

// Largest MaxConventionReturn over all conventions.
double GlobalMaxReturn(const EnvConfig& config);

// One JSON-lines record per step: state, actions, reward.
void WriteTrajectoryLine(std::ostream& out, const EnvState& state,
                         const EnvConfig& config, const JointAction& actions,
                         double reward);

}  // namespace convforge

#endif  // CONVFORGE_ENV_H_
