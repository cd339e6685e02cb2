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

#ifndef CONVFORGE_AGENT_H_
#define CONVFORGE_AGENT_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "convforge/env.h"
#include "convforge/network.h"
#include "convforge/random.h"
#include "json.hpp"

namespace convforge {

enum class AgentKind { kNeural, kFixedAction, kGoToLandmark, kEpsilonGreedy };

// Hierarchy level an agent was produced for.
enum class Level { kZero, kOne, kTwo, kTest };

struct AgentMetadata {
  Level level = Level::kZero;
  std::uint64_t seed = 0;
  // Conventions the agent can coordinate on; set for every trained K1 agent.
  std::optional<std::vector<int>> capability_set;
  std::optional<double> j_sp;
  // Free-form provenance (method name, partner pool ids).
  nlohmann::json extra = nlohmann::json::object();
};

struct AgentHandle {
  AgentKind kind = AgentKind::kFixedAction;
  std::string id;
  int convention = 0;    // scripted kinds
  double epsilon = 0.0;  // epsilon-greedy
  std::shared_ptr<const PolicyParams> params;  // neural
  std::shared_ptr<const AgentHandle> inner;    // epsilon-greedy
  AgentMetadata meta;

  static AgentHandle Neural(std::string id, PolicyParams params,
                            AgentMetadata meta);
  static AgentHandle FixedAction(int action);
  static AgentHandle GoToLandmark(int landmark);
  // Scripted convention policy appropriate for the environment.
  static AgentHandle Scripted(const EnvConfig& config, int convention);
  static AgentHandle EpsilonGreedy(AgentHandle inner, double epsilon);

  bool IsScripted() const {
    return kind == AgentKind::kFixedAction || kind == AgentKind::kGoToLandmark;
  }
  // Throws if the handle cannot act in this environment.
  void ValidateFor(const EnvConfig& config) const;
  // Recurrent state at episode start (empty for scripted kinds).
  RecurrentState InitialState() const;
};

// Picks the next action and advances the agent's recurrent state. Neural
// agents take the argmax when greedy (lowest index on ties) and sample
// otherwise. Epsilon-greedy agents always advance their inner policy.
int Act(const AgentHandle& agent, const EnvConfig& config, RecurrentState& rec,
        const Observation& obs, Rng& rng, bool greedy);

int Argmax(const std::vector<double>& values);
int SampleCategorical(const std::vector<double>& probs, Rng& rng);

std::string LevelName(Level level);
nlohmann::json LevelToJson(Level level);
Level LevelFromJson(const nlohmann::json& j);

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json CheckpointToJson(const AgentHandle& agent, EnvId env_id);
AgentHandle CheckpointFromJson(const nlohmann::json& j, EnvId* env_id = nullptr);
void SaveCheckpoint(const std::filesystem::path& path, const AgentHandle& agent,
                    EnvId env_id);
AgentHandle LoadCheckpoint(const std::filesystem::path& path,
                           EnvId* env_id = nullptr);

}  // namespace convforge

#endif  // CONVFORGE_AGENT_H_
