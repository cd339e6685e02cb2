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

#ifndef CONVFORGE_HIERARCHY_H_
#define CONVFORGE_HIERARCHY_H_

// The three training stages: a self-play K0 population, K1 followers trained
// on capability-capped subsets of it, and the K2 agent trained against both.
// Also the BR / FCP / SyKLRBR baselines built on the same K0 population.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "convforge/agent.h"
#include "convforge/conventions.h"
#include "convforge/env.h"
#include "convforge/ppo.h"
#include "convforge/training.h"
#include "json.hpp"

namespace convforge {

struct CapabilityProfile {
  std::string id;
  double rho = 0.0;  // self-play return
};

struct AnchorSelection {
  std::vector<std::string> anchors;
  std::vector<double> targets;
};

// Targets linearly spaced over [min rho, max rho]; each picks the profile
// with the closest rho (ties: lower rho, then lower id). A policy already
// used as an anchor is skipped in favour of an equal-rho duplicate when one
// is left; otherwise the anchor repeats.
AnchorSelection SelectAnchors(const std::vector<CapabilityProfile>& profiles,
                              int m);

struct SubsetPlan {
  int m = 0;
  std::vector<std::string> anchors;
  std::vector<std::vector<std::string>> subsets;  // sorted ids, anchor included
  std::vector<double> targets;
  std::vector<std::vector<double>> jaccard;
  std::map<std::string, int> coverage;  // every profile id, possibly 0

  nlohmann::json ToJson() const;
  static SubsetPlan FromJson(const nlohmann::json& j);
};

double Jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Eligibility pool of anchor j: profiles with rho <= rho(anchor j). Subset:
// the anchor plus ceil(fraction * |pool|) - 1 further pool members drawn
// uniformly without replacement.
SubsetPlan BuildSubsets(const std::vector<CapabilityProfile>& profiles,
                        const std::vector<std::string>& anchors,
                        double subset_fraction, std::uint64_t seed);

// SelectAnchors followed by BuildSubsets, with targets recorded in the plan.
SubsetPlan StratifiedSubsets(const std::vector<CapabilityProfile>& profiles,
                             int m, double subset_fraction, std::uint64_t seed);

struct TrainedAgent {
  AgentHandle agent;
  TrainReport report;
};

// n_seeds independent self-play runs, ids "<prefix>k0_NN".
std::vector<TrainedAgent> GenerateK0(const EnvConfig& env, const PPOConfig& ppo,
                                     int n_seeds, std::uint64_t seed,
                                     const std::string& prefix,
                                     std::ostream* progress = nullptr);

struct K0Analysis {
  std::vector<AgentHandle> population;  // possibly the scripted fallback
  CrossPlayMatrix cross_play;
  ConventionPartition partition;
  bool scripted_fallback = false;
  int learned_clusters = 0;  // clusters found among the learned policies
};

// Cross-play + partition over K0. When fewer than two conventions emerge the
// population is replaced by one scripted policy per convention. Every
// returned K0 agent carries capability_set = {its cluster}.
K0Analysis AnalyzeK0(const std::vector<AgentHandle>& k0, const EnvConfig& env,
                     int n_eval, double epsilon, double delta, std::uint64_t seed,
                     const std::string& prefix);

std::vector<CapabilityProfile> ProfilesFrom(const std::vector<AgentHandle>& k0,
                                            const CrossPlayMatrix& cross_play);

// One best response per subset; capability_set = clusters meeting the subset.
std::vector<TrainedAgent> TrainK1Population(const SubsetPlan& plan,
                                            const std::vector<AgentHandle>& k0,
                                            const EnvConfig& env,
                                            const PPOConfig& ppo,
                                            std::uint64_t seed,
                                            const std::string& prefix,
                                            std::ostream* progress = nullptr);

// Best response to the uniform mixture of K0 and K1.
TrainedAgent TrainK2(const std::vector<AgentHandle>& k0,
                     const std::vector<AgentHandle>& k1, const EnvConfig& env,
                     const PPOConfig& ppo, std::uint64_t seed,
                     const std::string& prefix, std::ostream* progress = nullptr);

enum class BaselineKind { kBr, kFcp, kSyklrbr };
std::string BaselineName(BaselineKind kind);
BaselineKind ParseBaseline(const std::string& name);

inline constexpr double kFcpEpsilons[] = {0.0, 0.1, 0.25, 0.5};

// Partner pool used by the FCP baseline: each K0 agent under every epsilon.
std::vector<AgentHandle> FcpPool(const std::vector<AgentHandle>& k0);

// br: BR(K0). fcp: BR(FcpPool(K0)). syklrbr: level-1 BR(K0) followed by a
// level-2 BR to that level-1 agent. The evaluated agent is the last entry.
std::vector<TrainedAgent> TrainBaseline(BaselineKind kind,
                                        const std::vector<AgentHandle>& k0,
                                        const EnvConfig& env, const PPOConfig& ppo,
                                        std::uint64_t seed,
                                        const std::string& prefix,
                                        std::ostream* progress = nullptr);

}  // namespace convforge

#endif  // CONVFORGE_HIERARCHY_H_
