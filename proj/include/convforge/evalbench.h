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

#ifndef CONVFORGE_EVALBENCH_H_
#define CONVFORGE_EVALBENCH_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "convforge/agent.h"
#include "convforge/conventions.h"
#include "convforge/env.h"
#include "convforge/hierarchy.h"
#include "convforge/rollout.h"
#include "convforge/ppo.h"
#include "json.hpp"

namespace convforge {

struct TestSuite {
  std::vector<AgentHandle> k0_test;  // scripted, one per convention
  std::vector<AgentHandle> k1_test;  // best responses to capped subsets
  std::vector<double> k1_optimum;    // repertoire optimum per k1_test agent
  SubsetPlan plan;
  std::vector<std::uint64_t> seeds;
};

inline constexpr int kDefaultEvalEpisodes = 200;

// Capabilities of the scripted test policies: MaxConventionReturn(i).
std::vector<CapabilityProfile> TestCapabilities(const EnvConfig& env);

// Scripted K0-test policies plus M best responses trained on stratified
// subsets of them. Each K1-test agent's capability set holds the convention
// indices of its subset, and its repertoire optimum is measured once.
TestSuite BuildTestSuite(const EnvConfig& env, const PPOConfig& ppo,
                         std::uint64_t seed, int m = 0,
                         double subset_fraction = 0.75,
                         int n_eval = kDefaultEvalEpisodes,
                         std::ostream* progress = nullptr);

// Scripted part of a suite only (no training). Used by tests and the
// service.
TestSuite ScriptedSuite(const EnvConfig& env);

struct Pairing {
  std::string partner;
  double j_pair = 0.0;
  double j_star = 0.0;
  double eta_percent = 0.0;
};

// Efficiency of one agent against a suite, all values in percent.
struct MethodRow {
  std::optional<double> k0_test;
  std::optional<double> k1_test;
  std::optional<double> self_play;
  std::vector<Pairing> k0_pairings;
  std::vector<Pairing> k1_pairings;

  nlohmann::json ToJson() const;
  static MethodRow FromJson(const nlohmann::json& j);
};

// K0 cells use the partner's self-play optimum, K1 cells the partner's
// repertoire optimum, and Self-Play is J_SP / best convention return.
MethodRow EvaluateMethod(const AgentHandle& agent, const TestSuite& suite,
                         const EnvConfig& env, int n_eval, std::uint64_t seed);

struct Cell {
  double mean = 0.0;
  double std = 0.0;
  int n = 0;  // seeds contributing; 0 renders as n/a
};

struct EfficiencyReport {
  std::string env;
  std::string reward_mode;
  std::vector<std::uint64_t> seeds;
  int n_eval = 0;
  std::vector<std::string> methods;  // row order
  std::map<std::string, std::array<Cell, 3>> cells;  // K0, K1, Self-Play

  nlohmann::json ToJson() const;
};

// Means and sample standard deviations across pipeline seeds.
EfficiencyReport AggregateRows(
    const std::string& env, const std::string& reward_mode,
    const std::vector<std::uint64_t>& seeds, int n_eval,
    const std::vector<std::string>& methods,
    const std::map<std::string, std::vector<MethodRow>>& rows_by_method);

enum class ReportFormat { kCsv, kMarkdown };

// Column order K0 Test, K1 Test, Self-Play; "mean ± std" at 2 decimals;
// missing cells as n/a. `footer` (e.g. the manifest hash) is appended.
std::string ExportReport(const EfficiencyReport& report, ReportFormat format,
                         const std::string& footer = "");

inline constexpr int kNoConvention = -1;

struct SteeringRecord {
  std::vector<JointAction> actions;
  std::vector<double> rewards;
  std::vector<std::array<int, 2>> conventions;  // per-step targets [agent, partner]
  std::array<int, 2> final_convention = {kNoConvention, kNoConvention};
  bool converged = false;
  int partner_switches = 0;
  int agent_side = 0;

  // Shared final convention, or kNoConvention when not converged.
  int team_convention() const {
    return converged ? final_convention[0] : kNoConvention;
  }
  nlohmann::json ToJson() const;
};

struct SteeringSummary {
  // Key kNoConvention holds the unconverged share; values sum to 1.
  std::map<int, double> final_distribution;
  double convergence_rate = 0.0;
  double mean_partner_switches = 0.0;
  int modal_convention = kNoConvention;

  nlohmann::json ToJson() const;
};

struct SteeringResult {
  std::vector<SteeringRecord> records;
  SteeringSummary summary;
};

// Builds the record of one finished episode seen from `agent_side`.
SteeringRecord MakeSteeringRecord(const EnvConfig& env, const EpisodeTrace& trace,
                                  int agent_side);

// Per-step convention: matrix = current action, pmr = nearest landmark.
// Final convention = modal over the last 20% of steps (lowest index on ties).
// The agent alternates sides across episodes.
SteeringResult SteeringAnalysis(const AgentHandle& agent,
                                const AgentHandle& partner, const EnvConfig& env,
                                int n_episodes, std::uint64_t seed);

}  // namespace convforge

#endif  // CONVFORGE_EVALBENCH_H_
