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

#ifndef CONVFORGE_CONVENTIONS_H_
#define CONVFORGE_CONVENTIONS_H_

// Cross-play evaluation, convention partitioning under the intra/inter
// compatibility margins, and coordination efficiency.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "convforge/agent.h"
#include "convforge/env.h"
#include "json.hpp"

namespace convforge {

// Mean return over n_eval episodes; even episodes put `a` on side 0, odd
// ones on side 1. Neural agents act greedily.
double EvaluatePair(const AgentHandle& a, const AgentHandle& b,
                    const EnvConfig& config, int n_eval, std::uint64_t seed);

struct CrossPlayMatrix {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> values;
  int n_eval = 0;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(ids.size()); }
  std::string ToCsv() const;
  static CrossPlayMatrix FromCsv(const std::string& csv);
};

// All pairs including the diagonal. The seed of each pair derives from the
// two policy ids, so relabeling the population permutes the matrix exactly.
CrossPlayMatrix CrossPlay(const std::vector<AgentHandle>& population,
                          const EnvConfig& config, int n_eval,
                          std::uint64_t seed);

struct Violation {
  int i = 0;
  int j = 0;
  enum class Type { kIntra, kInter } type = Type::kIntra;
  // Signed amount by which the rule is missed (negative).
  double margin = 0.0;
};

struct ConventionPartition {
  std::vector<std::vector<int>> clusters;  // sorted, ordered by first member
  double epsilon = 0.0;
  double delta = 0.0;
  std::vector<Violation> violations;

  // Cluster index of policy i.
  int ClusterOf(int i) const;
  nlohmann::json ToJson(const std::vector<std::string>& ids) const;
  static ConventionPartition FromJson(const nlohmann::json& j);
};

// Clusters are connected components of the graph with an edge (i, j) iff
// m[i][j] >= min(m[i][i], m[j][j]) - epsilon. Every pair that breaks the
// intra rule inside a cluster, or the inter rule
// m[i][j] <= min(m[i][i], m[j][j]) - delta across clusters, is reported.
ConventionPartition PartitionConventions(const CrossPlayMatrix& m,
                                         double epsilon, double delta);
ConventionPartition PartitionConventions(
    const std::vector<std::vector<double>>& m, double epsilon, double delta);

enum class JStarMethod { kSelfPlay, kRepertoireMax };

struct EfficiencyScore {
  double eta = 0.0;
  double j_pair = 0.0;
  double j_star = 0.0;
  std::string partner_id;
  JStarMethod j_star_method = JStarMethod::kSelfPlay;

  double percent() const { return 100.0 * eta; }
};

EfficiencyScore CoordinationEfficiency(double j_pair, double j_star);

// Scripted representative per convention, used as the stand-in for the best
// member of that convention.
std::map<int, AgentHandle> ScriptedRepresentatives(const EnvConfig& config);

// Whether a partner is treated as adaptive (repertoire optimum) rather than
// fixed-convention (self-play optimum).
bool IsAdaptivePartner(const AgentHandle& partner);

// Best return attainable with the partner. Fixed-convention partners: their
// measured self-play return. Adaptive partners: the best pairing of the
// partner with a representative of a convention in its capability set.
double OptimalReturn(const AgentHandle& partner, const EnvConfig& config,
                     const std::map<int, AgentHandle>& representatives,
                     int n_eval, std::uint64_t seed,
                     JStarMethod* method = nullptr);

// Default compatibility margins: 0.05 and 0.5 of the best convention return.
double DefaultEpsilon(const EnvConfig& config);
double DefaultDelta(const EnvConfig& config);

}  // namespace convforge

#endif  // CONVFORGE_CONVENTIONS_H_
