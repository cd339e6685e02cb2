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

#include "convforge/conventions.h"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <sstream>

#include "convforge/error.h"
#include "convforge/io.h"
#include "convforge/parallel.h"
#include "convforge/random.h"
#include "convforge/rollout.h"

namespace convforge {
namespace {

std::string ShortestDouble(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::uint64_t IdHash(const std::string& id) {
  return Fnv1a64(id);
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

double EvaluatePair(const AgentHandle& a, const AgentHandle& b,
                    const EnvConfig& config, int n_eval, std::uint64_t seed) {
  CONVFORGE_CHECK(n_eval >= 1, "evaluate_pair: n_eval must be >= 1");
  a.ValidateFor(config);
  b.ValidateFor(config);
  double sum = 0.0;
  for (int e = 0; e < n_eval; ++e) {
    const std::uint64_t s = DeriveSeed(seed, {static_cast<std::uint64_t>(e)});
    sum += (e % 2 == 0 ? PlayEpisode(a, b, config, s) : PlayEpisode(b, a, config, s))
               .total_return;
  }
  return sum / n_eval;
}

std::string CrossPlayMatrix::ToCsv() const {
  std::string out = "id";
  for (const std::string& id : ids) out += "," + id;
  out += "\n";
  for (int i = 0; i < size(); ++i) {
    out += ids[i];
    for (double v : values[i]) out += "," + ShortestDouble(v);
    out += "\n";
  }
  return out;
}

CrossPlayMatrix CrossPlayMatrix::FromCsv(const std::string& csv) {
  std::stringstream ss(csv);
  std::string line;
  CrossPlayMatrix m;
  CONVFORGE_CHECK(static_cast<bool>(std::getline(ss, line)), "empty cross-play CSV");
  auto header = SplitCsvLine(line);
  m.ids.assign(header.begin() + 1, header.end());
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    auto cells = SplitCsvLine(line);
    CONVFORGE_CHECK(cells.size() == m.ids.size() + 1, "ragged cross-play CSV row");
    std::vector<double> row;
    for (size_t k = 1; k < cells.size(); ++k) row.push_back(std::stod(cells[k]));
    m.values.push_back(std::move(row));
  }
  CONVFORGE_CHECK(m.values.size() == m.ids.size(), "cross-play CSV is not square");
  return m;
}

CrossPlayMatrix CrossPlay(const std::vector<AgentHandle>& population,
                          const EnvConfig& config, int n_eval,
                          std::uint64_t seed) {
  const int n = static_cast<int>(population.size());
  CONVFORGE_CHECK(n >= 2, "cross_play: population needs at least 2 policies");
  CrossPlayMatrix m;
  m.n_eval = n_eval;
  m.seed = seed;
  for (const AgentHandle& p : population) m.ids.push_back(p.id);
  m.values.assign(n, std::vector<double>(n, 0.0));
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) pairs.emplace_back(i, j);
  }
  std::vector<double> results(pairs.size());
  ParallelFor(static_cast<int>(pairs.size()), [&](int k) {
    auto [i, j] = pairs[k];
    // Canonical order by id keeps each entry independent of population order.
    const AgentHandle* a = &population[i];
    const AgentHandle* b = &population[j];
    if (b->id < a->id) std::swap(a, b);
    const std::uint64_t s = DeriveSeed(seed, {IdHash(a->id), IdHash(b->id)});
    results[k] = EvaluatePair(*a, *b, config, n_eval, s);
  });
  for (size_t k = 0; k < pairs.size(); ++k) {
    auto [i, j] = pairs[k];
    m.values[i][j] = m.values[j][i] = results[k];
  }
  return m;
}

int ConventionPartition::ClusterOf(int i) const {
  for (size_t c = 0; c < clusters.size(); ++c) {
    if (std::find(clusters[c].begin(), clusters[c].end(), i) != clusters[c].end()) {
      return static_cast<int>(c);
    }
  }
  return -1;
}

nlohmann::json ConventionPartition::ToJson(const std::vector<std::string>& ids) const {
  nlohmann::json j;
  j["epsilon"] = epsilon;
  j["delta"] = delta;
  j["clusters"] = clusters;
  nlohmann::json named = nlohmann::json::array();
  for (const auto& c : clusters) {
    nlohmann::json members = nlohmann::json::array();
    for (int i : c) members.push_back(i < static_cast<int>(ids.size()) ? ids[i] : std::to_string(i));
    named.push_back(members);
  }
  j["cluster_ids"] = named;
  nlohmann::json v = nlohmann::json::array();
  for (const Violation& x : violations) {
    v.push_back({{"pair", {x.i, x.j}},
                 {"type", x.type == Violation::Type::kIntra ? "intra" : "inter"},
                 {"margin", x.margin}});
  }
  j["violations"] = v;
  return j;
}

ConventionPartition ConventionPartition::FromJson(const nlohmann::json& j) {
  ConventionPartition p;
  p.epsilon = j.at("epsilon").get<double>();
  p.delta = j.at("delta").get<double>();
  p.clusters = j.at("clusters").get<std::vector<std::vector<int>>>();
  for (const auto& v : j.at("violations")) {
    Violation x;
    x.i = v.at("pair").at(0).get<int>();
    x.j = v.at("pair").at(1).get<int>();
    x.type = v.at("type").get<std::string>() == "intra" ? Violation::Type::kIntra
                                                         : Violation::Type::kInter;
    x.margin = v.at("margin").get<double>();
    p.violations.push_back(x);
  }
  return p;
}

ConventionPartition PartitionConventions(const std::vector<std::vector<double>>& m,
                                         double epsilon, double delta) {
  const int n = static_cast<int>(m.size());
  for (const auto& row : m) {
    CONVFORGE_CHECK(static_cast<int>(row.size()) == n,
                    "partition_conventions: matrix is not square");
  }
  CONVFORGE_CHECK(epsilon >= 0.0 && delta > epsilon,
                  "partition_conventions: requires delta > epsilon >= 0");
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  auto floor_of = [&](int i, int j) { return std::min(m[i][i], m[j][j]); };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (m[i][j] >= floor_of(i, j) - epsilon) {
        const int a = find(i), b = find(j);
        parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  ConventionPartition p;
  p.epsilon = epsilon;
  p.delta = delta;
  std::vector<int> cluster_of_root(n, -1);
  for (int i = 0; i < n; ++i) {
    const int r = find(i);
    if (cluster_of_root[r] < 0) {
      cluster_of_root[r] = static_cast<int>(p.clusters.size());
      p.clusters.emplace_back();
    }
    p.clusters[cluster_of_root[r]].push_back(i);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const bool same = find(i) == find(j);
      if (same) {
        const double margin = m[i][j] - (floor_of(i, j) - epsilon);
        if (margin < 0) p.violations.push_back({i, j, Violation::Type::kIntra, margin});
      } else {
        const double margin = (floor_of(i, j) - delta) - m[i][j];
        if (margin < 0) p.violations.push_back({i, j, Violation::Type::kInter, margin});
      }
    }
  }
  return p;
}

ConventionPartition PartitionConventions(const CrossPlayMatrix& m, double epsilon,
                                         double delta) {
  return PartitionConventions(m.values, epsilon, delta);
}

EfficiencyScore CoordinationEfficiency(double j_pair, double j_star) {
  CONVFORGE_CHECK(j_star > 0.0, "coordination_efficiency: j_star must be positive");
  EfficiencyScore s;
  s.j_pair = j_pair;
  s.j_star = j_star;
  s.eta = j_pair / j_star;
  return s;
}

std::map<int, AgentHandle> ScriptedRepresentatives(const EnvConfig& config) {
  std::map<int, AgentHandle> reps;
  for (int i = 0; i < config.num_conventions; ++i) {
    reps.emplace(i, AgentHandle::Scripted(config, i));
  }
  return reps;
}

bool IsAdaptivePartner(const AgentHandle& partner) {
  if (partner.meta.level == Level::kOne) return true;
  return partner.meta.level == Level::kTest && partner.kind == AgentKind::kNeural;
}

double OptimalReturn(const AgentHandle& partner, const EnvConfig& config,
                     const std::map<int, AgentHandle>& representatives,
                     int n_eval, std::uint64_t seed, JStarMethod* method) {
  if (!IsAdaptivePartner(partner)) {
    if (method) *method = JStarMethod::kSelfPlay;
    return EvaluatePair(partner, partner, config, n_eval, seed);
  }
  CONVFORGE_CHECK(partner.meta.capability_set.has_value() &&
                      !partner.meta.capability_set->empty(),
                  "optimal_return: adaptive partner '" + partner.id +
                      "' has no capability_set");
  if (method) *method = JStarMethod::kRepertoireMax;
  double best = 0.0;
  bool first = true;
  for (int c : *partner.meta.capability_set) {
    auto it = representatives.find(c);
    CONVFORGE_CHECK(it != representatives.end(),
                    "optimal_return: no representative for convention " +
                        std::to_string(c));
    const double v = EvaluatePair(it->second, partner, config, n_eval, seed);
    if (first || v > best) best = v;
    first = false;
  }
  return best;
}

double DefaultEpsilon(const EnvConfig& config) {
  return 0.05 * GlobalMaxReturn(config);
}

double DefaultDelta(const EnvConfig& config) { return 0.5 * GlobalMaxReturn(config); }

}  // namespace convforge
