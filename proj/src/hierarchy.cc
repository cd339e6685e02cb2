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

#include "convforge/hierarchy.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "convforge/error.h"
#include "convforge/parallel.h"
#include "convforge/random.h"

namespace convforge {
namespace {

std::string TwoDigits(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", i);
  return buf;
}

std::vector<TrainedAgent> TrainJobs(
    int n, const std::function<TrainedAgent(int)>& job) {
  std::vector<TrainedAgent> out(n);
  ParallelFor(n, [&](int i) { out[i] = job(i); });
  return out;
}

}  // namespace

AnchorSelection SelectAnchors(const std::vector<CapabilityProfile>& profiles,
                              int m) {
  CONVFORGE_CHECK(!profiles.empty(), "select_anchors: empty profiles");
  CONVFORGE_CHECK(m >= 1 && m <= static_cast<int>(profiles.size()),
                  "select_anchors: need 1 <= M <= number of profiles");
  std::vector<CapabilityProfile> sorted = profiles;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.rho != b.rho ? a.rho < b.rho : a.id < b.id;
  });
  const double lo = sorted.front().rho, hi = sorted.back().rho;
  AnchorSelection sel;
  std::set<std::string> used;
  for (int j = 0; j < m; ++j) {
    const double t = m == 1 ? lo : lo + (hi - lo) * j / (m - 1);
    sel.targets.push_back(t);
    // sorted is ascending in (rho, id), so strict improvement keeps the
    // lower-rho / lower-id candidate on ties.
    size_t best = 0;
    for (size_t k = 1; k < sorted.size(); ++k) {
      if (std::abs(sorted[k].rho - t) < std::abs(sorted[best].rho - t)) best = k;
    }
    const double rho = sorted[best].rho;
    std::string pick = sorted[best].id;
    for (size_t k = best; k < sorted.size() && sorted[k].rho == rho; ++k) {
      if (!used.count(sorted[k].id)) {
        pick = sorted[k].id;
        break;
      }
    }
    used.insert(pick);
    sel.anchors.push_back(pick);
  }
  return sel;
}

double Jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  int inter = 0;
  for (const auto& x : sa) inter += sb.count(x) ? 1 : 0;
  const int uni = static_cast<int>(sa.size() + sb.size()) - inter;
  return static_cast<double>(inter) / uni;
}

SubsetPlan BuildSubsets(const std::vector<CapabilityProfile>& profiles,
                        const std::vector<std::string>& anchors,
                        double subset_fraction, std::uint64_t seed) {
  CONVFORGE_CHECK(subset_fraction > 0.0 && subset_fraction <= 1.0,
                  "build_subsets: subset_fraction must be in (0,1]");
  std::map<std::string, double> rho;
  for (const auto& p : profiles) rho[p.id] = p.rho;
  SubsetPlan plan;
  plan.m = static_cast<int>(anchors.size());
  plan.anchors = anchors;
  for (const auto& p : profiles) plan.coverage[p.id] = 0;
  for (int j = 0; j < plan.m; ++j) {
    auto it = rho.find(anchors[j]);
    CONVFORGE_CHECK(it != rho.end(), "build_subsets: anchor '" + anchors[j] +
                                         "' is not among the profiles");
    const double ceiling = it->second;
    std::vector<std::string> others;
    for (const auto& p : profiles) {
      if (p.rho <= ceiling && p.id != anchors[j]) others.push_back(p.id);
    }
    std::sort(others.begin(), others.end());
    const int pool_size = static_cast<int>(others.size()) + 1;
    const int take =
        static_cast<int>(std::ceil(subset_fraction * pool_size - 1e-12)) - 1;
    Rng rng(DeriveSeed(seed, {static_cast<std::uint64_t>(j)}));
    // Partial Fisher-Yates: the first `take` entries are the sample.
    for (int k = 0; k < take; ++k) {
      const int r = k + static_cast<int>(rng.Below(others.size() - k));
      std::swap(others[k], others[r]);
    }
    std::vector<std::string> subset(others.begin(), others.begin() + std::max(0, take));
    subset.push_back(anchors[j]);
    std::sort(subset.begin(), subset.end());
    for (const auto& id : subset) ++plan.coverage[id];
    plan.subsets.push_back(std::move(subset));
  }
  plan.jaccard.assign(plan.m, std::vector<double>(plan.m, 0.0));
  for (int a = 0; a < plan.m; ++a) {
    for (int b = 0; b < plan.m; ++b) {
      plan.jaccard[a][b] = Jaccard(plan.subsets[a], plan.subsets[b]);
    }
  }
  return plan;
}

SubsetPlan StratifiedSubsets(const std::vector<CapabilityProfile>& profiles,
                             int m, double subset_fraction, std::uint64_t seed) {
  AnchorSelection sel = SelectAnchors(profiles, m);
  SubsetPlan plan = BuildSubsets(profiles, sel.anchors, subset_fraction, seed);
  plan.targets = sel.targets;
  return plan;
}

nlohmann::json SubsetPlan::ToJson() const {
  return {{"M", m},           {"anchors", anchors}, {"subsets", subsets},
          {"targets", targets}, {"jaccard", jaccard}, {"coverage", coverage}};
}

SubsetPlan SubsetPlan::FromJson(const nlohmann::json& j) {
  SubsetPlan p;
  p.m = j.at("M").get<int>();
  p.anchors = j.at("anchors").get<std::vector<std::string>>();
  p.subsets = j.at("subsets").get<std::vector<std::vector<std::string>>>();
  p.targets = j.at("targets").get<std::vector<double>>();
  p.jaccard = j.at("jaccard").get<std::vector<std::vector<double>>>();
  p.coverage = j.at("coverage").get<std::map<std::string, int>>();
  return p;
}

std::vector<TrainedAgent> GenerateK0(const EnvConfig& env, const PPOConfig& ppo,
                                     int n_seeds, std::uint64_t seed,
                                     const std::string& prefix,
                                     std::ostream* progress) {
  CONVFORGE_CHECK(n_seeds >= 2, "generate_k0: population too small to partition "
                                "(n_seeds must be >= 2)");
  return TrainJobs(n_seeds, [&](int i) {
    TrainOptions opt{prefix + "k0_" + TwoDigits(i), Level::kZero, progress};
    auto [agent, report] =
        TrainSelfPlay(env, ppo, DeriveSeed(seed, {static_cast<std::uint64_t>(i)}), opt);
    return TrainedAgent{std::move(agent), std::move(report)};
  });
}

K0Analysis AnalyzeK0(const std::vector<AgentHandle>& k0, const EnvConfig& env,
                     int n_eval, double epsilon, double delta, std::uint64_t seed,
                     const std::string& prefix) {
  K0Analysis out;
  out.cross_play = CrossPlay(k0, env, n_eval, seed);
  out.partition = PartitionConventions(out.cross_play, epsilon, delta);
  out.learned_clusters = static_cast<int>(out.partition.clusters.size());
  out.population = k0;
  if (out.learned_clusters < 2) {
    out.scripted_fallback = true;
    out.population.clear();
    for (int c = 0; c < env.num_conventions; ++c) {
      AgentHandle a = AgentHandle::Scripted(env, c);
      a.id = prefix + "k0_scripted_" + std::to_string(c);
      a.meta.level = Level::kZero;
      out.population.push_back(std::move(a));
    }
    out.cross_play = CrossPlay(out.population, env, n_eval, seed);
    out.partition = PartitionConventions(out.cross_play, epsilon, delta);
  }
  for (int i = 0; i < static_cast<int>(out.population.size()); ++i) {
    out.population[i].meta.capability_set =
        std::vector<int>{out.partition.ClusterOf(i)};
    out.population[i].meta.j_sp = out.cross_play.values[i][i];
  }
  return out;
}

std::vector<CapabilityProfile> ProfilesFrom(const std::vector<AgentHandle>& k0,
                                            const CrossPlayMatrix& cross_play) {
  CONVFORGE_CHECK(static_cast<int>(k0.size()) == cross_play.size(),
                  "profiles: population and cross-play sizes differ");
  std::vector<CapabilityProfile> out;
  for (int i = 0; i < cross_play.size(); ++i) {
    out.push_back({k0[i].id, cross_play.values[i][i]});
  }
  return out;
}

std::vector<TrainedAgent> TrainK1Population(const SubsetPlan& plan,
                                            const std::vector<AgentHandle>& k0,
                                            const EnvConfig& env,
                                            const PPOConfig& ppo,
                                            std::uint64_t seed,
                                            const std::string& prefix,
                                            std::ostream* progress) {
  std::map<std::string, const AgentHandle*> by_id;
  for (const AgentHandle& a : k0) by_id[a.id] = &a;
  return TrainJobs(plan.m, [&](int j) {
    std::vector<AgentHandle> pool;
    std::set<int> caps;
    for (const std::string& id : plan.subsets[j]) {
      auto it = by_id.find(id);
      CONVFORGE_CHECK(it != by_id.end(), "train_k1: subset member '" + id +
                                             "' is not in the K0 population");
      pool.push_back(*it->second);
      if (it->second->meta.capability_set) {
        caps.insert(it->second->meta.capability_set->begin(),
                    it->second->meta.capability_set->end());
      }
    }
    TrainOptions opt{prefix + "k1_" + TwoDigits(j), Level::kOne, progress};
    auto [agent, report] = TrainBestResponse(
        pool, env, ppo, DeriveSeed(seed, {static_cast<std::uint64_t>(j)}), opt);
    agent.meta.capability_set = std::vector<int>(caps.begin(), caps.end());
    agent.meta.extra["anchor"] = plan.anchors[j];
    return TrainedAgent{std::move(agent), std::move(report)};
  });
}

TrainedAgent TrainK2(const std::vector<AgentHandle>& k0,
                     const std::vector<AgentHandle>& k1, const EnvConfig& env,
                     const PPOConfig& ppo, std::uint64_t seed,
                     const std::string& prefix, std::ostream* progress) {
  CONVFORGE_CHECK(!k0.empty() && !k1.empty(),
                  "train_k2: K0 and K1 populations must be non-empty");
  std::vector<AgentHandle> pool = k0;
  pool.insert(pool.end(), k1.begin(), k1.end());
  TrainOptions opt{prefix + "k2", Level::kTwo, progress};
  auto [agent, report] = TrainBestResponse(pool, env, ppo, seed, opt);
  agent.meta.extra["method"] = "conventionplay";
  return {std::move(agent), std::move(report)};
}

std::string BaselineName(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kBr: return "br";
    case BaselineKind::kFcp: return "fcp";
    case BaselineKind::kSyklrbr: return "syklrbr";
  }
  return "?";
}

BaselineKind ParseBaseline(const std::string& name) {
  if (name == "br") return BaselineKind::kBr;
  if (name == "fcp") return BaselineKind::kFcp;
  if (name == "syklrbr") return BaselineKind::kSyklrbr;
  throw Error("unknown baseline '" + name + "' (expected br|fcp|syklrbr)");
}

std::vector<AgentHandle> FcpPool(const std::vector<AgentHandle>& k0) {
  std::vector<AgentHandle> pool;
  for (const AgentHandle& a : k0) {
    for (double eps : kFcpEpsilons) pool.push_back(AgentHandle::EpsilonGreedy(a, eps));
  }
  return pool;
}

std::vector<TrainedAgent> TrainBaseline(BaselineKind kind,
                                        const std::vector<AgentHandle>& k0,
                                        const EnvConfig& env, const PPOConfig& ppo,
                                        std::uint64_t seed,
                                        const std::string& prefix,
                                        std::ostream* progress) {
  CONVFORGE_CHECK(!k0.empty(), "train_baseline: K0 population is empty");
  const std::string name = BaselineName(kind);
  auto train = [&](const std::vector<AgentHandle>& pool, const std::string& id,
                   Level level, std::uint64_t s) {
    auto [agent, report] =
        TrainBestResponse(pool, env, ppo, s, TrainOptions{id, level, progress});
    agent.meta.extra["method"] = name;
    return TrainedAgent{std::move(agent), std::move(report)};
  };
  std::vector<TrainedAgent> out;
  switch (kind) {
    case BaselineKind::kBr:
      out.push_back(train(k0, prefix + "br", Level::kOne, seed));
      break;
    case BaselineKind::kFcp:
      out.push_back(train(FcpPool(k0), prefix + "fcp", Level::kOne, seed));
      break;
    case BaselineKind::kSyklrbr: {
      out.push_back(train(k0, prefix + "syklrbr_l1", Level::kOne,
                          DeriveSeed(seed, {1})));
      out.push_back(train({out[0].agent}, prefix + "syklrbr_l2", Level::kTwo,
                          DeriveSeed(seed, {2})));
      break;
    }
  }
  return out;
}

}  // namespace convforge
