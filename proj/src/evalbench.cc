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

#include "convforge/evalbench.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>

#include "convforge/error.h"
#include "convforge/random.h"
#include "convforge/rollout.h"

namespace convforge {
namespace {

enum SuiteStream : std::uint64_t { kSubsets = 1, kTrain = 2, kOptimum = 3 };
enum EvalStream : std::uint64_t { kK0 = 1, kK1 = 2, kSelf = 3 };

std::string Fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string MethodLabel(const std::string& m) {
  if (m == "br") return "BestResponse";
  if (m == "fcp") return "FCP";
  if (m == "syklrbr") return "SyKLRBR";
  if (m == "conventionplay") return "ConventionPlay";
  return m;
}

std::string EnvTitle(const std::string& env, const std::string& mode) {
  std::string name = env == "matrix" ? "Matrix Game" : "PMR";
  std::string m = mode;
  if (!m.empty()) m[0] = static_cast<char>(std::toupper(m[0]));
  return name + " (" + m + ")";
}

nlohmann::json PairingsJson(const std::vector<Pairing>& ps) {
  nlohmann::json out = nlohmann::json::array();
  for (const Pairing& p : ps) {
    out.push_back({{"partner", p.partner},
                   {"j_pair", p.j_pair},
                   {"j_star", p.j_star},
                   {"eta", p.eta_percent}});
  }
  return out;
}

std::vector<Pairing> PairingsFrom(const nlohmann::json& j) {
  std::vector<Pairing> out;
  for (const auto& p : j) {
    out.push_back({p.at("partner").get<std::string>(), p.at("j_pair").get<double>(),
                   p.at("j_star").get<double>(), p.at("eta").get<double>()});
  }
  return out;
}

nlohmann::json OptJson(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> OptFrom(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::vector<CapabilityProfile> TestCapabilities(const EnvConfig& env) {
  std::vector<CapabilityProfile> out;
  for (int i = 0; i < env.num_conventions; ++i) {
    out.push_back({AgentHandle::Scripted(env, i).id, MaxConventionReturn(env, i)});
  }
  return out;
}

TestSuite ScriptedSuite(const EnvConfig& env) {
  TestSuite suite;
  for (int i = 0; i < env.num_conventions; ++i) {
    suite.k0_test.push_back(AgentHandle::Scripted(env, i));
  }
  return suite;
}

TestSuite BuildTestSuite(const EnvConfig& env, const PPOConfig& ppo,
                         std::uint64_t seed, int m, double subset_fraction,
                         int n_eval, std::ostream* progress) {
  TestSuite suite = ScriptedSuite(env);
  suite.seeds = {seed};
  if (m <= 0) m = env.num_conventions;
  const std::vector<CapabilityProfile> profiles = TestCapabilities(env);
  suite.plan = StratifiedSubsets(profiles, m, subset_fraction,
                                 DeriveSeed(seed, {kSubsets}));
  std::map<std::string, int> convention_of;
  for (int i = 0; i < env.num_conventions; ++i)
    convention_of[suite.k0_test[i].id] = i;
  const auto reps = ScriptedRepresentatives(env);
  for (int j = 0; j < suite.plan.m; ++j) {
    std::vector<AgentHandle> pool;
    std::vector<int> caps;
    for (const std::string& id : suite.plan.subsets[j]) {
      const int c = convention_of.at(id);
      pool.push_back(suite.k0_test[c]);
      caps.push_back(c);
    }
    std::sort(caps.begin(), caps.end());
    char id[64];
    std::snprintf(id, sizeof(id), "test_k1_%02d", j);
    auto [agent, report] = TrainBestResponse(
        pool, env, ppo, DeriveSeed(seed, {kTrain, static_cast<std::uint64_t>(j)}),
        TrainOptions{id, Level::kTest, progress});
    agent.meta.capability_set = caps;
    agent.meta.extra["anchor"] = suite.plan.anchors[j];
    const double opt = OptimalReturn(
        agent, env, reps, n_eval,
        DeriveSeed(seed, {kOptimum, static_cast<std::uint64_t>(j)}));
    agent.meta.extra["j_star"] = opt;
    suite.k1_optimum.push_back(opt);
    suite.k1_test.push_back(std::move(agent));
  }
  return suite;
}

nlohmann::json MethodRow::ToJson() const {
  return {{"k0_test", OptJson(k0_test)},
          {"k1_test", OptJson(k1_test)},
          {"self_play", OptJson(self_play)},
          {"k0_pairings", PairingsJson(k0_pairings)},
          {"k1_pairings", PairingsJson(k1_pairings)}};
}

MethodRow MethodRow::FromJson(const nlohmann::json& j) {
  MethodRow r;
  r.k0_test = OptFrom(j, "k0_test");
  r.k1_test = OptFrom(j, "k1_test");
  r.self_play = OptFrom(j, "self_play");
  if (j.contains("k0_pairings")) r.k0_pairings = PairingsFrom(j["k0_pairings"]);
  if (j.contains("k1_pairings")) r.k1_pairings = PairingsFrom(j["k1_pairings"]);
  return r;
}

MethodRow EvaluateMethod(const AgentHandle& agent, const TestSuite& suite,
                         const EnvConfig& env, int n_eval, std::uint64_t seed) {
  MethodRow row;
  const auto reps = ScriptedRepresentatives(env);
  if (!suite.k0_test.empty()) {
    double sum = 0.0;
    for (size_t i = 0; i < suite.k0_test.size(); ++i) {
      const AgentHandle& p = suite.k0_test[i];
      const std::uint64_t s = DeriveSeed(seed, {kK0, i});
      Pairing pr{p.id, EvaluatePair(agent, p, env, n_eval, s),
                 OptimalReturn(p, env, reps, n_eval, s), 0.0};
      pr.eta_percent = CoordinationEfficiency(pr.j_pair, pr.j_star).percent();
      sum += pr.eta_percent;
      row.k0_pairings.push_back(pr);
    }
    row.k0_test = sum / suite.k0_test.size();
  }
  if (!suite.k1_test.empty()) {
    CONVFORGE_CHECK(suite.k1_optimum.size() == suite.k1_test.size(),
                    "evaluate_method: missing repertoire optimum for a k1_test partner");
    double sum = 0.0;
    for (size_t i = 0; i < suite.k1_test.size(); ++i) {
      const AgentHandle& p = suite.k1_test[i];
      Pairing pr{p.id,
                 EvaluatePair(agent, p, env, n_eval, DeriveSeed(seed, {kK1, i})),
                 suite.k1_optimum[i], 0.0};
      pr.eta_percent = CoordinationEfficiency(pr.j_pair, pr.j_star).percent();
      sum += pr.eta_percent;
      row.k1_pairings.push_back(pr);
    }
    row.k1_test = sum / suite.k1_test.size();
  }
  row.self_play = 100.0 *
                  SelfPlayReturn(agent, env, n_eval, DeriveSeed(seed, {kSelf})) /
                  GlobalMaxReturn(env);
  return row;
}

nlohmann::json EfficiencyReport::ToJson() const {
  nlohmann::json rows = nlohmann::json::object();
  static const char* kCols[3] = {"k0_test", "k1_test", "self_play"};
  for (const auto& m : methods) {
    nlohmann::json r;
    const auto it = cells.find(m);
    for (int c = 0; c < 3; ++c) {
      if (it == cells.end() || it->second[c].n == 0) {
        r[kCols[c]] = nullptr;
      } else {
        r[kCols[c]] = {{"mean", it->second[c].mean},
                       {"std", it->second[c].std},
                       {"n", it->second[c].n}};
      }
    }
    rows[m] = r;
  }
  return {{"env", env},       {"reward_mode", reward_mode}, {"seeds", seeds},
          {"n_eval", n_eval}, {"methods", methods},         {"rows", rows}};
}

EfficiencyReport AggregateRows(
    const std::string& env, const std::string& reward_mode,
    const std::vector<std::uint64_t>& seeds, int n_eval,
    const std::vector<std::string>& methods,
    const std::map<std::string, std::vector<MethodRow>>& rows_by_method) {
  EfficiencyReport rep;
  rep.env = env;
  rep.reward_mode = reward_mode;
  rep.seeds = seeds;
  rep.n_eval = n_eval;
  rep.methods = methods;
  for (const auto& m : methods) {
    std::array<Cell, 3> cells{};
    auto it = rows_by_method.find(m);
    if (it != rows_by_method.end()) {
      for (int c = 0; c < 3; ++c) {
        std::vector<double> xs;
        for (const MethodRow& r : it->second) {
          const auto& v = c == 0 ? r.k0_test : c == 1 ? r.k1_test : r.self_play;
          if (v) xs.push_back(*v);
        }
        Cell& cell = cells[c];
        cell.n = static_cast<int>(xs.size());
        if (xs.empty()) continue;
        for (double x : xs) cell.mean += x;
        cell.mean /= xs.size();
        if (xs.size() > 1) {
          double ss = 0.0;
          for (double x : xs) ss += (x - cell.mean) * (x - cell.mean);
          cell.std = std::sqrt(ss / (xs.size() - 1));
        }
      }
    }
    rep.cells[m] = cells;
  }
  return rep;
}

std::string ExportReport(const EfficiencyReport& report, ReportFormat format,
                         const std::string& footer) {
  auto render = [&](const std::string& m, int c) -> std::string {
    auto it = report.cells.find(m);
    if (it == report.cells.end() || it->second[c].n == 0) return "n/a";
    return Fixed2(it->second[c].mean) + " ± " + Fixed2(it->second[c].std);
  };
  std::string out;
  if (format == ReportFormat::kCsv) {
    out = "Method,K0 Test,K1 Test,Self-Play\n";
    for (const auto& m : report.methods) {
      out += MethodLabel(m) + "," + render(m, 0) + "," + render(m, 1) + "," +
             render(m, 2) + "\n";
    }
    if (!footer.empty()) out += "# " + footer + "\n";
  } else {
    out = "**" + EnvTitle(report.env, report.reward_mode) + "**\n\n";
    out += "| Method | K0 Test | K1 Test | Self-Play |\n";
    out += "|---|---|---|---|\n";
    for (const auto& m : report.methods) {
      out += "| " + MethodLabel(m) + " | " + render(m, 0) + " | " + render(m, 1) +
             " | " + render(m, 2) + " |\n";
    }
    out += "\nMean efficiency (%) ± standard deviation across " +
           std::to_string(report.seeds.size()) + " seeds, n_eval = " +
           std::to_string(report.n_eval) + ".\n";
    if (!footer.empty()) out += "\n" + footer + "\n";
  }
  return out;
}

nlohmann::json SteeringRecord::ToJson() const {
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& a : actions) acts.push_back({a[0], a[1]});
  nlohmann::json convs = nlohmann::json::array();
  for (const auto& c : conventions) convs.push_back({c[0], c[1]});
  return {{"agent_side", agent_side},
          {"actions", acts},
          {"rewards", rewards},
          {"conventions", convs},
          {"final_convention", {final_convention[0], final_convention[1]}},
          {"converged", converged},
          {"partner_switches", partner_switches}};
}

nlohmann::json SteeringSummary::ToJson() const {
  nlohmann::json dist = nlohmann::json::object();
  for (const auto& [c, p] : final_distribution) {
    dist[c == kNoConvention ? "none" : std::to_string(c)] = p;
  }
  return {{"final_distribution", dist},
          {"convergence_rate", convergence_rate},
          {"mean_partner_switches", mean_partner_switches},
          {"modal_convention", modal_convention}};
}

namespace {

// Pmr target: the last landmark whose zone (a quarter of the closest
// landmark spacing) the agent entered; none before the first entry.
double LandmarkZone(const EnvConfig& env) {
  double spacing = std::numeric_limits<double>::infinity();
  const auto& l = env.landmark_positions;
  for (size_t i = 0; i < l.size(); ++i) {
    for (size_t j = i + 1; j < l.size(); ++j) {
      spacing = std::min(spacing, std::hypot(l[i].x - l[j].x, l[i].y - l[j].y));
    }
  }
  return 0.25 * spacing;
}

}  // namespace

SteeringRecord MakeSteeringRecord(const EnvConfig& env, const EpisodeTrace& trace,
                                  int agent_side) {
  SteeringRecord rec;
  rec.agent_side = agent_side;
  const int a_side = agent_side, p_side = 1 - agent_side;
  const double zone = env.env_id == EnvId::kPmr ? LandmarkZone(env) : 0.0;
  std::array<int, 2> held = {kNoConvention, kNoConvention};
  for (size_t t = 0; t < trace.actions.size(); ++t) {
    const JointAction& ja = trace.actions[t];
    rec.actions.push_back({ja[a_side], ja[p_side]});
    rec.rewards.push_back(trace.rewards[t]);
    if (env.env_id == EnvId::kMatrix) {
      rec.conventions.push_back({ja[a_side], ja[p_side]});
    } else {
      EnvState after = t + 1 < trace.states.size() ? trace.states[t + 1]
                                                   : Step(trace.states[t], env, ja).first;
      const int sides[2] = {a_side, p_side};
      for (int who = 0; who < 2; ++who) {
        const Vec2& pos = after.position[sides[who]];
        const int l = NearestLandmark(env, pos);
        const Vec2& lp = env.landmark_positions[l];
        if (std::hypot(pos.x - lp.x, pos.y - lp.y) < zone) held[who] = l;
      }
      rec.conventions.push_back(held);
    }
  }
  const int n = static_cast<int>(rec.conventions.size());
  const int tail = std::max(1, static_cast<int>(std::ceil(0.2 * n - 1e-12)));
  for (int who = 0; who < 2; ++who) {
    std::map<int, int> tally;
    for (int t = std::max(0, n - tail); t < n; ++t) ++tally[rec.conventions[t][who]];
    int best = kNoConvention, best_count = 0;
    for (const auto& [c, k] : tally) {
      if (k > best_count) {
        best = c;
        best_count = k;
      }
    }
    rec.final_convention[who] = best;
  }
  rec.converged = rec.final_convention[0] == rec.final_convention[1] &&
                  rec.final_convention[0] != kNoConvention;
  for (size_t t = 1; t < rec.conventions.size(); ++t) {
    const int prev = rec.conventions[t - 1][1], cur = rec.conventions[t][1];
    if (prev != kNoConvention && cur != prev) ++rec.partner_switches;
  }
  return rec;
}

SteeringResult SteeringAnalysis(const AgentHandle& agent,
                                const AgentHandle& partner, const EnvConfig& env,
                                int n_episodes, std::uint64_t seed) {
  CONVFORGE_CHECK(n_episodes >= 1, "steering_analysis: n_episodes must be >= 1");
  SteeringResult res;
  std::map<int, int> counts;
  int converged = 0;
  double switches = 0.0;
  for (int e = 0; e < n_episodes; ++e) {
    const int side = e % 2;
    EpisodeTrace trace;
    const std::uint64_t s = DeriveSeed(seed, {static_cast<std::uint64_t>(e)});
    if (side == 0) {
      PlayEpisode(agent, partner, env, s, &trace);
    } else {
      PlayEpisode(partner, agent, env, s, &trace);
    }
    SteeringRecord rec = MakeSteeringRecord(env, trace, side);
    ++counts[rec.team_convention()];
    converged += rec.converged ? 1 : 0;
    switches += rec.partner_switches;
    res.records.push_back(std::move(rec));
  }
  int best_count = -1;
  for (const auto& [c, k] : counts) {
    res.summary.final_distribution[c] = static_cast<double>(k) / n_episodes;
    if (c != kNoConvention && k > best_count) {
      best_count = k;
      res.summary.modal_convention = c;
    }
  }
  res.summary.convergence_rate = static_cast<double>(converged) / n_episodes;
  res.summary.mean_partner_switches = switches / n_episodes;
  return res;
}

}  // namespace convforge
