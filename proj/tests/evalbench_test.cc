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

#include <cmath>
#include <map>

#include "convforge/conventions.h"
#include "convforge/error.h"
#include "convforge/evalbench.h"
#include "convforge/hierarchy.h"
#include "doctest.h"

namespace convforge {
namespace {

EnvConfig Diff() { return EnvConfig::Make(EnvId::kMatrix, RewardMode::kDifferentiated); }

TEST_CASE("test capabilities follow the payoffs") {
  const auto caps = TestCapabilities(Diff());
  REQUIRE(caps.size() == 4u);
  const double expect[] = {10.0, 7.5, 5.0, 2.5};
  for (int i = 0; i < 4; ++i) CHECK(caps[i].rho == expect[i]);
  const auto pmr = TestCapabilities(EnvConfig::Make(EnvId::kPmr, RewardMode::kDifferentiated));
  for (int i = 1; i < 4; ++i) CHECK(pmr[i].rho < pmr[i - 1].rho);
}

TEST_CASE("scripted agent against the scripted suite") {
  const EnvConfig c = EnvConfig::Make(EnvId::kMatrix, RewardMode::kUniform);
  const TestSuite suite = ScriptedSuite(c);
  REQUIRE(suite.k0_test.size() == 4u);
  CHECK(suite.k1_test.empty());
  const MethodRow row = EvaluateMethod(AgentHandle::FixedAction(0), suite, c, 10, 1);
  REQUIRE(row.k0_pairings.size() == 4u);
  CHECK(row.k0_pairings[0].eta_percent == 100.0);
  for (int i = 1; i < 4; ++i) CHECK(row.k0_pairings[i].eta_percent == 0.0);
  CHECK(*row.k0_test == 25.0);
  CHECK_FALSE(row.k1_test.has_value());
  CHECK(*row.self_play == 100.0);
  const MethodRow back = MethodRow::FromJson(row.ToJson());
  CHECK(back.ToJson() == row.ToJson());

  TestSuite broken = suite;
  broken.k1_test.push_back(AgentHandle::FixedAction(1));
  CHECK_THROWS_AS(EvaluateMethod(AgentHandle::FixedAction(0), broken, c, 10, 1), Error);
}

TEST_CASE("trained suite respects the capability ceiling") {
  const EnvConfig c = Diff();
  PPOConfig ppo = PPOConfig::ForEnv(c.env_id);
  ppo.total_env_steps = 60000;
  const TestSuite suite = BuildTestSuite(c, ppo, 4, 4, 0.75, 50);
  REQUIRE(suite.k1_test.size() == 4u);
  REQUIRE(suite.k1_optimum.size() == 4u);
  REQUIRE(suite.plan.m == 4);
  const auto reps = ScriptedRepresentatives(c);
  for (int j = 0; j < 4; ++j) {
    const AgentHandle& p = suite.k1_test[j];
    CHECK(p.meta.level == Level::kTest);
    const auto& caps = *p.meta.capability_set;
    const int anchor = p.meta.extra.at("anchor").get<std::string>().back() - '0';
    CHECK(caps.front() == anchor);  // nothing above the anchor's value
    if (anchor == 1) CHECK(std::find(caps.begin(), caps.end(), 0) == caps.end());

    // The scripted teammate realizing the repertoire optimum scores 100.
    int best = caps.front();
    for (int k : caps) {
      if (EvaluatePair(reps.at(k), p, c, 50, 1) > EvaluatePair(reps.at(best), p, c, 50, 1)) {
        best = k;
      }
    }
    TestSuite one = suite;
    one.k0_test.clear();
    one.k1_test = {p};
    one.k1_optimum = {suite.k1_optimum[j]};
    const MethodRow row = EvaluateMethod(reps.at(best), one, c, 50, 3);
    CHECK(std::abs(*row.k1_test - 100.0) <= 2.0);
    CHECK(*row.k1_test <= 103.0);
  }
  // Built once per seed: a second build is identical.
  const TestSuite again = BuildTestSuite(c, ppo, 4, 4, 0.75, 50);
  CHECK(again.k1_optimum == suite.k1_optimum);
  CHECK(again.plan.ToJson() == suite.plan.ToJson());
}

EfficiencyReport SampleReport() {
  std::map<std::string, std::vector<MethodRow>> rows;
  MethodRow a;
  a.k0_test = 70.0;
  a.k1_test = 60.0;
  a.self_play = 100.0;
  MethodRow b = a;
  b.k0_test = 80.0;
  b.k1_test.reset();
  rows["br"] = {a, b};
  rows["conventionplay"] = {a, a};
  return AggregateRows("matrix", "differentiated", {0, 1}, 200,
                       {"br", "fcp", "conventionplay"}, rows);
}

TEST_CASE("aggregation and export") {
  const EfficiencyReport r = SampleReport();
  const Cell& k0 = r.cells.at("br")[0];
  CHECK(k0.mean == 75.0);
  CHECK(k0.std == doctest::Approx(std::sqrt(50.0)));
  CHECK(k0.n == 2);
  CHECK(r.cells.at("br")[1].n == 1);
  CHECK(r.cells.at("br")[1].std == 0.0);

  const std::string csv = ExportReport(r, ReportFormat::kCsv, "manifest_hash: x");
  CHECK(csv == ExportReport(SampleReport(), ReportFormat::kCsv, "manifest_hash: x"));
  CHECK(csv.rfind("Method,K0 Test,K1 Test,Self-Play\n", 0) == 0);
  CHECK(csv.find("BestResponse,75.00 ± 7.07,60.00 ± 0.00,100.00 ± 0.00") != std::string::npos);
  CHECK(csv.find("FCP,n/a,n/a,n/a") != std::string::npos);
  CHECK(csv.find("# manifest_hash: x") != std::string::npos);

  const std::string md = ExportReport(r, ReportFormat::kMarkdown);
  CHECK(md.find("| Method | K0 Test | K1 Test | Self-Play |") != std::string::npos);
  CHECK(md.find("Matrix Game (Differentiated)") != std::string::npos);
  CHECK(md.find("| ConventionPlay | 70.00 ± 0.00 |") != std::string::npos);
  CHECK(md.find("across 2 seeds") != std::string::npos);
}

TEST_CASE("single-cell report") {
  MethodRow a;
  a.k0_test = 50.0;
  const EfficiencyReport r =
      AggregateRows("pmr", "uniform", {3}, 10, {"fcp"}, {{"fcp", {a}}});
  const std::string csv = ExportReport(r, ReportFormat::kCsv);
  int lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == 2);
  CHECK(csv == "Method,K0 Test,K1 Test,Self-Play\nFCP,50.00 ± 0.00,n/a,n/a\n");
}

TEST_CASE("steering with a scripted pair") {
  const EnvConfig c = EnvConfig::Make(EnvId::kPmr, RewardMode::kDifferentiated);
  const AgentHandle g = AgentHandle::GoToLandmark(0);
  const SteeringResult r = SteeringAnalysis(g, g, c, 20, 5);
  REQUIRE(r.records.size() == 20u);
  for (const auto& rec : r.records) {
    CHECK(rec.converged);
    CHECK(rec.team_convention() == 0);
    CHECK(rec.partner_switches == 0);
  }
  CHECK(r.summary.modal_convention == 0);
  CHECK(r.summary.final_distribution.at(0) == 1.0);
  CHECK(r.summary.convergence_rate == 1.0);
  CHECK(r.summary.ToJson().dump().find("\"none\"") == std::string::npos);
}

TEST_CASE("steering distribution sums to one") {
  const EnvConfig c = Diff();
  const AgentHandle noisy = AgentHandle::EpsilonGreedy(AgentHandle::FixedAction(2), 0.9);
  const SteeringResult r = SteeringAnalysis(noisy, AgentHandle::FixedAction(1), c, 50, 2);
  double total = 0.0;
  for (const auto& [k, v] : r.summary.final_distribution) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.summary.final_distribution.count(kNoConvention) == 1u);
  CHECK(r.summary.convergence_rate < 1.0);
  // Sides alternate across episodes.
  CHECK(r.records[0].agent_side != r.records[1].agent_side);
}

TEST_CASE("steering record from a hand-built trace") {
  const EnvConfig c = Diff();
  EpisodeTrace t;
  const JointAction acts[10] = {{0, 1}, {0, 1}, {1, 1}, {2, 1}, {1, 1},
                                {1, 1}, {1, 1}, {1, 1}, {1, 1}, {1, 1}};
  for (const auto& a : acts) {
    t.states.push_back(EnvState{});
    t.actions.push_back(a);
    t.rewards.push_back(a[0] == a[1] ? 7.5 / 10 : 0.0);
  }
  SteeringRecord r = MakeSteeringRecord(c, t, 0);
  CHECK(r.converged);
  CHECK(r.team_convention() == 1);
  CHECK(r.partner_switches == 0);
  // From the partner's side the roles swap.
  r = MakeSteeringRecord(c, t, 1);
  CHECK(r.final_convention[0] == 1);
  t.actions[8] = {3, 1};
  t.actions[9] = {3, 1};
  r = MakeSteeringRecord(c, t, 0);
  CHECK_FALSE(r.converged);
  CHECK(r.team_convention() == kNoConvention);
  CHECK(r.final_convention[0] == 3);
}

}  // namespace
}  // namespace convforge
