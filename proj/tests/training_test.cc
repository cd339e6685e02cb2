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

#include "convforge/agent.h"
#include "convforge/conventions.h"
#include "convforge/error.h"
#include "convforge/rollout.h"
#include "convforge/training.h"
#include "doctest.h"
#include "oracles.h"

namespace convforge {
namespace {

EnvConfig TwoByTwo() {
  EnvConfig c = EnvConfig::Make(EnvId::kMatrix, RewardMode::kUniform);
  c.num_conventions = 2;
  c.horizon = 2;
  c.payoff_values = {1.0, 1.0};
  c.Validate();
  return c;
}

PPOConfig Budget(std::int64_t steps) {
  PPOConfig p = PPOConfig::ForEnv(EnvId::kMatrix);
  p.total_env_steps = steps;
  return p;
}

std::string Bytes(const AgentHandle& a, EnvId env) {
  return CheckpointToJson(a, env).dump();
}

TEST_CASE("objective estimate matches the exact value of an epsilon-greedy pair") {
  // Each round matches with probability 1 - eps/2 = 0.75, over two rounds.
  const EnvConfig c = TwoByTwo();
  const AgentHandle noisy = AgentHandle::EpsilonGreedy(AgentHandle::FixedAction(0), 0.5);
  const int n = 20000;
  const double est = EvaluatePair(noisy, AgentHandle::FixedAction(0), c, n, 9);
  const double sigma = std::sqrt(2 * 0.75 * 0.25 / n);
  CHECK(std::abs(est - 1.5) < 3 * sigma);
}

TEST_CASE("enumeration oracle values") {
  CHECK(oracle::TwoRoundBestResponse({0, 1}, {1, 1}) == 1.5);
  CHECK(oracle::TwoRoundBestResponse({0}, {1, 1}) == 2.0);
  CHECK(oracle::TwoRoundBestResponse({0, 1}, {1, 0.5}) == 1.25);
}

TEST_CASE("best response reaches the enumerated optimum in the two-round game") {
  const EnvConfig c = TwoByTwo();
  const std::vector<AgentHandle> pool = {AgentHandle::FixedAction(0),
                                         AgentHandle::FixedAction(1)};
  auto [br, report] = TrainBestResponse(pool, c, Budget(60000), 5, {"br", Level::kOne});
  const double optimum = oracle::TwoRoundBestResponse({0, 1}, {1, 1});
  double achieved = 0.0;
  for (const auto& p : pool) achieved += EvaluatePair(br, p, c, 200, 1) / pool.size();
  MESSAGE("achieved " << achieved << " of " << optimum);
  CHECK(achieved >= 0.99 * optimum);
}

TEST_CASE("self-play learns a convention in the uniform matrix game") {
  const EnvConfig c = EnvConfig::Make(EnvId::kMatrix, RewardMode::kUniform);
  auto [agent, report] = TrainSelfPlay(c, PPOConfig::ForEnv(EnvId::kMatrix), 0, {"sp"});
  CHECK(report.j_sp >= 9.5);
  REQUIRE(agent.meta.j_sp.has_value());
  CHECK(*agent.meta.j_sp == report.j_sp);
  CHECK_FALSE(report.updates.empty());
  CHECK(report.updates.back().env_steps >= 300000);
  const std::string lines = report.ToJsonLines();
  CHECK(lines.find("\"J_SP\"") != std::string::npos);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const EnvConfig c = EnvConfig::Make(EnvId::kMatrix, RewardMode::kDifferentiated);
  const PPOConfig p = Budget(8192);
  const auto a = TrainSelfPlay(c, p, 17, {"a"});
  const auto b = TrainSelfPlay(c, p, 17, {"a"});
  CHECK(Bytes(a.first, c.env_id) == Bytes(b.first, c.env_id));
  CHECK(a.second.ToJsonLines() == b.second.ToJsonLines());
  const auto d = TrainSelfPlay(c, p, 18, {"a"});
  CHECK(Bytes(a.first, c.env_id) != Bytes(d.first, c.env_id));
}

TEST_CASE("best response to a fixed partner and partner immutability") {
  const EnvConfig c = EnvConfig::Make(EnvId::kMatrix, RewardMode::kUniform);
  auto [partner, rep] = TrainSelfPlay(c, Budget(8192), 3, {"p"});
  const std::string before = Bytes(partner, c.env_id);
  const std::vector<AgentHandle> pool = {AgentHandle::FixedAction(0), partner};
  auto [br, report] = TrainBestResponse(pool, c, Budget(100000), 4, {"br", Level::kOne});
  CHECK(Bytes(partner, c.env_id) == before);
  CHECK(br.meta.level == Level::kOne);
  CHECK(EvaluatePair(br, AgentHandle::FixedAction(0), c, 100, 2) >= 9.0);
}

TEST_CASE("rollout partners are drawn uniformly from the pool") {
  const EnvConfig c = EnvConfig::Make(EnvId::kMatrix, RewardMode::kUniform);
  std::vector<AgentHandle> pool;
  for (int i = 0; i < 4; ++i) pool.push_back(AgentHandle::FixedAction(i));
  RolloutCollector col(c, pool, 21);
  const PolicyParams params = InitParams({c.ObsDim(), c.NumActions(), 8}, 1);
  col.Collect(params, 40000);
  const auto& hist = col.partner_history();
  REQUIRE(hist.size() >= 4000u);
  std::map<int, int> counts;
  for (int h : hist) counts[h]++;
  const double n = static_cast<double>(hist.size());
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(counts[i] - n / 4) < 3 * sigma);
  }
}

TEST_CASE("training errors") {
  const EnvConfig c = EnvConfig::Make(EnvId::kMatrix, RewardMode::kUniform);
  CHECK_THROWS_AS(TrainBestResponse({}, c, Budget(1024), 0, {"x"}), Error);
  PPOConfig bad = Budget(1024);
  bad.learning_rate = -1.0;
  CHECK_THROWS_AS(TrainSelfPlay(c, bad, 0, {"x"}), Error);
  const EnvConfig pmr = EnvConfig::Make(EnvId::kPmr, RewardMode::kUniform);
  CHECK_THROWS_AS(TrainBestResponse({AgentHandle::FixedAction(0)}, pmr, Budget(1024), 0,
                                    {"x"}),
                  Error);
}

}  // namespace
}  // namespace convforge
