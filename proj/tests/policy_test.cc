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
#include <filesystem>

#include "convforge/agent.h"
#include "convforge/env.h"
#include "convforge/error.h"
#include "convforge/io.h"
#include "convforge/network.h"
#include "convforge/random.h"
#include "doctest.h"

namespace convforge {
namespace {

const ArchSpec kArch{9, 4, 16};

std::vector<double> RandomObs(Rng& rng, int n) {
  std::vector<double> o(n);
  for (double& v : o) v = rng.Uniform(-1.0, 1.0);
  return o;
}

TEST_CASE("parameter count and layout") {
  const ArchSpec a{5, 3, 7};
  const int h = 7;
  CHECK(a.NumParams() == h * 5 + h + 2 * (3 * h * h + 3 * h) + 3 * h + 3 + h + 1);
  int sum = 0;
  for (const ParamSlice& s : ParamLayout(a)) {
    CHECK(s.offset == sum);
    sum += s.size;
  }
  CHECK(sum == a.NumParams());
  CHECK(ParamLayout(a).size() == 10u);
}

TEST_CASE("initialization") {
  const PolicyParams p1 = InitParams(kArch, 3);
  const PolicyParams p2 = InitParams(kArch, 3);
  const PolicyParams p3 = InitParams(kArch, 4);
  CHECK(p1.theta == p2.theta);
  CHECK(p1.theta != p3.theta);
  for (const ParamSlice& s : ParamLayout(kArch)) {
    for (int i = 0; i < s.size; ++i) {
      if (s.is_bias) {
        CHECK(p1.theta[s.offset + i] == 0.0);
      }
    }
  }
  CHECK(p1.theta.size() == kArch.NumParams());
}

TEST_CASE("zero parameters give a uniform policy and zero value") {
  PolicyParams p{kArch, Eigen::VectorXd::Zero(kArch.NumParams())};
  Rng rng(1);
  const auto obs = RandomObs(rng, kArch.obs_dim);
  const PolicyOutput out = PolicyStep(p, RecurrentState::Zero(kArch), obs);
  for (double q : out.probs) CHECK(q == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(out.value == 0.0);
}

TEST_CASE("policy step is normalized and pure") {
  const PolicyParams p = InitParams(kArch, 9);
  Rng rng(2);
  RecurrentState rec = RecurrentState::Zero(kArch);
  for (int t = 0; t < 20; ++t) {
    const auto obs = RandomObs(rng, kArch.obs_dim);
    const PolicyOutput a = PolicyStep(p, rec, obs);
    const PolicyOutput b = PolicyStep(p, rec, obs);
    double sum = 0.0;
    for (double q : a.probs) sum += q;
    CHECK(std::abs(sum - 1.0) < 1e-6);
    CHECK(a.probs == b.probs);
    CHECK(a.value == b.value);
    CHECK(a.next.hidden == b.next.hidden);
    rec = a.next;
  }
}

TEST_CASE("hidden state depends only on the observation prefix") {
  const PolicyParams p = InitParams(kArch, 5);
  Rng rng(3);
  std::vector<std::vector<double>> prefix;
  for (int t = 0; t < 6; ++t) prefix.push_back(RandomObs(rng, kArch.obs_dim));
  auto run = [&](const std::vector<double>& tail) {
    RecurrentState r = RecurrentState::Zero(kArch);
    std::vector<Eigen::VectorXd> hs;
    for (const auto& o : prefix) {
      r = PolicyStep(p, r, o).next;
      hs.push_back(r.hidden);
    }
    r = PolicyStep(p, r, tail).next;
    hs.push_back(r.hidden);
    return hs;
  };
  const auto a = run(RandomObs(rng, kArch.obs_dim));
  const auto b = run(RandomObs(rng, kArch.obs_dim));
  for (size_t t = 0; t < prefix.size(); ++t) CHECK(a[t] == b[t]);
  CHECK(a.back() != b.back());
}

TEST_CASE("batched unroll matches step-by-step evaluation") {
  const PolicyParams p = InitParams(kArch, 8);
  Rng rng(4);
  const int batch = 3, len = 5;
  std::vector<Eigen::MatrixXd> obs(len, Eigen::MatrixXd(kArch.obs_dim, batch));
  for (auto& m : obs) {
    for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.Uniform(-1, 1);
  }
  Eigen::MatrixXd h0(kArch.hidden_dim, batch);
  for (int i = 0; i < h0.size(); ++i) h0.data()[i] = rng.Uniform(-0.5, 0.5);
  const SequenceCache cache = ForwardSequence(p, h0, obs);
  for (int b = 0; b < batch; ++b) {
    RecurrentState r{h0.col(b)};
    for (int t = 0; t < len; ++t) {
      std::vector<double> o(obs[t].col(b).data(), obs[t].col(b).data() + kArch.obs_dim);
      const PolicyOutput out = PolicyStep(p, r, o);
      std::vector<double> probs(kArch.action_dim);
      Softmax(cache.logits[t].col(b).data(), kArch.action_dim, probs.data());
      for (int k = 0; k < kArch.action_dim; ++k) {
        CHECK(probs[k] == doctest::Approx(out.probs[k]).epsilon(1e-12));
      }
      CHECK(cache.values[t](b) == doctest::Approx(out.value).epsilon(1e-12));
      r = out.next;
    }
  }
}

TEST_CASE("softmax is stable for large logits") {
  const double logits[3] = {1000.0, 1000.0, -1000.0};
  double probs[3];
  Softmax(logits, 3, probs);
  CHECK(probs[0] == doctest::Approx(0.5));
  CHECK(probs[2] == doctest::Approx(0.0));
}

TEST_CASE("scripted and epsilon-greedy agents") {
  const EnvConfig m = EnvConfig::Make(EnvId::kMatrix, RewardMode::kUniform);
  const EnvConfig pmr = EnvConfig::Make(EnvId::kPmr, RewardMode::kUniform);
  Rng rng(6);
  auto [s, obs] = Reset(m, 0);
  AgentHandle fixed = AgentHandle::FixedAction(2);
  RecurrentState rec = fixed.InitialState();
  for (int i = 0; i < 10; ++i) CHECK(Act(fixed, m, rec, obs[0], rng, true) == 2);

  AgentHandle e0 = AgentHandle::EpsilonGreedy(fixed, 0.0);
  for (int i = 0; i < 100; ++i) CHECK(Act(e0, m, rec, obs[0], rng, true) == 2);

  // At rest on landmark 0's center.
  EnvState at;
  at.position[0] = pmr.landmark_positions[0];
  at.position[1] = {0.0, 0.0};
  AgentHandle g = AgentHandle::GoToLandmark(0);
  RecurrentState grec = g.InitialState();
  CHECK(Act(g, pmr, grec, Observe(at, pmr, 0), rng, true) == 0);

  CHECK_THROWS_AS(AgentHandle::GoToLandmark(0).ValidateFor(m), Error);
  CHECK_THROWS_AS(AgentHandle::FixedAction(7).ValidateFor(m), Error);
}

TEST_CASE("epsilon one is uniform within 3 sigma") {
  const EnvConfig m = EnvConfig::Make(EnvId::kMatrix, RewardMode::kUniform);
  AgentHandle e1 = AgentHandle::EpsilonGreedy(AgentHandle::FixedAction(1), 1.0);
  Rng rng(77);
  auto [s, obs] = Reset(m, 0);
  RecurrentState rec = e1.InitialState();
  const int n = 10000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < n; ++i) ++counts[Act(e1, m, rec, obs[0], rng, true)];
  const double p = 0.25, sigma = std::sqrt(n * p * (1 - p));
  for (int c : counts) CHECK(std::abs(c - n * p) <= 3 * sigma);
}

TEST_CASE("greedy neural action is the argmax; sampling follows the policy") {
  const EnvConfig m = EnvConfig::Make(EnvId::kMatrix, RewardMode::kUniform);
  AgentHandle a = AgentHandle::Neural("n", InitParams({9, 4, 8}, 1), {});
  auto [s, obs] = Reset(m, 0);
  const PolicyOutput out = PolicyStep(*a.params, a.InitialState(), obs[0]);
  Rng rng(0);
  RecurrentState rec = a.InitialState();
  CHECK(Act(a, m, rec, obs[0], rng, true) == Argmax(out.probs));
  CHECK(rec.hidden == out.next.hidden);
  const int n = 20000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < n; ++i) {
    RecurrentState r = a.InitialState();
    ++counts[Act(a, m, r, obs[0], rng, false)];
  }
  for (int k = 0; k < 4; ++k) {
    const double sigma = std::sqrt(n * out.probs[k] * (1 - out.probs[k]));
    CHECK(std::abs(counts[k] - n * out.probs[k]) <= 4 * sigma + 1);
  }
  CHECK(Argmax({0.3, 0.3, 0.1}) == 0);
}

TEST_CASE("checkpoints round-trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "convforge_policy_test";
  fs::create_directories(dir);
  AgentMetadata meta;
  meta.level = Level::kOne;
  meta.seed = 12;
  meta.capability_set = std::vector<int>{1, 3};
  meta.j_sp = 7.25;
  meta.extra["pool"] = {"a", "b"};
  AgentHandle a = AgentHandle::Neural("k1_00", InitParams({9, 4, 8}, 2), meta);
  SaveCheckpoint(dir / "a.json", a, EnvId::kMatrix);
  EnvId env;
  AgentHandle b = LoadCheckpoint(dir / "a.json", &env);
  CHECK(env == EnvId::kMatrix);
  CHECK(b.id == "k1_00");
  CHECK(b.params->theta == a.params->theta);
  CHECK(b.meta.level == Level::kOne);
  CHECK(*b.meta.capability_set == std::vector<int>{1, 3});
  CHECK(*b.meta.j_sp == 7.25);
  CHECK(b.meta.extra == meta.extra);
  // Byte-stable re-serialization.
  SaveCheckpoint(dir / "b.json", b, EnvId::kMatrix);
  CHECK(ReadFile(dir / "a.json") == ReadFile(dir / "b.json"));

  AgentHandle eps = AgentHandle::EpsilonGreedy(a, 0.25);
  SaveCheckpoint(dir / "e.json", eps, EnvId::kMatrix);
  AgentHandle e2 = LoadCheckpoint(dir / "e.json");
  CHECK(e2.kind == AgentKind::kEpsilonGreedy);
  CHECK(e2.epsilon == 0.25);
  CHECK(e2.inner->params->theta == a.params->theta);

  AgentHandle g = AgentHandle::GoToLandmark(3);
  g.id = "renamed";
  SaveCheckpoint(dir / "g.json", g, EnvId::kPmr);
  AgentHandle g2 = LoadCheckpoint(dir / "g.json");
  CHECK(g2.kind == AgentKind::kGoToLandmark);
  CHECK(g2.convention == 3);
  CHECK(g2.id == "renamed");

  WriteFileAtomic(dir / "bad.json", "{\"format_version\": 2}");
  CHECK_THROWS_AS(LoadCheckpoint(dir / "bad.json"), Error);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace convforge
