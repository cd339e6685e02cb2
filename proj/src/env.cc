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

#include "convforge/env.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <ostream>

#include "convforge/error.h"
#include "convforge/random.h"

namespace convforge {
namespace {

double Clamp(double v, double lo, double hi) { return std::max(lo, std::min(hi, v)); }

double Distance(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

Vec2 CapNorm(Vec2 v, double cap) {
  const double norm = std::hypot(v.x, v.y);
  if (norm > cap) {
    v.x *= cap / norm;
    v.y *= cap / norm;
  }
  return v;
}

// One point-mass integration step.
void Integrate(const PmrPhysics& phys, const Vec2& accel, Vec2& pos,
               Vec2& vel) {
  vel = CapNorm({phys.damping * vel.x + phys.dt * accel.x,
                 phys.damping * vel.y + phys.dt * accel.y},
                phys.velocity_cap);
  pos = {Clamp(pos.x + phys.dt * vel.x, -1.0, 1.0),
         Clamp(pos.y + phys.dt * vel.y, -1.0, 1.0)};
}

}  // namespace

std::string EnvIdName(EnvId id) {
  return id == EnvId::kMatrix ? "matrix" : "pmr";
}

EnvId ParseEnvId(const std::string& name) {
  if (name == "matrix") return EnvId::kMatrix;
  if (name == "pmr") return EnvId::kPmr;
  throw Error("unknown env_id '" + name + "' (expected matrix|pmr)");
}

std::string RewardModeName(RewardMode mode) {
  return mode == RewardMode::kUniform ? "uniform" : "differentiated";
}

RewardMode ParseRewardMode(const std::string& name) {
  if (name == "uniform") return RewardMode::kUniform;
  if (name == "differentiated") return RewardMode::kDifferentiated;
  throw Error("unknown reward_mode '" + name +
              "' (expected uniform|differentiated)");
}

EnvConfig EnvConfig::Make(EnvId env_id, RewardMode mode) {
  EnvConfig c;
  c.env_id = env_id;
  c.reward_mode = mode;
  c.num_conventions = 4;
  c.horizon = env_id == EnvId::kMatrix ? 10 : 50;
  if (mode == RewardMode::kUniform) {
    c.payoff_values = {1.0, 1.0, 1.0, 1.0};
  } else {
    c.payoff_values = {1.0, 0.75, 0.5, 0.25};
  }
  if (env_id == EnvId::kPmr) {
    c.landmark_positions = {{0.6, 0.6}, {-0.6, 0.6}, {-0.6, -0.6}, {0.6, -0.6}};
  }
  return c;
}

void EnvConfig::Validate() const {
  CONVFORGE_CHECK(num_conventions >= 2, "EnvConfig: num_conventions must be >= 2");
  CONVFORGE_CHECK(horizon >= 1, "EnvConfig: horizon must be >= 1");
  CONVFORGE_CHECK(static_cast<int>(payoff_values.size()) == num_conventions,
                  "EnvConfig: payoff_values must have num_conventions entries");
  for (double v : payoff_values) {
    CONVFORGE_CHECK(std::isfinite(v) && v > 0.0,
                    "EnvConfig: payoff_values must be strictly positive");
  }
  if (reward_mode == RewardMode::kUniform) {
    for (double v : payoff_values) {
      CONVFORGE_CHECK(v == payoff_values[0],
                      "EnvConfig: uniform reward_mode requires equal payoff_values");
    }
  }
  if (env_id == EnvId::kPmr) {
    const PmrPhysics& p = pmr_physics;
    CONVFORGE_CHECK(p.dt > 0 && p.accel_magnitude > 0 && p.velocity_cap > 0 &&
                        p.capture_radius > 0 && p.spawn_half_width >= 0 &&
                        p.spawn_half_width <= 1.0,
                    "EnvConfig: pmr_physics values out of range");
    CONVFORGE_CHECK(p.damping >= 0 && p.damping <= 1.0,
                    "EnvConfig: pmr_physics.damping must be in [0,1]");
    CONVFORGE_CHECK(
        static_cast<int>(landmark_positions.size()) == num_conventions,
        "EnvConfig: landmark_positions must have num_conventions entries");
    for (size_t i = 0; i < landmark_positions.size(); ++i) {
      for (size_t j = i + 1; j < landmark_positions.size(); ++j) {
        CONVFORGE_CHECK(
            Distance(landmark_positions[i], landmark_positions[j]) >=
                2.0 * p.capture_radius,
            "EnvConfig: landmarks must be at least 2*capture_radius apart");
      }
    }
  }
}

int EnvConfig::ObsDim() const {
  return env_id == EnvId::kMatrix ? 2 * num_conventions + 1
                                  : 6 + num_conventions;
}

int EnvConfig::NumActions() const {
  return env_id == EnvId::kMatrix ? num_conventions : kPmrNumActions;
}

double EnvConfig::MaxPayoff() const {
  return *std::max_element(payoff_values.begin(), payoff_values.end());
}

std::string EnvConfig::Key() const { return nlohmann::json(*this).dump(); }

void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = nlohmann::json{{"env_id", EnvIdName(c.env_id)},
                     {"reward_mode", RewardModeName(c.reward_mode)},
                     {"num_conventions", c.num_conventions},
                     {"horizon", c.horizon},
                     {"payoff_values", c.payoff_values}};
  if (c.env_id == EnvId::kPmr) {
    const PmrPhysics& p = c.pmr_physics;
    j["pmr_physics"] = {{"dt", p.dt},
                        {"accel_magnitude", p.accel_magnitude},
                        {"velocity_cap", p.velocity_cap},
                        {"damping", p.damping},
                        {"capture_radius", p.capture_radius},
                        {"spawn_half_width", p.spawn_half_width}};
    nlohmann::json lms = nlohmann::json::array();
    for (const Vec2& l : c.landmark_positions) lms.push_back({l.x, l.y});
    j["landmark_positions"] = lms;
  }
}

// Missing fields fall back to the defaults of (env_id, reward_mode).
void from_json(const nlohmann::json& j, EnvConfig& c) {
  const EnvId id = ParseEnvId(j.value("env_id", std::string("matrix")));
  const RewardMode mode =
      ParseRewardMode(j.value("reward_mode", std::string("uniform")));
  c = EnvConfig::Make(id, mode);
  c.num_conventions = j.value("num_conventions", c.num_conventions);
  c.horizon = j.value("horizon", c.horizon);
  if (j.contains("payoff_values")) {
    c.payoff_values = j.at("payoff_values").get<std::vector<double>>();
  }
  if (j.contains("pmr_physics")) {
    const auto& p = j.at("pmr_physics");
    PmrPhysics& q = c.pmr_physics;
    q.dt = p.value("dt", q.dt);
    q.accel_magnitude = p.value("accel_magnitude", q.accel_magnitude);
    q.velocity_cap = p.value("velocity_cap", q.velocity_cap);
    q.damping = p.value("damping", q.damping);
    q.capture_radius = p.value("capture_radius", q.capture_radius);
    q.spawn_half_width = p.value("spawn_half_width", q.spawn_half_width);
  }
  if (j.contains("landmark_positions")) {
    c.landmark_positions.clear();
    for (const auto& l : j.at("landmark_positions")) {
      c.landmark_positions.push_back({l.at(0).get<double>(), l.at(1).get<double>()});
    }
  }
}

nlohmann::json StateToJson(const EnvState& s, const EnvConfig& config) {
  nlohmann::json j = {{"step_index", s.step_index}};
  if (config.env_id == EnvId::kMatrix) {
    j["last_action"] = {s.last_action[0], s.last_action[1]};
  } else {
    j["position"] = {{s.position[0].x, s.position[0].y},
                     {s.position[1].x, s.position[1].y}};
    j["velocity"] = {{s.velocity[0].x, s.velocity[0].y},
                     {s.velocity[1].x, s.velocity[1].y}};
  }
  return j;
}

Observation Observe(const EnvState& s, const EnvConfig& config, int agent) {
  const int other = 1 - agent;
  Observation obs(config.ObsDim(), 0.0);
  if (config.env_id == EnvId::kMatrix) {
    const int k = config.num_conventions;
    if (s.last_action[agent] != kNoAction) obs[s.last_action[agent]] = 1.0;
    if (s.last_action[other] != kNoAction) obs[k + s.last_action[other]] = 1.0;
    obs[2 * k] = static_cast<double>(s.step_index) / config.horizon;
  } else {
    const Vec2& p = s.position[agent];
    const Vec2& v = s.velocity[agent];
    obs[0] = p.x;
    obs[1] = p.y;
    obs[2] = v.x;
    obs[3] = v.y;
    for (int l = 0; l < config.num_conventions; ++l) {
      obs[4 + l] = Distance(p, config.landmark_positions[l]);
    }
    obs[4 + config.num_conventions] = s.velocity[other].x;
    obs[5 + config.num_conventions] = s.velocity[other].y;
  }
  return obs;
}

std::pair<EnvState, JointObservation> Reset(const EnvConfig& config,
                                            std::uint64_t seed) {
  config.Validate();
  EnvState s;
  Rng rng(seed);
  if (config.env_id == EnvId::kPmr) {
    const double w = config.pmr_physics.spawn_half_width;
    for (int a = 0; a < 2; ++a) {
      s.position[a].x = rng.Uniform(-w, w);
      s.position[a].y = rng.Uniform(-w, w);
    }
  }
  s.rng_state = rng.state();
  return {s, {Observe(s, config, 0), Observe(s, config, 1)}};
}

Vec2 PmrAcceleration(const EnvConfig& config, int action) {
  if (action == 0) return {0.0, 0.0};
  static const double kDiag = std::sqrt(0.5);
  static const Vec2 kDirs[8] = {{1, 0},       {kDiag, kDiag},   {0, 1},
                                {-kDiag, kDiag}, {-1, 0},       {-kDiag, -kDiag},
                                {0, -1},      {kDiag, -kDiag}};
  const Vec2& d = kDirs[action - 1];
  const double m = config.pmr_physics.accel_magnitude;
  return {m * d.x, m * d.y};
}

std::pair<EnvState, StepResult> Step(const EnvState& state,
                                     const EnvConfig& config,
                                     const JointAction& joint_action) {
  CONVFORGE_CHECK(state.step_index < config.horizon,
                  "step: episode already done");
  const int n_actions = config.NumActions();
  for (int a : joint_action) {
    CONVFORGE_CHECK(a >= 0 && a < n_actions, "step: action out of range");
  }
  EnvState next = state;
  double reward = 0.0;
  if (config.env_id == EnvId::kMatrix) {
    if (joint_action[0] == joint_action[1]) {
      reward = config.payoff_values[joint_action[0]];
    }
    next.last_action = joint_action;
  } else {
    for (int a = 0; a < 2; ++a) {
      Integrate(config.pmr_physics, PmrAcceleration(config, joint_action[a]),
                next.position[a], next.velocity[a]);
    }
    const double r = config.pmr_physics.capture_radius;
    for (int l = 0; l < config.num_conventions; ++l) {
      const Vec2& lm = config.landmark_positions[l];
      if (Distance(next.position[0], lm) <= r &&
          Distance(next.position[1], lm) <= r) {
        reward = config.payoff_values[l];
        break;
      }
    }
  }
  ++next.step_index;
  StepResult result;
  result.reward = reward;
  result.done = next.step_index == config.horizon;
  result.observations = {Observe(next, config, 0), Observe(next, config, 1)};
  return {next, result};
}

int GoToLandmarkAction(const EnvConfig& config, const Vec2& position,
                       const Vec2& velocity, int landmark) {
  CONVFORGE_CHECK(config.env_id == EnvId::kPmr,
                  "GoToLandmark used outside the pmr environment");
  CONVFORGE_CHECK(landmark >= 0 && landmark < config.num_conventions,
                  "GoToLandmark: landmark index out of range");
  const Vec2& target = config.landmark_positions[landmark];
  // Minimizing inside the capture radius too makes the controller brake
  // instead of coasting through; at rest on the landmark this is null.
  int best = 0;
  double best_dist = 0.0;
  for (int a = 0; a < kPmrNumActions; ++a) {
    Vec2 p = position, v = velocity;
    Integrate(config.pmr_physics, PmrAcceleration(config, a), p, v);
    const double d = Distance(p, target);
    if (a == 0 || d < best_dist) {
      best = a;
      best_dist = d;
    }
  }
  return best;
}

int NearestLandmark(const EnvConfig& config, const Vec2& position) {
  int best = 0;
  double best_dist = Distance(position, config.landmark_positions[0]);
  for (int l = 1; l < config.num_conventions; ++l) {
    const double d = Distance(position, config.landmark_positions[l]);
    if (d < best_dist) {
      best = l;
      best_dist = d;
    }
  }
  return best;
}

MonteCarloEstimate ScriptedRendezvousReturn(const EnvConfig& config,
                                            int convention, int episodes) {
  CONVFORGE_CHECK(episodes >= 1, "ScriptedRendezvousReturn: episodes >= 1");
  double sum = 0.0, sum_sq = 0.0;
  for (int e = 0; e < episodes; ++e) {
    auto [state, obs] = Reset(config, DeriveSeed(kEvalSpawnSeed, {static_cast<std::uint64_t>(e)}));
    double ret = 0.0;
    bool done = false;
    while (!done) {
      JointAction act;
      for (int a = 0; a < 2; ++a) {
        act[a] = GoToLandmarkAction(config, state.position[a],
                                    state.velocity[a], convention);
      }
      auto [next, res] = Step(state, config, act);
      state = next;
      ret += res.reward;
      done = res.done;
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  MonteCarloEstimate est;
  est.episodes = episodes;
  est.mean = sum / episodes;
  const double var =
      episodes > 1 ? std::max(0.0, (sum_sq - sum * sum / episodes) / (episodes - 1))
                   : 0.0;
  est.stderr_ = std::sqrt(var / episodes);
  return est;
}

double MaxConventionReturn(const EnvConfig& config, int convention) {
  CONVFORGE_CHECK(convention >= 0 && convention < config.num_conventions,
                  "max_convention_return: convention index out of range");
  config.Validate();
  if (config.env_id == EnvId::kMatrix) {
    return config.horizon * config.payoff_values[convention];
  }
  static std::mutex mu;
  static std::map<std::pair<std::string, int>, double> cache;
  const auto key = std::make_pair(config.Key(), convention);
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  const double value =
      ScriptedRendezvousReturn(config, convention, kMaxReturnEpisodes).mean;
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(key, value);
  return value;
}

double GlobalMaxReturn(const EnvConfig& config) {
  double best = 0.0;
  for (int i = 0; i < config.num_conventions; ++i) {
    best = std::max(best, MaxConventionReturn(config, i));
  }
  return best;
}

void WriteTrajectoryLine(std::ostream& out, const EnvState& state,
                         const EnvConfig& config, const JointAction& actions,
                         double reward) {
  nlohmann::json j = {{"state", StateToJson(state, config)},
                      {"actions", {actions[0], actions[1]}},
                      {"reward", reward}};
  out << j.dump() << '\n';
}

}  // namespace convforge
