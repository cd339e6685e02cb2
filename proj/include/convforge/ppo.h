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

#ifndef CONVFORGE_PPO_H_
#define CONVFORGE_PPO_H_

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "convforge/env.h"
#include "convforge/error.h"
#include "convforge/network.h"
#include "convforge/random.h"
#include "json.hpp"

namespace convforge {

struct PPOConfig {
  double learning_rate = 3e-4;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  int epochs_per_update = 4;
  int rollout_steps = 2048;
  int minibatches = 4;
  // Learner transitions collected over the whole run.
  std::int64_t total_env_steps = 300000;
  double grad_norm_clip = 0.5;
  int hidden_dim = 64;
  std::uint64_t seed = 0;

  // Defaults sized for the environment: 3e5 steps for the matrix game;
  // 3e6 steps, learning rate 1e-3 and entropy 3e-3 for pmr.
  static PPOConfig ForEnv(EnvId env_id);
  void Validate() const;
};

void to_json(nlohmann::json& j, const PPOConfig& c);
void from_json(const nlohmann::json& j, PPOConfig& c);

// A contiguous piece of one agent's episode. Segments never span episodes;
// a segment cut by the end of a rollout carries the critic's estimate of the
// state that follows it.
struct Segment {
  Eigen::VectorXd h0;  // recurrent state entering the first step
  std::vector<Observation> obs;
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  bool terminal = false;
  double bootstrap_value = 0.0;

  int size() const { return static_cast<int>(actions.size()); }
};

struct RolloutBatch {
  std::vector<Segment> segments;
  int NumSteps() const;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma * v_{t+1} * (1 - done_t) - v_t, with v_n taken as
// bootstrap_value; A_t = sum_l (gamma*lambda)^l delta_{t+l} within the
// episode; returns = A + v.
GaeResult ComputeGae(std::span<const double> rewards,
                     std::span<const double> values,
                     std::span<const std::uint8_t> dones, double gamma,
                     double lambda, double bootstrap_value = 0.0);

// Per-step training targets aligned with a batch's segments.
struct Targets {
  std::vector<std::vector<double>> advantages;
  std::vector<std::vector<double>> returns;
};

// GAE per segment, then advantages normalized over the batch (mean 0, std 1,
// eps 1e-8).
Targets ComputeTargets(const RolloutBatch& batch, const PPOConfig& config);

struct LossStats {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

// Clipped-surrogate loss and its gradient over the chosen segments
// (mean over their steps).
LossStats PpoLoss(const PolicyParams& params, const RolloutBatch& batch,
                  const Targets& targets, std::span<const int> segment_ids,
                  const PPOConfig& config, Eigen::VectorXd* grad);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;

  static AdamState For(const PolicyParams& p) {
    return {Eigen::VectorXd::Zero(p.theta.size()),
            Eigen::VectorXd::Zero(p.theta.size()), 0};
  }
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
};

// Raised when a loss or gradient becomes non-finite. Carries the parameters
// at the time of failure and the offending statistics.
class TrainingDivergence : public Error {
 public:
  TrainingDivergence(const std::string& what, PolicyParams snapshot,
                     LossStats stats)
      : Error(what), snapshot_(std::move(snapshot)), stats_(stats) {}
  const PolicyParams& snapshot() const { return snapshot_; }
  const LossStats& stats() const { return stats_; }

 private:
  PolicyParams snapshot_;
  LossStats stats_;
};

// epochs_per_update passes over the batch, each shuffled into minibatches of
// whole segments; Adam step with global gradient-norm clipping.
UpdateStats PpoUpdate(PolicyParams& params, AdamState& adam,
                      const RolloutBatch& batch, const PPOConfig& config,
                      Rng& rng);

}  // namespace convforge

#endif  // CONVFORGE_PPO_H_
