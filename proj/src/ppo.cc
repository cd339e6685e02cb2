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

#include "convforge/ppo.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace convforge {

using Eigen::MatrixXd;
using Eigen::VectorXd;

PPOConfig PPOConfig::ForEnv(EnvId env_id) {
  PPOConfig c;
  if (env_id == EnvId::kMatrix) {
    c.total_env_steps = 300000;
  } else {
    // Following an unseen partner means latching its early heading; at the
    // generic settings best responses settle on half the landmarks.
    c.total_env_steps = 3000000;
    c.learning_rate = 1e-3;
    c.entropy_coef = 3e-3;
  }
  return c;
}

void PPOConfig::Validate() const {
  CONVFORGE_CHECK(gamma >= 0.0 && gamma < 1.0, "PPOConfig: gamma must be in [0,1)");
  CONVFORGE_CHECK(gae_lambda >= 0.0 && gae_lambda <= 1.0,
                  "PPOConfig: gae_lambda must be in [0,1]");
  CONVFORGE_CHECK(clip_ratio > 0.0, "PPOConfig: clip_ratio must be > 0");
  CONVFORGE_CHECK(learning_rate >= 0.0, "PPOConfig: learning_rate must be >= 0");
  CONVFORGE_CHECK(epochs_per_update > 0 && rollout_steps > 0 && minibatches > 0 &&
                      total_env_steps > 0 && hidden_dim > 0,
                  "PPOConfig: all counts must be positive");
  CONVFORGE_CHECK(grad_norm_clip > 0.0, "PPOConfig: grad_norm_clip must be > 0");
}

void to_json(nlohmann::json& j, const PPOConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"gamma", c.gamma},
                     {"gae_lambda", c.gae_lambda},
                     {"clip_ratio", c.clip_ratio},
                     {"entropy_coef", c.entropy_coef},
                     {"value_coef", c.value_coef},
                     {"epochs_per_update", c.epochs_per_update},
                     {"rollout_steps", c.rollout_steps},
                     {"minibatches", c.minibatches},
                     {"total_env_steps", c.total_env_steps},
                     {"grad_norm_clip", c.grad_norm_clip},
                     {"hidden_dim", c.hidden_dim},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PPOConfig& c) {
  PPOConfig d = c;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.gamma = j.value("gamma", d.gamma);
  c.gae_lambda = j.value("gae_lambda", d.gae_lambda);
  c.clip_ratio = j.value("clip_ratio", d.clip_ratio);
  c.entropy_coef = j.value("entropy_coef", d.entropy_coef);
  c.value_coef = j.value("value_coef", d.value_coef);
  c.epochs_per_update = j.value("epochs_per_update", d.epochs_per_update);
  c.rollout_steps = j.value("rollout_steps", d.rollout_steps);
  c.minibatches = j.value("minibatches", d.minibatches);
  c.total_env_steps = j.value("total_env_steps", d.total_env_steps);
  c.grad_norm_clip = j.value("grad_norm_clip", d.grad_norm_clip);
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.seed = j.value("seed", d.seed);
}

int RolloutBatch::NumSteps() const {
  int n = 0;
  for (const Segment& s : segments) n += s.size();
  return n;
}

GaeResult ComputeGae(std::span<const double> rewards,
                     std::span<const double> values,
                     std::span<const std::uint8_t> dones, double gamma,
                     double lambda, double bootstrap_value) {
  CONVFORGE_CHECK(rewards.size() == values.size() && rewards.size() == dones.size(),
                  "compute_gae: rewards, values and dones must have equal length");
  const size_t n = rewards.size();
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double running = 0.0;
  for (size_t k = n; k-- > 0;) {
    const double not_done = dones[k] ? 0.0 : 1.0;
    const double next_value = k + 1 < n ? values[k + 1] : bootstrap_value;
    const double delta = rewards[k] + gamma * next_value * not_done - values[k];
    running = delta + gamma * lambda * not_done * running;
    out.advantages[k] = running;
    out.returns[k] = running + values[k];
  }
  return out;
}

Targets ComputeTargets(const RolloutBatch& batch, const PPOConfig& config) {
  Targets t;
  double sum = 0.0, sum_sq = 0.0;
  int count = 0;
  for (const Segment& s : batch.segments) {
    std::vector<std::uint8_t> dones(s.size(), 0);
    if (s.terminal && s.size() > 0) dones.back() = 1;
    GaeResult g = ComputeGae(s.rewards, s.values, dones, config.gamma,
                             config.gae_lambda,
                             s.terminal ? 0.0 : s.bootstrap_value);
    for (double a : g.advantages) {
      sum += a;
      sum_sq += a * a;
    }
    count += s.size();
    t.advantages.push_back(std::move(g.advantages));
    t.returns.push_back(std::move(g.returns));
  }
  if (count == 0) return t;
  const double mean = sum / count;
  const double var = std::max(0.0, sum_sq / count - mean * mean);
  const double scale = 1.0 / (std::sqrt(var) + 1e-8);
  for (auto& adv : t.advantages) {
    for (double& a : adv) a = (a - mean) * scale;
  }
  return t;
}

LossStats PpoLoss(const PolicyParams& params, const RolloutBatch& batch,
                  const Targets& targets, std::span<const int> segment_ids,
                  const PPOConfig& config, VectorXd* grad) {
  const ArchSpec& arch = params.arch;
  // Equal-length segments are unrolled together as one batched sequence.
  std::map<int, std::vector<int>> by_length;
  int total = 0;
  for (int id : segment_ids) {
    const int len = batch.segments[id].size();
    if (len == 0) continue;
    by_length[len].push_back(id);
    total += len;
  }
  LossStats stats;
  if (total == 0) return stats;
  const double inv_n = 1.0 / total;
  const double lo = 1.0 - config.clip_ratio, hi = 1.0 + config.clip_ratio;
  int clipped = 0;
  std::vector<double> probs(arch.action_dim);

  for (const auto& [len, ids] : by_length) {
    const int b = static_cast<int>(ids.size());
    MatrixXd h0(arch.hidden_dim, b);
    std::vector<MatrixXd> obs(len, MatrixXd(arch.obs_dim, b));
    for (int c = 0; c < b; ++c) {
      const Segment& s = batch.segments[ids[c]];
      h0.col(c) = s.h0;
      for (int t = 0; t < len; ++t) {
        obs[t].col(c) = Eigen::Map<const VectorXd>(s.obs[t].data(), arch.obs_dim);
      }
    }
    const SequenceCache cache = ForwardSequence(params, h0, std::move(obs));
    std::vector<MatrixXd> d_logits(len, MatrixXd(arch.action_dim, b));
    std::vector<Eigen::RowVectorXd> d_values(len, Eigen::RowVectorXd(b));
    for (int t = 0; t < len; ++t) {
      for (int c = 0; c < b; ++c) {
        const Segment& s = batch.segments[ids[c]];
        const double adv = targets.advantages[ids[c]][t];
        const double ret = targets.returns[ids[c]][t];
        const int a = s.actions[t];
        Softmax(cache.logits[t].col(c).data(), arch.action_dim, probs.data());
        double entropy = 0.0;
        for (double p : probs) {
          if (p > 0.0) entropy -= p * std::log(p);
        }
        const double logp = std::log(probs[a]);
        const double ratio = std::exp(logp - s.log_probs[t]);
        const double surr1 = ratio * adv;
        const double surr2 = std::clamp(ratio, lo, hi) * adv;
        stats.policy_loss -= std::min(surr1, surr2) * inv_n;
        if (ratio < lo || ratio > hi) ++clipped;
        const double v = cache.values[t](c);
        stats.value_loss += 0.5 * (v - ret) * (v - ret) * inv_n;
        stats.entropy += entropy * inv_n;

        // d(policy term)/d(logp_a); zero when the clipped branch is active.
        const double g_logp = surr1 <= surr2 ? -adv * ratio : 0.0;
        for (int k = 0; k < arch.action_dim; ++k) {
          const double onehot = k == a ? 1.0 : 0.0;
          const double ent_grad =
              probs[k] > 0.0 ? probs[k] * (std::log(probs[k]) + entropy) : 0.0;
          d_logits[t](k, c) =
              inv_n * (g_logp * (onehot - probs[k]) +
                       config.entropy_coef * ent_grad);
        }
        d_values[t](c) = inv_n * config.value_coef * (v - ret);
      }
    }
    if (grad) BackwardSequence(params, cache, d_logits, d_values, *grad);
  }
  stats.clip_fraction = static_cast<double>(clipped) / total;
  stats.loss = stats.policy_loss + config.value_coef * stats.value_loss -
               config.entropy_coef * stats.entropy;
  return stats;
}

UpdateStats PpoUpdate(PolicyParams& params, AdamState& adam,
                      const RolloutBatch& batch, const PPOConfig& config,
                      Rng& rng) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-5;
  const Targets targets = ComputeTargets(batch, config);
  const int n_seg = static_cast<int>(batch.segments.size());
  std::vector<int> order(n_seg);
  std::iota(order.begin(), order.end(), 0);
  UpdateStats out;
  int n_mb = 0;
  VectorXd grad(params.theta.size());
  for (int epoch = 0; epoch < config.epochs_per_update; ++epoch) {
    for (int i = n_seg - 1; i > 0; --i) {
      std::swap(order[i], order[rng.Below(static_cast<std::uint64_t>(i) + 1)]);
    }
    const int n_chunks = std::min(config.minibatches, std::max(1, n_seg));
    for (int mb = 0; mb < n_chunks; ++mb) {
      const int begin = mb * n_seg / n_chunks;
      const int end = (mb + 1) * n_seg / n_chunks;
      if (begin == end) continue;
      grad.setZero();
      const LossStats ls =
          PpoLoss(params, batch, targets,
                  std::span<const int>(order.data() + begin, end - begin),
                  config, &grad);
      const double norm = grad.norm();
      if (!std::isfinite(ls.loss) || !std::isfinite(norm)) {
        throw TrainingDivergence("ppo_update: non-finite loss or gradient",
                                 params, ls);
      }
      if (norm > config.grad_norm_clip) grad *= config.grad_norm_clip / norm;
      ++adam.step;
      adam.m = kBeta1 * adam.m + (1.0 - kBeta1) * grad;
      adam.v = kBeta2 * adam.v + (1.0 - kBeta2) * grad.cwiseAbs2();
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam.step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam.step));
      const double step = config.learning_rate * std::sqrt(bc2) / bc1;
      params.theta.array() -=
          step * adam.m.array() / (adam.v.array().sqrt() + kAdamEps);
      out.policy_loss += ls.policy_loss;
      out.value_loss += ls.value_loss;
      out.entropy += ls.entropy;
      out.clip_fraction += ls.clip_fraction;
      out.grad_norm += norm;
      ++n_mb;
    }
  }
  if (n_mb > 0) {
    out.policy_loss /= n_mb;
    out.value_loss /= n_mb;
    out.entropy /= n_mb;
    out.clip_fraction /= n_mb;
    out.grad_norm /= n_mb;
  }
  return out;
}

}  // namespace convforge
