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

#include "convforge/training.h"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include "convforge/error.h"
#include "convforge/rollout.h"

namespace convforge {
namespace {

Segment StartSegment(Eigen::VectorXd h0) {
  Segment s;
  s.h0 = std::move(h0);
  return s;
}

enum SeedStream : std::uint64_t { kInit = 1, kCollect = 2, kUpdate = 3, kEval = 4 };

nlohmann::json RecordToJson(const UpdateRecord& r) {
  return {{"update", r.update},         {"env_steps", r.env_steps},
          {"episodes", r.episodes},     {"mean_return", r.mean_return},
          {"policy_loss", r.policy_loss}, {"value_loss", r.value_loss},
          {"entropy", r.entropy},       {"clip_fraction", r.clip_fraction}};
}

std::pair<AgentHandle, TrainReport> RunPpo(const EnvConfig& env_config,
                                           const PPOConfig& ppo,
                                           std::vector<AgentHandle> pool,
                                           std::uint64_t seed,
                                           const TrainOptions& options,
                                           AgentMetadata meta) {
  env_config.Validate();
  ppo.Validate();
  const std::uint64_t base = DeriveSeed(seed, {ppo.seed});
  const ArchSpec arch{env_config.ObsDim(), env_config.NumActions(), ppo.hidden_dim};
  PolicyParams params = InitParams(arch, DeriveSeed(base, {kInit}));
  AdamState adam = AdamState::For(params);
  Rng update_rng(DeriveSeed(base, {kUpdate}));
  RolloutCollector collector(env_config, std::move(pool), DeriveSeed(base, {kCollect}));

  TrainReport report;
  const std::int64_t n_updates =
      (ppo.total_env_steps + ppo.rollout_steps - 1) / ppo.rollout_steps;
  std::int64_t steps = 0;
  for (int u = 0; u < n_updates; ++u) {
    const RolloutBatch batch = collector.Collect(params, ppo.rollout_steps);
    steps += batch.NumSteps();
    UpdateStats st;
    try {
      st = PpoUpdate(params, adam, batch, ppo, update_rng);
    } catch (const TrainingDivergence& e) {
      throw TrainingDivergence(options.id + ": " + e.what() + " at update " +
                                   std::to_string(u),
                               e.snapshot(), e.stats());
    }
    UpdateRecord rec;
    rec.update = u;
    rec.env_steps = steps;
    const std::vector<double> returns = collector.TakeEpisodeReturns();
    rec.episodes = static_cast<int>(returns.size());
    for (double r : returns) rec.mean_return += r;
    if (!returns.empty()) rec.mean_return /= returns.size();
    rec.policy_loss = st.policy_loss;
    rec.value_loss = st.value_loss;
    rec.entropy = st.entropy;
    rec.clip_fraction = st.clip_fraction;
    report.updates.push_back(rec);
    if (options.progress) {
      nlohmann::json line = RecordToJson(rec);
      line["id"] = options.id;
      *options.progress << line.dump() << std::endl;
    }
  }
  meta.level = options.level;
  meta.seed = seed;
  AgentHandle agent = AgentHandle::Neural(options.id, std::move(params), meta);
  report.j_sp = SelfPlayReturn(agent, env_config, kJspEvalEpisodes,
                               DeriveSeed(base, {kEval}));
  agent.meta.j_sp = report.j_sp;
  return {std::move(agent), std::move(report)};
}

}  // namespace

std::string TrainReport::ToJsonLines() const {
  std::string out;
  for (const UpdateRecord& r : updates) out += RecordToJson(r).dump() + "\n";
  out += nlohmann::json{{"J_SP", j_sp}}.dump() + "\n";
  return out;
}

RolloutCollector::RolloutCollector(const EnvConfig& config,
                                   std::vector<AgentHandle> pool,
                                   std::uint64_t seed)
    : config_(config), pool_(std::move(pool)), self_play_(pool_.empty()), rng_(seed) {
  for (const AgentHandle& p : pool_) p.ValidateFor(config_);
}

void RolloutCollector::BeginEpisode() {
  const std::uint64_t episode = episode_counter_++;
  if (!self_play_) {
    partner_ = static_cast<int>(rng_.Below(pool_.size()));
    learner_side_ = static_cast<int>(rng_.Below(2));
    partner_history_.push_back(partner_);
    partner_rng_ = Rng(DeriveSeed(rng_.Next(), {episode}));
  }
  auto [state, obs] = Reset(config_, rng_.Next());
  state_ = state;
  obs_ = std::move(obs);
  episode_return_ = 0.0;
  need_reset_ = false;
}

RolloutBatch RolloutCollector::Collect(const PolicyParams& params, int min_steps) {
  RolloutBatch batch;
  int steps = 0;
  auto learner_controls = [&](int side) {
    return self_play_ || side == learner_side_;
  };
  while (steps < min_steps) {
    if (need_reset_) {
      BeginEpisode();
      for (int s = 0; s < 2; ++s) {
        if (learner_controls(s)) {
          recs_[s] = RecurrentState::Zero(params.arch);
          open_[s] = StartSegment(recs_[s].hidden);
        } else {
          recs_[s] = pool_[partner_].InitialState();
        }
      }
    }
    JointAction act;
    for (int s = 0; s < 2; ++s) {
      if (learner_controls(s)) {
        PolicyOutput out = PolicyStep(params, recs_[s], obs_[s]);
        const int a = SampleCategorical(out.probs, rng_);
        Segment& seg = open_[s];
        seg.obs.push_back(obs_[s]);
        seg.actions.push_back(a);
        seg.log_probs.push_back(std::log(out.probs[a]));
        seg.values.push_back(out.value);
        recs_[s] = std::move(out.next);
        act[s] = a;
      } else {
        act[s] = Act(pool_[partner_], config_, recs_[s], obs_[s], partner_rng_,
                     /*greedy=*/true);
      }
    }
    auto [next, result] = Step(state_, config_, act);
    state_ = next;
    obs_ = std::move(result.observations);
    episode_return_ += result.reward;
    for (int s = 0; s < 2; ++s) {
      if (!learner_controls(s)) continue;
      open_[s].rewards.push_back(result.reward);
      ++steps;
    }
    if (result.done) {
      for (int s = 0; s < 2; ++s) {
        if (!learner_controls(s)) continue;
        open_[s].terminal = true;
        batch.segments.push_back(std::move(open_[s]));
        open_[s] = Segment{};
      }
      finished_returns_.push_back(episode_return_);
      need_reset_ = true;
    } else if (steps >= min_steps) {
      for (int s = 0; s < 2; ++s) {
        if (!learner_controls(s)) continue;
        open_[s].bootstrap_value = PolicyStep(params, recs_[s], obs_[s]).value;
        batch.segments.push_back(std::move(open_[s]));
        open_[s] = StartSegment(recs_[s].hidden);
      }
    }
  }
  return batch;
}

std::vector<double> RolloutCollector::TakeEpisodeReturns() {
  std::vector<double> out;
  out.swap(finished_returns_);
  return out;
}

std::pair<AgentHandle, TrainReport> TrainSelfPlay(const EnvConfig& env_config,
                                                  const PPOConfig& ppo_config,
                                                  std::uint64_t seed,
                                                  const TrainOptions& options) {
  AgentMetadata meta;
  meta.extra["method"] = "self_play";
  return RunPpo(env_config, ppo_config, {}, seed, options, std::move(meta));
}

std::pair<AgentHandle, TrainReport> TrainBestResponse(
    const std::vector<AgentHandle>& partner_pool, const EnvConfig& env_config,
    const PPOConfig& ppo_config, std::uint64_t seed, const TrainOptions& options) {
  CONVFORGE_CHECK(!partner_pool.empty(), "train_best_response: empty partner pool");
  AgentMetadata meta;
  meta.extra["method"] = "best_response";
  std::vector<std::string> ids;
  std::set<int> caps;
  bool any_caps = false;
  for (const AgentHandle& p : partner_pool) {
    p.ValidateFor(env_config);
    ids.push_back(p.id);
    if (p.meta.capability_set) {
      any_caps = true;
      caps.insert(p.meta.capability_set->begin(), p.meta.capability_set->end());
    }
  }
  meta.extra["pool"] = ids;
  if (any_caps) meta.capability_set = std::vector<int>(caps.begin(), caps.end());
  return RunPpo(env_config, ppo_config, partner_pool, seed, options, std::move(meta));
}

}  // namespace convforge
