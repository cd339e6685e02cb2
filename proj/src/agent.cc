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

#include "convforge/agent.h"

#include <cmath>

#include "convforge/error.h"
#include "convforge/io.h"

namespace convforge {

AgentHandle AgentHandle::Neural(std::string id, PolicyParams params,
                                AgentMetadata meta) {
  params.Validate();
  AgentHandle h;
  h.kind = AgentKind::kNeural;
  h.id = std::move(id);
  h.params = std::make_shared<const PolicyParams>(std::move(params));
  h.meta = std::move(meta);
  return h;
}

AgentHandle AgentHandle::FixedAction(int action) {
  CONVFORGE_CHECK(action >= 0, "fixed_action: negative convention index");
  AgentHandle h;
  h.kind = AgentKind::kFixedAction;
  h.id = "fixed_" + std::to_string(action);
  h.convention = action;
  h.meta.level = Level::kTest;
  h.meta.capability_set = std::vector<int>{action};
  return h;
}

AgentHandle AgentHandle::GoToLandmark(int landmark) {
  CONVFORGE_CHECK(landmark >= 0, "go_to_landmark: negative convention index");
  AgentHandle h;
  h.kind = AgentKind::kGoToLandmark;
  h.id = "goto_" + std::to_string(landmark);
  h.convention = landmark;
  h.meta.level = Level::kTest;
  h.meta.capability_set = std::vector<int>{landmark};
  return h;
}

AgentHandle AgentHandle::Scripted(const EnvConfig& config, int convention) {
  return config.env_id == EnvId::kMatrix ? FixedAction(convention)
                                         : GoToLandmark(convention);
}

AgentHandle AgentHandle::EpsilonGreedy(AgentHandle inner, double epsilon) {
  CONVFORGE_CHECK(epsilon >= 0.0 && epsilon <= 1.0,
                  "epsilon_greedy: epsilon must be in [0,1]");
  AgentHandle h;
  h.kind = AgentKind::kEpsilonGreedy;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", epsilon);
  h.id = inner.id + "@eps" + buf;
  h.epsilon = epsilon;
  h.meta = inner.meta;
  h.inner = std::make_shared<const AgentHandle>(std::move(inner));
  return h;
}

void AgentHandle::ValidateFor(const EnvConfig& config) const {
  switch (kind) {
    case AgentKind::kNeural:
      CONVFORGE_CHECK(params != nullptr, "neural agent without parameters");
      CONVFORGE_CHECK(params->arch.obs_dim == config.ObsDim() &&
                          params->arch.action_dim == config.NumActions(),
                      "agent '" + id + "' architecture does not match env");
      break;
    case AgentKind::kFixedAction:
      CONVFORGE_CHECK(config.env_id == EnvId::kMatrix,
                      "scripted fixed_action agent used outside matrix env");
      CONVFORGE_CHECK(convention < config.num_conventions,
                      "fixed_action index out of range");
      break;
    case AgentKind::kGoToLandmark:
      CONVFORGE_CHECK(config.env_id == EnvId::kPmr,
                      "scripted go_to_landmark agent used outside pmr env");
      CONVFORGE_CHECK(convention < config.num_conventions,
                      "go_to_landmark index out of range");
      break;
    case AgentKind::kEpsilonGreedy:
      CONVFORGE_CHECK(inner != nullptr, "epsilon_greedy without inner agent");
      inner->ValidateFor(config);
      break;
  }
}

RecurrentState AgentHandle::InitialState() const {
  if (kind == AgentKind::kNeural) return RecurrentState::Zero(params->arch);
  if (kind == AgentKind::kEpsilonGreedy) return inner->InitialState();
  return {};
}

int Argmax(const std::vector<double>& values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

int SampleCategorical(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.Uniform();
  double acc = 0.0;
  for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

int Act(const AgentHandle& agent, const EnvConfig& config, RecurrentState& rec,
        const Observation& obs, Rng& rng, bool greedy) {
  switch (agent.kind) {
    case AgentKind::kFixedAction:
      CONVFORGE_CHECK(config.env_id == EnvId::kMatrix,
                      "scripted fixed_action agent used outside matrix env");
      return agent.convention;
    case AgentKind::kGoToLandmark:
      return GoToLandmarkAction(config, {obs[0], obs[1]}, {obs[2], obs[3]},
                                agent.convention);
    case AgentKind::kNeural: {
      PolicyOutput out = PolicyStep(*agent.params, rec, obs);
      rec = std::move(out.next);
      return greedy ? Argmax(out.probs) : SampleCategorical(out.probs, rng);
    }
    case AgentKind::kEpsilonGreedy: {
      const int inner_action = Act(*agent.inner, config, rec, obs, rng, greedy);
      if (rng.Uniform() < agent.epsilon) {
        return static_cast<int>(rng.Below(config.NumActions()));
      }
      return inner_action;
    }
  }
  throw Error("unknown agent kind");
}

std::string LevelName(Level level) {
  switch (level) {
    case Level::kZero: return "0";
    case Level::kOne: return "1";
    case Level::kTwo: return "2";
    case Level::kTest: return "test";
  }
  return "?";
}

nlohmann::json LevelToJson(Level level) {
  if (level == Level::kTest) return "test";
  return static_cast<int>(level);
}

Level LevelFromJson(const nlohmann::json& j) {
  if (j.is_string()) {
    CONVFORGE_CHECK(j.get<std::string>() == "test", "unknown level");
    return Level::kTest;
  }
  const int v = j.get<int>();
  CONVFORGE_CHECK(v >= 0 && v <= 2, "level must be 0, 1, 2 or \"test\"");
  return static_cast<Level>(v);
}

namespace {

std::string KindName(AgentKind kind) {
  switch (kind) {
    case AgentKind::kNeural: return "neural";
    case AgentKind::kFixedAction: return "scripted_fixed_action";
    case AgentKind::kGoToLandmark: return "scripted_go_to_landmark";
    case AgentKind::kEpsilonGreedy: return "epsilon_greedy";
  }
  return "?";
}

AgentKind ParseKind(const std::string& s) {
  if (s == "neural") return AgentKind::kNeural;
  if (s == "scripted_fixed_action") return AgentKind::kFixedAction;
  if (s == "scripted_go_to_landmark") return AgentKind::kGoToLandmark;
  if (s == "epsilon_greedy") return AgentKind::kEpsilonGreedy;
  throw Error("unknown agent kind '" + s + "'");
}

nlohmann::json MetaToJson(const AgentHandle& a) {
  nlohmann::json m = {{"kind", KindName(a.kind)},
                      {"id", a.id},
                      {"level", LevelToJson(a.meta.level)},
                      {"seed", a.meta.seed}};
  m["capability_set"] = a.meta.capability_set
                            ? nlohmann::json(*a.meta.capability_set)
                            : nlohmann::json(nullptr);
  m["J_SP"] = a.meta.j_sp ? nlohmann::json(*a.meta.j_sp) : nlohmann::json(nullptr);
  if (!a.meta.extra.empty()) m["extra"] = a.meta.extra;
  return m;
}

AgentMetadata MetaFromJson(const nlohmann::json& m) {
  AgentMetadata meta;
  meta.level = LevelFromJson(m.at("level"));
  meta.seed = m.value("seed", std::uint64_t{0});
  if (m.contains("capability_set") && !m["capability_set"].is_null()) {
    meta.capability_set = m["capability_set"].get<std::vector<int>>();
  }
  if (m.contains("J_SP") && !m["J_SP"].is_null()) meta.j_sp = m["J_SP"].get<double>();
  if (m.contains("extra")) meta.extra = m["extra"];
  return meta;
}

// Scripted and wrapped agents carry factory defaults unless the checkpoint
// records its own id and metadata.
AgentHandle WithStoredMeta(AgentHandle a, const nlohmann::json& m) {
  if (m.contains("id")) {
    a.id = m["id"].get<std::string>();
    a.meta = MetaFromJson(m);
  }
  return a;
}

}  // namespace

nlohmann::json CheckpointToJson(const AgentHandle& a, EnvId env_id) {
  nlohmann::json j = {{"format_version", kCheckpointFormatVersion},
                      {"env_id", EnvIdName(env_id)}};
  switch (a.kind) {
    case AgentKind::kNeural: {
      j["arch"] = a.params->arch;
      std::vector<double> theta(a.params->theta.data(),
                                a.params->theta.data() + a.params->theta.size());
      j["theta"] = theta;
      j["metadata"] = MetaToJson(a);
      break;
    }
    case AgentKind::kFixedAction:
    case AgentKind::kGoToLandmark:
      j["metadata"] = MetaToJson(a);
      j["metadata"]["index"] = a.convention;
      break;
    case AgentKind::kEpsilonGreedy:
      j["metadata"] = MetaToJson(a);
      j["metadata"]["epsilon"] = a.epsilon;
      j["inner"] = CheckpointToJson(*a.inner, env_id);
      break;
  }
  return j;
}

AgentHandle CheckpointFromJson(const nlohmann::json& j, EnvId* env_id) {
  try {
    CONVFORGE_CHECK(j.at("format_version").get<int>() == kCheckpointFormatVersion,
                    "unsupported checkpoint format_version");
    const EnvId env = ParseEnvId(j.at("env_id").get<std::string>());
    if (env_id) *env_id = env;
    const nlohmann::json& m = j.at("metadata");
    const AgentKind kind = ParseKind(m.at("kind").get<std::string>());
    switch (kind) {
      case AgentKind::kFixedAction:
        return WithStoredMeta(AgentHandle::FixedAction(m.at("index").get<int>()), m);
      case AgentKind::kGoToLandmark:
        return WithStoredMeta(AgentHandle::GoToLandmark(m.at("index").get<int>()), m);
      case AgentKind::kEpsilonGreedy:
        return WithStoredMeta(
            AgentHandle::EpsilonGreedy(CheckpointFromJson(j.at("inner")),
                                       m.at("epsilon").get<double>()),
            m);
      case AgentKind::kNeural: {
        PolicyParams p;
        p.arch = j.at("arch").get<ArchSpec>();
        const auto theta = j.at("theta").get<std::vector<double>>();
        p.theta = Eigen::Map<const Eigen::VectorXd>(
            theta.data(), static_cast<Eigen::Index>(theta.size()));
        return AgentHandle::Neural(m.at("id").get<std::string>(), std::move(p),
                                   MetaFromJson(m));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
  throw Error("malformed checkpoint");
}

void SaveCheckpoint(const std::filesystem::path& path, const AgentHandle& agent,
                    EnvId env_id) {
  WriteFileAtomic(path, CheckpointToJson(agent, env_id).dump() + "\n");
}

AgentHandle LoadCheckpoint(const std::filesystem::path& path, EnvId* env_id) {
  return CheckpointFromJson(ReadJson(path), env_id);
}

}  // namespace convforge
