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

#ifndef CONVFORGE_PIPELINE_H_
#define CONVFORGE_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "convforge/agent.h"
#include "convforge/env.h"
#include "convforge/evalbench.h"
#include "convforge/hierarchy.h"
#include "convforge/ppo.h"
#include "json.hpp"

namespace convforge {

struct PipelineSettings {
  int n_k0_seeds = 8;
  int m = 0;  // 0: number of clusters found by the partition
  double subset_fraction = 0.75;
  int pipeline_seeds = 3;
  int n_eval = kDefaultEvalEpisodes;
  std::optional<double> epsilon;  // default 0.05 * global max return
  std::optional<double> delta;    // default 0.5 * global max return
  int steering_episodes = 200;
};

struct RunConfig {
  EnvConfig env;
  PPOConfig ppo;
  PipelineSettings pipeline;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;

  static RunConfig Default(EnvId env_id, RewardMode mode);
  void Validate() const;
  double Epsilon() const;
  double Delta() const;
  std::vector<std::uint64_t> PipelineSeeds() const;
};

// "output_dir" is not part of the serialized form; it is given on the
// command line.
nlohmann::json RunConfigToJson(const RunConfig& c);
RunConfig RunConfigFromJson(const nlohmann::json& j);

// Stage names double as the identifiers reported by MissingArtifact.
inline constexpr const char* kStageK0 = "k0";
inline constexpr const char* kStageAnalyze = "analyze";
inline constexpr const char* kStageSubsets = "subsets";
inline constexpr const char* kStageK1 = "k1";
inline constexpr const char* kStageK2 = "k2";
inline constexpr const char* kStageBaselines = "baselines";
inline constexpr const char* kStageTestsuite = "testsuite";
inline constexpr const char* kStageEvaluate = "evaluate";

inline constexpr const char* kManifestFile = "manifest.json";

// A run directory and its manifest. Every mutating call writes its artifacts
// first and the manifest last, each through temp-and-rename, then removes
// files the manifest no longer references. A stage whose fingerprint (its
// config slice plus upstream fingerprints) is unchanged is skipped.
class Pipeline {
 public:
  explicit Pipeline(RunConfig config, std::ostream* progress = nullptr);

  void TrainK0();
  void Analyze();
  void SampleSubsets();
  void TrainK1();
  void TrainK2();
  void TrainBaselines(const std::vector<BaselineKind>& kinds);
  void BuildTestsuite();
  void Evaluate();
  void Report();
  // Default analyses: first pipeline seed's K2 against the lowest-value
  // K0-test policy and against a K1-test partner whose repertoire includes
  // the top-value convention.
  void Steering();
  void Steering(const std::string& agent_id, const std::string& partner_id);
  // Runs every stage in dependency order; stops after `last_stage` if given.
  void RunAll(const std::string& last_stage = "");

  const nlohmann::json& manifest() const { return manifest_; }
  // Hash of the manifest without its reports section.
  std::string ManifestHash() const;
  AgentHandle LoadAgent(const std::string& id) const;
  TestSuite LoadTestSuite() const;

 private:
  std::string Fingerprint(const std::string& stage) const;
  bool UpToDate(const std::string& stage) const;
  const nlohmann::json& Require(const std::string& stage) const;
  void Commit(const std::string& stage, nlohmann::json record);
  void WriteManifest();
  void PruneOrphans() const;
  std::string Prefix(std::uint64_t seed) const;
  std::vector<AgentHandle> Population(std::uint64_t seed) const;
  std::filesystem::path Path(const std::string& rel) const;
  nlohmann::json SaveTrained(const std::string& dir, const TrainedAgent& t);
  void Log(const std::string& line) const;

  RunConfig config_;
  std::ostream* progress_;
  nlohmann::json manifest_;
};

// The stages in dependency order, as accepted by RunAll.
const std::vector<std::string>& StageOrder();

}  // namespace convforge

#endif  // CONVFORGE_PIPELINE_H_
