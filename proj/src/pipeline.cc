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

#include "convforge/pipeline.h"

#include <algorithm>
#include <map>
#include <set>

#include "convforge/conventions.h"
#include "convforge/error.h"
#include "convforge/io.h"
#include "convforge/parallel.h"
#include "convforge/random.h"

namespace convforge {
namespace fs = std::filesystem;
namespace {

enum Stream : std::uint64_t {
  kK0Seed = 11,
  kAnalyzeSeed,
  kSubsetSeed,
  kK1Seed,
  kK2Seed,
  kBaselineSeed,
  kTestSeed,
  kEvalSeed,
  kSteerSeed,
};

const char* kDirs[] = {"k0", "k1", "k2", "baselines", "analysis", "testsuite",
                       "reports"};

const std::vector<std::string> kMethods = {"br", "fcp", "syklrbr",
                                           "conventionplay"};

std::string CommandFor(const std::string& stage) {
  if (stage == kStageK0) return "train-k0";
  if (stage == kStageSubsets) return "sample-subsets";
  if (stage == kStageK1) return "train-k1";
  if (stage == kStageK2) return "train-k2";
  if (stage == kStageBaselines) return "train-baseline";
  if (stage == kStageTestsuite) return "build-testsuite";
  return stage;
}

void CollectPaths(const nlohmann::json& j, std::set<std::string>* out) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    for (const char* d : kDirs) {
      if (s.rfind(std::string(d) + "/", 0) == 0) out->insert(s);
    }
  } else if (j.is_structured()) {
    for (const auto& v : j) CollectPaths(v, out);
  }
}

nlohmann::json CapsJson(const AgentHandle& a) {
  return a.meta.capability_set ? nlohmann::json(*a.meta.capability_set)
                               : nlohmann::json(nullptr);
}

}  // namespace

RunConfig RunConfig::Default(EnvId env_id, RewardMode mode) {
  RunConfig c;
  c.env = EnvConfig::Make(env_id, mode);
  c.ppo = PPOConfig::ForEnv(env_id);
  return c;
}

double RunConfig::Epsilon() const {
  return pipeline.epsilon ? *pipeline.epsilon : DefaultEpsilon(env);
}

double RunConfig::Delta() const {
  return pipeline.delta ? *pipeline.delta : DefaultDelta(env);
}

std::vector<std::uint64_t> RunConfig::PipelineSeeds() const {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < pipeline.pipeline_seeds; ++i) out.push_back(seed + i);
  return out;
}

void RunConfig::Validate() const {
  env.Validate();
  ppo.Validate();
  const PipelineSettings& p = pipeline;
  CONVFORGE_CHECK(p.n_k0_seeds >= 2, "config: pipeline.n_k0_seeds must be >= 2");
  CONVFORGE_CHECK(p.m >= 0, "config: pipeline.M must be >= 0 (0 = auto)");
  CONVFORGE_CHECK(p.subset_fraction > 0.0 && p.subset_fraction <= 1.0,
                  "config: pipeline.subset_fraction must be in (0,1]");
  CONVFORGE_CHECK(p.pipeline_seeds >= 1, "config: pipeline.pipeline_seeds must be >= 1");
  CONVFORGE_CHECK(p.n_eval >= 1, "config: pipeline.n_eval must be >= 1");
  CONVFORGE_CHECK(p.steering_episodes >= 1,
                  "config: pipeline.steering_episodes must be >= 1");
  CONVFORGE_CHECK(Epsilon() >= 0.0 && Delta() > Epsilon(),
                  "config: need delta > epsilon >= 0");
}

nlohmann::json RunConfigToJson(const RunConfig& c) {
  const PipelineSettings& p = c.pipeline;
  nlohmann::json pj = {{"n_k0_seeds", p.n_k0_seeds},
                       {"M", p.m},
                       {"subset_fraction", p.subset_fraction},
                       {"pipeline_seeds", p.pipeline_seeds},
                       {"n_eval", p.n_eval},
                       {"epsilon", p.epsilon ? nlohmann::json(*p.epsilon) : nullptr},
                       {"delta", p.delta ? nlohmann::json(*p.delta) : nullptr},
                       {"steering_episodes", p.steering_episodes}};
  return {{"env", c.env}, {"ppo", c.ppo}, {"pipeline", pj}, {"seed", c.seed}};
}

RunConfig RunConfigFromJson(const nlohmann::json& j) {
  CONVFORGE_CHECK(j.is_object(), "config: expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    CONVFORGE_CHECK(key == "env" || key == "ppo" || key == "pipeline" || key == "seed",
                    "config: unknown key '" + key + "'");
  }
  RunConfig c;
  if (j.contains("env")) {
    from_json(j.at("env"), c.env);
  } else {
    c.env = EnvConfig::Make(EnvId::kMatrix, RewardMode::kUniform);
  }
  c.ppo = PPOConfig::ForEnv(c.env.env_id);
  if (j.contains("ppo")) from_json(j.at("ppo"), c.ppo);
  if (j.contains("pipeline")) {
    const auto& p = j.at("pipeline");
    PipelineSettings& s = c.pipeline;
    s.n_k0_seeds = p.value("n_k0_seeds", s.n_k0_seeds);
    s.m = p.value("M", s.m);
    s.subset_fraction = p.value("subset_fraction", s.subset_fraction);
    s.pipeline_seeds = p.value("pipeline_seeds", s.pipeline_seeds);
    s.n_eval = p.value("n_eval", s.n_eval);
    s.steering_episodes = p.value("steering_episodes", s.steering_episodes);
    if (p.contains("epsilon") && !p["epsilon"].is_null())
      s.epsilon = p["epsilon"].get<double>();
    if (p.contains("delta") && !p["delta"].is_null()) s.delta = p["delta"].get<double>();
  }
  c.seed = j.value("seed", c.seed);
  return c;
}

const std::vector<std::string>& StageOrder() {
  static const std::vector<std::string> kOrder = {
      kStageK0,        kStageAnalyze,   kStageSubsets,  kStageK1, kStageK2,
      kStageBaselines, kStageTestsuite, kStageEvaluate, "report", "steering"};
  return kOrder;
}

Pipeline::Pipeline(RunConfig config, std::ostream* progress)
    : config_(std::move(config)), progress_(progress) {
  config_.Validate();
  CONVFORGE_CHECK(!config_.output_dir.empty(), "config: output directory not set");
  fs::create_directories(config_.output_dir);
  const fs::path mpath = config_.output_dir / kManifestFile;
  if (fs::exists(mpath)) {
    manifest_ = ReadJson(mpath);
    CONVFORGE_CHECK(manifest_.value("format_version", 0) == 1,
                    "manifest: unsupported format_version");
  } else {
    manifest_ = {{"format_version", 1}, {"stages", nlohmann::json::object()}};
  }
  manifest_["config"] = RunConfigToJson(config_);
  manifest_["pipeline_seeds"] = config_.PipelineSeeds();
  if (!manifest_.contains("stages")) manifest_["stages"] = nlohmann::json::object();
}

fs::path Pipeline::Path(const std::string& rel) const {
  return config_.output_dir / rel;
}

std::string Pipeline::Prefix(std::uint64_t seed) const {
  return "s" + std::to_string(seed) + "_";
}

void Pipeline::Log(const std::string& line) const {
  if (progress_) *progress_ << line << std::endl;
}

std::string Pipeline::Fingerprint(const std::string& stage) const {
  const PipelineSettings& p = config_.pipeline;
  nlohmann::json j = {{"stage", stage}};
  if (stage == kStageK0) {
    j["env"] = config_.env;
    j["ppo"] = config_.ppo;
    j["n"] = p.n_k0_seeds;
    j["seeds"] = config_.PipelineSeeds();
  } else if (stage == kStageAnalyze) {
    j["up"] = Fingerprint(kStageK0);
    j["n_eval"] = p.n_eval;
    j["epsilon"] = config_.Epsilon();
    j["delta"] = config_.Delta();
  } else if (stage == kStageSubsets) {
    j["up"] = Fingerprint(kStageAnalyze);
    j["m"] = p.m;
    j["fraction"] = p.subset_fraction;
  } else if (stage == kStageK1) {
    j["up"] = Fingerprint(kStageSubsets);
  } else if (stage == kStageK2) {
    j["up"] = Fingerprint(kStageK1);
  } else if (stage == kStageBaselines) {
    j["up"] = Fingerprint(kStageAnalyze);
  } else if (stage == kStageTestsuite) {
    j["env"] = config_.env;
    j["ppo"] = config_.ppo;
    j["seed"] = config_.seed;
    j["fraction"] = p.subset_fraction;
    j["n_eval"] = p.n_eval;
  } else if (stage == kStageEvaluate) {
    nlohmann::json kinds = nlohmann::json::array();
    const auto& stages = manifest_["stages"];
    if (stages.contains(kStageBaselines)) kinds = stages[kStageBaselines]["kinds"];
    j["up"] = {Fingerprint(kStageK2), Fingerprint(kStageBaselines),
               Fingerprint(kStageTestsuite)};
    j["kinds"] = kinds;
    j["n_eval"] = p.n_eval;
  } else {
    throw Error("internal: no fingerprint for stage '" + stage + "'");
  }
  return Fnv1aHex(j.dump());
}

bool Pipeline::UpToDate(const std::string& stage) const {
  const auto& stages = manifest_["stages"];
  if (!stages.contains(stage)) return false;
  const auto& rec = stages[stage];
  if (rec.value("fingerprint", "") != Fingerprint(stage)) return false;
  std::set<std::string> files;
  CollectPaths(rec, &files);
  for (const auto& f : files) {
    if (!fs::exists(Path(f))) return false;
  }
  return true;
}

const nlohmann::json& Pipeline::Require(const std::string& stage) const {
  if (!UpToDate(stage)) {
    const bool present = manifest_["stages"].contains(stage);
    throw MissingArtifact(
        stage, std::string(present ? "artifacts are stale or incomplete"
                                   : "no artifacts recorded") +
                   "; run '" + CommandFor(stage) + "' first");
  }
  return manifest_["stages"][stage];
}

void Pipeline::Commit(const std::string& stage, nlohmann::json record) {
  record["fingerprint"] = Fingerprint(stage);
  manifest_["stages"][stage] = std::move(record);
  // Drop stages whose inputs just changed; their files become orphans.
  for (const std::string& s : StageOrder()) {
    if (s == stage || !manifest_["stages"].contains(s)) continue;
    if (s == "report" || s == "steering") continue;
    if (!UpToDate(s)) manifest_["stages"].erase(s);
  }
  if (manifest_.contains("reports")) {
    auto& reports = manifest_["reports"];
    if (reports.contains("table") &&
        (!UpToDate(kStageEvaluate) ||
         reports["table"].value("evaluate", "") != Fingerprint(kStageEvaluate))) {
      reports.erase("table");
    }
    if (reports.contains("steering") &&
        (!UpToDate(kStageK2) || !UpToDate(kStageTestsuite) ||
         reports["steering"].value("k2", "") != Fingerprint(kStageK2) ||
         reports["steering"].value("testsuite", "") != Fingerprint(kStageTestsuite))) {
      reports.erase("steering");
    }
  }
  WriteManifest();
}

void Pipeline::WriteManifest() {
  WriteJsonAtomic(Path(kManifestFile), manifest_);
  PruneOrphans();
}

void Pipeline::PruneOrphans() const {
  std::set<std::string> keep;
  CollectPaths(manifest_, &keep);
  for (const char* d : kDirs) {
    const fs::path dir = Path(d);
    if (!fs::exists(dir)) continue;
    std::vector<fs::path> doomed;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string rel =
          fs::relative(entry.path(), config_.output_dir).generic_string();
      if (!keep.count(rel)) doomed.push_back(entry.path());
    }
    for (const auto& p : doomed) fs::remove(p);
  }
}

std::string Pipeline::ManifestHash() const {
  nlohmann::json m = manifest_;
  m.erase("reports");
  return Fnv1aHex(m.dump());
}

nlohmann::json Pipeline::SaveTrained(const std::string& dir, const TrainedAgent& t) {
  const std::string file = dir + "/" + t.agent.id + ".json";
  const std::string log = dir + "/" + t.agent.id + ".log.jsonl";
  SaveCheckpoint(Path(file), t.agent, config_.env.env_id);
  WriteFileAtomic(Path(log), t.report.ToJsonLines());
  nlohmann::json e = {{"id", t.agent.id},
                      {"file", file},
                      {"log", log},
                      {"level", LevelToJson(t.agent.meta.level)},
                      {"J_SP", t.report.j_sp}};
  if (t.agent.meta.capability_set) e["capability_set"] = *t.agent.meta.capability_set;
  return e;
}

AgentHandle Pipeline::LoadAgent(const std::string& id) const {
  std::map<std::string, std::string> files;
  std::function<void(const nlohmann::json&)> walk = [&](const nlohmann::json& j) {
    if (j.is_object()) {
      if (j.contains("id") && j.contains("file") && j["id"].is_string()) {
        files[j["id"].get<std::string>()] = j["file"].get<std::string>();
      }
      for (const auto& v : j) walk(v);
    } else if (j.is_array()) {
      for (const auto& v : j) walk(v);
    }
  };
  walk(manifest_["stages"]);
  auto it = files.find(id);
  CONVFORGE_CHECK(it != files.end(), "unknown agent id '" + id + "'");
  return LoadCheckpoint(Path(it->second));
}

std::vector<AgentHandle> Pipeline::Population(std::uint64_t seed) const {
  const auto& rec = Require(kStageAnalyze)["seeds"][std::to_string(seed)];
  std::vector<AgentHandle> out;
  for (const auto& e : rec["population"]) {
    AgentHandle a = LoadCheckpoint(Path(e["file"].get<std::string>()));
    a.meta.capability_set = std::vector<int>{e["convention"].get<int>()};
    a.meta.j_sp = e["rho"].get<double>();
    out.push_back(std::move(a));
  }
  return out;
}

void Pipeline::TrainK0() {
  if (UpToDate(kStageK0)) return Log("[k0] up to date");
  nlohmann::json seeds = nlohmann::json::object();
  for (std::uint64_t s : config_.PipelineSeeds()) {
    Log("[k0] seed " + std::to_string(s) + ": training " +
        std::to_string(config_.pipeline.n_k0_seeds) + " self-play policies");
    auto trained = GenerateK0(config_.env, config_.ppo, config_.pipeline.n_k0_seeds,
                              DeriveSeed(s, {kK0Seed}), Prefix(s), progress_);
    nlohmann::json agents = nlohmann::json::array();
    for (const auto& t : trained) agents.push_back(SaveTrained("k0", t));
    seeds[std::to_string(s)] = {{"agents", agents}};
  }
  Commit(kStageK0, {{"seeds", seeds}});
}

void Pipeline::Analyze() {
  const auto& k0 = Require(kStageK0);
  if (UpToDate(kStageAnalyze)) return Log("[analyze] up to date");
  nlohmann::json seeds = nlohmann::json::object();
  for (std::uint64_t s : config_.PipelineSeeds()) {
    const std::string key = std::to_string(s);
    std::vector<AgentHandle> pop;
    for (const auto& e : k0["seeds"][key]["agents"]) {
      pop.push_back(LoadCheckpoint(Path(e["file"].get<std::string>())));
    }
    K0Analysis an = AnalyzeK0(pop, config_.env, config_.pipeline.n_eval,
                              config_.Epsilon(), config_.Delta(),
                              DeriveSeed(s, {kAnalyzeSeed}), Prefix(s));
    const std::string cp_file = "analysis/s" + key + "_crossplay.csv";
    const std::string part_file = "analysis/s" + key + "_partition.json";
    WriteFileAtomic(Path(cp_file), an.cross_play.ToCsv());
    WriteJsonAtomic(Path(part_file), an.partition.ToJson(an.cross_play.ids));
    nlohmann::json population = nlohmann::json::array();
    for (size_t i = 0; i < an.population.size(); ++i) {
      const AgentHandle& a = an.population[i];
      std::string file = "k0/" + a.id + ".json";
      if (an.scripted_fallback) SaveCheckpoint(Path(file), a, config_.env.env_id);
      population.push_back({{"id", a.id},
                            {"file", file},
                            {"convention", an.partition.ClusterOf(static_cast<int>(i))},
                            {"rho", an.cross_play.values[i][i]}});
    }
    nlohmann::json rec = {{"cross_play", cp_file},
                          {"partition", part_file},
                          {"clusters", an.partition.clusters.size()},
                          {"violations", an.partition.violations.size()},
                          {"learned_clusters", an.learned_clusters},
                          {"scripted_fallback", an.scripted_fallback},
                          {"population", population}};
    if (an.scripted_fallback) {
      rec["deviation"] = "learned K0 population formed " +
                         std::to_string(an.learned_clusters) +
                         " cluster(s); replaced by scripted convention policies";
    }
    Log("[analyze] seed " + key + ": " + std::to_string(an.learned_clusters) +
        " learned cluster(s), " + std::to_string(an.partition.violations.size()) +
        " violation(s)" + (an.scripted_fallback ? ", scripted fallback" : ""));
    seeds[key] = rec;
  }
  Commit(kStageAnalyze, {{"seeds", seeds}});
}

void Pipeline::SampleSubsets() {
  const auto& an = Require(kStageAnalyze);
  if (UpToDate(kStageSubsets)) return Log("[subsets] up to date");
  nlohmann::json seeds = nlohmann::json::object();
  for (std::uint64_t s : config_.PipelineSeeds()) {
    const std::string key = std::to_string(s);
    const auto& rec = an["seeds"][key];
    std::vector<CapabilityProfile> profiles;
    for (const auto& e : rec["population"]) {
      profiles.push_back({e["id"].get<std::string>(), e["rho"].get<double>()});
    }
    int m = config_.pipeline.m > 0 ? config_.pipeline.m : rec["clusters"].get<int>();
    m = std::min<int>(m, static_cast<int>(profiles.size()));
    SubsetPlan plan = StratifiedSubsets(profiles, m, config_.pipeline.subset_fraction,
                                        DeriveSeed(s, {kSubsetSeed}));
    const std::string file = "analysis/s" + key + "_subsets.json";
    WriteJsonAtomic(Path(file), plan.ToJson());
    Log("[subsets] seed " + key + ": M = " + std::to_string(m));
    seeds[key] = {{"plan", file}, {"M", m}};
  }
  Commit(kStageSubsets, {{"seeds", seeds}});
}

void Pipeline::TrainK1() {
  const auto& sub = Require(kStageSubsets);
  if (UpToDate(kStageK1)) return Log("[k1] up to date");
  nlohmann::json seeds = nlohmann::json::object();
  for (std::uint64_t s : config_.PipelineSeeds()) {
    const std::string key = std::to_string(s);
    const SubsetPlan plan = SubsetPlan::FromJson(
        ReadJson(Path(sub["seeds"][key]["plan"].get<std::string>())));
    Log("[k1] seed " + key + ": training " + std::to_string(plan.m) +
        " restricted best responses");
    auto trained = TrainK1Population(plan, Population(s), config_.env, config_.ppo,
                                     DeriveSeed(s, {kK1Seed}), Prefix(s), progress_);
    nlohmann::json agents = nlohmann::json::array();
    for (const auto& t : trained) agents.push_back(SaveTrained("k1", t));
    seeds[key] = {{"agents", agents}};
  }
  Commit(kStageK1, {{"seeds", seeds}});
}

void Pipeline::TrainK2() {
  const auto& k1 = Require(kStageK1);
  if (UpToDate(kStageK2)) return Log("[k2] up to date");
  nlohmann::json seeds = nlohmann::json::object();
  for (std::uint64_t s : config_.PipelineSeeds()) {
    const std::string key = std::to_string(s);
    std::vector<AgentHandle> k1_pop;
    for (const auto& e : k1["seeds"][key]["agents"]) {
      k1_pop.push_back(LoadCheckpoint(Path(e["file"].get<std::string>())));
    }
    Log("[k2] seed " + key + ": training the ConventionPlay agent");
    TrainedAgent t = ::convforge::TrainK2(Population(s), k1_pop, config_.env,
                                          config_.ppo, DeriveSeed(s, {kK2Seed}),
                                          Prefix(s), progress_);
    seeds[key] = SaveTrained("k2", t);
  }
  Commit(kStageK2, {{"seeds", seeds}});
}

void Pipeline::TrainBaselines(const std::vector<BaselineKind>& kinds) {
  Require(kStageAnalyze);
  nlohmann::json rec;
  if (UpToDate(kStageBaselines)) {
    rec = manifest_["stages"][kStageBaselines];
  } else {
    rec = {{"kinds", nlohmann::json::array()}, {"seeds", nlohmann::json::object()}};
  }
  std::set<std::string> have;
  for (const auto& k : rec["kinds"]) have.insert(k.get<std::string>());
  bool changed = false;
  for (BaselineKind kind : kinds) {
    const std::string name = BaselineName(kind);
    if (have.count(name)) {
      Log("[baselines] " + name + " up to date");
      continue;
    }
    for (std::uint64_t s : config_.PipelineSeeds()) {
      const std::string key = std::to_string(s);
      Log("[baselines] seed " + key + ": training " + name);
      auto trained = TrainBaseline(
          kind, Population(s), config_.env, config_.ppo,
          DeriveSeed(s, {kBaselineSeed, static_cast<std::uint64_t>(kind)}), Prefix(s),
          progress_);
      nlohmann::json agents = nlohmann::json::array();
      for (const auto& t : trained) agents.push_back(SaveTrained("baselines", t));
      rec["seeds"][key][name] = agents;
    }
    have.insert(name);
    changed = true;
  }
  if (!changed && UpToDate(kStageBaselines)) return;
  nlohmann::json ordered = nlohmann::json::array();
  for (const auto& m : kMethods) {
    if (have.count(m)) ordered.push_back(m);
  }
  rec["kinds"] = ordered;
  Commit(kStageBaselines, rec);
}

void Pipeline::BuildTestsuite() {
  if (UpToDate(kStageTestsuite)) return Log("[testsuite] up to date");
  Log("[testsuite] building scripted K0-test and trained K1-test partners");
  const std::uint64_t seed = DeriveSeed(config_.seed, {kTestSeed});
  TestSuite suite = BuildTestSuite(config_.env, config_.ppo, seed, 0,
                                   config_.pipeline.subset_fraction,
                                   config_.pipeline.n_eval, progress_);
  nlohmann::json k0 = nlohmann::json::array(), k1 = nlohmann::json::array();
  for (const AgentHandle& a : suite.k0_test) {
    const std::string file = "testsuite/" + a.id + ".json";
    SaveCheckpoint(Path(file), a, config_.env.env_id);
    k0.push_back({{"id", a.id}, {"file", file}, {"capability_set", CapsJson(a)}});
  }
  for (size_t i = 0; i < suite.k1_test.size(); ++i) {
    const AgentHandle& a = suite.k1_test[i];
    const std::string file = "testsuite/" + a.id + ".json";
    SaveCheckpoint(Path(file), a, config_.env.env_id);
    k1.push_back({{"id", a.id},
                  {"file", file},
                  {"capability_set", CapsJson(a)},
                  {"j_star", suite.k1_optimum[i]}});
  }
  const std::string plan = "testsuite/plan.json";
  WriteJsonAtomic(Path(plan), suite.plan.ToJson());
  Commit(kStageTestsuite,
         {{"seed", seed}, {"plan", plan}, {"k0_test", k0}, {"k1_test", k1}});
}

TestSuite Pipeline::LoadTestSuite() const {
  const auto& rec = Require(kStageTestsuite);
  TestSuite suite;
  suite.seeds = {rec["seed"].get<std::uint64_t>()};
  suite.plan = SubsetPlan::FromJson(ReadJson(Path(rec["plan"].get<std::string>())));
  for (const auto& e : rec["k0_test"]) {
    suite.k0_test.push_back(LoadCheckpoint(Path(e["file"].get<std::string>())));
  }
  for (const auto& e : rec["k1_test"]) {
    suite.k1_test.push_back(LoadCheckpoint(Path(e["file"].get<std::string>())));
    suite.k1_optimum.push_back(e["j_star"].get<double>());
  }
  return suite;
}

void Pipeline::Evaluate() {
  const auto& k2 = Require(kStageK2);
  Require(kStageTestsuite);
  if (UpToDate(kStageEvaluate)) return Log("[evaluate] up to date");
  const TestSuite suite = LoadTestSuite();
  nlohmann::json base = nlohmann::json::object();
  if (UpToDate(kStageBaselines)) base = manifest_["stages"][kStageBaselines]["seeds"];

  struct Job {
    std::string method;
    std::uint64_t seed;
    std::string agent_id;
    std::string file;
  };
  std::vector<Job> jobs;
  for (const auto& m : kMethods) {
    for (std::uint64_t s : config_.PipelineSeeds()) {
      const std::string key = std::to_string(s);
      nlohmann::json entry;
      if (m == "conventionplay") {
        entry = k2["seeds"][key];
      } else if (base.contains(key) && base[key].contains(m)) {
        entry = base[key][m].back();  // the top level of the hierarchy
      } else {
        continue;
      }
      jobs.push_back({m, s, entry["id"].get<std::string>(),
                      entry["file"].get<std::string>()});
    }
  }
  Log("[evaluate] " + std::to_string(jobs.size()) + " agent(s) against " +
      std::to_string(suite.k0_test.size()) + " K0-test and " +
      std::to_string(suite.k1_test.size()) + " K1-test partners");
  std::vector<MethodRow> rows(jobs.size());
  ParallelFor(static_cast<int>(jobs.size()), [&](int i) {
    const AgentHandle agent = LoadCheckpoint(Path(jobs[i].file));
    rows[i] = EvaluateMethod(agent, suite, config_.env, config_.pipeline.n_eval,
                             DeriveSeed(jobs[i].seed, {kEvalSeed}));
  });
  nlohmann::json out = {{"n_eval", config_.pipeline.n_eval},
                        {"rows", nlohmann::json::array()}};
  for (size_t i = 0; i < jobs.size(); ++i) {
    nlohmann::json r = rows[i].ToJson();
    r["method"] = jobs[i].method;
    r["seed"] = jobs[i].seed;
    r["agent"] = jobs[i].agent_id;
    out["rows"].push_back(r);
  }
  const std::string file = "analysis/evaluation.json";
  WriteJsonAtomic(Path(file), out);
  Commit(kStageEvaluate, {{"rows", file}});
}

void Pipeline::Report() {
  const auto& ev = Require(kStageEvaluate);
  const nlohmann::json rows = ReadJson(Path(ev["rows"].get<std::string>()));
  std::map<std::string, std::vector<MethodRow>> by_method;
  for (const auto& r : rows["rows"]) {
    by_method[r["method"].get<std::string>()].push_back(MethodRow::FromJson(r));
  }
  const EfficiencyReport report = AggregateRows(
      EnvIdName(config_.env.env_id), RewardModeName(config_.env.reward_mode),
      config_.PipelineSeeds(), config_.pipeline.n_eval, kMethods, by_method);
  const std::string footer = "manifest_hash: " + ManifestHash();
  nlohmann::json rj = report.ToJson();
  rj["manifest_hash"] = ManifestHash();
  rj["provenance"] = ev["rows"];
  WriteFileAtomic(Path("reports/table1.csv"),
                  ExportReport(report, ReportFormat::kCsv, footer));
  WriteFileAtomic(Path("reports/table1.md"),
                  ExportReport(report, ReportFormat::kMarkdown, footer));
  WriteJsonAtomic(Path("reports/report.json"), rj);
  manifest_["reports"]["table"] = {{"csv", "reports/table1.csv"},
                                   {"markdown", "reports/table1.md"},
                                   {"json", "reports/report.json"},
                                   {"evaluate", Fingerprint(kStageEvaluate)}};
  WriteManifest();
  Log("[report] wrote reports/table1.{csv,md}");
}

void Pipeline::Steering() {
  const auto& k2 = Require(kStageK2);
  const auto& ts = Require(kStageTestsuite);
  const std::string agent =
      k2["seeds"][std::to_string(config_.PipelineSeeds()[0])]["id"].get<std::string>();
  // Lowest-value convention (ties: highest index); top value (ties: lowest).
  int low = 0, top = 0;
  for (int c = 1; c < config_.env.num_conventions; ++c) {
    if (config_.env.payoff_values[c] <= config_.env.payoff_values[low]) low = c;
    if (config_.env.payoff_values[c] > config_.env.payoff_values[top]) top = c;
  }
  const std::string follow = ts["k0_test"][low]["id"].get<std::string>();
  std::string lead;
  for (const auto& e : ts["k1_test"]) {
    const auto caps = e["capability_set"].get<std::vector<int>>();
    if (std::find(caps.begin(), caps.end(), top) != caps.end()) {
      lead = e["id"].get<std::string>();
      break;
    }
  }
  Steering(agent, follow);
  if (!lead.empty()) Steering(agent, lead);
}

void Pipeline::Steering(const std::string& agent_id, const std::string& partner_id) {
  Require(kStageK2);
  Require(kStageTestsuite);
  const AgentHandle agent = LoadAgent(agent_id);
  const AgentHandle partner = LoadAgent(partner_id);
  const SteeringResult res = SteeringAnalysis(
      agent, partner, config_.env, config_.pipeline.steering_episodes,
      DeriveSeed(config_.seed, {kSteerSeed, Fnv1a64(partner_id)}));
  const std::string stem = "reports/steering_" + agent_id + "_vs_" + partner_id;
  std::string lines = nlohmann::json({{"manifest_hash", ManifestHash()}}).dump() + "\n";
  for (const auto& r : res.records) lines += r.ToJson().dump() + "\n";
  WriteFileAtomic(Path(stem + ".jsonl"), lines);
  nlohmann::json summary = res.summary.ToJson();
  summary["agent"] = agent_id;
  summary["partner"] = partner_id;
  summary["manifest_hash"] = ManifestHash();
  WriteJsonAtomic(Path(stem + ".summary.json"), summary);
  auto& st = manifest_["reports"]["steering"];
  st["k2"] = Fingerprint(kStageK2);
  st["testsuite"] = Fingerprint(kStageTestsuite);
  st["runs"][agent_id + "_vs_" + partner_id] = {{"records", stem + ".jsonl"},
                                                {"summary", stem + ".summary.json"}};
  WriteManifest();
  Log("[steering] " + agent_id + " vs " + partner_id + ": modal convention " +
      std::to_string(res.summary.modal_convention) + ", convergence " +
      std::to_string(res.summary.convergence_rate));
}

void Pipeline::RunAll(const std::string& last_stage) {
  const auto& order = StageOrder();
  if (!last_stage.empty()) {
    CONVFORGE_CHECK(std::find(order.begin(), order.end(), last_stage) != order.end(),
                    "run-all: unknown stage '" + last_stage + "'");
  }
  for (const std::string& s : order) {
    if (s == kStageK0) TrainK0();
    if (s == kStageAnalyze) Analyze();
    if (s == kStageSubsets) SampleSubsets();
    if (s == kStageK1) TrainK1();
    if (s == kStageK2) TrainK2();
    if (s == kStageBaselines)
      TrainBaselines({BaselineKind::kBr, BaselineKind::kFcp, BaselineKind::kSyklrbr});
    if (s == kStageTestsuite) BuildTestsuite();
    if (s == kStageEvaluate) Evaluate();
    if (s == "report") Report();
    if (s == "steering") Steering();
    if (s == last_stage) break;
  }
}

}  // namespace convforge
