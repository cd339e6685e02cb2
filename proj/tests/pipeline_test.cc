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

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "convforge/error.h"
#include "convforge/pipeline.h"
#include "doctest.h"

namespace convforge {
namespace {

namespace fs = std::filesystem;

fs::path FreshDir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("convforge_pipeline_test_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig Tiny(const fs::path& dir) {
  RunConfig c = RunConfig::Default(EnvId::kMatrix, RewardMode::kDifferentiated);
  c.ppo.total_env_steps = 4096;
  c.pipeline.pipeline_seeds = 1;
  c.pipeline.n_eval = 10;
  c.pipeline.steering_episodes = 10;
  c.output_dir = dir;
  return c;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void CollectPaths(const nlohmann::json& j, std::set<std::string>& out) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    for (const char* ext : {".json", ".jsonl", ".csv", ".md"}) {
      const std::string e(ext);
      if (s.size() > e.size() && s.compare(s.size() - e.size(), e.size(), e) == 0) {
        out.insert(s);
      }
    }
  } else if (j.is_structured()) {
    for (const auto& v : j) CollectPaths(v, out);
  }
}

std::set<std::string> FilesUnder(const fs::path& root) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.insert(fs::relative(e.path(), root).generic_string());
  }
  return out;
}

TEST_CASE("config validation and round trip") {
  RunConfig c = Tiny("/tmp/x");
  CHECK_NOTHROW(c.Validate());
  const RunConfig back = RunConfigFromJson(RunConfigToJson(c));
  CHECK(RunConfigToJson(back) == RunConfigToJson(c));
  CHECK(c.PipelineSeeds() == std::vector<std::uint64_t>{0});

  RunConfig bad = c;
  bad.pipeline.n_k0_seeds = 1;
  CHECK_THROWS_AS(bad.Validate(), Error);
  bad = c;
  bad.pipeline.subset_fraction = 1.5;
  CHECK_THROWS_AS(bad.Validate(), Error);
  bad = c;
  bad.pipeline.epsilon = 6.0;
  bad.pipeline.delta = 5.0;
  CHECK_THROWS_AS(bad.Validate(), Error);
  nlohmann::json j = RunConfigToJson(c);
  j["bogus"] = 1;
  CHECK_THROWS_AS(RunConfigFromJson(j), Error);
}

TEST_CASE("evaluation before k2 names the missing stage") {
  const fs::path dir = FreshDir("missing");
  Pipeline p(Tiny(dir));
  p.TrainK0();
  p.Analyze();
  p.SampleSubsets();
  p.TrainK1();
  p.TrainBaselines({BaselineKind::kBr, BaselineKind::kFcp, BaselineKind::kSyklrbr});
  p.BuildTestsuite();
  try {
    p.Evaluate();
    FAIL("evaluate succeeded without k2");
  } catch (const MissingArtifact& e) {
    CHECK(e.stage() == "k2");
  }
  Pipeline q(Tiny(FreshDir("missing_k1")));
  CHECK_THROWS_AS(q.TrainK1(), MissingArtifact);
  fs::remove_all(dir);
}

TEST_CASE("full run inventory, closure and idempotency") {
  const fs::path dir = FreshDir("full");
  const RunConfig cfg = Tiny(dir);
  {
    Pipeline p(cfg);
    p.RunAll();
  }
  const nlohmann::json m = nlohmann::json::parse(Slurp(dir / kManifestFile));
  const auto& st = m.at("stages");
  CHECK(st.at("k0").at("seeds").at("0").at("agents").size() == 8u);
  const int big_m = st.at("subsets").at("seeds").at("0").at("M").get<int>();
  CHECK(st.at("k1").at("seeds").at("0").at("agents").size() == static_cast<size_t>(big_m));
  CHECK(st.at("k2").at("seeds").at("0").at("level").get<int>() == 2);
  const auto& base = st.at("baselines").at("seeds").at("0");
  for (const char* k : {"br", "fcp", "syklrbr"}) CHECK(base.contains(k));
  CHECK(st.at("testsuite").at("k0_test").size() == 4u);
  for (const char* r : {"reports/table1.csv", "reports/table1.md", "reports/report.json"}) {
    CHECK(fs::exists(dir / r));
  }
  const std::string csv = Slurp(dir / "reports/table1.csv");
  CHECK(csv.find("ConventionPlay") != std::string::npos);
  CHECK(csv.find("# manifest_hash: ") != std::string::npos);

  // Every referenced artifact exists and every file is referenced.
  std::set<std::string> referenced;
  CollectPaths(m, referenced);
  for (const auto& r : referenced) CHECK_MESSAGE(fs::exists(dir / r), r);
  referenced.insert(kManifestFile);
  for (const auto& f : FilesUnder(dir)) CHECK_MESSAGE(referenced.count(f) == 1u, f);

  // A second run is a no-op.
  const auto stamp = fs::last_write_time(dir / "k2/s0_k2.json");
  const std::string table = Slurp(dir / "reports/table1.csv");
  const std::string manifest_bytes = Slurp(dir / kManifestFile);
  {
    Pipeline p(cfg);
    p.RunAll();
    CHECK(p.manifest() == m);
  }
  CHECK(fs::last_write_time(dir / "k2/s0_k2.json") == stamp);
  CHECK(Slurp(dir / "reports/table1.csv") == table);
  CHECK(Slurp(dir / kManifestFile) == manifest_bytes);

  // Changing one stage's inputs retrains it and drops stale artifacts.
  std::ofstream(dir / "k1/junk.json") << "{}";
  RunConfig changed = cfg;
  changed.pipeline.subset_fraction = 0.5;
  {
    Pipeline p(changed);
    p.RunAll(kStageK1);
    CHECK_FALSE(p.manifest().at("stages").contains("k2"));
    CHECK_FALSE(p.manifest().at("stages").contains("evaluate"));
    CHECK(p.manifest().at("stages").contains("k0"));
  }
  CHECK_FALSE(fs::exists(dir / "k1/junk.json"));
  CHECK_FALSE(fs::exists(dir / "k2/s0_k2.json"));
  CHECK(fs::last_write_time(dir / "k0/s0_k0_00.json") <= stamp);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace convforge
