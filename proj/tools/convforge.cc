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

// Command-line driver for the ConventionPlay pipeline and the play service.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "convforge/error.h"
#include "convforge/io.h"
#include "convforge/pipeline.h"
#include "convforge/service.h"

namespace fs = std::filesystem;
using convforge::Pipeline;
using convforge::RunConfig;

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::string env = "matrix";
  std::string reward = "uniform";
  long long seed = -1;
  std::string stage;
  std::string kind = "all";
  std::string agent;
  std::string partner;
  int port = convforge::kDefaultPort;
  std::string log_dir;
};

RunConfig ResolveConfig(const Flags& f) {
  RunConfig c;
  const fs::path manifest = fs::path(f.out) / convforge::kManifestFile;
  if (!f.config.empty()) {
    c = convforge::RunConfigFromJson(convforge::ReadJson(f.config));
  } else if (fs::exists(manifest)) {
    c = convforge::RunConfigFromJson(convforge::ReadJson(manifest).at("config"));
  } else {
    c = RunConfig::Default(convforge::ParseEnvId(f.env),
                           convforge::ParseRewardMode(f.reward));
  }
  if (f.seed >= 0) c.seed = static_cast<std::uint64_t>(f.seed);
  c.output_dir = f.out;
  c.Validate();
  return c;
}

std::vector<convforge::BaselineKind> Kinds(const std::string& kind) {
  if (kind == "all") {
    return {convforge::BaselineKind::kBr, convforge::BaselineKind::kFcp,
            convforge::BaselineKind::kSyklrbr};
  }
  return {convforge::ParseBaseline(kind)};
}

int Serve(const Flags& f) {
  fs::path log_dir = f.log_dir.empty() ? fs::path(f.out) / "sessions" : fs::path(f.log_dir);
  convforge::PlayService service(f.out, log_dir);
  convforge::PlayServer server(service, f.port);
  server.Start();
  std::cerr << "[serve] listening on 127.0.0.1:" << server.port() << " ("
            << convforge::EnvIdName(service.env().env_id) << ")" << std::endl;
  server.Wait();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ConventionPlay: hierarchical training of adaptive coordination agents"};
  app.require_subcommand(1);
  Flags f;
  auto common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "RunConfig JSON file");
    sub->add_option("--out", f.out, "run directory")->required();
    sub->add_option("--seed", f.seed, "base seed (overrides the config)");
    sub->add_option("--env", f.env, "matrix|pmr, when no config is given");
    sub->add_option("--reward-mode", f.reward,
                    "uniform|differentiated, when no config is given");
  };
  struct Command {
    const char* name;
    const char* help;
  };
  const std::vector<Command> commands = {
      {"train-k0", "train the self-play K0 population"},
      {"analyze", "cross-play the K0 population and partition it into conventions"},
      {"sample-subsets", "stratified sampling of K1 training subsets"},
      {"train-k1", "train the restricted K1 best responses"},
      {"train-k2", "train the ConventionPlay K2 agent"},
      {"train-baseline", "train BR, FCP and SyKLRBR baselines"},
      {"build-testsuite", "build the scripted K0-test and trained K1-test partners"},
      {"evaluate", "evaluate every method against the test suite"},
      {"report", "write the efficiency tables"},
      {"steering", "steering analysis of the K2 agent"},
      {"serve", "serve live play sessions over HTTP and WebSocket"},
      {"run-all", "run every stage in dependency order"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    common(sub);
    subs[c.name] = sub;
  }
  subs["train-baseline"]->add_option("--kind", f.kind, "br|fcp|syklrbr|all");
  subs["steering"]->add_option("--agent", f.agent, "agent id (default: first K2)");
  subs["steering"]->add_option("--partner", f.partner, "partner id");
  subs["serve"]->add_option("--port", f.port, "port on 127.0.0.1 (default 8642)");
  subs["serve"]->add_option("--log-dir", f.log_dir,
                            "session log directory (default <out>/sessions)");
  subs["run-all"]->add_option("--stage", f.stage, "stop after this stage");

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "serve") return Serve(f);
    Pipeline p(ResolveConfig(f), &std::cerr);
    if (cmd == "train-k0") p.TrainK0();
    if (cmd == "analyze") p.Analyze();
    if (cmd == "sample-subsets") p.SampleSubsets();
    if (cmd == "train-k1") p.TrainK1();
    if (cmd == "train-k2") p.TrainK2();
    if (cmd == "train-baseline") p.TrainBaselines(Kinds(f.kind));
    if (cmd == "build-testsuite") p.BuildTestsuite();
    if (cmd == "evaluate") p.Evaluate();
    if (cmd == "report") p.Report();
    if (cmd == "steering") {
      if (f.agent.empty() && f.partner.empty()) {
        p.Steering();
      } else {
        CONVFORGE_CHECK(!f.agent.empty() && !f.partner.empty(),
                        "steering: give both --agent and --partner");
        p.Steering(f.agent, f.partner);
      }
    }
    if (cmd == "run-all") p.RunAll(f.stage);
  } catch (const convforge::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
