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

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "convforge/agent.h"
#include "convforge/pipeline.h"
#include "convforge/rollout.h"
#include "convforge/service.h"
#include "convforge/training.h"
#include "doctest.h"

namespace convforge {
namespace {

namespace fs = std::filesystem;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

nlohmann::json Action(int a) { return {{"type", "action"}, {"value", a}}; }

EnvConfig Uniform(EnvId id) { return EnvConfig::Make(id, RewardMode::kUniform); }

TEST_CASE("mirroring a fixed agent is fully efficient") {
  const EnvConfig c = Uniform(EnvId::kMatrix);
  PlaySession s("s1", c, AgentHandle::FixedAction(0), 1, 5, 10.0);
  CHECK(s.Opening().at("protocol_version") == kProtocolVersion);
  CHECK(s.Opening().at("obs").size() == static_cast<size_t>(c.ObsDim()));
  std::vector<nlohmann::json> last;
  for (int t = 0; t < c.horizon; ++t) {
    last = s.Handle(Action(0));
    REQUIRE(last[0].at("type") == "step");
    CHECK(last[0].at("reward") == 1.0);
    CHECK(last[0].at("agent_action") == 0);
  }
  REQUIRE(last.size() == 2u);
  const auto& sum = last[1];
  CHECK(sum.at("type") == "summary");
  CHECK(sum.at("return") == 10.0);
  CHECK(sum.at("eta") == 100.0);
  CHECK(sum.at("final_convention") == 0);
  CHECK(s.Render().at("history").size() == 10u);
}

TEST_CASE("invalid messages leave the session unchanged") {
  const EnvConfig c = Uniform(EnvId::kMatrix);
  PlaySession s("s2", c, AgentHandle::FixedAction(2), 0, 5, 10.0);
  const nlohmann::json before = s.Render();
  const nlohmann::json bad[] = {nlohmann::json::array(),
                                {{"type", "move"}, {"value", 1}},
                                {{"type", "action"}},
                                {{"type", "action"}, {"value", "1"}},
                                {{"type", "action"}, {"value", 1.5}},
                                Action(-1),
                                Action(c.NumActions())};
  for (const auto& m : bad) {
    const auto r = s.Handle(m);
    REQUIRE(r.size() == 1u);
    CHECK(r[0].at("type") == "error");
    CHECK(r[0].at("protocol_version") == kProtocolVersion);
  }
  CHECK(s.Render() == before);
  for (int t = 0; t < c.horizon; ++t) s.Handle(Action(1));
  CHECK(s.done());
  CHECK(s.total_return() == 0.0);
  const nlohmann::json done_state = s.Render();
  const auto r = s.Handle(Action(1));
  CHECK(r[0].at("type") == "error");
  CHECK(s.Render() == done_state);
  CHECK(s.total_return() == 0.0);
}

// Drives a session with a scripted human and checks it against the headless
// episode for the same seed, then replays the log.
void CheckAgainstHeadless(const EnvConfig& c, const AgentHandle& human,
                          const AgentHandle& agent, int human_side, std::uint64_t seed) {
  PlaySession s("s3", c, agent, human_side, seed, 1.0);
  RecurrentState rec = human.InitialState();
  Rng unused(0);
  nlohmann::json obs = s.Opening().at("obs");
  std::vector<double> rewards;
  while (!s.done()) {
    const int a = Act(human, c, rec, obs.get<Observation>(), unused, true);
    const auto r = s.Handle(Action(a));
    REQUIRE(r[0].at("type") == "step");
    rewards.push_back(r[0].at("reward").get<double>());
    obs = r[0].at("obs");
  }
  EpisodeTrace trace;
  if (human_side == 0) {
    PlayEpisode(human, agent, c, seed, &trace);
  } else {
    PlayEpisode(agent, human, c, seed, &trace);
  }
  CHECK(rewards == trace.rewards);
  CHECK(ReplaySessionLog(s.LogJsonl(), agent) == rewards);
}

TEST_CASE("sessions match headless episodes and replay") {
  const EnvConfig pmr = Uniform(EnvId::kPmr);
  for (int side = 0; side < 2; ++side) {
    CheckAgainstHeadless(pmr, AgentHandle::GoToLandmark(1), AgentHandle::GoToLandmark(1), side,
                         40 + side);
  }
  const EnvConfig m = Uniform(EnvId::kMatrix);
  PPOConfig ppo = PPOConfig::ForEnv(m.env_id);
  ppo.total_env_steps = 4096;
  const AgentHandle neural = TrainSelfPlay(m, ppo, 1, {"n"}).first;
  for (int side = 0; side < 2; ++side) {
    CheckAgainstHeadless(m, AgentHandle::FixedAction(2), neural, side, 7);
  }
  PlaySession s("s4", m, neural, 0, 7, 10.0);
  s.Handle(Action(0));
  std::string log = s.LogJsonl();
  const auto pos = log.find("\"agent_action\":");
  REQUIRE(pos != std::string::npos);
  log[pos + 15] = log[pos + 15] == '0' ? '1' : '0';
  CHECK_THROWS(ReplaySessionLog(log, neural));
}

fs::path TinyRun() {
  const fs::path dir = fs::temp_directory_path() / "convforge_service_test_run";
  fs::remove_all(dir);
  RunConfig cfg = RunConfig::Default(EnvId::kMatrix, RewardMode::kUniform);
  cfg.ppo.total_env_steps = 2048;
  cfg.pipeline.n_k0_seeds = 2;
  cfg.pipeline.pipeline_seeds = 1;
  cfg.output_dir = dir;
  Pipeline(cfg).RunAll(kStageK0);
  return dir;
}

TEST_CASE("service routes") {
  const fs::path dir = TinyRun();
  PlayService svc(dir, dir / "sessions");
  const nlohmann::json agents = svc.ListAgents();
  REQUIRE(agents.at("agents").size() == 2u);
  const std::string id = agents["agents"][0].at("id");
  CHECK(svc.Route("GET", "/nope", "").status == 404);
  CHECK(svc.Route("POST", "/sessions", "{not json").status == 400);
  CHECK(svc.Route("POST", "/sessions", R"({"agent_id":"ghost"})").status == 404);
  CHECK(svc.Route("POST", "/sessions", R"({"seed":1})").status == 400);
  const HttpReply made = svc.Route(
      "POST", "/sessions", nlohmann::json{{"env", "matrix"}, {"agent_id", id}, {"seed", 3}}.dump());
  REQUIRE(made.status == 200);
  const std::string sid = made.body.at("session_id");
  CHECK(svc.Route("GET", "/sessions/" + sid, "").body.at("done") == false);
  CHECK(svc.SessionMessage(sid, "garbage")[0].at("type") == "error");
  CHECK(svc.SessionMessage("missing", Action(0).dump())[0].at("type") == "error");
  CHECK(svc.SessionMessage(sid, Action(0).dump())[0].at("type") == "step");
  CHECK(fs::exists(dir / "sessions" / (sid + ".jsonl")));
  fs::remove_all(dir);
}

std::string HttpCall(int port, http::verb verb, const std::string& target,
                     const std::string& body) {
  boost::asio::io_context ioc;
  tcp::socket sock(ioc);
  sock.connect({boost::asio::ip::make_address("127.0.0.1"), static_cast<unsigned short>(port)});
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  req.set(http::field::content_type, "application/json");
  req.body() = body;
  req.prepare_payload();
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  return res.body();
}

TEST_CASE("socket round trip matches the headless episode") {
  const fs::path dir = TinyRun();
  PlayService svc(dir, dir / "sessions");
  PlayServer server(svc, 0);
  server.Start();
  REQUIRE(server.port() > 0);
  const nlohmann::json agents =
      nlohmann::json::parse(HttpCall(server.port(), http::verb::get, "/agents", ""));
  const std::string agent_id = agents.at("agents")[1].at("id");
  const std::uint64_t seed = 12;
  const nlohmann::json opening = nlohmann::json::parse(HttpCall(
      server.port(), http::verb::post, "/sessions",
      nlohmann::json{{"agent_id", agent_id}, {"human_side", 0}, {"seed", seed}}.dump()));
  const std::string sid = opening.at("session_id");

  boost::asio::io_context ioc;
  websocket::stream<tcp::socket> ws(ioc);
  ws.next_layer().connect(
      {boost::asio::ip::make_address("127.0.0.1"), static_cast<unsigned short>(server.port())});
  ws.handshake("127.0.0.1", "/sessions/" + sid);
  std::vector<double> rewards;
  nlohmann::json summary;
  const EnvConfig c = svc.env();
  for (int t = 0; t < c.horizon; ++t) {
    ws.write(boost::asio::buffer(Action(1).dump()));
    beast::flat_buffer buf;
    ws.read(buf);
    const nlohmann::json r = nlohmann::json::parse(beast::buffers_to_string(buf.data()));
    REQUIRE(r.at("type") == "step");
    rewards.push_back(r.at("reward").get<double>());
    if (r.at("done").get<bool>()) {
      beast::flat_buffer b2;
      ws.read(b2);
      summary = nlohmann::json::parse(beast::buffers_to_string(b2.data()));
    }
  }
  ws.close(websocket::close_code::normal);
  server.Stop();

  CHECK(summary.at("type") == "summary");
  // Headless: the same agent against a scripted fixed(1) human.
  const AgentHandle agent = LoadCheckpoint(dir / "k0" / (agent_id + ".json"));
  EpisodeTrace trace;
  PlayEpisode(AgentHandle::FixedAction(1), agent, c, seed, &trace);
  const std::vector<double>& expect = trace.rewards;
  CHECK(rewards == expect);
  std::ifstream in(dir / "sessions" / (sid + ".jsonl"));
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ReplaySessionLog(ss.str(), agent) == rewards);
  double total = 0.0;
  for (double r : rewards) total += r;
  CHECK(summary.at("return").get<double>() == total);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace convforge
