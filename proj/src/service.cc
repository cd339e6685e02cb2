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

#include "convforge/service.h"

#include <sys/socket.h>

#include <algorithm>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <cstdio>
#include <functional>
#include <set>
#include <thread>

#include "convforge/conventions.h"
#include "convforge/error.h"
#include "convforge/evalbench.h"
#include "convforge/io.h"

namespace convforge {
namespace fs = std::filesystem;
namespace {

constexpr int kOptimumEpisodes = 100;

nlohmann::json ErrorMessage(const std::string& msg) {
  return {{"type", "error"}, {"protocol_version", kProtocolVersion}, {"msg", msg}};
}

nlohmann::json VecJson(const Vec2& v) { return {v.x, v.y}; }

}  // namespace

PlaySession::PlaySession(std::string id, EnvConfig env, AgentHandle agent,
                         int human_side, std::uint64_t seed, double j_star)
    : id_(std::move(id)),
      env_(std::move(env)),
      agent_(std::move(agent)),
      human_side_(human_side),
      seed_(seed),
      j_star_(j_star),
      agent_rng_(DeriveSeed(seed, {static_cast<std::uint64_t>(2 - human_side)})) {
  CONVFORGE_CHECK(human_side == 0 || human_side == 1, "session: human_side must be 0 or 1");
  agent_.ValidateFor(env_);
  auto [state, obs] = Reset(env_, DeriveSeed(seed, {0}));
  state_ = state;
  obs_ = obs;
  rec_ = agent_.InitialState();
  log_.push_back({{"type", "session"},
                  {"protocol_version", kProtocolVersion},
                  {"session_id", id_},
                  {"env", env_},
                  {"agent_id", agent_.id},
                  {"human_side", human_side_},
                  {"seed", seed_},
                  {"j_star", j_star_}});
}

nlohmann::json PlaySession::Render() const {
  const int t = state_.step_index;
  if (env_.env_id == EnvId::kMatrix) {
    const int k = env_.num_conventions;
    std::vector<std::vector<double>> payoff(k, std::vector<double>(k, 0.0));
    for (int i = 0; i < k; ++i) payoff[i][i] = env_.payoff_values[i];
    nlohmann::json history = nlohmann::json::array();
    for (size_t i = 0; i < trace_.actions.size(); ++i) {
      history.push_back({{"actions", {trace_.actions[i][0], trace_.actions[i][1]}},
                         {"reward", trace_.rewards[i]}});
    }
    return {{"kind", "matrix"}, {"payoff_matrix", payoff}, {"history", history},
            {"step", t},        {"horizon", env_.horizon}};
  }
  nlohmann::json landmarks = nlohmann::json::array();
  for (int i = 0; i < env_.num_conventions; ++i) {
    landmarks.push_back({{"position", VecJson(env_.landmark_positions[i])},
                         {"value", env_.payoff_values[i]}});
  }
  return {{"kind", "pmr"},
          {"positions", {VecJson(state_.position[0]), VecJson(state_.position[1])}},
          {"velocities", {VecJson(state_.velocity[0]), VecJson(state_.velocity[1])}},
          {"landmarks", landmarks},
          {"capture_radius", env_.pmr_physics.capture_radius},
          {"step", t},
          {"horizon", env_.horizon}};
}

nlohmann::json PlaySession::Opening() const {
  return {{"protocol_version", kProtocolVersion},
          {"session_id", id_},
          {"env", EnvIdName(env_.env_id)},
          {"agent_id", agent_.id},
          {"human_side", human_side_},
          {"num_actions", env_.NumActions()},
          {"obs", obs_[human_side_]},
          {"render", Render()}};
}

nlohmann::json PlaySession::Summary() const {
  const SteeringRecord rec = MakeSteeringRecord(env_, trace_, 1 - human_side_);
  return {{"type", "summary"},
          {"protocol_version", kProtocolVersion},
          {"return", total_return_},
          {"eta", CoordinationEfficiency(total_return_, j_star_).percent()},
          {"j_star", j_star_},
          {"final_convention", rec.team_convention()}};
}

std::vector<nlohmann::json> PlaySession::Handle(const nlohmann::json& message) {
  if (!message.is_object() || message.value("type", "") != "action") {
    return {ErrorMessage("expected {\"type\":\"action\",\"value\":int}")};
  }
  if (!message.contains("value") || !message["value"].is_number_integer()) {
    return {ErrorMessage("action value must be an integer")};
  }
  if (done_) return {ErrorMessage("session is done")};
  const int human = message["value"].get<int>();
  if (human < 0 || human >= env_.NumActions()) {
    return {ErrorMessage("action out of range [0," + std::to_string(env_.NumActions()) +
                         ")")};
  }
  const int agent_side = 1 - human_side_;
  const int agent_action =
      Act(agent_, env_, rec_, obs_[agent_side], agent_rng_, /*greedy=*/true);
  JointAction act;
  act[human_side_] = human;
  act[agent_side] = agent_action;
  trace_.states.push_back(state_);
  trace_.actions.push_back(act);
  auto [next, step] = Step(state_, env_, act);
  state_ = next;
  obs_ = step.observations;
  trace_.rewards.push_back(step.reward);
  total_return_ += step.reward;
  done_ = step.done;
  log_.push_back({{"type", "step"},
                  {"t", state_.step_index - 1},
                  {"human_action", human},
                  {"agent_action", agent_action},
                  {"reward", step.reward},
                  {"done", step.done}});
  std::vector<nlohmann::json> out;
  out.push_back({{"type", "step"},
                 {"protocol_version", kProtocolVersion},
                 {"obs", obs_[human_side_]},
                 {"render", Render()},
                 {"reward", step.reward},
                 {"done", step.done},
                 {"agent_action", agent_action}});
  if (done_) {
    out.push_back(Summary());
    log_.push_back(out.back());
  }
  return out;
}

std::string PlaySession::LogJsonl() const {
  std::string out;
  for (const auto& line : log_) out += line.dump() + "\n";
  return out;
}

std::vector<double> ReplaySessionLog(const std::string& jsonl, const AgentHandle& agent) {
  std::istringstream in(jsonl);
  std::string line;
  std::unique_ptr<PlaySession> session;
  std::vector<double> rewards;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    const std::string type = j.value("type", "");
    if (type == "session") {
      EnvConfig env;
      from_json(j.at("env"), env);
      session = std::make_unique<PlaySession>(
          j.at("session_id").get<std::string>(), env, agent,
          j.at("human_side").get<int>(), j.at("seed").get<std::uint64_t>(),
          j.value("j_star", 0.0));
    } else if (type == "step") {
      CONVFORGE_CHECK(session, "replay: step before session header");
      auto replies = session->Handle(
          {{"type", "action"}, {"value", j.at("human_action").get<int>()}});
      CONVFORGE_CHECK(replies[0].value("type", "") == "step",
                      "replay: recorded action rejected");
      CONVFORGE_CHECK(replies[0]["agent_action"] == j.at("agent_action"),
                      "replay: agent action diverged from the log");
      rewards.push_back(replies[0]["reward"].get<double>());
    }
  }
  return rewards;
}

PlayService::PlayService(const fs::path& run_dir, fs::path log_dir)
    : log_dir_(std::move(log_dir)) {
  const nlohmann::json manifest = ReadJson(run_dir / "manifest.json");
  from_json(manifest.at("config").at("env"), env_);
  env_.Validate();
  std::function<void(const nlohmann::json&)> walk = [&](const nlohmann::json& j) {
    if (j.is_object()) {
      if (j.contains("id") && j.contains("file") && j["id"].is_string() &&
          !files_.count(j["id"].get<std::string>())) {
        const std::string id = j["id"].get<std::string>();
        files_[id] = j["file"].get<std::string>();
        order_.push_back(id);
      }
      for (const auto& v : j) walk(v);
    } else if (j.is_array()) {
      for (const auto& v : j) walk(v);
    }
  };
  walk(manifest.at("stages"));
  CONVFORGE_CHECK(!order_.empty(), "serve: the run directory has no checkpoints");
  for (const auto& id : order_) agents_.emplace(id, LoadCheckpoint(run_dir / files_[id]));
}

nlohmann::json PlayService::ListAgents() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& id : order_) {
    const AgentHandle& a = agents_.at(id);
    nlohmann::json e = {{"id", id},
                        {"file", files_.at(id)},
                        {"level", LevelToJson(a.meta.level)},
                        {"env", EnvIdName(env_.env_id)}};
    e["capability_set"] = a.meta.capability_set ? nlohmann::json(*a.meta.capability_set)
                                                : nlohmann::json(nullptr);
    e["J_SP"] = a.meta.j_sp ? nlohmann::json(*a.meta.j_sp) : nlohmann::json(nullptr);
    if (!a.meta.extra.is_null()) e["extra"] = a.meta.extra;
    list.push_back(e);
  }
  return {{"protocol_version", kProtocolVersion}, {"agents", list}};
}

double PlayService::OptimumFor(const AgentHandle& agent) {
  auto it = optimum_cache_.find(agent.id);
  if (it != optimum_cache_.end()) return it->second;
  double v;
  try {
    v = OptimalReturn(agent, env_, ScriptedRepresentatives(env_), kOptimumEpisodes,
                      kEvalSpawnSeed);
  } catch (const Error&) {
    v = GlobalMaxReturn(env_);  // adaptive agent without a recorded repertoire
  }
  if (v <= 0.0) v = GlobalMaxReturn(env_);
  optimum_cache_[agent.id] = v;
  return v;
}

nlohmann::json PlayService::CreateSession(const nlohmann::json& req) {
  CONVFORGE_CHECK(req.is_object(), "session request must be a JSON object");
  if (req.contains("env")) {
    const auto& e = req["env"];
    const std::string name = e.is_string() ? e.get<std::string>()
                                           : e.value("env_id", std::string());
    CONVFORGE_CHECK(name == EnvIdName(env_.env_id),
                    "env '" + name + "' does not match the run (" +
                        EnvIdName(env_.env_id) + ")");
  }
  CONVFORGE_CHECK(req.contains("agent_id") && req["agent_id"].is_string(),
                  "agent_id is required");
  const std::string agent_id = req["agent_id"].get<std::string>();
  auto it = agents_.find(agent_id);
  CONVFORGE_CHECK(it != agents_.end(), "unknown agent id '" + agent_id + "'");
  const int human_side = req.value("human_side", 0);
  const std::uint64_t seed = req.value("seed", std::uint64_t{0});
  std::lock_guard<std::mutex> lock(mu_);
  char id[32];
  std::snprintf(id, sizeof(id), "sess_%06llu",
                static_cast<unsigned long long>(next_session_++));
  auto session = std::make_shared<PlaySession>(id, env_, it->second, human_side, seed,
                                               OptimumFor(it->second));
  sessions_[id] = session;
  session_locks_[id] = std::make_shared<std::mutex>();
  PersistLog(*session);
  return session->Opening();
}

std::shared_ptr<PlaySession> PlayService::Find(const std::string& id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void PlayService::PersistLog(const PlaySession& session) const {
  if (log_dir_.empty()) return;
  fs::create_directories(log_dir_);
  WriteFileAtomic(log_dir_ / (session.id() + ".jsonl"), session.LogJsonl());
}

std::vector<nlohmann::json> PlayService::SessionMessage(const std::string& id,
                                                        const std::string& text) {
  std::shared_ptr<PlaySession> session;
  std::shared_ptr<std::mutex> lock;
  {
    std::lock_guard<std::mutex> g(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return {ErrorMessage("unknown session '" + id + "'")};
    session = it->second;
    lock = session_locks_[id];
  }
  nlohmann::json msg = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (msg.is_discarded()) return {ErrorMessage("malformed JSON message")};
  std::lock_guard<std::mutex> g(*lock);
  auto replies = session->Handle(msg);
  if (replies[0].value("type", "") == "step") PersistLog(*session);
  return replies;
}

HttpReply PlayService::Route(const std::string& method, const std::string& target,
                             const std::string& body) {
  const std::string path = target.substr(0, target.find('?'));
  try {
    if (method == "GET" && path == "/agents") return {200, ListAgents()};
    if (method == "POST" && path == "/sessions") {
      nlohmann::json req = nlohmann::json::parse(body, nullptr, false);
      if (req.is_discarded()) return {400, ErrorMessage("malformed JSON body")};
      return {200, CreateSession(req)};
    }
    if (method == "GET" && path.rfind("/sessions/", 0) == 0) {
      auto s = Find(path.substr(10));
      if (!s) return {404, ErrorMessage("unknown session")};
      nlohmann::json out = s->Opening();
      out["done"] = s->done();
      out["return"] = s->total_return();
      return {200, out};
    }
  } catch (const Error& e) {
    const std::string what = e.what();
    return {what.rfind("unknown agent", 0) == 0 ? 404 : 400, ErrorMessage(what)};
  }
  return {404, ErrorMessage("no route for " + method + " " + path)};
}

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

struct PlayServer::Impl {
  explicit Impl(PlayService& s) : service(s), acceptor(ioc) {}

  void Serve(std::shared_ptr<tcp::socket> sock, int fd);
  void Session(tcp::socket sock, const http::request<http::string_body>& req,
               const std::string& id);

  PlayService& service;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  std::thread accept_thread;
  std::mutex mu;
  std::vector<std::thread> workers;
  std::set<int> open_fds;
  bool stopping = false;
};

void PlayServer::Impl::Session(tcp::socket sock,
                               const http::request<http::string_body>& req,
                               const std::string& id) {
  websocket::stream<tcp::socket> ws(std::move(sock));
  beast::error_code ec;
  ws.accept(req, ec);
  if (ec) return;
  for (;;) {
    beast::flat_buffer buf;
    ws.read(buf, ec);
    if (ec) break;
    const std::string text = beast::buffers_to_string(buf.data());
    for (const auto& reply : service.SessionMessage(id, text)) {
      ws.text(true);
      ws.write(asio::buffer(reply.dump()), ec);
      if (ec) return;
    }
  }
}

void PlayServer::Impl::Serve(std::shared_ptr<tcp::socket> sock, int fd) {
  beast::flat_buffer buf;
  beast::error_code ec;
  for (;;) {
    http::request<http::string_body> req;
    http::read(*sock, buf, req, ec);
    if (ec) break;
    const std::string target(req.target());
    if (websocket::is_upgrade(req) && target.rfind("/sessions/", 0) == 0 &&
        service.Find(target.substr(10))) {
      Session(std::move(*sock), req, target.substr(10));
      break;
    }
    HttpReply r;
    if (req.method() == http::verb::options) {
      r = {204, nullptr};
    } else {
      r = service.Route(std::string(req.method_string()), target, req.body());
    }
    http::response<http::string_body> res{static_cast<http::status>(r.status),
                                          req.version()};
    res.set(http::field::content_type, "application/json");
    res.set(http::field::access_control_allow_origin, "*");
    res.set(http::field::access_control_allow_headers, "Content-Type");
    res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res.keep_alive(req.keep_alive());
    if (!r.body.is_null()) res.body() = r.body.dump();
    res.prepare_payload();
    http::write(*sock, res, ec);
    if (ec || !req.keep_alive()) break;
  }
  if (sock->is_open()) sock->shutdown(tcp::socket::shutdown_both, ec);
  std::lock_guard<std::mutex> lock(mu);
  open_fds.erase(fd);
}

PlayServer::PlayServer(PlayService& service, int port)
    : impl_(std::make_unique<Impl>(service)), port_(port) {}

PlayServer::~PlayServer() { Stop(); }

void PlayServer::Start() {
  tcp::endpoint ep(asio::ip::make_address("127.0.0.1"),
                   static_cast<unsigned short>(port_));
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
  impl_->acceptor.bind(ep);
  impl_->acceptor.listen();
  port_ = impl_->acceptor.local_endpoint().port();
  impl_->accept_thread = std::thread([impl = impl_.get()] {
    for (;;) {
      auto sock = std::make_shared<tcp::socket>(impl->ioc);
      beast::error_code ec;
      impl->acceptor.accept(*sock, ec);
      std::lock_guard<std::mutex> lock(impl->mu);
      if (impl->stopping) break;
      if (ec) continue;
      const int fd = sock->native_handle();
      impl->open_fds.insert(fd);
      impl->workers.emplace_back([impl, sock, fd] { impl->Serve(sock, fd); });
    }
  });
}

void PlayServer::Wait() {
  if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
}

void PlayServer::Stop() {
  {
    std::lock_guard<std::mutex> lock(impl_->mu);
    if (impl_->stopping) return;
    impl_->stopping = true;
    if (impl_->acceptor.is_open()) ::shutdown(impl_->acceptor.native_handle(), SHUT_RDWR);
    for (int fd : impl_->open_fds) ::shutdown(fd, SHUT_RDWR);
  }
  if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard<std::mutex> lock(impl_->mu);
    workers.swap(impl_->workers);
  }
  for (auto& t : workers) t.join();
  beast::error_code ec;
  impl_->acceptor.close(ec);
}

}  // namespace convforge
