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

#ifndef CONVFORGE_SERVICE_H_
#define CONVFORGE_SERVICE_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "convforge/agent.h"
#include "convforge/env.h"
#include "convforge/random.h"
#include "convforge/rollout.h"
#include "json.hpp"

namespace convforge {

inline constexpr int kProtocolVersion = 1;
inline constexpr int kDefaultPort = 8642;

// One human-agent episode. The environment and the agent's random stream
// are seeded exactly as PlayEpisode seeds them, so a session whose human
// replays a scripted policy reproduces the headless episode.
class PlaySession {
 public:
  PlaySession(std::string id, EnvConfig env, AgentHandle agent, int human_side,
              std::uint64_t seed, double j_star);

  const std::string& id() const { return id_; }
  bool done() const { return done_; }
  double total_return() const { return total_return_; }

  // {session_id, protocol_version, obs, render, ...}.
  nlohmann::json Opening() const;
  // Replies to one client message: an error, a step, or a step followed by
  // the summary. Errors leave the session unchanged.
  std::vector<nlohmann::json> Handle(const nlohmann::json& message);
  nlohmann::json Render() const;
  // JSON-lines log: a header, one line per step, then the summary.
  std::string LogJsonl() const;

 private:
  nlohmann::json Summary() const;

  std::string id_;
  EnvConfig env_;
  AgentHandle agent_;
  int human_side_;
  std::uint64_t seed_;
  double j_star_;
  EnvState state_;
  JointObservation obs_;
  RecurrentState rec_;
  Rng agent_rng_;
  EpisodeTrace trace_;
  double total_return_ = 0.0;
  bool done_ = false;
  std::vector<nlohmann::json> log_;
};

// Rewards obtained by replaying the human actions of a recorded log against
// the same agent and seed.
std::vector<double> ReplaySessionLog(const std::string& jsonl,
                                     const AgentHandle& agent);

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

// Agents, sessions and the HTTP routes, independent of the transport.
class PlayService {
 public:
  // Loads every checkpoint the run manifest references. Session logs go to
  // `log_dir` when it is non-empty.
  explicit PlayService(const std::filesystem::path& run_dir,
                       std::filesystem::path log_dir = {});

  const EnvConfig& env() const { return env_; }
  nlohmann::json ListAgents() const;
  HttpReply Route(const std::string& method, const std::string& target,
                  const std::string& body);
  std::shared_ptr<PlaySession> Find(const std::string& id);
  // Handles one WebSocket message for the session, serialized per session.
  std::vector<nlohmann::json> SessionMessage(const std::string& id,
                                             const std::string& text);

 private:
  nlohmann::json CreateSession(const nlohmann::json& request);
  double OptimumFor(const AgentHandle& agent);
  void PersistLog(const PlaySession& session) const;

  EnvConfig env_;
  std::vector<std::string> order_;
  std::map<std::string, AgentHandle> agents_;
  std::map<std::string, std::string> files_;
  std::map<std::string, double> optimum_cache_;
  std::filesystem::path log_dir_;

  std::mutex mu_;
  std::uint64_t next_session_ = 1;
  std::map<std::string, std::shared_ptr<PlaySession>> sessions_;
  std::map<std::string, std::shared_ptr<std::mutex>> session_locks_;
};

// Blocking HTTP + WebSocket server on loopback. Port 0 binds an ephemeral
// port; port() reports the bound one once Start returns.
class PlayServer {
 public:
  PlayServer(PlayService& service, int port);
  ~PlayServer();
  void Start();
  int port() const { return port_; }
  void Wait();
  void Stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_;
};

}  // namespace convforge

#endif  // CONVFORGE_SERVICE_H_
