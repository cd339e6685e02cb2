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

#ifndef CONVFORGE_NETWORK_H_
#define CONVFORGE_NETWORK_H_

// Recurrent actor-critic: dense(obs->hidden, tanh) -> GRU cell -> actor
// logits and scalar critic. Parameters live in one flat vector so that
// checkpoints, optimizers and finite-difference checks all see the same
// layout.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace convforge {

struct ArchSpec {
  int obs_dim = 0;
  int action_dim = 0;
  int hidden_dim = 64;

  void Validate() const;
  int NumParams() const;
  bool operator==(const ArchSpec&) const = default;
};

void to_json(nlohmann::json& j, const ArchSpec& a);
void from_json(const nlohmann::json& j, ArchSpec& a);

// A named contiguous block of the flat parameter vector.
struct ParamSlice {
  std::string name;
  int offset = 0;
  int size = 0;
  bool is_bias = false;
};

// Ordered: dense.w dense.b gru.w_in gru.b_in gru.w_hid gru.b_hid actor.w
// actor.b critic.w critic.b. GRU gate blocks are stacked (reset, update,
// candidate).
std::vector<ParamSlice> ParamLayout(const ArchSpec& arch);

struct PolicyParams {
  ArchSpec arch;
  Eigen::VectorXd theta;

  void Validate() const;
};

struct RecurrentState {
  Eigen::VectorXd hidden;

  static RecurrentState Zero(const ArchSpec& arch) {
    return {Eigen::VectorXd::Zero(arch.hidden_dim)};
  }
};

struct PolicyOutput {
  std::vector<double> probs;
  double value = 0.0;
  RecurrentState next;
};

// Weights ~ U(-b, b) with b = sqrt(6 / (fan_in + fan_out)); biases zero.
PolicyParams InitParams(const ArchSpec& arch, std::uint64_t seed);

// One recurrent step for a single agent. Pure.
PolicyOutput PolicyStep(const PolicyParams& params, const RecurrentState& rec,
                        std::span<const double> obs);

// Batched unroll over a set of sequences sharing a length. Column b of every
// matrix belongs to sequence b.
struct SequenceCache {
  std::vector<Eigen::MatrixXd> obs;     // [t] obs_dim x B
  std::vector<Eigen::MatrixXd> embed;   // tanh(dense)
  std::vector<Eigen::MatrixXd> h_prev;  // hidden entering step t
  std::vector<Eigen::MatrixXd> reset;
  std::vector<Eigen::MatrixXd> update;
  std::vector<Eigen::MatrixXd> cand;
  std::vector<Eigen::MatrixXd> hid_cand;  // W_hn h + b_hn
  std::vector<Eigen::MatrixXd> h;         // hidden after step t
  std::vector<Eigen::MatrixXd> logits;    // action_dim x B
  std::vector<Eigen::RowVectorXd> values;
};

SequenceCache ForwardSequence(const PolicyParams& params,
                              const Eigen::MatrixXd& h0,
                              std::vector<Eigen::MatrixXd> obs);

// Accumulates d(loss)/d(theta) into grad given per-step loss gradients with
// respect to logits and values. Backpropagates through the whole sequence.
void BackwardSequence(const PolicyParams& params, const SequenceCache& cache,
                      const std::vector<Eigen::MatrixXd>& d_logits,
                      const std::vector<Eigen::RowVectorXd>& d_values,
                      Eigen::VectorXd& grad);

// Numerically stable softmax of one column.
void Softmax(const double* logits, int n, double* probs);

}  // namespace convforge

#endif  // CONVFORGE_NETWORK_H_
