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

#include "convforge/network.h"

#include <algorithm>
#include <cmath>

#include "convforge/error.h"
#include "convforge/random.h"

namespace convforge {
namespace {

using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Typed views into a flat parameter (or gradient) vector.
template <typename T>
struct NetView {
  using Mat = std::conditional_t<std::is_const_v<T>, Map<const MatrixXd>, Map<MatrixXd>>;
  using Vec = std::conditional_t<std::is_const_v<T>, Map<const VectorXd>, Map<VectorXd>>;

  NetView(const ArchSpec& a, T* p)
      : w_dense(p, a.hidden_dim, a.obs_dim),
        b_dense(p += a.hidden_dim * a.obs_dim, a.hidden_dim),
        w_in(p += a.hidden_dim, 3 * a.hidden_dim, a.hidden_dim),
        b_in(p += 3 * a.hidden_dim * a.hidden_dim, 3 * a.hidden_dim),
        w_hid(p += 3 * a.hidden_dim, 3 * a.hidden_dim, a.hidden_dim),
        b_hid(p += 3 * a.hidden_dim * a.hidden_dim, 3 * a.hidden_dim),
        w_actor(p += 3 * a.hidden_dim, a.action_dim, a.hidden_dim),
        b_actor(p += a.action_dim * a.hidden_dim, a.action_dim),
        w_critic(p += a.action_dim, 1, a.hidden_dim),
        b_critic(p += a.hidden_dim, 1) {}

  Mat w_dense;
  Vec b_dense;
  Mat w_in;
  Vec b_in;
  Mat w_hid;
  Vec b_hid;
  Mat w_actor;
  Vec b_actor;
  Mat w_critic;
  Vec b_critic;
};

template <typename M>
auto Sigmoid(const M& x) {
  return (1.0 + (-x.array()).exp()).inverse();
}

}  // namespace

void ArchSpec::Validate() const {
  CONVFORGE_CHECK(obs_dim > 0 && action_dim > 0 && hidden_dim > 0,
                  "ArchSpec: all dimensions must be positive");
}

int ArchSpec::NumParams() const {
  const int h = hidden_dim;
  return h * obs_dim + h + 2 * (3 * h * h + 3 * h) + action_dim * h +
         action_dim + h + 1;
}

void to_json(nlohmann::json& j, const ArchSpec& a) {
  j = nlohmann::json{{"obs_dim", a.obs_dim},
                     {"action_dim", a.action_dim},
                     {"hidden_dim", a.hidden_dim},
                     {"layout", "dense_tanh>gru>actor,critic"}};
}

void from_json(const nlohmann::json& j, ArchSpec& a) {
  a.obs_dim = j.at("obs_dim").get<int>();
  a.action_dim = j.at("action_dim").get<int>();
  a.hidden_dim = j.value("hidden_dim", 64);
}

std::vector<ParamSlice> ParamLayout(const ArchSpec& a) {
  const int h = a.hidden_dim;
  std::vector<ParamSlice> out;
  int off = 0;
  auto add = [&](const char* name, int size, bool bias) {
    out.push_back({name, off, size, bias});
    off += size;
  };
  add("dense.w", h * a.obs_dim, false);
  add("dense.b", h, true);
  add("gru.w_in", 3 * h * h, false);
  add("gru.b_in", 3 * h, true);
  add("gru.w_hid", 3 * h * h, false);
  add("gru.b_hid", 3 * h, true);
  add("actor.w", a.action_dim * h, false);
  add("actor.b", a.action_dim, true);
  add("critic.w", h, false);
  add("critic.b", 1, true);
  return out;
}

void PolicyParams::Validate() const {
  arch.Validate();
  CONVFORGE_CHECK(theta.size() == arch.NumParams(),
                  "PolicyParams: theta length does not match arch");
  CONVFORGE_CHECK(theta.allFinite(), "PolicyParams: non-finite parameter");
}

PolicyParams InitParams(const ArchSpec& arch, std::uint64_t seed) {
  arch.Validate();
  PolicyParams p{arch, VectorXd::Zero(arch.NumParams())};
  Rng rng(seed);
  const int h = arch.hidden_dim;
  // (fan_in, fan_out) per weight slice; GRU gates are initialized as
  // separate h x h blocks.
  auto fill = [&](const ParamSlice& s, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (int i = 0; i < s.size; ++i) {
      p.theta[s.offset + i] = rng.Uniform(-bound, bound);
    }
  };
  for (const ParamSlice& s : ParamLayout(arch)) {
    if (s.is_bias) continue;
    if (s.name == "dense.w") fill(s, arch.obs_dim, h);
    else if (s.name == "actor.w") fill(s, h, arch.action_dim);
    else if (s.name == "critic.w") fill(s, h, 1);
    else fill(s, h, h);
  }
  return p;
}

void Softmax(const double* logits, int n, double* probs) {
  const double m = *std::max_element(logits, logits + n);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - m);
    z += probs[i];
  }
  for (int i = 0; i < n; ++i) probs[i] /= z;
}

PolicyOutput PolicyStep(const PolicyParams& params, const RecurrentState& rec,
                        std::span<const double> obs) {
  const ArchSpec& a = params.arch;
  CONVFORGE_CHECK(static_cast<int>(obs.size()) == a.obs_dim,
                  "policy_step: observation length does not match obs_dim");
  CONVFORGE_CHECK(rec.hidden.size() == a.hidden_dim,
                  "policy_step: recurrent state has wrong size");
  NetView<const double> net(a, params.theta.data());
  const int h = a.hidden_dim;
  Map<const VectorXd> x(obs.data(), a.obs_dim);
  const VectorXd e = (net.w_dense * x + net.b_dense).array().tanh();
  const VectorXd gi = net.w_in * e + net.b_in;
  const VectorXd gh = net.w_hid * rec.hidden + net.b_hid;
  const VectorXd r = Sigmoid(gi.head(h) + gh.head(h));
  const VectorXd z = Sigmoid(gi.segment(h, h) + gh.segment(h, h));
  const VectorXd n =
      (gi.tail(h).array() + r.array() * gh.tail(h).array()).tanh();
  PolicyOutput out;
  out.next.hidden =
      (1.0 - z.array()) * n.array() + z.array() * rec.hidden.array();
  const VectorXd logits = net.w_actor * out.next.hidden + net.b_actor;
  out.probs.resize(a.action_dim);
  Softmax(logits.data(), a.action_dim, out.probs.data());
  out.value = (net.w_critic * out.next.hidden)(0) + net.b_critic(0);
  return out;
}

SequenceCache ForwardSequence(const PolicyParams& params, const MatrixXd& h0,
                              std::vector<MatrixXd> obs) {
  const ArchSpec& a = params.arch;
  NetView<const double> net(a, params.theta.data());
  const int h = a.hidden_dim;
  const int len = static_cast<int>(obs.size());
  SequenceCache c;
  c.obs = std::move(obs);
  for (auto* v : {&c.embed, &c.h_prev, &c.reset, &c.update, &c.cand,
                  &c.hid_cand, &c.h, &c.logits}) {
    v->resize(len);
  }
  c.values.resize(len);
  MatrixXd hidden = h0;
  for (int t = 0; t < len; ++t) {
    const MatrixXd& x = c.obs[t];
    c.embed[t] = ((net.w_dense * x).colwise() + net.b_dense).array().tanh();
    MatrixXd gi = (net.w_in * c.embed[t]).colwise() + net.b_in;
    MatrixXd gh = (net.w_hid * hidden).colwise() + net.b_hid;
    c.reset[t] = Sigmoid(gi.topRows(h) + gh.topRows(h));
    c.update[t] = Sigmoid(gi.middleRows(h, h) + gh.middleRows(h, h));
    c.hid_cand[t] = gh.bottomRows(h);
    c.cand[t] =
        (gi.bottomRows(h).array() + c.reset[t].array() * c.hid_cand[t].array())
            .tanh();
    c.h_prev[t] = hidden;
    hidden = (1.0 - c.update[t].array()) * c.cand[t].array() +
             c.update[t].array() * hidden.array();
    c.h[t] = hidden;
    c.logits[t] = (net.w_actor * hidden).colwise() + net.b_actor;
    c.values[t] = (net.w_critic * hidden).array() + net.b_critic(0);
  }
  return c;
}

void BackwardSequence(const PolicyParams& params, const SequenceCache& c,
                      const std::vector<MatrixXd>& d_logits,
                      const std::vector<Eigen::RowVectorXd>& d_values,
                      VectorXd& grad) {
  const ArchSpec& a = params.arch;
  NetView<const double> net(a, params.theta.data());
  NetView<double> g(a, grad.data());
  const int h = a.hidden_dim;
  const int len = static_cast<int>(c.obs.size());
  if (len == 0) return;
  const int batch = static_cast<int>(c.obs[0].cols());
  MatrixXd dh = MatrixXd::Zero(h, batch);
  MatrixXd d_gi(3 * h, batch), d_gh(3 * h, batch);
  for (int t = len - 1; t >= 0; --t) {
    g.w_actor.noalias() += d_logits[t] * c.h[t].transpose();
    g.b_actor += d_logits[t].rowwise().sum();
    g.w_critic.noalias() += d_values[t] * c.h[t].transpose();
    g.b_critic(0) += d_values[t].sum();
    dh.noalias() += net.w_actor.transpose() * d_logits[t];
    dh.noalias() += net.w_critic.transpose() * d_values[t];

    const auto z = c.update[t].array();
    const auto r = c.reset[t].array();
    const auto n = c.cand[t].array();
    const MatrixXd d_cand_pre = (dh.array() * (1.0 - z)) * (1.0 - n * n);
    const MatrixXd d_upd_pre =
        (dh.array() * (c.h_prev[t].array() - n)) * z * (1.0 - z);
    const MatrixXd d_reset_pre =
        (d_cand_pre.array() * c.hid_cand[t].array()) * r * (1.0 - r);
    d_gi.topRows(h) = d_reset_pre;
    d_gi.middleRows(h, h) = d_upd_pre;
    d_gi.bottomRows(h) = d_cand_pre;
    d_gh.topRows(h) = d_reset_pre;
    d_gh.middleRows(h, h) = d_upd_pre;
    d_gh.bottomRows(h) = d_cand_pre.array() * r;

    g.w_in.noalias() += d_gi * c.embed[t].transpose();
    g.b_in += d_gi.rowwise().sum();
    g.w_hid.noalias() += d_gh * c.h_prev[t].transpose();
    g.b_hid += d_gh.rowwise().sum();

    const MatrixXd d_embed_pre =
        (net.w_in.transpose() * d_gi).array() *
        (1.0 - c.embed[t].array().square());
    g.w_dense.noalias() += d_embed_pre * c.obs[t].transpose();
    g.b_dense += d_embed_pre.rowwise().sum();

    MatrixXd dh_prev = dh.array() * z;
    dh_prev.noalias() += net.w_hid.transpose() * d_gh;
    dh = std::move(dh_prev);
  }
}

}  // namespace convforge
