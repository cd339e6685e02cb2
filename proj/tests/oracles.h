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

// Brute-force reference computations shared by the unit and acceptance tests.

#ifndef CONVFORGE_TESTS_ORACLES_H_
#define CONVFORGE_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace convforge::oracle {

// Best return against a uniform mixture of fixed-action partners in the
// 2-action, 2-round matrix game, found by listing all 32 deterministic
// policies: a first action, then a second action for each (own, partner)
// first-round pair. Payoff per round is payoff[a] when actions match.
inline double TwoRoundBestResponse(const std::vector<int>& partners,
                                   const std::vector<double>& payoff) {
  double best = -std::numeric_limits<double>::infinity();
  for (int first = 0; first < 2; ++first) {
    for (int table = 0; table < 16; ++table) {
      double total = 0.0;
      for (int c : partners) {
        const int second = (table >> (first * 2 + c)) & 1;
        total += (first == c ? payoff[c] : 0.0) + (second == c ? payoff[c] : 0.0);
      }
      best = std::max(best, total / partners.size());
    }
  }
  return best;
}

struct Profile {
  std::string id;
  double rho;
};

// Anchors for linearly spaced targets over [min rho, max rho]. Each target
// takes the profile with the nearest rho (ties: lower rho, then lower id);
// if that one is already an anchor, the next unused id with the same rho is
// taken, else the anchor repeats.
inline std::vector<std::string> ReferenceAnchors(const std::vector<Profile>& p, int m) {
  const auto before = [](const Profile& a, const Profile& b) {
    return a.rho < b.rho || (a.rho == b.rho && a.id < b.id);
  };
  double lo = p[0].rho, hi = p[0].rho;
  for (const Profile& x : p) lo = std::min(lo, x.rho), hi = std::max(hi, x.rho);
  std::vector<std::string> out;
  for (int j = 0; j < m; ++j) {
    const double t = m == 1 ? lo : lo + (hi - lo) * j / (m - 1);
    const Profile* best = &p[0];
    for (const Profile& x : p) {
      const double dx = std::abs(x.rho - t), db = std::abs(best->rho - t);
      if (dx < db || (dx == db && before(x, *best))) best = &x;
    }
    const Profile* pick = nullptr;
    for (const Profile& x : p) {
      if (x.rho != best->rho || std::count(out.begin(), out.end(), x.id)) continue;
      if (!pick || x.id < pick->id) pick = &x;
    }
    out.push_back(pick ? pick->id : best->id);
  }
  return out;
}

}  // namespace convforge::oracle

#endif  // CONVFORGE_TESTS_ORACLES_H_
