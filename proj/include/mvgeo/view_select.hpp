// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef MVGEO_VIEW_SELECT_HPP_
#define MVGEO_VIEW_SELECT_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "mvgeo/embedding_store.hpp"
#include "mvgeo/info_score.hpp"

namespace mvgeo {

struct SelectionConfig {
  int k = 40;
  double lambda = 0.5;
  double omega_h = 2.0;
  double omega_theta = 1.0;
  double height_unit = 1.0;  // multiplier on |delta height_level|

  // Throws Error unless 1 <= k <= candidates, 0 <= lambda <= 1 and the
  // weights are non-negative.
  void check(std::size_t candidates) const;
};

// One selectable view slot.
struct Candidate {
  int slot = 0;
  ViewPose pose;
  double score = 0.0;  // I_v
};

std::vector<Candidate> candidates_from(const ScoreTable& table);

struct SelectionResult {
  std::vector<int> selected;  // slot ids in pick order
  double objective = 0.0;
  std::vector<double> gains;  // greedy criterion value of each pick
};

// min(|a - b|, 360 - |a - b|), in degrees.
double circular_distance(double a_deg, double b_deg);

double spatial_distance(const ViewPose& p, const ViewPose& q, const SelectionConfig& cfg);

// f(S) = sum_{v in S} I_v + lambda * sum_{v in S} min_{u in S \ {v}} D(v, u).
// A singleton has no diversity term.
double objective(std::span<const Candidate> chosen, const SelectionConfig& cfg);

// Objective consistent with the greedy rule:
// lambda * sum I_v + (1 - lambda) * sum_v min_u D(v, u) / max_D, where max_D
// is the largest pairwise distance over `pool`. Used as the brute-force
// target when checking greedy's approximation ratio.
double blended_objective(std::span<const Candidate> chosen, std::span<const Candidate> pool, const SelectionConfig& cfg);

enum class ObjectiveKind { kReporting, kBlended };

// First pick is argmax I_v; every later pick maximizes
// lambda * I_v + (1 - lambda) * min_{s in S} D(v, s) / max_{u,w} D(u, w).
// Ties go to the lowest slot id. `objective` of the result is f(S).
SelectionResult greedy_select(std::span<const Candidate> pool, const SelectionConfig& cfg);

// Exhaustive maximizer for small pools (n <= 20, C(n, k) <= 1e6). Ties are
// broken by the lexicographically smallest sorted slot list.
SelectionResult brute_force_select(std::span<const Candidate> pool, const SelectionConfig& cfg,
                                   ObjectiveKind kind = ObjectiveKind::kReporting);

double evaluate_objective(std::span<const Candidate> chosen, std::span<const Candidate> pool,
                          const SelectionConfig& cfg, ObjectiveKind kind);

// Gathers the candidates named by `slots` out of `pool`, in the given order.
std::vector<Candidate> pick(std::span<const Candidate> pool, std::span<const int> slots);

}  // namespace mvgeo

#endif  // MVGEO_VIEW_SELECT_HPP_
