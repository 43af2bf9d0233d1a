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


#include "mvgeo/view_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>

namespace mvgeo {

namespace {

double max_pairwise_distance(std::span<const Candidate> pool, const SelectionConfig& cfg) {
  double best = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      best = std::max(best, spatial_distance(pool[i].pose, pool[j].pose, cfg));
    }
  }
  return best;
}

// sum over v of min_{u != v} D(v, u); 0 for fewer than two elements.
double diversity_sum(std::span<const Candidate> chosen, const SelectionConfig& cfg) {
  if (chosen.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < chosen.size(); ++j) {
      if (i != j) nearest = std::min(nearest, spatial_distance(chosen[i].pose, chosen[j].pose, cfg));
    }
    total += nearest;
  }
  return total;
}

double score_sum(std::span<const Candidate> chosen) {
  double total = 0.0;
  for (const auto& c : chosen) total += c.score;
  return total;
}

void check_distinct(std::span<const Candidate> pool) {
  std::set<int> seen;
  for (const auto& c : pool) {
    if (!seen.insert(c.slot).second) throw Error(fmt::format("slot {} listed twice in the candidate pool", c.slot));
  }
}

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace

void SelectionConfig::check(std::size_t candidates) const {
  if (k < 1 || static_cast<std::size_t>(k) > candidates) {
    throw Error(fmt::format("k = {} must lie in [1, {}] (number of scored slots)", k, candidates));
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(fmt::format("lambda = {} must lie in [0, 1]", lambda));
  if (!(omega_h >= 0.0 && omega_theta >= 0.0 && height_unit >= 0.0)) {
    throw Error("spatial weights must be non-negative");
  }
}

std::vector<Candidate> candidates_from(const ScoreTable& table) {
  std::vector<Candidate> out;
  out.reserve(table.slots.size());
  for (const auto& s : table.slots) out.push_back({s.slot, s.pose, s.score});
  return out;
}

double circular_distance(double a_deg, double b_deg) {
  const double diff = std::fabs(a_deg - b_deg);
  return std::min(diff, 360.0 - diff);
}

double spatial_distance(const ViewPose& p, const ViewPose& q, const SelectionConfig& cfg) {
  const double dh = std::fabs(static_cast<double>(p.height_level) - static_cast<double>(q.height_level));
  return cfg.omega_h * cfg.height_unit * dh + cfg.omega_theta * circular_distance(p.azimuth_deg, q.azimuth_deg);
}

double objective(std::span<const Candidate> chosen, const SelectionConfig& cfg) {
  if (chosen.empty()) throw Error("objective of an empty set");
  return score_sum(chosen) + cfg.lambda * diversity_sum(chosen, cfg);
}

double blended_objective(std::span<const Candidate> chosen, std::span<const Candidate> pool, const SelectionConfig& cfg) {
  if (chosen.empty()) throw Error("objective of an empty set");
  const double max_d = max_pairwise_distance(pool, cfg);
  const double diversity = max_d > 0.0 ? diversity_sum(chosen, cfg) / max_d : 0.0;
  return cfg.lambda * score_sum(chosen) + (1.0 - cfg.lambda) * diversity;
}

double evaluate_objective(std::span<const Candidate> chosen, std::span<const Candidate> pool,
                          const SelectionConfig& cfg, ObjectiveKind kind) {
  return kind == ObjectiveKind::kReporting ? objective(chosen, cfg) : blended_objective(chosen, pool, cfg);
}

std::vector<Candidate> pick(std::span<const Candidate> pool, std::span<const int> slots) {
  std::vector<Candidate> out;
  out.reserve(slots.size());
  for (int s : slots) {
    auto it = std::find_if(pool.begin(), pool.end(), [s](const Candidate& c) { return c.slot == s; });
    if (it == pool.end()) throw Error(fmt::format("slot {} is not a candidate", s));
    out.push_back(*it);
  }
  return out;
}

SelectionResult greedy_select(std::span<const Candidate> pool, const SelectionConfig& cfg) {
  cfg.check(pool.size());
  check_distinct(pool);
  const double max_d = max_pairwise_distance(pool, cfg);
  const std::size_t n = pool.size();

  std::vector<bool> taken(n, false);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  SelectionResult result;

  for (int step = 0; step < cfg.k; ++step) {
    std::size_t best = n;
    double best_gain = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double gain;
      if (step == 0) {
        gain = pool[i].score;
      } else {
        const double diversity = max_d > 0.0 ? nearest[i] / max_d : 0.0;
        gain = cfg.lambda * pool[i].score + (1.0 - cfg.lambda) * diversity;
      }
      if (gain > best_gain || (gain == best_gain && pool[i].slot < pool[best].slot)) {
        best = i;
        best_gain = gain;
      }
    }
    taken[best] = true;
    result.selected.push_back(pool[best].slot);
    // The first pick has no diversity term; report its criterion value as lambda * I.
    result.gains.push_back(step == 0 ? cfg.lambda * pool[best].score : best_gain);
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], spatial_distance(pool[i].pose, pool[best].pose, cfg));
    }
  }
  result.objective = objective(pick(pool, result.selected), cfg);
  return result;
}

SelectionResult brute_force_select(std::span<const Candidate> pool, const SelectionConfig& cfg, ObjectiveKind kind) {
  cfg.check(pool.size());
  check_distinct(pool);
  const std::size_t n = pool.size();
  const auto k = static_cast<std::size_t>(cfg.k);
  if (n > 20 || binomial(n, k) > 1e6) {
    throw Error(fmt::format("brute force over C({}, {}) subsets exceeds the n <= 20, 1e6-subset guard", n, k));
  }

  std::vector<Candidate> sorted(pool.begin(), pool.end());
  std::sort(sorted.begin(), sorted.end(), [](const Candidate& a, const Candidate& b) { return a.slot < b.slot; });

  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<Candidate> chosen(k);
  std::vector<std::size_t> best_idx;
  double best_value = -std::numeric_limits<double>::infinity();
  while (true) {
    for (std::size_t i = 0; i < k; ++i) chosen[i] = sorted[idx[i]];
    const double value = evaluate_objective(chosen, sorted, cfg, kind);
    if (value > best_value) {
      best_value = value;
      best_idx = idx;
    }
    // Next combination in lexicographic order.
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }

  SelectionResult result;
  result.objective = best_value;
  std::vector<Candidate> prefix;
  double previous = 0.0;
  for (auto i : best_idx) {
    result.selected.push_back(sorted[i].slot);
    prefix.push_back(sorted[i]);
    const double value = evaluate_objective(prefix, sorted, cfg, kind);
    result.gains.push_back(value - previous);
    previous = value;
  }
  return result;
}

}  // namespace mvgeo
