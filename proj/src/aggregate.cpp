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


#include "mvgeo/aggregate.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mvgeo/parallel.hpp"

namespace mvgeo {

std::vector<double> aggregation_weights(std::span<const double> scores, double tau) {
  if (scores.empty()) throw Error("aggregation weights of an empty selection");
  if (!(tau > 0.0)) throw Error(fmt::format("temperature tau = {} must be positive", tau));
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> w(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w[i] = std::exp(tau * (scores[i] - top));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

RefinedDescriptor aggregate_landmark(const EmbeddingDatabase& drone, std::uint32_t landmark_id,
                                     const SelectionResult& selection, const ScoreTable& scores,
                                     const AggregationConfig& cfg) {
  RefinedDescriptor out;
  out.landmark_id = landmark_id;
  std::vector<double> present_scores;
  std::vector<std::size_t> records;
  for (int slot : selection.selected) {
    const auto idx = drone.find(landmark_id, slot);
    if (!idx) continue;
    const auto* st = scores.find(slot);
    if (!st) throw Error(fmt::format("selected slot {} has no information score", slot));
    out.slots.push_back(slot);
    present_scores.push_back(st->score);
    records.push_back(*idx);
  }
  if (records.empty()) throw Error(fmt::format("landmark {} has none of the {} selected slots", landmark_id, selection.selected.size()));

  out.weights = aggregation_weights(present_scores, cfg.tau);
  out.feature.assign(drone.dim(), 0.0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& f = drone[records[i]].feature;
    for (std::size_t d = 0; d < f.size(); ++d) out.feature[d] += out.weights[i] * static_cast<double>(f[d]);
  }
  if (cfg.l2_normalize) {
    double norm = 0.0;
    for (double v : out.feature) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (auto& v : out.feature) v /= norm;
    }
  }
  return out;
}

EmbeddingDatabase aggregate_database(const EmbeddingDatabase& drone, const SelectionResult& selection,
                                     const ScoreTable& scores, const AggregationConfig& cfg) {
  const auto landmarks = drone.landmark_ids();
  std::vector<ViewDescriptor> fused(landmarks.size());
  parallel_for(landmarks.size(), cfg.threads, [&](std::size_t i) {
    const auto refined = aggregate_landmark(drone, landmarks[i], selection, scores, cfg);
    fused[i].landmark_id = landmarks[i];
    fused[i].pose = ViewPose::sentinel();
    fused[i].feature.assign(refined.feature.begin(), refined.feature.end());
  });
  return EmbeddingDatabase(Role::kDrone, drone.dim(), std::move(fused));
}

}  // namespace mvgeo
