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


#ifndef MVGEO_AGGREGATE_HPP_
#define MVGEO_AGGREGATE_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "mvgeo/embedding_store.hpp"
#include "mvgeo/info_score.hpp"
#include "mvgeo/view_select.hpp"

namespace mvgeo {

struct AggregationConfig {
  double tau = 1.0;
  // L2-normalize each fused descriptor (used when matching by cosine).
  bool l2_normalize = false;
  unsigned threads = 0;
};

struct RefinedDescriptor {
  std::uint32_t landmark_id = 0;
  std::vector<double> feature;
  std::vector<int> slots;       // selected slots present for this landmark
  std::vector<double> weights;  // parallel to slots, sums to 1
};

// softmax(tau * scores), max-subtracted.
std::vector<double> aggregation_weights(std::span<const double> scores, double tau);

// Fuses the landmark's views at the selected slots. Selected slots the
// landmark lacks are dropped and the weights renormalized over the rest.
RefinedDescriptor aggregate_landmark(const EmbeddingDatabase& drone, std::uint32_t landmark_id,
                                     const SelectionResult& selection, const ScoreTable& scores,
                                     const AggregationConfig& cfg = {});

// One fused descriptor per landmark, ascending landmark id, as a drone-role
// database whose poses carry the sentinel.
EmbeddingDatabase aggregate_database(const EmbeddingDatabase& drone, const SelectionResult& selection,
                                     const ScoreTable& scores, const AggregationConfig& cfg = {});

}  // namespace mvgeo

#endif  // MVGEO_AGGREGATE_HPP_
