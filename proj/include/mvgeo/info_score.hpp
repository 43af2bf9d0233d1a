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


#ifndef MVGEO_INFO_SCORE_HPP_
#define MVGEO_INFO_SCORE_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mvgeo/embedding_store.hpp"
#include "mvgeo/matrix.hpp"

namespace mvgeo {

// Variance regularizer; also the floor inside the entropy logarithms.
inline constexpr double kDefaultEps = 1e-6;

// 0.5 * ln(2*pi*e) + ln(mean over dimensions of the sample standard
// deviation, n-1 denominator). Requires at least two rows. When every
// dimension is constant the mean std is replaced by eps.
double marginal_entropy(const Matrix& features, double eps = kDefaultEps);

// ln(mean over dimensions of (max - min)), floored at ln(eps).
double range_entropy(const Matrix& features, double eps = kDefaultEps);

struct ClassStats {
  std::vector<std::uint32_t> classes;  // sorted class ids
  std::vector<std::size_t> counts;     // n_c, parallel to classes
  Matrix class_means;                  // one row per class
  std::vector<double> global_mean;
  std::size_t total = 0;               // N

  std::size_t class_count() const { return classes.size(); }
};

struct FisherVariances {
  // sum_c n_c * ||mu_c - mu||^2 (count weighted, not divided by N)
  double between = 0.0;
  // (1/N) * sum_c sum_{i in c} ||x_i - mu_c||^2
  double within = 0.0;
  ClassStats stats;

  // between / N: the population between-class variance, on the same
  // per-sample scale as `within`.
  double between_per_sample() const { return stats.total ? between / static_cast<double>(stats.total) : 0.0; }
};

FisherVariances fisher_variances(const Matrix& features, std::span<const std::uint32_t> labels);

// 0.5 * ln(1 + between / (within + eps))
double gaussian_mi(double sigma2_between, double sigma2_within, double eps = kDefaultEps);

// (v - min) / (max - min); a constant input maps to 0.5 everywhere.
std::vector<double> minmax_normalize(std::span<const double> values);

struct ViewSlotStats {
  int slot = 0;
  ViewPose pose;
  std::size_t samples = 0;
  double h_marginal = 0.0;
  double h_range = 0.0;
  double sigma2_between = 0.0;
  double sigma2_within = 0.0;
  double mi_approx = 0.0;
  double score = 0.0;  // sum of the three min-max normalized measures, in [0, 3]
};

struct ScoreTable {
  std::vector<ViewSlotStats> slots;  // ascending slot id
  std::vector<int> excluded;         // slots populated by fewer than 2 landmarks

  const ViewSlotStats* find(int slot) const;
};

struct ScoreConfig {
  double eps = kDefaultEps;
  unsigned threads = 0;
};

// Feature rows of every landmark that has the slot, in ascending landmark
// order, with the landmark ids as labels.
Matrix slot_features(const EmbeddingDatabase& drone, int slot, std::vector<std::uint32_t>* labels = nullptr);

// Per-slot statistics across all landmarks of a drone database.
// Throws Error when fewer than two slots can be scored.
ScoreTable information_scores(const EmbeddingDatabase& drone, const ScoreConfig& cfg = {});

}  // namespace mvgeo

#endif  // MVGEO_INFO_SCORE_HPP_
