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


#ifndef MVGEO_RETRIEVAL_HPP_
#define MVGEO_RETRIEVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mvgeo/aggregate.hpp"
#include "mvgeo/embedding_store.hpp"
#include "mvgeo/info_score.hpp"
#include "mvgeo/matrix.hpp"
#include "mvgeo/view_select.hpp"

namespace mvgeo {

enum class Similarity { kCosine, kNegEuclidean };
enum class Direction { kDroneToSatellite, kSatelliteToDrone };

const char* to_string(Similarity s);
const char* to_string(Direction d);

// Cosine similarity or negated Euclidean distance. Cosine of a zero vector
// throws Error.
double similarity(std::span<const double> q, std::span<const double> g, Similarity kind);

// Gallery ids (indices into `scores`) by descending score, ties by
// ascending id.
std::vector<std::size_t> rank_by_scores(std::span<const double> scores);

// Ranks every row of `gallery` against `query`; adds gallery.rows() to
// `distance_ops`.
std::vector<std::size_t> rank_gallery(std::span<const double> query, const Matrix& gallery, Similarity kind,
                                      std::uint64_t& distance_ops);

// 1 iff `true_id` is among the first k ranked ids.
int recall_at_k(std::span<const std::size_t> ranked, std::size_t true_id, std::size_t k);
// 1 iff any relevant id is among the first k.
int recall_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant, std::size_t k);

// Mean over relevant items of (relevant items at or above its rank) / rank.
// Throws Error when no relevant id occurs in the ranking.
double average_precision(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant);

struct RetrievalConfig {
  Direction direction = Direction::kDroneToSatellite;
  Similarity similarity = Similarity::kCosine;
  std::vector<std::size_t> k_values = {1, 5, 10};
  bool use_msrm = false;
  double tau = 1.0;  // aggregation temperature when use_msrm
  unsigned threads = 0;
};

struct QueryOutcome {
  std::uint32_t landmark_id = 0;
  std::size_t first_relevant_rank = 0;  // 1-based
  double ap = 0.0;
};

struct RetrievalReport {
  Direction direction = Direction::kDroneToSatellite;
  bool use_msrm = false;
  std::map<std::size_t, double> recall_at;
  double ap_mean = 0.0;
  // "multi_view" when every drone view of the landmark is relevant,
  // "single" when exactly one gallery item is.
  std::string ap_relevance;
  std::uint64_t distance_ops = 0;
  std::size_t query_count = 0;
  std::size_t gallery_count = 0;
  std::vector<QueryOutcome> queries;
};

// A set of descriptors promoted to doubles, with their landmark labels.
struct LabeledMatrix {
  Matrix rows;
  std::vector<std::uint32_t> labels;
};

LabeledMatrix to_matrix(const EmbeddingDatabase& db);

// Ranks every query against the whole gallery. A gallery item is relevant
// to a query when their labels agree.
RetrievalReport match(const LabeledMatrix& queries, const LabeledMatrix& gallery, const RetrievalConfig& cfg);

// Runs the protocol in cfg.direction. With use_msrm each landmark's drone
// views are replaced by its fused descriptor, which needs `scores` and
// `selection`.
RetrievalReport evaluate(const EmbeddingDatabase& drone, const EmbeddingDatabase& satellite, const ScoreTable* scores,
                         const SelectionResult* selection, const RetrievalConfig& cfg);

}  // namespace mvgeo

#endif  // MVGEO_RETRIEVAL_HPP_
