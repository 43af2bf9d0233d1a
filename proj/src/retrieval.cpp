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


#include "mvgeo/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "mvgeo/parallel.hpp"

namespace mvgeo {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Matrix l2_rows(const Matrix& m, const char* what) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double n = norm(out.row(r));
    if (n == 0.0) throw Error(fmt::format("{} row {} is a zero vector; cosine similarity is undefined", what, r));
    for (auto& v : out.row(r)) v /= n;
  }
  return out;
}

bool contains(std::span<const std::size_t> sorted, std::size_t id) {
  return std::binary_search(sorted.begin(), sorted.end(), id);
}

}  // namespace

const char* to_string(Similarity s) { return s == Similarity::kCosine ? "cosine" : "neg-euclidean"; }
const char* to_string(Direction d) {
  return d == Direction::kDroneToSatellite ? "drone->satellite" : "satellite->drone";
}

double similarity(std::span<const double> q, std::span<const double> g, Similarity kind) {
  if (q.size() != g.size()) throw Error(fmt::format("dimension mismatch: {} vs {}", q.size(), g.size()));
  if (kind == Similarity::kCosine) {
    const double nq = norm(q);
    const double ng = norm(g);
    if (nq == 0.0 || ng == 0.0) throw Error("cosine similarity with a zero vector");
    return dot(q, g) / (nq * ng);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += (q[i] - g[i]) * (q[i] - g[i]);
  return -std::sqrt(s);
}

std::vector<std::size_t> rank_by_scores(std::span<const double> scores) {
  std::vector<std::size_t> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  return ids;
}

std::vector<std::size_t> rank_gallery(std::span<const double> query, const Matrix& gallery, Similarity kind,
                                      std::uint64_t& distance_ops) {
  if (gallery.rows() == 0) throw Error("cannot rank against an empty gallery");
  if (gallery.cols() != query.size()) {
    throw Error(fmt::format("dimension mismatch: query {} vs gallery {}", query.size(), gallery.cols()));
  }
  std::vector<double> scores(gallery.rows());
  for (std::size_t g = 0; g < gallery.rows(); ++g) scores[g] = similarity(query, gallery.row(g), kind);
  distance_ops += gallery.rows();
  return rank_by_scores(scores);
}

int recall_at_k(std::span<const std::size_t> ranked, std::size_t true_id, std::size_t k) {
  const std::size_t n = std::min(k, ranked.size());
  return std::find(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), true_id) !=
                 ranked.begin() + static_cast<std::ptrdiff_t>(n)
             ? 1
             : 0;
}

int recall_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant, std::size_t k) {
  std::vector<std::size_t> sorted(relevant.begin(), relevant.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (contains(sorted, ranked[i])) return 1;
  }
  return 0;
}

double average_precision(std::span<const std::size_t> ranked, std::span<const std::size_t> relevant) {
  std::vector<std::size_t> sorted(relevant.begin(), relevant.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (contains(sorted, ranked[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  if (hits == 0) throw Error("average precision: no relevant item appears in the ranking");
  return sum / static_cast<double>(sorted.size());
}

LabeledMatrix to_matrix(const EmbeddingDatabase& db) {
  LabeledMatrix out;
  out.rows = Matrix(db.size(), db.dim());
  out.labels.reserve(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    const auto& f = db[i].feature;
    std::copy(f.begin(), f.end(), out.rows.row(i).begin());
    out.labels.push_back(db[i].landmark_id);
  }
  return out;
}

RetrievalReport match(const LabeledMatrix& queries, const LabeledMatrix& gallery, const RetrievalConfig& cfg) {
  const std::size_t nq = queries.rows.rows();
  const std::size_t ng = gallery.rows.rows();
  if (nq == 0) throw Error("empty query set");
  if (ng == 0) throw Error("empty gallery");
  if (queries.rows.cols() != gallery.rows.cols()) {
    throw Error(fmt::format("dimension mismatch: queries {} vs gallery {}", queries.rows.cols(), gallery.rows.cols()));
  }
  for (auto k : cfg.k_values) {
    if (k == 0 || k > ng) throw Error(fmt::format("Recall@{} needs 1 <= K <= gallery size {}", k, ng));
  }

  std::map<std::uint32_t, std::vector<std::size_t>> relevant;
  for (std::size_t g = 0; g < ng; ++g) relevant[gallery.labels[g]].push_back(g);

  const bool cosine = cfg.similarity == Similarity::kCosine;
  const Matrix q_rows = cosine ? l2_rows(queries.rows, "query") : Matrix();
  const Matrix g_rows = cosine ? l2_rows(gallery.rows, "gallery") : Matrix();

  RetrievalReport report;
  report.query_count = nq;
  report.gallery_count = ng;
  report.queries.resize(nq);
  std::vector<std::uint64_t> ops(nq, 0);

  parallel_for(nq, cfg.threads, [&](std::size_t q) {
    std::vector<std::size_t> ranked;
    if (cosine) {
      std::vector<double> scores(ng);
      for (std::size_t g = 0; g < ng; ++g) scores[g] = dot(q_rows.row(q), g_rows.row(g));
      ops[q] = ng;
      ranked = rank_by_scores(scores);
    } else {
      ranked = rank_gallery(queries.rows.row(q), gallery.rows, cfg.similarity, ops[q]);
    }
    auto& out = report.queries[q];
    out.landmark_id = queries.labels[q];
    auto it = relevant.find(out.landmark_id);
    if (it == relevant.end()) throw Error(fmt::format("query landmark {} has no gallery counterpart", out.landmark_id));
    const auto& rel = it->second;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (contains(rel, ranked[r])) {
        out.first_relevant_rank = r + 1;
        break;
      }
    }
    out.ap = average_precision(ranked, rel);
  });

  for (auto k : cfg.k_values) {
    std::size_t hits = 0;
    for (const auto& q : report.queries) hits += q.first_relevant_rank <= k ? 1 : 0;
    report.recall_at[k] = static_cast<double>(hits) / static_cast<double>(nq);
  }
  double ap_sum = 0.0;
  for (const auto& q : report.queries) ap_sum += q.ap;
  report.ap_mean = ap_sum / static_cast<double>(nq);
  report.distance_ops = std::accumulate(ops.begin(), ops.end(), std::uint64_t{0});
  bool multi = false;
  for (const auto& [label, ids] : relevant) multi = multi || ids.size() > 1;
  report.ap_relevance = multi ? "multi_view" : "single";
  return report;
}

RetrievalReport evaluate(const EmbeddingDatabase& drone, const EmbeddingDatabase& satellite, const ScoreTable* scores,
                         const SelectionResult* selection, const RetrievalConfig& cfg) {
  if (drone.role() != Role::kDrone) throw Error("first database must have the drone role");
  if (satellite.role() != Role::kSatellite) throw Error("second database must have the satellite role");
  if (!validate_pair(drone, satellite).empty()) {
    throw Error("drone and satellite databases disagree on landmark ids or dimension");
  }

  LabeledMatrix drone_side;
  if (cfg.use_msrm) {
    if (!scores || !selection) throw Error("MSRM evaluation needs information scores and a selection");
    AggregationConfig agg;
    agg.tau = cfg.tau;
    agg.l2_normalize = cfg.similarity == Similarity::kCosine;
    agg.threads = cfg.threads;
    drone_side = to_matrix(aggregate_database(drone, *selection, *scores, agg));
  } else {
    drone_side = to_matrix(drone);
  }
  const LabeledMatrix sat_side = to_matrix(satellite);

  RetrievalReport report = cfg.direction == Direction::kDroneToSatellite ? match(drone_side, sat_side, cfg)
                                                                         : match(sat_side, drone_side, cfg);
  report.direction = cfg.direction;
  report.use_msrm = cfg.use_msrm;
  return report;
}

}  // namespace mvgeo
