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


#include "mvgeo/info_score.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <fmt/format.h>

#include "mvgeo/parallel.hpp"

namespace mvgeo {

namespace {

const double kHalfLog2PiE = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);

}  // namespace

double marginal_entropy(const Matrix& features, double eps) {
  const std::size_t n = features.rows();
  const std::size_t dim = features.cols();
  if (n < 2 || dim == 0) throw Error(fmt::format("marginal entropy needs >= 2 rows and >= 1 column, got {}x{}", n, dim));
  double std_sum = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += features(i, d);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = features(i, d) - mean;
      ss += diff * diff;
    }
    std_sum += std::sqrt(ss / static_cast<double>(n - 1));
  }
  const double mean_std = std_sum / static_cast<double>(dim);
  return kHalfLog2PiE + std::log(mean_std > 0.0 ? mean_std : eps);
}

double range_entropy(const Matrix& features, double eps) {
  const std::size_t n = features.rows();
  const std::size_t dim = features.cols();
  if (n < 1 || dim == 0) throw Error("range entropy needs at least one row and column");
  double range_sum = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    double lo = features(0, d);
    double hi = lo;
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, features(i, d));
      hi = std::max(hi, features(i, d));
    }
    range_sum += hi - lo;
  }
  const double mean_range = range_sum / static_cast<double>(dim);
  return std::log(mean_range > 0.0 ? mean_range : eps);
}

FisherVariances fisher_variances(const Matrix& features, std::span<const std::uint32_t> labels) {
  const std::size_t n = features.rows();
  const std::size_t dim = features.cols();
  if (n == 0) throw Error("fisher variances need at least one sample");
  if (labels.size() != n) throw Error(fmt::format("{} labels for {} samples", labels.size(), n));

  FisherVariances out;
  auto& st = out.stats;
  std::map<std::uint32_t, std::size_t> class_row;
  for (auto y : labels) class_row.emplace(y, 0);
  for (auto& [y, row] : class_row) {
    row = st.classes.size();
    st.classes.push_back(y);
  }
  const std::size_t classes = st.classes.size();
  st.counts.assign(classes, 0);
  st.class_means = Matrix(classes, dim);
  st.global_mean.assign(dim, 0.0);
  st.total = n;

  std::vector<std::size_t> row_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = class_row[labels[i]];
    row_of[i] = c;
    ++st.counts[c];
    for (std::size_t d = 0; d < dim; ++d) {
      st.class_means(c, d) += features(i, d);
      st.global_mean[d] += features(i, d);
    }
  }
  for (std::size_t c = 0; c < classes; ++c) {
    for (auto& v : st.class_means.row(c)) v /= static_cast<double>(st.counts[c]);
  }
  for (auto& v : st.global_mean) v /= static_cast<double>(n);

  for (std::size_t c = 0; c < classes; ++c) {
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = st.class_means(c, d) - st.global_mean[d];
      sq += diff * diff;
    }
    out.between += static_cast<double>(st.counts[c]) * sq;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = features(i, d) - st.class_means(row_of[i], d);
      out.within += diff * diff;
    }
  }
  out.within /= static_cast<double>(n);
  return out;
}

double gaussian_mi(double sigma2_between, double sigma2_within, double eps) {
  return 0.5 * std::log1p(sigma2_between / (sigma2_within + eps));
}

std::vector<double> minmax_normalize(std::span<const double> values) {
  if (values.empty()) throw Error("min-max normalization of an empty vector");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  std::vector<double> out(values.size(), 0.5);
  if (range > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  }
  return out;
}

const ViewSlotStats* ScoreTable::find(int slot) const {
  auto it = std::lower_bound(slots.begin(), slots.end(), slot,
                             [](const ViewSlotStats& s, int v) { return s.slot < v; });
  return it != slots.end() && it->slot == slot ? &*it : nullptr;
}

Matrix slot_features(const EmbeddingDatabase& drone, int slot, std::vector<std::uint32_t>* labels) {
  Matrix out;
  if (labels) labels->clear();
  std::vector<double> row(drone.dim());
  for (auto landmark : drone.landmark_ids()) {
    const auto idx = drone.find(landmark, slot);
    if (!idx) continue;
    const auto& f = drone[*idx].feature;
    std::copy(f.begin(), f.end(), row.begin());
    out.push_row(row);
    if (labels) labels->push_back(landmark);
  }
  return out;
}

ScoreTable information_scores(const EmbeddingDatabase& drone, const ScoreConfig& cfg) {
  if (drone.role() != Role::kDrone) throw Error("information scores need a drone database");
  if (drone.landmark_ids().size() < 2) throw Error("information scores need at least two landmarks");

  std::vector<ViewSlotStats> all(kSlotCount);
  parallel_for(kSlotCount, cfg.threads, [&](std::size_t s) {
    auto& st = all[s];
    st.slot = static_cast<int>(s);
    st.pose = ViewPose::from_slot(st.slot);
    std::vector<std::uint32_t> labels;
    const Matrix x = slot_features(drone, st.slot, &labels);
    st.samples = x.rows();
    if (st.samples < 2) return;
    st.h_marginal = marginal_entropy(x, cfg.eps);
    st.h_range = range_entropy(x, cfg.eps);
    const auto fv = fisher_variances(x, labels);
    st.sigma2_between = fv.between;
    st.sigma2_within = fv.within;
    st.mi_approx = gaussian_mi(fv.between, fv.within, cfg.eps);
  });

  ScoreTable table;
  for (auto& st : all) {
    if (st.samples >= 2) {
      table.slots.push_back(st);
    } else if (st.samples == 1) {
      table.excluded.push_back(st.slot);
    }
  }
  if (table.slots.size() < 2) {
    throw Error(fmt::format("only {} slot(s) have >= 2 landmarks; min-max normalization needs two", table.slots.size()));
  }

  std::vector<double> mi, hm, hr;
  for (const auto& st : table.slots) {
    mi.push_back(st.mi_approx);
    hm.push_back(st.h_marginal);
    hr.push_back(st.h_range);
  }
  const auto mi_n = minmax_normalize(mi);
  const auto hm_n = minmax_normalize(hm);
  const auto hr_n = minmax_normalize(hr);
  for (std::size_t i = 0; i < table.slots.size(); ++i) table.slots[i].score = mi_n[i] + hm_n[i] + hr_n[i];
  return table;
}

}  // namespace mvgeo
