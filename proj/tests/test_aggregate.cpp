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


#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "mvgeo/aggregate.hpp"

using namespace mvgeo;
using doctest::Approx;

namespace {

ScoreTable table_with(const std::vector<std::pair<int, double>>& scores) {
  ScoreTable t;
  for (auto [slot, s] : scores) {
    ViewSlotStats st;
    st.slot = slot;
    st.pose = ViewPose::from_slot(slot);
    st.score = s;
    t.slots.push_back(st);
  }
  std::sort(t.slots.begin(), t.slots.end(), [](auto& a, auto& b) { return a.slot < b.slot; });
  return t;
}

SelectionResult selection_of(std::vector<int> slots) {
  SelectionResult r;
  r.selected = std::move(slots);
  return r;
}

double norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("weight examples") {
  const std::vector<double> equal{0.7, 0.7, 0.7, 0.7};
  for (double tau : {0.01, 1.0, 50.0}) {
    for (double w : aggregation_weights(equal, tau)) CHECK(w == Approx(0.25));
  }
  const std::vector<double> s{0.0, std::log(2.0)};
  const auto w = aggregation_weights(s, 1.0);
  CHECK(w[0] == Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(w[1] == Approx(2.0 / 3.0).epsilon(1e-12));
  const std::vector<double> spread{0.1, 2.0, 1.3};
  for (double x : aggregation_weights(spread, 1e-9)) CHECK(x == Approx(1.0 / 3.0).epsilon(1e-6));
  CHECK(aggregation_weights(spread, 200.0)[1] == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("property: weights are positive and sum to one") {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(1 + rng.below(54));
    for (auto& x : s) x = rng.uniform(0.0, 3.0);
    const auto w = aggregation_weights(s, rng.uniform(0.01, 20.0));
    double sum = 0;
    for (double x : w) {
      CHECK(x > 0.0);
      sum += x;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("one selected slot returns its feature") {
  const auto db = fixtures::full_grid(2, 3, 4);
  const auto t = table_with({{5, 1.0}, {6, 2.0}});
  const auto r = aggregate_landmark(db, 1, selection_of({5}), t);
  const auto& f = db[*db.find(1, 5)].feature;
  REQUIRE(r.feature.size() == 3);
  for (int j = 0; j < 3; ++j) CHECK(r.feature[j] == double(f[j]));
  CHECK(r.weights == std::vector<double>{1.0});
}

TEST_CASE("identical features are a fixed point") {
  std::vector<ViewDescriptor> rows;
  for (int s = 0; s < 4; ++s) rows.push_back({0, ViewPose::from_slot(s), {0.5f, -2.0f}});
  const EmbeddingDatabase db(Role::kDrone, 2, rows);
  const auto t = table_with({{0, 0.1}, {1, 2.9}, {2, 1.0}, {3, 0.0}});
  const auto r = aggregate_landmark(db, 0, selection_of({0, 1, 2, 3}), t);
  CHECK(r.feature[0] == Approx(0.5));
  CHECK(r.feature[1] == Approx(-2.0));
}

TEST_CASE("[1,0] and [0,1] with weights 2/3, 1/3") {
  const EmbeddingDatabase db(Role::kDrone, 2, {{0, ViewPose::from_slot(0), {1.f, 0.f}}, {0, ViewPose::from_slot(1), {0.f, 1.f}}});
  const auto t = table_with({{0, std::log(2.0)}, {1, 0.0}});
  const auto r = aggregate_landmark(db, 0, selection_of({0, 1}), t);
  CHECK(r.feature[0] == Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(r.feature[1] == Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("missing slots are dropped and the weights renormalized") {
  const EmbeddingDatabase db(Role::kDrone, 1, {{0, ViewPose::from_slot(0), {3.f}}, {0, ViewPose::from_slot(2), {6.f}}});
  const auto t = table_with({{0, 0.0}, {1, 5.0}, {2, 0.0}});
  const auto r = aggregate_landmark(db, 0, selection_of({0, 1, 2}), t);
  CHECK(r.slots == std::vector<int>{0, 2});
  CHECK(r.weights[0] == Approx(0.5));
  CHECK(r.feature[0] == Approx(4.5));
}

TEST_CASE("a landmark with none of the selected slots is an error naming it") {
  const EmbeddingDatabase db(Role::kDrone, 1, {{42, ViewPose::from_slot(0), {3.f}}});
  const auto t = table_with({{0, 0.0}, {1, 0.0}});
  try {
    aggregate_landmark(db, 42, selection_of({1}), t);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("42") != std::string::npos);
  }
}

TEST_CASE("property: convex hull and norm bound") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const auto db = fixtures::full_grid(3, 4, 100 + trial);
    std::vector<std::pair<int, double>> scores;
    std::vector<int> sel;
    for (int s = 0; s < 54; ++s) {
      scores.push_back({s, rng.uniform(0.0, 3.0)});
      if (rng.uniform() < 0.4) sel.push_back(s);
    }
    if (sel.empty()) sel.push_back(0);
    AggregationConfig cfg;
    cfg.tau = rng.uniform(0.1, 5.0);
    const auto r = aggregate_landmark(db, 1, selection_of(sel), table_with(scores), cfg);
    double max_norm = 0.0;
    for (int s : sel) {
      const auto& f = db[*db.find(1, s)].feature;
      std::vector<double> d(f.begin(), f.end());
      max_norm = std::max(max_norm, norm(d));
    }
    CHECK(norm(r.feature) <= max_norm + 1e-12);
    for (std::size_t j = 0; j < 4; ++j) {
      double lo = INFINITY, hi = -INFINITY;
      for (int s : sel) {
        lo = std::min(lo, double(db[*db.find(1, s)].feature[j]));
        hi = std::max(hi, double(db[*db.find(1, s)].feature[j]));
      }
      CHECK(r.feature[j] >= lo - 1e-12);
      CHECK(r.feature[j] <= hi + 1e-12);
    }
  }
}

TEST_CASE("property: aggregation is linear in the features") {
  const auto x = fixtures::full_grid(2, 3, 8);
  const auto y = fixtures::full_grid(2, 3, 9);
  const double a = 0.75, b = -2.0;
  std::vector<ViewDescriptor> rows;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ViewDescriptor d = x[i];
    for (std::size_t j = 0; j < 3; ++j) d.feature[j] = static_cast<float>(a * x[i].feature[j] + b * y[i].feature[j]);
    rows.push_back(d);
  }
  const EmbeddingDatabase combo(Role::kDrone, 3, rows);
  const auto t = table_with({{0, 0.3}, {7, 1.9}, {20, 2.5}, {53, 0.1}});
  const auto sel = selection_of({0, 7, 20, 53});
  const auto zx = aggregate_landmark(x, 1, sel, t), zy = aggregate_landmark(y, 1, sel, t);
  const auto zc = aggregate_landmark(combo, 1, sel, t);
  for (std::size_t j = 0; j < 3; ++j) CHECK(zc.feature[j] == Approx(a * zx.feature[j] + b * zy.feature[j]).epsilon(1e-6));
}

TEST_CASE("aggregate_database output shape") {
  const auto db = fixtures::full_grid(5, 4, 3);
  const auto t = table_with({{1, 1.0}, {2, 2.0}, {3, 0.5}});
  AggregationConfig cfg;
  cfg.l2_normalize = true;
  const auto fused = aggregate_database(db, selection_of({1, 3}), t, cfg);
  CHECK(fused.role() == Role::kDrone);
  CHECK(fused.fused());
  CHECK(fused.size() == 5);
  CHECK(fused.landmark_ids() == std::vector<std::uint32_t>{0, 1, 2, 3, 4});
  for (const auto& d : fused.descriptors()) {
    CHECK(d.pose.is_sentinel());
    std::vector<double> v(d.feature.begin(), d.feature.end());
    CHECK(norm(v) == Approx(1.0).epsilon(1e-6));
  }
  CHECK(validate(fused).empty());
  CHECK(encode_database(decode_database(encode_database(fused))) == encode_database(fused));

  AggregationConfig one, many;
  one.threads = 1;
  many.threads = 3;
  CHECK(encode_database(aggregate_database(db, selection_of({1, 2, 3}), t, one)) ==
        encode_database(aggregate_database(db, selection_of({1, 2, 3}), t, many)));
}
