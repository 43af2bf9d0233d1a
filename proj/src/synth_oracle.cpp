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


#include "mvgeo/synth_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "mvgeo/info_score.hpp"
#include "mvgeo/parallel.hpp"

namespace mvgeo {

void GaussianSpec::check() const {
  if (classes() < 1 || dim() < 1) throw Error("Gaussian spec needs at least one class and one dimension");
  if (!(sigma > 0.0)) throw Error(fmt::format("covariance scale {} must be positive", sigma));
  if (samples_per_class < 1) throw Error("Gaussian spec needs at least one sample per class");
}

LabeledSamples gen_gaussian(const GaussianSpec& spec) {
  spec.check();
  Rng rng(spec.seed);
  LabeledSamples out;
  out.features = Matrix(spec.classes() * spec.samples_per_class, spec.dim());
  std::size_t r = 0;
  for (std::size_t c = 0; c < spec.classes(); ++c) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i, ++r) {
      for (std::size_t d = 0; d < spec.dim(); ++d) out.features(r, d) = rng.normal(spec.means(c, d), spec.sigma);
      out.labels.push_back(static_cast<std::uint32_t>(c));
    }
  }
  return out;
}

McEstimate mc_mutual_information(const GaussianSpec& spec, std::size_t n_samples, std::uint64_t seed) {
  spec.check();
  if (n_samples < 1000) throw Error(fmt::format("Monte-Carlo MI needs >= 1000 samples, got {}", n_samples));
  const std::size_t classes = spec.classes();
  const std::size_t dim = spec.dim();
  const double inv_2s2 = 1.0 / (2.0 * spec.sigma * spec.sigma);
  const double log_c = std::log(static_cast<double>(classes));
  Rng rng(seed);
  std::vector<double> x(dim), log_k(classes);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const auto y = static_cast<std::size_t>(rng.below(classes));
    for (std::size_t d = 0; d < dim; ++d) x[d] = rng.normal(spec.means(y, d), spec.sigma);
    // Log kernels; the Gaussian normalizer cancels in the ratio.
    for (std::size_t c = 0; c < classes; ++c) {
      double sq = 0.0;
      for (std::size_t d = 0; d < dim; ++d) sq += (x[d] - spec.means(c, d)) * (x[d] - spec.means(c, d));
      log_k[c] = -sq * inv_2s2;
    }
    const double top = *std::max_element(log_k.begin(), log_k.end());
    double acc = 0.0;
    for (double v : log_k) acc += std::exp(v - top);
    const double log_mix = top + std::log(acc) - log_c;
    const double term = log_k[y] - log_mix;
    sum += term;
    sum_sq += term * term;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

ViewGrid gen_view_grid(const ViewGridSpec& spec) {
  if (spec.landmarks == 0 || spec.dim == 0) throw Error("view grid needs landmarks and a positive dimension");
  if (spec.noise < 0.0 || spec.sat_noise < 0.0) throw Error("noise levels must be non-negative");
  std::vector<double> gain(kSlotCount, spec.base_gain);
  for (int s : spec.informative_slots) {
    if (s < 0 || s >= kSlotCount) throw Error(fmt::format("informative slot {} outside 0..53", s));
    gain[s] = spec.informative_gain;
  }
  Rng rng(spec.seed);
  const double unit = 1.0 / std::sqrt(static_cast<double>(spec.dim));
  std::vector<ViewDescriptor> drone, sat;
  drone.reserve(spec.landmarks * kSlotCount);
  std::vector<double> proto(spec.dim);
  for (std::size_t l = 0; l < spec.landmarks; ++l) {
    const auto id = static_cast<std::uint32_t>(l);
    for (auto& p : proto) p = rng.normal(0.0, unit);
    ViewDescriptor s{id, ViewPose::sentinel(), std::vector<float>(spec.dim)};
    for (std::size_t d = 0; d < spec.dim; ++d) s.feature[d] = static_cast<float>(proto[d] + rng.normal(0.0, spec.sat_noise * unit));
    sat.push_back(std::move(s));
    for (int slot = 0; slot < kSlotCount; ++slot) {
      ViewDescriptor v{id, ViewPose::from_slot(slot), std::vector<float>(spec.dim)};
      for (std::size_t d = 0; d < spec.dim; ++d) {
        v.feature[d] = static_cast<float>(gain[slot] * proto[d] + rng.normal(0.0, spec.noise * unit));
      }
      drone.push_back(std::move(v));
    }
  }
  return {EmbeddingDatabase(Role::kDrone, spec.dim, std::move(drone)),
          EmbeddingDatabase(Role::kSatellite, spec.dim, std::move(sat))};
}

double Prop1Report::holds_fraction() const {
  if (trials.empty()) return 0.0;
  const auto n = std::count_if(trials.begin(), trials.end(), [](const Prop1Trial& t) { return t.holds; });
  return static_cast<double>(n) / static_cast<double>(trials.size());
}

double Prop1Report::holds_fraction_count_weighted() const {
  if (trials.empty()) return 0.0;
  const auto n = std::count_if(trials.begin(), trials.end(), [](const Prop1Trial& t) { return t.holds_count_weighted; });
  return static_cast<double>(n) / static_cast<double>(trials.size());
}

std::size_t Prop1Report::saturations() const {
  return static_cast<std::size_t>(
      std::count_if(trials.begin(), trials.end(), [](const Prop1Trial& t) { return t.exceeds_label_entropy; }));
}

std::vector<GaussianSpec> random_prop1_specs(std::size_t count, std::uint64_t seed, double max_separation,
                                             std::size_t samples_per_class) {
  std::vector<GaussianSpec> specs;
  specs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto trial_seed = derive_seed(seed, i);
    Rng rng(trial_seed);
    const auto classes = static_cast<std::size_t>(2 + rng.below(3));
    const auto dim = static_cast<std::size_t>(1 + rng.below(4));
    const double separation = rng.uniform(0.0, max_separation);
    GaussianSpec spec;
    spec.means = Matrix(classes, dim);
    for (auto& v : spec.means.flat()) v = rng.normal(0.0, separation);
    spec.sigma = 1.0;
    spec.samples_per_class = samples_per_class;
    spec.seed = derive_seed(trial_seed, 1);
    specs.push_back(std::move(spec));
  }
  return specs;
}

Prop1Report verify_prop1(const std::vector<GaussianSpec>& specs, std::size_t mc_samples, unsigned threads) {
  Prop1Report report;
  report.trials.resize(specs.size());
  parallel_for(specs.size(), threads, [&](std::size_t i) {
    const auto& spec = specs[i];
    auto& t = report.trials[i];
    t.index = i;
    t.seed = spec.seed;
    t.classes = spec.classes();
    t.dim = spec.dim();
    double spread = 0.0;
    for (double v : spec.means.flat()) spread += v * v;
    t.separation = std::sqrt(spread / static_cast<double>(spec.means.size()));

    const auto sample = gen_gaussian(spec);
    const auto fv = fisher_variances(sample.features, sample.labels);
    t.sigma2_between = fv.between;
    t.sigma2_within = fv.within;
    t.bound = gaussian_mi(fv.between_per_sample(), fv.within);
    t.bound_count_weighted = gaussian_mi(fv.between, fv.within);
    const auto mc = mc_mutual_information(spec, mc_samples, derive_seed(spec.seed, 2));
    t.mc_estimate = mc.estimate;
    t.mc_stderr = mc.stderr_;
    t.holds = t.bound <= mc.estimate + 3.0 * mc.stderr_;
    t.holds_count_weighted = t.bound_count_weighted <= mc.estimate + 3.0 * mc.stderr_;
    t.exceeds_label_entropy = t.bound > std::log(static_cast<double>(t.classes));
  });
  return report;
}

double Prop2Report::fraction_at_least(double threshold) const {
  if (trials.empty()) return 0.0;
  const auto n = std::count_if(trials.begin(), trials.end(), [&](const Prop2Trial& t) { return t.ratio >= threshold; });
  return static_cast<double>(n) / static_cast<double>(trials.size());
}

std::size_t Prop2Report::modular_trials() const {
  return static_cast<std::size_t>(std::count_if(trials.begin(), trials.end(), [](const Prop2Trial& t) { return t.lambda == 1.0; }));
}

std::size_t Prop2Report::modular_exact() const {
  return static_cast<std::size_t>(
      std::count_if(trials.begin(), trials.end(), [](const Prop2Trial& t) { return t.lambda == 1.0 && t.ratio == 1.0; }));
}

std::vector<Candidate> random_pool(std::size_t n, Rng& rng) {
  if (n > static_cast<std::size_t>(kSlotCount)) throw Error("pool larger than the slot grid");
  std::vector<int> slots(kSlotCount);
  std::iota(slots.begin(), slots.end(), 0);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(kSlotCount - i));
    std::swap(slots[i], slots[j]);
  }
  std::vector<Candidate> pool;
  for (std::size_t i = 0; i < n; ++i) pool.push_back({slots[i], ViewPose::from_slot(slots[i]), rng.uniform(0.0, 3.0)});
  std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) { return a.slot < b.slot; });
  return pool;
}

Prop2Report verify_prop2(std::size_t trials, std::uint64_t seed, std::size_t n, const std::vector<int>& k_values,
                         const SelectionConfig& base, unsigned threads) {
  if (k_values.empty()) throw Error("verify_prop2 needs at least one k");
  Prop2Report report;
  report.trials.resize(trials);
  parallel_for(trials, threads, [&](std::size_t i) {
    auto& t = report.trials[i];
    t.index = i;
    t.seed = derive_seed(seed, i);
    Rng rng(t.seed);
    const auto pool = random_pool(n, rng);
    SelectionConfig cfg = base;
    cfg.k = k_values[i % k_values.size()];
    cfg.lambda = static_cast<double>(rng.below(11)) / 10.0;
    t.n = n;
    t.k = cfg.k;
    t.lambda = cfg.lambda;

    t.greedy = greedy_select(pool, cfg).selected;
    const auto opt = brute_force_select(pool, cfg, ObjectiveKind::kBlended);
    t.optimal = opt.selected;
    // Evaluate both sets in ascending slot order so equal sets give
    // bit-identical values.
    auto sorted = t.greedy;
    std::sort(sorted.begin(), sorted.end());
    t.f_greedy = blended_objective(pick(pool, sorted), pool, cfg);
    t.f_opt = blended_objective(pick(pool, t.optimal), pool, cfg);
    t.ratio = t.f_opt > 0.0 ? t.f_greedy / t.f_opt : 1.0;
  });
  return report;
}

std::vector<int> random_slot_profile(std::size_t count, std::uint64_t seed) {
  if (count > static_cast<std::size_t>(kSlotCount)) throw Error(fmt::format("profile of {} slots exceeds the grid", count));
  std::vector<int> all(kSlotCount);
  std::iota(all.begin(), all.end(), 0);
  Rng rng(seed);
  for (int i = kSlotCount - 1; i > 0; --i) {
    std::swap(all[i], all[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  }
  all.resize(count);
  return all;
}

const AblationRow* AblationReport::find(const std::string& label) const {
  for (const auto& r : rows) {
    if (r.label == label) return &r;
  }
  return nullptr;
}

AblationReport run_ablation(const AblationSpec& spec) {
  const ViewGrid grid = gen_view_grid(spec.grid);
  ScoreConfig sc;
  sc.threads = spec.retrieval.threads;
  const ScoreTable table = information_scores(grid.drone, sc);
  const auto pool = candidates_from(table);
  auto count_informative = [&](const std::vector<int>& selected) {
    std::size_t n = 0;
    for (int v : selected) {
      n += std::count(spec.grid.informative_slots.begin(), spec.grid.informative_slots.end(), v);
    }
    return n;
  };

  AblationReport report;
  RetrievalConfig rc = spec.retrieval;
  rc.k_values = {1};
  rc.use_msrm = false;
  report.baseline_recall_at_1 = evaluate(grid.drone, grid.satellite, nullptr, nullptr, rc).recall_at.at(1);

  rc.use_msrm = true;
  for (int k : spec.k_values) {
    SelectionConfig cfg = spec.selection;
    cfg.k = k;
    const SelectionResult sel = greedy_select(pool, cfg);
    const RetrievalReport r = evaluate(grid.drone, grid.satellite, &table, &sel, rc);
    report.rows.push_back({fmt::format("k={}", k), k, r.recall_at.at(1), r.ap_mean, count_informative(sel.selected)});
  }

  // Every scored slot with equal weight.
  ScoreTable flat = table;
  for (auto& s : flat.slots) s.score = 0.0;
  SelectionResult all;
  for (const auto& s : flat.slots) all.selected.push_back(s.slot);
  const RetrievalReport r = evaluate(grid.drone, grid.satellite, &flat, &all, rc);
  report.rows.push_back({"uniform54", static_cast<int>(all.selected.size()), r.recall_at.at(1), r.ap_mean,
                         count_informative(all.selected)});
  return report;
}

}  // namespace mvgeo
