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


#ifndef MVGEO_SYNTH_ORACLE_HPP_
#define MVGEO_SYNTH_ORACLE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mvgeo/embedding_store.hpp"
#include "mvgeo/matrix.hpp"
#include "mvgeo/retrieval.hpp"
#include "mvgeo/rng.hpp"
#include "mvgeo/view_select.hpp"

namespace mvgeo {

// Equal-covariance class-conditional Gaussians N(mu_c, sigma^2 I) with
// equal class priors.
struct GaussianSpec {
  Matrix means;  // C x D
  double sigma = 1.0;
  std::size_t samples_per_class = 100;
  std::uint64_t seed = 0;

  std::size_t classes() const { return means.rows(); }
  std::size_t dim() const { return means.cols(); }
  void check() const;
};

struct LabeledSamples {
  Matrix features;                    // (C * samples_per_class) x D, class-major
  std::vector<std::uint32_t> labels;  // class index per row
};

LabeledSamples gen_gaussian(const GaussianSpec& spec);

struct McEstimate {
  double estimate = 0.0;  // nats
  double stderr_ = 0.0;
};

// Monte-Carlo I(x; y) = E[ln p(x|y) - ln p(x)] with the exact mixture
// density. Needs n_samples >= 1000.
McEstimate mc_mutual_information(const GaussianSpec& spec, std::size_t n_samples, std::uint64_t seed);

struct ViewGridSpec {
  std::size_t landmarks = 50;
  std::uint32_t dim = 64;
  double noise = 0.5;  // expected norm of the per-view noise
  double sat_noise = 0.1;
  std::vector<int> informative_slots;
  double informative_gain = 1.0;  // prototype scale at informative slots
  double base_gain = 0.2;         // prototype scale elsewhere
  std::uint64_t seed = 0;
};

struct ViewGrid {
  EmbeddingDatabase drone;
  EmbeddingDatabase satellite;
};

// Each landmark gets a random prototype p (unit expected norm). The
// satellite row is p plus small noise; the drone view at slot v is
// gain_v * p plus isotropic noise.
ViewGrid gen_view_grid(const ViewGridSpec& spec);

struct Prop1Trial {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::size_t classes = 0;
  std::size_t dim = 0;
  double separation = 0.0;
  double sigma2_between = 0.0;  // count weighted
  double sigma2_within = 0.0;
  double bound = 0.0;           // from between / N
  double bound_count_weighted = 0.0;
  double mc_estimate = 0.0;
  double mc_stderr = 0.0;
  bool holds = false;                  // bound <= mc + 3 stderr
  bool holds_count_weighted = false;
  bool exceeds_label_entropy = false;  // bound > ln C
};

struct Prop1Report {
  std::vector<Prop1Trial> trials;
  double holds_fraction() const;
  double holds_fraction_count_weighted() const;
  std::size_t saturations() const;
};

// Seeded family of random Gaussian specs: C in {2,3,4}, D in {1,..,4},
// means N(0, s^2 I) with s uniform in [0, max_separation], sigma = 1.
std::vector<GaussianSpec> random_prop1_specs(std::size_t count, std::uint64_t seed, double max_separation = 2.0,
                                             std::size_t samples_per_class = 200);

Prop1Report verify_prop1(const std::vector<GaussianSpec>& specs, std::size_t mc_samples, unsigned threads = 0);

struct Prop2Trial {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  int k = 0;
  double lambda = 0.0;
  std::vector<int> greedy;
  std::vector<int> optimal;
  double f_greedy = 0.0;
  double f_opt = 0.0;
  double ratio = 1.0;
};

struct Prop2Report {
  std::vector<Prop2Trial> trials;
  double fraction_at_least(double threshold) const;
  // Trials with lambda == 1 and whether all of them reached ratio 1.
  std::size_t modular_trials() const;
  std::size_t modular_exact() const;
};

// Random pool of `n` distinct grid slots with scores uniform in [0, 3].
std::vector<Candidate> random_pool(std::size_t n, Rng& rng);

// Each trial draws a pool, lambda from {0, 0.1, ..., 1} and k from
// k_values (cycled), then compares greedy against exhaustive search on the
// objective consistent with the greedy rule.
Prop2Report verify_prop2(std::size_t trials, std::uint64_t seed, std::size_t n, const std::vector<int>& k_values,
                         const SelectionConfig& base, unsigned threads = 0);

// `count` distinct slots drawn by a seeded shuffle of 0..53.
std::vector<int> random_slot_profile(std::size_t count, std::uint64_t seed);

struct AblationSpec {
  ViewGridSpec grid;
  std::vector<int> k_values = {10, 20, 30, 40, 50};
  SelectionConfig selection;
  RetrievalConfig retrieval;
};

struct AblationRow {
  std::string label;  // "k=<k>" or "uniform54"
  int k = 0;
  double recall_at_1 = 0.0;
  double ap = 0.0;
  std::size_t informative_selected = 0;
};

struct AblationReport {
  double baseline_recall_at_1 = 0.0;  // single views, no aggregation
  std::vector<AblationRow> rows;       // one per k, then the uniform row
  const AblationRow* find(const std::string& label) const;
};

// Scores the grid, then for each k selects greedily and evaluates the fused
// database. The last row fuses all 54 slots with equal weights.
AblationReport run_ablation(const AblationSpec& spec);

}  // namespace mvgeo

#endif  // MVGEO_SYNTH_ORACLE_HPP_
