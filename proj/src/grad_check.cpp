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


#include "mvgeo/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "mvgeo/distill_losses.hpp"
#include "mvgeo/embedding_store.hpp"
#include "mvgeo/matrix.hpp"

namespace mvgeo {

namespace ls = losses;

namespace {

// Ridders: central differences at steps h, h/1.4, ... extrapolated to zero
// step (Richardson tableau). Returns the entry with the smallest error
// estimate; stops once higher orders start to diverge.
template <class F>
double ridders(F&& central, double h) {
  constexpr int kTab = 10;
  constexpr double kShrink = 1.4, kShrink2 = kShrink * kShrink, kSafe = 2.0;
  double a[kTab][kTab];
  a[0][0] = central(h);
  double best = a[0][0];
  double err = std::numeric_limits<double>::max();
  for (int i = 1; i < kTab; ++i) {
    h /= kShrink;
    a[0][i] = central(h);
    double fac = kShrink2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink2;
      const double e = std::max(std::fabs(a[j][i] - a[j - 1][i]), std::fabs(a[j][i] - a[j - 1][i - 1]));
      if (e <= err) {
        err = e;
        best = a[j][i];
      }
    }
    if (std::fabs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err) break;
  }
  return best;
}

}  // namespace

GradCheckResult grad_check(const GradCase& c, std::span<const double> x, const GradCheckOptions& opt) {
  if (!(opt.h >= 1e-7 && opt.h <= 1e-3)) throw Error(fmt::format("step h = {} outside [1e-7, 1e-3]", opt.h));
  if (c.kink_margin && c.kink_margin(x) < opt.kink_tolerance) {
    throw Error(fmt::format("{}: point lies within {} of a non-differentiable set", c.name, opt.kink_tolerance));
  }
  std::vector<double> analytic(x.size());
  c.eval(x, analytic);
  std::vector<double> probe(x.begin(), x.end());
  GradCheckResult result;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto central = [&](double step) {
      probe[i] = x[i] + step;
      const double up = c.eval(probe, {});
      probe[i] = x[i] - step;
      const double down = c.eval(probe, {});
      probe[i] = x[i];
      return (up - down) / (2.0 * step);
    };
    const double numeric = ridders(central, opt.h);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), opt.abs_floor});
    result.max_rel_error = std::max(result.max_rel_error, std::fabs(analytic[i] - numeric) / denom);
  }
  result.coordinates = x.size();
  return result;
}

GradCheckResult grad_check(const GradCase& c, Rng& rng, const GradCheckOptions& opt) {
  for (int attempt = 0; attempt <= opt.max_retries; ++attempt) {
    const auto x = c.sample(rng);
    if (c.kink_margin && c.kink_margin(x) < opt.kink_tolerance) continue;
    auto result = grad_check(c, x, opt);
    result.resamples = attempt;
    return result;
  }
  throw Error(fmt::format("{}: no differentiable point after {} draws", c.name, opt.max_retries + 1));
}

namespace {

constexpr std::size_t kBatch = 6;
constexpr std::size_t kClasses = 5;
constexpr std::size_t kDim = 4;
constexpr std::size_t kStages = 4;
const std::vector<std::uint32_t> kLabels = {0, 0, 1, 1, 2, 2};

// Sequential reader/writer of matrices packed into one flat vector.
class Packed {
 public:
  explicit Packed(std::span<const double> x) : x_(x) {}

  Matrix take(std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    std::copy_n(x_.begin() + static_cast<std::ptrdiff_t>(pos_), rows * cols, m.flat().begin());
    pos_ += rows * cols;
    return m;
  }

  double scalar() { return x_[pos_++]; }

 private:
  std::span<const double> x_;
  std::size_t pos_ = 0;
};

void put(std::span<double> grad, std::size_t& pos, const Matrix& m) {
  std::copy(m.flat().begin(), m.flat().end(), grad.begin() + static_cast<std::ptrdiff_t>(pos));
  pos += m.size();
}

std::vector<double> normal_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, scale);
  return v;
}

// Rows of probabilities from random logits.
std::vector<double> prob_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<double> out;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto p = ls::softmax_t(normal_vector(rng, cols));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

ls::StageLogits stages_from(Packed& in, double temperature) {
  std::vector<Matrix> z;
  for (std::size_t i = 0; i < kStages; ++i) z.push_back(in.take(kBatch, kClasses));
  return ls::StageLogits::with_defaults(std::move(z), temperature);
}

double stage_kink(std::span<const double> x, double margin) {
  Packed in(x);
  for (std::size_t i = 0; i < kStages; ++i) in.take(kBatch, kClasses);
  const Matrix fd = in.take(kBatch, kDim);
  const Matrix fs = in.take(kBatch, kDim);
  return std::min(ls::triplet_kink_margin(fd, kLabels, margin), ls::triplet_kink_margin(fs, kLabels, margin));
}

}  // namespace

std::vector<GradCase> standard_grad_cases() {
  const ls::Defaults defaults;
  std::vector<GradCase> cases;

  cases.push_back({"cross_entropy",
                   [](Rng& rng) { return normal_vector(rng, kClasses, 2.0); },
                   [](std::span<const double> x, std::span<double> g) { return ls::cross_entropy(x, 2, g); },
                   {}});

  cases.push_back({"shannon_entropy",
                   [](Rng& rng) { return normal_vector(rng, kClasses, 2.0); },
                   [](std::span<const double> x, std::span<double> g) { return ls::shannon_entropy(x, g); },
                   {}});

  cases.push_back({"adaptive_temperature",
                   [](Rng& rng) { return normal_vector(rng, 2, 1.5); },
                   [](std::span<const double> x, std::span<double> g) {
                     const double t = ls::adaptive_temperature(x[0], x[1], 1.0);
                     if (!g.empty()) {
                       const double s = 1.0 / (1.0 + std::exp(-(x[0] - x[1])));
                       g[0] = s * (1.0 - s);
                       g[1] = -s * (1.0 - s);
                     }
                     return t;
                   },
                   {}});

  cases.push_back({"kl_divergence",
                   [](Rng& rng) { return prob_rows(rng, 2, kClasses); },
                   [](std::span<const double> x, std::span<double> g) {
                     return ls::kl_divergence(x.first(kClasses), x.subspan(kClasses),
                                              g.empty() ? g : g.first(kClasses), g.empty() ? g : g.subspan(kClasses));
                   },
                   {}});

  cases.push_back({"deep_supervision",
                   [](Rng& rng) { return normal_vector(rng, kStages * kBatch * kClasses, 2.0); },
                   [](std::span<const double> x, std::span<double> g) {
                     Packed in(x);
                     auto s = stages_from(in, 1.0);
                     std::vector<Matrix> grads;
                     const double v = ls::deep_supervision_loss(s, kLabels, g.empty() ? nullptr : &grads);
                     std::size_t pos = 0;
                     if (!g.empty()) {
                       for (const auto& m : grads) put(g, pos, m);
                     }
                     return v;
                   },
                   {}});

  cases.push_back({"self_distillation",
                   [](Rng& rng) { return normal_vector(rng, kStages * kBatch * kClasses, 2.0); },
                   [t = defaults.self_distill_temperature](std::span<const double> x, std::span<double> g) {
                     Packed in(x);
                     auto s = stages_from(in, t);
                     std::vector<Matrix> grads;
                     const double v = ls::self_distillation_loss(s, g.empty() ? nullptr : &grads);
                     std::size_t pos = 0;
                     if (!g.empty()) {
                       for (const auto& m : grads) put(g, pos, m);
                     }
                     return v;
                   },
                   {}});

  cases.push_back({"triplet_hard",
                   [](Rng& rng) { return normal_vector(rng, kBatch * kDim, 0.5); },
                   [m = defaults.margin](std::span<const double> x, std::span<double> g) {
                     Packed in(x);
                     const Matrix f = in.take(kBatch, kDim);
                     Matrix grad;
                     const double v = ls::triplet_hard_loss(f, kLabels, m, g.empty() ? nullptr : &grad);
                     std::size_t pos = 0;
                     if (!g.empty()) put(g, pos, grad);
                     return v;
                   },
                   [m = defaults.margin](std::span<const double> x) {
                     Packed in(x);
                     return ls::triplet_kink_margin(in.take(kBatch, kDim), kLabels, m);
                   }});

  cases.push_back({"infonce_directional",
                   [](Rng& rng) { return normal_vector(rng, 2 * kBatch * kDim); },
                   [tau = defaults.contrastive_tau](std::span<const double> x, std::span<double> g) {
                     Packed in(x);
                     const Matrix a = in.take(kBatch, kDim);
                     const Matrix t = in.take(kBatch, kDim);
                     Matrix ga, gt;
                     const bool want = !g.empty();
                     const double v = ls::infonce_directional(a, t, tau, want ? &ga : nullptr, want ? &gt : nullptr);
                     std::size_t pos = 0;
                     if (want) {
                       put(g, pos, ga);
                       put(g, pos, gt);
                     }
                     return v;
                   },
                   {}});

  cases.push_back({"csc",
                   [](Rng& rng) { return normal_vector(rng, 2 * kBatch * kDim); },
                   [tau = defaults.contrastive_tau](std::span<const double> x, std::span<double> g) {
                     Packed in(x);
                     const Matrix d = in.take(kBatch, kDim);
                     const Matrix s = in.take(kBatch, kDim);
                     Matrix gd, gs;
                     const bool want = !g.empty();
                     const double v = ls::csc_loss(d, s, tau, want ? &gd : nullptr, want ? &gs : nullptr);
                     std::size_t pos = 0;
                     if (want) {
                       put(g, pos, gd);
                       put(g, pos, gs);
                     }
                     return v;
                   },
                   {}});

  cases.push_back({"metric",
                   [](Rng& rng) { return normal_vector(rng, 2 * kBatch * kDim, 0.5); },
                   [m = defaults.margin, tau = defaults.contrastive_tau](std::span<const double> x, std::span<double> g) {
                     Packed in(x);
                     const Matrix d = in.take(kBatch, kDim);
                     const Matrix s = in.take(kBatch, kDim);
                     Matrix gd, gs;
                     const bool want = !g.empty();
                     const double v = ls::metric_loss(d, s, kLabels, m, tau, want ? &gd : nullptr, want ? &gs : nullptr);
                     std::size_t pos = 0;
                     if (want) {
                       put(g, pos, gd);
                       put(g, pos, gs);
                     }
                     return v;
                   },
                   [m = defaults.margin](std::span<const double> x) {
                     Packed in(x);
                     const Matrix d = in.take(kBatch, kDim);
                     const Matrix s = in.take(kBatch, kDim);
                     return std::min(ls::triplet_kink_margin(d, kLabels, m), ls::triplet_kink_margin(s, kLabels, m));
                   }});

  for (bool per_sample : {false, true}) {
    cases.push_back({per_sample ? "uapa_align_per_sample" : "uapa_align",
                     [](Rng& rng) { return normal_vector(rng, 2 * kBatch * kClasses, 2.0); },
                     [per_sample, t0 = defaults.base_temperature](std::span<const double> x, std::span<double> g) {
                       Packed in(x);
                       ls::UapaInputs u{in.take(kBatch, kClasses), in.take(kBatch, kClasses), t0, per_sample};
                       Matrix gd, gs;
                       const bool want = !g.empty();
                       const double v = ls::uapa_align_loss(u, want ? &gd : nullptr, want ? &gs : nullptr);
                       std::size_t pos = 0;
                       if (want) {
                         put(g, pos, gd);
                         put(g, pos, gs);
                       }
                       return v;
                     },
                     {}});
  }

  cases.push_back({"cross_distill_logits",
                   [](Rng& rng) { return prob_rows(rng, 2 * kBatch, kClasses); },
                   [](std::span<const double> x, std::span<double> g) {
                     Packed in(x);
                     const Matrix pt = in.take(kBatch, kClasses);
                     const Matrix ps = in.take(kBatch, kClasses);
                     Matrix gt, gs;
                     const bool want = !g.empty();
                     const double v = ls::cross_distill_logits_loss(pt, ps, want ? &gt : nullptr, want ? &gs : nullptr);
                     std::size_t pos = 0;
                     if (want) {
                       put(g, pos, gt);
                       put(g, pos, gs);
                     }
                     return v;
                   },
                   {}});

  cases.push_back({"cross_distill_feature",
                   [](Rng& rng) { return normal_vector(rng, 2 * kBatch * kDim); },
                   [](std::span<const double> x, std::span<double> g) {
                     Packed in(x);
                     const Matrix ft = in.take(kBatch, kDim);
                     const Matrix fs = in.take(kBatch, kDim);
                     Matrix gt, gs;
                     const bool want = !g.empty();
                     const double v = ls::cross_distill_feature_loss(ft, fs, want ? &gt : nullptr, want ? &gs : nullptr);
                     std::size_t pos = 0;
                     if (want) {
                       put(g, pos, gt);
                       put(g, pos, gs);
                     }
                     return v;
                   },
                   {}});

  cases.push_back({"total_hybrid",
                   [](Rng& rng) {
                     auto x = normal_vector(rng, kStages * kBatch * kClasses, 2.0);
                     const auto f = normal_vector(rng, 2 * kBatch * kDim, 0.5);
                     x.insert(x.end(), f.begin(), f.end());
                     return x;
                   },
                   [d = defaults](std::span<const double> x, std::span<double> g) {
                     Packed in(x);
                     auto s = stages_from(in, d.self_distill_temperature);
                     const Matrix fd = in.take(kBatch, kDim);
                     const Matrix fs = in.take(kBatch, kDim);
                     ls::HybridGrads grads;
                     const auto parts = ls::total_hybrid_loss(s, kLabels, fd, fs, d.margin, d.contrastive_tau,
                                                              g.empty() ? nullptr : &grads);
                     std::size_t pos = 0;
                     if (!g.empty()) {
                       for (const auto& m : grads.stages) put(g, pos, m);
                       put(g, pos, grads.f_drone);
                       put(g, pos, grads.f_sat);
                     }
                     return parts.total();
                   },
                   [m = defaults.margin](std::span<const double> x) { return stage_kink(x, m); }});

  return cases;
}

std::vector<GradSuiteRow> run_grad_suite(std::size_t points, std::uint64_t seed, double tolerance,
                                         const GradCheckOptions& opt) {
  std::vector<GradSuiteRow> rows;
  const auto cases = standard_grad_cases();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    GradSuiteRow row;
    row.name = cases[i].name;
    for (std::size_t p = 0; p < points; ++p) {
      const auto r = grad_check(cases[i], rng, opt);
      row.max_rel_error = std::max(row.max_rel_error, r.max_rel_error);
      row.resamples += r.resamples;
      ++row.points;
    }
    row.passed = row.max_rel_error <= tolerance;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mvgeo
