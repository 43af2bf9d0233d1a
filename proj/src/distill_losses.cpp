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


#include "mvgeo/distill_losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "mvgeo/embedding_store.hpp"

namespace mvgeo::losses {

namespace {

const double kLogClamp = std::log(kProbClamp);

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> log_softmax(std::span<const double> z, double temperature) {
  std::vector<double> out(z.size());
  const double top = *std::max_element(z.begin(), z.end()) / temperature;
  double total = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) total += std::exp(z[j] / temperature - top);
  const double lse = top + std::log(total);
  for (std::size_t j = 0; j < z.size(); ++j) out[j] = z[j] / temperature - lse;
  return out;
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(fmt::format("{}: shape {}x{} vs {}x{}", what, a.rows(), a.cols(), b.rows(), b.cols()));
  }
  if (a.rows() == 0) throw Error(fmt::format("{}: empty batch", what));
}

void zero_like(Matrix* g, const Matrix& like) {
  if (g) *g = Matrix(like.rows(), like.cols());
}

// KL(softmax(a/T) || softmax(b/T)) with optional gradients w.r.t. a and b
// (scaled by `scale`, accumulated).
double kl_logits(std::span<const double> a, std::span<const double> b, double temperature, double scale,
                 std::span<double> ga, std::span<double> gb) {
  const auto log_p = log_softmax(a, temperature);
  auto log_q = log_softmax(b, temperature);
  for (auto& v : log_q) v = std::max(v, kLogClamp);
  const std::size_t c = a.size();
  double kl = 0.0;
  std::vector<double> p(c);
  for (std::size_t j = 0; j < c; ++j) {
    p[j] = std::exp(log_p[j]);
    kl += p[j] * (log_p[j] - log_q[j]);
  }
  if (!ga.empty()) {
    // d/da_j = p_j (g_j - sum_c p_c g_c) / T with g = ln p - ln q.
    for (std::size_t j = 0; j < c; ++j) ga[j] += scale * p[j] * ((log_p[j] - log_q[j]) - kl) / temperature;
  }
  if (!gb.empty()) {
    for (std::size_t j = 0; j < c; ++j) gb[j] += scale * (std::exp(log_q[j]) - p[j]) / temperature;
  }
  return kl;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

struct Mined {
  std::size_t positive;
  std::size_t negative;
  double d_ap;
  double d_an;
  double gap;  // distance to the nearest mining tie
};

std::vector<std::optional<Mined>> mine(const Matrix& f, std::span<const std::uint32_t> labels) {
  const std::size_t n = f.rows();
  if (labels.size() != n) throw Error(fmt::format("{} labels for {} embeddings", labels.size(), n));
  std::vector<std::optional<Mined>> out(n);
  for (std::size_t a = 0; a < n; ++a) {
    const double inf = std::numeric_limits<double>::infinity();
    std::size_t pos = n, neg = n;
    double d_pos = -inf, d_neg = inf;
    double gap = inf;
    std::vector<double> pos_d, neg_d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double d = sq_dist(f.row(a), f.row(j));
      if (labels[j] == labels[a]) {
        pos_d.push_back(d);
        if (d > d_pos) {
          d_pos = d;
          pos = j;
        }
      } else {
        neg_d.push_back(d);
        if (d < d_neg) {
          d_neg = d;
          neg = j;
        }
      }
    }
    if (pos == n || neg == n) continue;
    std::sort(pos_d.rbegin(), pos_d.rend());
    std::sort(neg_d.begin(), neg_d.end());
    if (pos_d.size() > 1) gap = std::min(gap, pos_d[0] - pos_d[1]);
    if (neg_d.size() > 1) gap = std::min(gap, neg_d[1] - neg_d[0]);
    out[a] = Mined{pos, neg, d_pos, d_neg, gap};
  }
  return out;
}

// Row-normalized copy plus the original norms.
Matrix normalize_rows(const Matrix& m, std::vector<double>& norms, const char* what) {
  Matrix out = m;
  norms.assign(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double n = 0.0;
    for (double v : m.row(r)) n += v * v;
    n = std::sqrt(n);
    if (n == 0.0) throw Error(fmt::format("{}: row {} is zero; normalization undefined", what, r));
    norms[r] = n;
    for (auto& v : out.row(r)) v /= n;
  }
  return out;
}

// Pulls a gradient w.r.t. normalized rows back to the raw rows:
// dx = (dx_hat - x_hat * <x_hat, dx_hat>) / ||x||.
void backprop_normalize(const Matrix& unit, std::span<const double> norms, const Matrix& g_unit, Matrix& g_raw) {
  for (std::size_t r = 0; r < unit.rows(); ++r) {
    double proj = 0.0;
    for (std::size_t d = 0; d < unit.cols(); ++d) proj += unit(r, d) * g_unit(r, d);
    for (std::size_t d = 0; d < unit.cols(); ++d) g_raw(r, d) += (g_unit(r, d) - unit(r, d) * proj) / norms[r];
  }
}

void add_scaled(Matrix& dst, const Matrix& src, double scale) {
  auto d = dst.flat();
  auto s = src.flat();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

}  // namespace

std::vector<double> softmax_t(std::span<const double> logits, double temperature) {
  if (logits.empty()) throw Error("softmax of an empty row");
  if (!(temperature > 0.0)) throw Error(fmt::format("temperature {} must be positive", temperature));
  auto out = log_softmax(logits, temperature);
  double total = 0.0;
  for (auto& v : out) {
    v = std::exp(v);
    total += v;
  }
  for (auto& v : out) v /= total;
  return out;
}

double shannon_entropy(std::span<const double> logits, std::span<double> grad) {
  const auto log_p = log_softmax(logits, 1.0);
  double u = 0.0;
  for (double lp : log_p) u -= std::exp(lp) * lp;
  if (!grad.empty()) {
    // dU/dz_j = -p_j (ln p_j + U)
    for (std::size_t j = 0; j < logits.size(); ++j) grad[j] = -std::exp(log_p[j]) * (log_p[j] + u);
  }
  return u;
}

double adaptive_temperature(double u_drone, double u_sat, double t0) {
  if (!(t0 > 0.0)) throw Error(fmt::format("base temperature {} must be positive", t0));
  return t0 * (1.0 + sigmoid(u_drone - u_sat));
}

double kl_divergence(std::span<const double> p, std::span<const double> q, std::span<double> grad_p,
                     std::span<double> grad_q) {
  if (p.size() != q.size()) throw Error("KL divergence of distributions with different supports");
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double qc = std::max(q[j], kProbClamp);
    if (p[j] > 0.0) kl += p[j] * (std::log(p[j]) - std::log(qc));
    if (!grad_p.empty()) grad_p[j] = p[j] > 0.0 ? std::log(p[j]) - std::log(qc) + 1.0 : 0.0;
    if (!grad_q.empty()) grad_q[j] = q[j] > kProbClamp ? -p[j] / q[j] : 0.0;
  }
  return kl;
}

double cross_entropy(std::span<const double> logits, std::uint32_t label, std::span<double> grad) {
  if (label >= logits.size()) throw Error(fmt::format("label {} outside {} classes", label, logits.size()));
  const auto log_p = log_softmax(logits, 1.0);
  if (!grad.empty()) {
    for (std::size_t j = 0; j < logits.size(); ++j) grad[j] = std::exp(log_p[j]) - (j == label ? 1.0 : 0.0);
  }
  return -log_p[label];
}

StageLogits StageLogits::with_defaults(std::vector<Matrix> stages, double temperature) {
  StageLogits s;
  const auto n = stages.size();
  s.stages = std::move(stages);
  s.ds_weights.assign(n, n ? 1.0 / static_cast<double>(n) : 0.0);
  s.sd_weights.assign(n > 1 ? n - 1 : 0, n > 1 ? 1.0 / static_cast<double>(n - 1) : 0.0);
  s.temperature = temperature;
  return s;
}

double deep_supervision_loss(const StageLogits& s, std::span<const std::uint32_t> labels, std::vector<Matrix>* grads) {
  if (s.stages.empty()) throw Error("deep supervision needs at least one stage");
  if (s.ds_weights.size() != s.stages.size()) throw Error("one deep-supervision weight per stage required");
  if (grads) grads->resize(s.stages.size());
  double total = 0.0;
  for (std::size_t i = 0; i < s.stages.size(); ++i) {
    const auto& z = s.stages[i];
    if (z.rows() != labels.size() || z.rows() == 0) throw Error("stage logits and labels disagree on batch size");
    const double scale = s.ds_weights[i] / static_cast<double>(z.rows());
    if (grads && (*grads)[i].rows() != z.rows()) zero_like(&(*grads)[i], z);
    std::vector<double> g(z.cols());
    for (std::size_t b = 0; b < z.rows(); ++b) {
      total += scale * cross_entropy(z.row(b), labels[b], grads ? std::span<double>(g) : std::span<double>());
      if (grads) {
        auto row = (*grads)[i].row(b);
        for (std::size_t j = 0; j < g.size(); ++j) row[j] += scale * g[j];
      }
    }
  }
  return total;
}

double self_distillation_loss(const StageLogits& s, std::vector<Matrix>* grads) {
  const std::size_t n = s.stages.size();
  if (n < 2) throw Error("self-distillation needs at least two stages");
  if (s.sd_weights.size() != n - 1) throw Error("one self-distillation weight per shallow stage required");
  if (!(s.temperature > 0.0)) throw Error("self-distillation temperature must be positive");
  const auto& deep = s.stages[n - 1];
  if (grads) {
    grads->resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if ((*grads)[i].rows() != s.stages[i].rows()) zero_like(&(*grads)[i], s.stages[i]);
    }
  }
  const double t = s.temperature;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    check_same_shape(s.stages[i], deep, "self-distillation stage");
    const double scale = s.sd_weights[i] * t * t / static_cast<double>(deep.rows());
    for (std::size_t b = 0; b < deep.rows(); ++b) {
      total += scale * kl_logits(s.stages[i].row(b), deep.row(b), t, scale,
                                 grads ? (*grads)[i].row(b) : std::span<double>(),
                                 grads ? (*grads)[n - 1].row(b) : std::span<double>());
    }
  }
  return total;
}

double triplet_hard_loss(const Matrix& features, std::span<const std::uint32_t> labels, double margin, Matrix* grad) {
  const auto mined = mine(features, labels);
  std::size_t usable = 0;
  for (const auto& m : mined) usable += m ? 1 : 0;
  if (usable == 0) throw Error("triplet loss: no anchor has both a positive and a negative in the batch");
  zero_like(grad, features);
  const double inv = 1.0 / static_cast<double>(usable);
  double total = 0.0;
  for (std::size_t a = 0; a < mined.size(); ++a) {
    if (!mined[a]) continue;
    const auto& m = *mined[a];
    const double hinge = m.d_ap - m.d_an + margin;
    if (hinge <= 0.0) continue;
    total += hinge * inv;
    if (grad) {
      for (std::size_t d = 0; d < features.cols(); ++d) {
        const double ap = features(a, d) - features(m.positive, d);
        const double an = features(a, d) - features(m.negative, d);
        (*grad)(a, d) += inv * 2.0 * (ap - an);
        (*grad)(m.positive, d) -= inv * 2.0 * ap;
        (*grad)(m.negative, d) += inv * 2.0 * an;
      }
    }
  }
  return total;
}

double triplet_kink_margin(const Matrix& features, std::span<const std::uint32_t> labels, double margin) {
  double gap = std::numeric_limits<double>::infinity();
  for (const auto& m : mine(features, labels)) {
    if (!m) continue;
    gap = std::min({gap, std::fabs(m->d_ap - m->d_an + margin), m->gap});
  }
  return gap;
}

double infonce_directional(const Matrix& anchors, const Matrix& targets, double tau, Matrix* grad_anchors,
                           Matrix* grad_targets) {
  check_same_shape(anchors, targets, "InfoNCE");
  if (!(tau > 0.0)) throw Error("contrastive temperature must be positive");
  const std::size_t b = anchors.rows();
  std::vector<double> na, nt;
  const Matrix ua = normalize_rows(anchors, na, "InfoNCE anchors");
  const Matrix ut = normalize_rows(targets, nt, "InfoNCE targets");

  Matrix g_sim(b, b);  // dL/dS with S = cos / tau
  double total = 0.0;
  std::vector<double> logits(b);
  for (std::size_t k = 0; k < b; ++k) {
    for (std::size_t l = 0; l < b; ++l) {
      double c = 0.0;
      for (std::size_t d = 0; d < anchors.cols(); ++d) c += ua(k, d) * ut(l, d);
      logits[l] = c / tau;
    }
    const auto log_p = log_softmax(logits, 1.0);
    total -= log_p[k];
    for (std::size_t l = 0; l < b; ++l) g_sim(k, l) = (std::exp(log_p[l]) - (l == k ? 1.0 : 0.0)) / static_cast<double>(b);
  }
  total /= static_cast<double>(b);

  if (grad_anchors || grad_targets) {
    Matrix ga_unit(b, anchors.cols()), gt_unit(b, anchors.cols());
    for (std::size_t k = 0; k < b; ++k) {
      for (std::size_t l = 0; l < b; ++l) {
        const double g = g_sim(k, l) / tau;
        for (std::size_t d = 0; d < anchors.cols(); ++d) {
          ga_unit(k, d) += g * ut(l, d);
          gt_unit(l, d) += g * ua(k, d);
        }
      }
    }
    if (grad_anchors) {
      zero_like(grad_anchors, anchors);
      backprop_normalize(ua, na, ga_unit, *grad_anchors);
    }
    if (grad_targets) {
      zero_like(grad_targets, targets);
      backprop_normalize(ut, nt, gt_unit, *grad_targets);
    }
  }
  return total;
}

double csc_loss(const Matrix& f_drone, const Matrix& f_sat, double tau, Matrix* grad_drone, Matrix* grad_sat) {
  Matrix gd1, gs1, gs2, gd2;
  const bool want = grad_drone || grad_sat;
  const double d2s = infonce_directional(f_drone, f_sat, tau, want ? &gd1 : nullptr, want ? &gs1 : nullptr);
  const double s2d = infonce_directional(f_sat, f_drone, tau, want ? &gs2 : nullptr, want ? &gd2 : nullptr);
  if (grad_drone) {
    zero_like(grad_drone, f_drone);
    add_scaled(*grad_drone, gd1, 0.5);
    add_scaled(*grad_drone, gd2, 0.5);
  }
  if (grad_sat) {
    zero_like(grad_sat, f_sat);
    add_scaled(*grad_sat, gs1, 0.5);
    add_scaled(*grad_sat, gs2, 0.5);
  }
  return 0.5 * (d2s + s2d);
}

double metric_loss(const Matrix& f_drone, const Matrix& f_sat, std::span<const std::uint32_t> labels, double margin,
                   double tau, Matrix* grad_drone, Matrix* grad_sat) {
  Matrix gtd, gts, gcd, gcs;
  const double td = triplet_hard_loss(f_drone, labels, margin, grad_drone ? &gtd : nullptr);
  const double ts = triplet_hard_loss(f_sat, labels, margin, grad_sat ? &gts : nullptr);
  const double c = csc_loss(f_drone, f_sat, tau, grad_drone ? &gcd : nullptr, grad_sat ? &gcs : nullptr);
  if (grad_drone) {
    *grad_drone = gtd;
    add_scaled(*grad_drone, gcd, 1.0);
  }
  if (grad_sat) {
    *grad_sat = gts;
    add_scaled(*grad_sat, gcs, 1.0);
  }
  return td + ts + c;
}

double uapa_temperature(const UapaInputs& in) {
  check_same_shape(in.z_drone, in.z_sat, "alignment logits");
  double ud = 0.0, us = 0.0;
  for (std::size_t b = 0; b < in.z_drone.rows(); ++b) {
    ud += shannon_entropy(in.z_drone.row(b));
    us += shannon_entropy(in.z_sat.row(b));
  }
  const double n = static_cast<double>(in.z_drone.rows());
  return adaptive_temperature(ud / n, us / n, in.t0);
}

double uapa_align_loss(const UapaInputs& in, Matrix* grad_drone, Matrix* grad_sat) {
  check_same_shape(in.z_drone, in.z_sat, "alignment logits");
  if (!(in.t0 > 0.0)) throw Error("base temperature must be positive");
  const std::size_t rows = in.z_drone.rows();
  const std::size_t c = in.z_drone.cols();
  const double inv_b = 1.0 / static_cast<double>(rows);
  zero_like(grad_drone, in.z_drone);
  zero_like(grad_sat, in.z_sat);

  std::vector<double> u_d(rows), u_s(rows);
  Matrix du_d(rows, c), du_s(rows, c);
  for (std::size_t b = 0; b < rows; ++b) {
    u_d[b] = shannon_entropy(in.z_drone.row(b), du_d.row(b));
    u_s[b] = shannon_entropy(in.z_sat.row(b), du_s.row(b));
  }

  // One group per temperature: the whole batch, or each row on its own.
  const std::size_t groups = in.per_sample ? rows : 1;
  double total = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t lo = in.per_sample ? g : 0;
    const std::size_t hi = in.per_sample ? g + 1 : rows;
    double gap = 0.0;
    for (std::size_t b = lo; b < hi; ++b) gap += u_d[b] - u_s[b];
    gap /= static_cast<double>(hi - lo);
    const double sig = sigmoid(gap);
    const double t = in.t0 * (1.0 + sig);

    // Direct term at fixed T, plus dL/dT for the temperature path.
    double dl_dt = 0.0;
    std::vector<double> ga(c), gb(c);
    for (std::size_t b = lo; b < hi; ++b) {
      std::fill(ga.begin(), ga.end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      const double kl = kl_logits(in.z_sat.row(b), in.z_drone.row(b), t, 1.0, ga, gb);
      total += inv_b * t * t * kl;
      // dKL/dT = -(sum_j ga_j a_j + gb_j b_j) / T
      double dkl_dt = 0.0;
      for (std::size_t j = 0; j < c; ++j) dkl_dt -= (ga[j] * in.z_sat(b, j) + gb[j] * in.z_drone(b, j)) / t;
      dl_dt += inv_b * (2.0 * t * kl + t * t * dkl_dt);
      if (grad_sat) {
        for (std::size_t j = 0; j < c; ++j) (*grad_sat)(b, j) += inv_b * t * t * ga[j];
      }
      if (grad_drone) {
        for (std::size_t j = 0; j < c; ++j) (*grad_drone)(b, j) += inv_b * t * t * gb[j];
      }
    }
    const double dgap = dl_dt * in.t0 * sig * (1.0 - sig) / static_cast<double>(hi - lo);
    for (std::size_t b = lo; b < hi; ++b) {
      for (std::size_t j = 0; j < c; ++j) {
        if (grad_drone) (*grad_drone)(b, j) += dgap * du_d(b, j);
        if (grad_sat) (*grad_sat)(b, j) -= dgap * du_s(b, j);
      }
    }
  }
  return total;
}

double cross_distill_logits_loss(const Matrix& p_teacher, const Matrix& p_student, Matrix* grad_teacher,
                                 Matrix* grad_student) {
  check_same_shape(p_teacher, p_student, "cross-distillation probabilities");
  zero_like(grad_teacher, p_teacher);
  zero_like(grad_student, p_student);
  const double inv_b = 1.0 / static_cast<double>(p_teacher.rows());
  double total = 0.0;
  std::vector<double> gp(p_teacher.cols()), gq(p_teacher.cols());
  for (std::size_t b = 0; b < p_teacher.rows(); ++b) {
    total += inv_b * kl_divergence(p_teacher.row(b), p_student.row(b), gp, gq);
    for (std::size_t j = 0; j < gp.size(); ++j) {
      if (grad_teacher) (*grad_teacher)(b, j) = inv_b * gp[j];
      if (grad_student) (*grad_student)(b, j) = inv_b * gq[j];
    }
  }
  return total;
}

double cross_distill_feature_loss(const Matrix& f_teacher, const Matrix& f_student, Matrix* grad_teacher,
                                  Matrix* grad_student) {
  check_same_shape(f_teacher, f_student, "cross-distillation features");
  std::vector<double> nt, ns;
  const Matrix ut = normalize_rows(f_teacher, nt, "teacher features");
  const Matrix us = normalize_rows(f_student, ns, "student features");
  const std::size_t rows = ut.rows();
  const double inv_b = 1.0 / static_cast<double>(rows);
  Matrix gt_unit(rows, ut.cols()), gs_unit(rows, ut.cols());
  double total = 0.0;
  for (std::size_t b = 0; b < rows; ++b) {
    double mse = 0.0, cos = 0.0;
    for (std::size_t d = 0; d < ut.cols(); ++d) {
      const double diff = ut(b, d) - us(b, d);
      mse += diff * diff;
      cos += ut(b, d) * us(b, d);
    }
    total += inv_b * (mse + 1.0 - cos);
    for (std::size_t d = 0; d < ut.cols(); ++d) {
      const double diff = ut(b, d) - us(b, d);
      gt_unit(b, d) = inv_b * (2.0 * diff - us(b, d));
      gs_unit(b, d) = inv_b * (-2.0 * diff - ut(b, d));
    }
  }
  if (grad_teacher) {
    zero_like(grad_teacher, f_teacher);
    backprop_normalize(ut, nt, gt_unit, *grad_teacher);
  }
  if (grad_student) {
    zero_like(grad_student, f_student);
    backprop_normalize(us, ns, gs_unit, *grad_student);
  }
  return total;
}

double distillation_objective(const UapaInputs& uapa, const Matrix& p_teacher, const Matrix& p_student,
                              const Matrix& f_teacher, const Matrix& f_student, const DistillWeights& w) {
  return w.align * uapa_align_loss(uapa) + w.logits * cross_distill_logits_loss(p_teacher, p_student) +
         w.feature * cross_distill_feature_loss(f_teacher, f_student);
}

HybridParts total_hybrid_loss(const StageLogits& s, std::span<const std::uint32_t> labels, const Matrix& f_drone,
                              const Matrix& f_sat, double margin, double tau, HybridGrads* grads) {
  HybridParts parts;
  std::vector<Matrix> g_ds, g_sd;
  parts.deep_supervision = deep_supervision_loss(s, labels, grads ? &g_ds : nullptr);
  parts.self_distillation = self_distillation_loss(s, grads ? &g_sd : nullptr);
  parts.metric = metric_loss(f_drone, f_sat, labels, margin, tau, grads ? &grads->f_drone : nullptr,
                             grads ? &grads->f_sat : nullptr);
  if (grads) {
    grads->stages = std::move(g_ds);
    for (std::size_t i = 0; i < grads->stages.size(); ++i) add_scaled(grads->stages[i], g_sd[i], 1.0);
  }
  return parts;
}

}  // namespace mvgeo::losses
