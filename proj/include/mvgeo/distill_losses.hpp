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


#ifndef MVGEO_DISTILL_LOSSES_HPP_
#define MVGEO_DISTILL_LOSSES_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "mvgeo/matrix.hpp"

// Training objectives of the hierarchical distillation scheme as plain
// functions of logits, probabilities and embeddings. Each loss optionally
// writes its gradient with respect to every input; a null gradient pointer
// skips that work. Batch losses average over rows.
namespace mvgeo::losses {

inline constexpr double kProbClamp = 1e-12;

struct Defaults {
  double self_distill_temperature = 3.0;
  double base_temperature = 1.0;  // T0
  double margin = 0.3;
  double contrastive_tau = 0.1;
};

// softmax(z / T), max-subtracted.
std::vector<double> softmax_t(std::span<const double> logits, double temperature = 1.0);

// -sum p ln p with p = softmax(z). grad (optional) receives dU/dz.
double shannon_entropy(std::span<const double> logits, std::span<double> grad = {});

// T0 * (1 + sigmoid(u_drone - u_sat)).
double adaptive_temperature(double u_drone, double u_sat, double t0);

// sum p ln(p / max(q, 1e-12)); terms with p = 0 contribute 0.
double kl_divergence(std::span<const double> p, std::span<const double> q, std::span<double> grad_p = {},
                     std::span<double> grad_q = {});

// -ln softmax(z)[label].
double cross_entropy(std::span<const double> logits, std::uint32_t label, std::span<double> grad = {});

// Per-stage classifier logits, shallow to deep.
struct StageLogits {
  std::vector<Matrix> stages;       // N matrices of B x C
  std::vector<double> ds_weights;   // w_i, N entries
  std::vector<double> sd_weights;   // lambda_i, N - 1 entries
  double temperature = 3.0;

  // Uniform weights (1/N and 1/(N-1)) and the given temperature.
  static StageLogits with_defaults(std::vector<Matrix> stages, double temperature = Defaults{}.self_distill_temperature);
};

// sum_i w_i * mean_b CE(z_i[b], y_b)
double deep_supervision_loss(const StageLogits& s, std::span<const std::uint32_t> labels,
                             std::vector<Matrix>* grads = nullptr);

// sum_{i<N} lambda_i * T^2 * mean_b KL(softmax(z_i/T) || softmax(z_N/T)).
// The shallow stage is the first KL argument.
double self_distillation_loss(const StageLogits& s, std::vector<Matrix>* grads = nullptr);

// Batch-hard triplet: per anchor the farthest same-label row and the
// nearest other-label row (squared Euclidean, ties to the lowest index),
// mean over usable anchors of max(0, d_ap - d_an + m). Throws Error when
// no anchor has both a positive and a negative.
double triplet_hard_loss(const Matrix& features, std::span<const std::uint32_t> labels, double margin,
                         Matrix* grad = nullptr);

// Distance from `features` to the set where the batch-hard triplet loss is
// not differentiable: hinge boundaries and mining ties.
double triplet_kink_margin(const Matrix& features, std::span<const std::uint32_t> labels, double margin);

// -(1/B) sum_k ln softmax_l(cos(a_k, t_l) / tau)[k]
double infonce_directional(const Matrix& anchors, const Matrix& targets, double tau, Matrix* grad_anchors = nullptr,
                           Matrix* grad_targets = nullptr);

// Average of the two InfoNCE directions.
double csc_loss(const Matrix& f_drone, const Matrix& f_sat, double tau, Matrix* grad_drone = nullptr,
                Matrix* grad_sat = nullptr);

// triplet(f_drone) + triplet(f_sat) + csc(f_drone, f_sat)
double metric_loss(const Matrix& f_drone, const Matrix& f_sat, std::span<const std::uint32_t> labels, double margin,
                   double tau, Matrix* grad_drone = nullptr, Matrix* grad_sat = nullptr);

struct UapaInputs {
  Matrix z_drone;  // B x C
  Matrix z_sat;    // B x C
  double t0 = 1.0;
  // Temperature per row from that row's entropy gap instead of one
  // temperature from the batch-mean gap.
  bool per_sample = false;
};

// Temperature the alignment loss uses (batch mode).
double uapa_temperature(const UapaInputs& in);

// T^2 * mean_b KL(softmax(z_sat/T) || softmax(z_drone/T)); T depends on the
// logits through the entropies and the gradient includes that path.
double uapa_align_loss(const UapaInputs& in, Matrix* grad_drone = nullptr, Matrix* grad_sat = nullptr);

// mean_b KL(p_teacher[b] || p_student[b]) on probability rows.
double cross_distill_logits_loss(const Matrix& p_teacher, const Matrix& p_student, Matrix* grad_teacher = nullptr,
                                 Matrix* grad_student = nullptr);

// mean_b ||phi(F_T) - phi(F_S)||^2 + 1 - cos(phi(F_T), phi(F_S)), phi = row L2 normalization.
double cross_distill_feature_loss(const Matrix& f_teacher, const Matrix& f_student, Matrix* grad_teacher = nullptr,
                                  Matrix* grad_student = nullptr);

struct DistillWeights {
  double align = 1.0;
  double logits = 1.0;
  double feature = 1.0;
};

// Second-stage objective: weighted sum of the alignment and the two
// cross-distillation losses. The weights are free parameters.
double distillation_objective(const UapaInputs& uapa, const Matrix& p_teacher, const Matrix& p_student,
                              const Matrix& f_teacher, const Matrix& f_student, const DistillWeights& w);

struct HybridGrads {
  std::vector<Matrix> stages;
  Matrix f_drone;
  Matrix f_sat;
};

struct HybridParts {
  double deep_supervision = 0.0;
  double self_distillation = 0.0;
  double metric = 0.0;
  double total() const { return deep_supervision + self_distillation + metric; }
};

// L_DS + L_self-dist + L_metric.
HybridParts total_hybrid_loss(const StageLogits& s, std::span<const std::uint32_t> labels, const Matrix& f_drone,
                              const Matrix& f_sat, double margin, double tau, HybridGrads* grads = nullptr);

}  // namespace mvgeo::losses

#endif  // MVGEO_DISTILL_LOSSES_HPP_
