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


#ifndef MVGEO_GRAD_CHECK_HPP_
#define MVGEO_GRAD_CHECK_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mvgeo/rng.hpp"

namespace mvgeo {

// A scalar loss over a flat input vector, with its analytic gradient.
struct GradCase {
  std::string name;
  // Draws a fresh input point.
  std::function<std::vector<double>(Rng&)> sample;
  // Loss value; writes dL/dx into grad when grad is non-empty.
  std::function<double(std::span<const double> x, std::span<double> grad)> eval;
  // Distance to the set where the loss is not differentiable. Empty for
  // smooth losses.
  std::function<double(std::span<const double> x)> kink_margin;
};

struct GradCheckOptions {
  double h = 1e-4;               // largest central-difference step, in [1e-7, 1e-3]; Ridders shrinks it
  double kink_tolerance = 1e-3;  // resample points closer than this to a kink
  int max_retries = 50;
  double abs_floor = 1e-6;  // relative error is |a - n| / max(|a|, |n|, abs_floor)
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  int resamples = 0;
};

// Checks every coordinate of one point. Throws Error if the point is within
// kink_tolerance of a non-differentiable set.
GradCheckResult grad_check(const GradCase& c, std::span<const double> x, const GradCheckOptions& opt = {});

// Draws a differentiable point (bounded resampling) and checks it.
GradCheckResult grad_check(const GradCase& c, Rng& rng, const GradCheckOptions& opt = {});

// Every loss of the distillation family, on small random batches.
std::vector<GradCase> standard_grad_cases();

struct GradSuiteRow {
  std::string name;
  std::size_t points = 0;
  double max_rel_error = 0.0;
  int resamples = 0;
  bool passed = false;
};

std::vector<GradSuiteRow> run_grad_suite(std::size_t points, std::uint64_t seed, double tolerance = 1e-4,
                                         const GradCheckOptions& opt = {});

}  // namespace mvgeo

#endif  // MVGEO_GRAD_CHECK_HPP_
