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


// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <fmt/format.h>

#include "cli.hpp"
#include "fixtures.hpp"
#include "mvgeo/distill_losses.hpp"
#include "mvgeo/grad_check.hpp"
#include "mvgeo/info_score.hpp"
#include "mvgeo/retrieval.hpp"
#include "mvgeo/synth_oracle.hpp"
#include "mvgeo/view_select.hpp"
#include "reference_retrieval.hpp"

using namespace mvgeo;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Verdict()>& body) {
  Verdict v{false, ""};
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, fmt::format("exception: {}", e.what())};
  }
  if (!v.pass) ++failures;
  std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
}

ViewGridSpec lift_grid() {
  ViewGridSpec g;
  g.landmarks = 50;
  g.dim = 64;
  g.noise = 1.5;
  g.base_gain = 0.2;
  g.informative_slots = random_slot_profile(40, 99);
  g.seed = 3;
  return g;
}

std::vector<std::vector<double>> rows_of(const Matrix& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
  return out;
}

void random_instance(Rng& rng, LabeledMatrix& q, LabeledMatrix& g) {
  const std::size_t labels = 2 + rng.below(8), dim = 1 + rng.below(6);
  const std::size_t gsize = labels + rng.below(50 - labels + 1);
  for (std::size_t i = 0; i < gsize; ++i) {
    const auto label = static_cast<std::uint32_t>(i < labels ? i : rng.below(labels));
    if (i > 0 && rng.uniform() < 0.15) {
      const auto src = rng.below(i);
      std::vector<double> copy(g.rows.row(src).begin(), g.rows.row(src).end());
      g.rows.push_row(copy);
    } else {
      std::vector<double> v(dim);
      for (auto& x : v) x = rng.normal();
      g.rows.push_row(v);
    }
    g.labels.push_back(label);
  }
  const std::size_t nq = 1 + rng.below(20);
  for (std::size_t i = 0; i < nq; ++i) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal();
    q.rows.push_row(v);
    q.labels.push_back(static_cast<std::uint32_t>(rng.below(labels)));
  }
}

EmbeddingDatabase random_db(Rng& rng) {
  const auto dim = static_cast<std::uint32_t>(1 + rng.below(64));
  if (rng.below(2) == 0) {
    const std::size_t n = rng.below(40);
    std::vector<ViewDescriptor> rows;
    for (std::uint32_t l = 0; l < n; ++l) {
      rows.push_back({l * 7 + 2, ViewPose::sentinel(), fixtures::random_feature(rng, dim)});
    }
    return {Role::kSatellite, dim, rows};
  }
  std::vector<ViewDescriptor> rows;
  const std::size_t landmarks = rng.below(6);
  for (std::uint32_t l = 0; l < landmarks; ++l) {
    for (int s = 0; s < kSlotCount; ++s) {
      if (rng.uniform() < 0.5) rows.push_back({l, ViewPose::from_slot(s), fixtures::random_feature(rng, dim)});
    }
  }
  return {Role::kDrone, dim, rows};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct CliRun {
  int code;
  std::string out;
};

CliRun run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str()};
}

}  // namespace

int main() {
  criterion("complexity: fused matching does 1/54 of the single-view distance ops (L=200, < 5 s)", [] {
    const auto t0 = Clock::now();
    ViewGridSpec spec = lift_grid();
    spec.landmarks = 200;
    const auto grid = gen_view_grid(spec);
    RetrievalConfig cfg;
    cfg.k_values = {1};
    const auto single = evaluate(grid.drone, grid.satellite, nullptr, nullptr, cfg);
    const auto table = information_scores(grid.drone);
    SelectionConfig sel;
    const auto picked = greedy_select(candidates_from(table), sel);
    cfg.use_msrm = true;
    const auto fused = evaluate(grid.drone, grid.satellite, &table, &picked, cfg);
    const double ratio = static_cast<double>(single.distance_ops) / static_cast<double>(fused.distance_ops);
    const double secs = seconds_since(t0);
    return Verdict{ratio == 54.0 && fused.distance_ops == 200 * 200 && secs < 5.0,
                   fmt::format("ops {} / {} = {:.6f}, {:.2f} s", single.distance_ops, fused.distance_ops, ratio, secs)};
  });

  criterion("greedy selection: >= 99% of 1000 trials reach 1 - 1/e of optimal, lambda=1 exact (< 30 s)", [] {
    const auto t0 = Clock::now();
    const auto rep = verify_prop2(1000, 5, 12, {2, 3, 4}, SelectionConfig{});
    const double frac = rep.fraction_at_least(1.0 - 1.0 / std::exp(1.0));
    double worst = 1.0;
    for (const auto& t : rep.trials) worst = std::min(worst, t.ratio);
    const double secs = seconds_since(t0);
    const bool ok = frac >= 0.99 && rep.modular_trials() > 0 && rep.modular_exact() == rep.modular_trials() &&
                    secs < 30.0;
    return Verdict{ok, fmt::format("fraction {:.4f}, worst ratio {:.4f}, lambda=1 exact {}/{}, {:.2f} s", frac, worst,
                                   rep.modular_exact(), rep.modular_trials(), secs)};
  });

  criterion("information bound: >= 95% of 200 Gaussian specs satisfy bound <= MC MI + 3 se (< 60 s)", [] {
    const auto t0 = Clock::now();
    const auto rep = verify_prop1(random_prop1_specs(200, 11, 2.0, 200), 20000);
    std::size_t d1_fail = 0, other_fail = 0;
    for (const auto& t : rep.trials) {
      if (!t.holds) (t.dim == 1 ? d1_fail : other_fail) += 1;
    }
    const double secs = seconds_since(t0);
    return Verdict{rep.holds_fraction() >= 0.95 && secs < 60.0,
                   fmt::format("holds {:.4f} (failures: {} at D=1, {} at D>=2), count-weighted variant {:.4f}, {:.2f} s",
                               rep.holds_fraction(), d1_fail, other_fail, rep.holds_fraction_count_weighted(), secs)};
  });

  criterion("loss gradients: 100 points per loss, max relative error <= 1e-4 (< 60 s)", [] {
    const auto t0 = Clock::now();
    const auto rows = run_grad_suite(100, 1, 1e-4);
    double worst = 0.0;
    std::string worst_name;
    bool ok = !rows.empty();
    for (const auto& r : rows) {
      ok = ok && r.passed && r.points == 100;
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        worst_name = r.name;
      }
    }
    const double secs = seconds_since(t0);
    return Verdict{ok && secs < 60.0,
                   fmt::format("{} losses, worst {:.3e} ({}), {:.2f} s", rows.size(), worst, worst_name, secs)};
  });

  criterion("retrieval: 100 random instances match the quadratic reference exactly", [] {
    Rng rng(41);
    int mismatches = 0;
    for (int t = 0; t < 100; ++t) {
      LabeledMatrix q, g;
      random_instance(rng, q, g);
      for (bool cosine : {true, false}) {
        RetrievalConfig cfg;
        cfg.similarity = cosine ? Similarity::kCosine : Similarity::kNegEuclidean;
        const std::size_t n = g.rows.rows();
        cfg.k_values = {1, std::min<std::size_t>(5, n), std::min<std::size_t>(10, n)};
        const auto r = match(q, g, cfg);
        const auto ref = reference::evaluate(rows_of(q.rows), q.labels, rows_of(g.rows), g.labels, cfg.k_values, cosine);
        if (r.recall_at != ref.recall_at || std::abs(r.ap_mean - ref.ap_mean) > 1e-12) ++mismatches;
      }
    }
    return Verdict{mismatches == 0, fmt::format("{} mismatches in 200 comparisons", mismatches)};
  });

  criterion("retrieval: fusion lifts Recall@1 from below 1.0 to 1.0 on the lift fixture", [] {
    const auto grid = gen_view_grid(lift_grid());
    RetrievalConfig cfg;
    cfg.k_values = {1};
    const auto single = evaluate(grid.drone, grid.satellite, nullptr, nullptr, cfg);
    const auto table = information_scores(grid.drone);
    const auto picked = greedy_select(candidates_from(table), SelectionConfig{});
    cfg.use_msrm = true;
    const auto fused = evaluate(grid.drone, grid.satellite, &table, &picked, cfg);
    const double a = single.recall_at.at(1), b = fused.recall_at.at(1);
    return Verdict{a < 1.0 && b == 1.0, fmt::format("R@1 single-view {:.4f}, fused {:.4f}", a, b)};
  });

  criterion("ablation: k=40 Recall@1 >= k=10 and >= uniform over all 54 slots", [] {
    AblationSpec spec;
    spec.grid.landmarks = 800;
    spec.grid.dim = 32;
    spec.grid.noise = 6.0;
    spec.grid.base_gain = 0.0;
    spec.grid.informative_slots = random_slot_profile(40, 99);
    spec.grid.seed = 3;
    spec.selection.lambda = 0.5;
    const auto rep = run_ablation(spec);
    const auto* k10 = rep.find("k=10");
    const auto* k40 = rep.find("k=40");
    const auto* uni = rep.find("uniform54");
    if (!k10 || !k40 || !uni) return Verdict{false, "missing ablation rows"};
    std::string curve;
    for (const auto& r : rep.rows) curve += fmt::format(" {}={:.3f}", r.label, r.recall_at_1);
    return Verdict{k40->recall_at_1 >= k10->recall_at_1 && k40->recall_at_1 >= uni->recall_at_1,
                   fmt::format("single={:.3f}{}", rep.baseline_recall_at_1, curve)};
  });

  criterion("storage: 1000 random databases round trip byte-identically through save/load", [] {
    Rng rng(77);
    fixtures::TempDir dir("accept_rt");
    int bad = 0;
    for (int t = 0; t < 1000; ++t) {
      const auto db = random_db(rng);
      const auto path = dir / "db.mgeo";
      save_database(db, path);
      const auto first = slurp(path);
      const auto loaded = load_database(path);
      save_database(loaded, path);
      const auto bytes = encode_database(db);
      const bool same = first == slurp(path) && first == std::string(bytes.begin(), bytes.end()) &&
                        first.size() == kFileHeaderBytes + db.size() * (kRecordHeaderBytes + 4 * db.dim()) &&
                        loaded.size() == db.size() && loaded.role() == db.role();
      if (!same) ++bad;
    }
    return Verdict{bad == 0, fmt::format("{} of 1000 differ", bad)};
  });

  criterion("determinism: every subcommand is byte-identical across runs and thread counts", [] {
    fixtures::TempDir dir("accept_det");
    auto path = [&](const std::string& name, unsigned threads, int run) {
      return (dir / fmt::format("{}_{}_{}", name, threads, run)).string();
    };
    int differ = 0, errors = 0;
    std::size_t commands = 0;
    // Each entry builds argv for a given thread count and run index.
    using Build = std::function<std::vector<std::string>(unsigned, int)>;
    const std::string d = (dir / "d.mgeo").string(), s = (dir / "s.mgeo").string(), csv = (dir / "in.csv").string();
    {
      std::ofstream f(csv);
      f << "landmark_id,height_level,azimuth_deg,f0,f1\n3,0,0,1.5,-2\n3,2,340,0.25,4\n";
    }
    const std::vector<std::pair<Build, std::vector<std::string>>> runs = {
        {[&](unsigned, int) -> std::vector<std::string> {
           return {"synth", "grid", "--landmarks", "60", "--dim", "16", "--noise", "1", "--seed", "9", "--out-drone", d,
                   "--out-sat", s};
         },
         {}},
        {[&](unsigned t, int r) -> std::vector<std::string> {
           return {"synth", "grid", "--landmarks", "30", "--dim", "8", "--seed", "2", "--out-drone", path("gd", t, r),
                   "--out-sat", path("gs", t, r)};
         },
         {"gd", "gs"}},
        {[&](unsigned t, int r) -> std::vector<std::string> {
           return {"ingest", "--csv", csv, "--out", path("ing", t, r)};
         },
         {"ing"}},
        {[&](unsigned, int) -> std::vector<std::string> { return {"manifest", "--db", d}; }, {}},
        {[&](unsigned, int) -> std::vector<std::string> { return {"validate", "--drone", d, "--sat", s}; }, {}},
        {[&](unsigned, int) -> std::vector<std::string> { return {"score", "--drone", d}; }, {}},
        {[&](unsigned, int) -> std::vector<std::string> { return {"select", "--drone", d, "--k", "12"}; }, {}},
        {[&](unsigned t, int r) -> std::vector<std::string> {
           return {"aggregate", "--drone", d, "--k", "12", "--out", path("agg", t, r)};
         },
         {"agg"}},
        {[&](unsigned, int) -> std::vector<std::string> { return {"retrieve", "--query", d, "--gallery", s}; }, {}},
        {[&](unsigned, int) -> std::vector<std::string> {
           return {"evaluate", "--drone", d, "--sat", s, "--msrm", "--per-query"};
         },
         {}},
        {[&](unsigned, int) -> std::vector<std::string> {
           return {"evaluate", "--drone", d, "--sat", s, "--direction", "sat2drone", "--similarity", "euclidean"};
         },
         {}},
        {[&](unsigned, int) -> std::vector<std::string> { return {"bench", "--drone", d, "--sat", s}; }, {}},
        {[&](unsigned, int) -> std::vector<std::string> { return {"gradcheck", "--points", "5"}; }, {}},
        {[&](unsigned, int) -> std::vector<std::string> {
           return {"verify", "prop1", "--count", "8", "--mc-samples", "2000", "--min-fraction", "0"};
         },
         {}},
        {[&](unsigned, int) -> std::vector<std::string> { return {"verify", "prop2", "--trials", "50"}; }, {}},
        {[&](unsigned, int) -> std::vector<std::string> { return {"synth", "gaussian", "--index", "3"}; }, {}},
        {[&](unsigned, int) -> std::vector<std::string> {
           return {"ablation", "--landmarks", "60", "--dim", "8", "--ks", "5,10"};
         },
         {}},
    };
    for (const auto& [build, files] : runs) {
      ++commands;
      std::vector<CliRun> outs;
      for (auto [threads, run] : {std::pair{1u, 0}, std::pair{1u, 1}, std::pair{4u, 0}}) {
        auto args = build(threads, run);
        args.insert(args.begin(), {"--threads", std::to_string(threads)});
        auto r = run_cli(args);
        // Commands that write files echo their paths; mask them.
        for (const auto& f : files) {
          const auto name = path(f, threads, run);
          for (auto at = r.out.find(name); at != std::string::npos; at = r.out.find(name)) r.out.replace(at, name.size(), f);
        }
        outs.push_back(std::move(r));
      }
      for (const auto& o : outs) errors += o.code != 0 ? 1 : 0;
      if (outs[0].out != outs[1].out || outs[0].out != outs[2].out) ++differ;
      for (const auto& f : files) {
        const auto a = slurp(path(f, 1, 0));
        if (a.empty() || a != slurp(path(f, 1, 1)) || a != slurp(path(f, 4, 0))) ++differ;
      }
    }
    return Verdict{differ == 0 && errors == 0,
                   fmt::format("{} subcommand invocations, {} differ, {} nonzero exits", commands, differ, errors)};
  });

  std::cout << (failures == 0 ? "ALL PASS" : fmt::format("{} FAILED", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
