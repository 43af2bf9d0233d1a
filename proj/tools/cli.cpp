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


#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <functional>
#include <sstream>
#include <string_view>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "mvgeo/aggregate.hpp"
#include "mvgeo/distill_losses.hpp"
#include "mvgeo/embedding_store.hpp"
#include "mvgeo/grad_check.hpp"
#include "mvgeo/info_score.hpp"
#include "mvgeo/retrieval.hpp"
#include "mvgeo/synth_oracle.hpp"
#include "mvgeo/view_select.hpp"

namespace mvgeo::cli {
namespace {

// Raised by a subcommand whose checks ran but did not pass.
class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for argument combinations CLI11 cannot express.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt_double(double v) { return fmt::format("{:.6f}", v); }

std::string join(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  return line;
}

Role parse_role(const std::string& s) { return s == "satellite" ? Role::kSatellite : Role::kDrone; }

Similarity parse_similarity(const std::string& s) {
  return s == "euclidean" ? Similarity::kNegEuclidean : Similarity::kCosine;
}

Direction parse_direction(const std::string& s) {
  return s == "sat2drone" ? Direction::kSatelliteToDrone : Direction::kDroneToSatellite;
}

const char* hint_for(LoadErrorKind kind) {
  switch (kind) {
    case LoadErrorKind::kIo:
      return "check that the path exists and is readable";
    case LoadErrorKind::kBadMagic:
    case LoadErrorKind::kVersionMismatch:
    case LoadErrorKind::kBadRole:
      return "the file is not an MGEO v1 database; re-create it with `mvgeo ingest`";
    case LoadErrorKind::kDimensionMismatch:
      return "drone and satellite descriptors must share one dimension";
    case LoadErrorKind::kNonFinite:
      return "remove or repair the named record; NaN and Inf are rejected";
    case LoadErrorKind::kInvalidPose:
      return "drone poses need height_level in 0..2 and azimuth a multiple of 20 below 360";
    case LoadErrorKind::kDuplicateSlot:
      return "each landmark may hold one descriptor per view slot";
  }
  return "";
}

// ---- shared option groups --------------------------------------------------

struct SelectOpts {
  int k = 40;
  double lambda = 0.5;
  double omega_h = 2.0;
  double omega_theta = 1.0;
  double height_unit = 1.0;
  double eps = kDefaultEps;

  void add(CLI::App* app) {
    app->add_option("--k", k, "views kept per landmark")->capture_default_str()->check(CLI::Range(1, kSlotCount));
    app->add_option("--lambda", lambda, "information vs diversity trade-off")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--omega-h", omega_h, "height weight of the spatial distance")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    app->add_option("--omega-theta", omega_theta, "azimuth weight of the spatial distance")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    app->add_option("--height-unit", height_unit, "distance of one height level")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    app->add_option("--eps", eps, "variance regularizer")->capture_default_str()->check(CLI::PositiveNumber);
  }

  SelectionConfig config() const {
    SelectionConfig c;
    c.k = k;
    c.lambda = lambda;
    c.omega_h = omega_h;
    c.omega_theta = omega_theta;
    c.height_unit = height_unit;
    return c;
  }
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  unsigned threads = 0;
  int verbosity = 0;

  void log(std::string_view msg) const {
    if (verbosity > 0) fmt::print(err, "{}\n", msg);
  }
};

ScoreTable score_db(const EmbeddingDatabase& drone, const SelectOpts& o, unsigned threads) {
  ScoreConfig sc;
  sc.eps = o.eps;
  sc.threads = threads;
  return information_scores(drone, sc);
}

SelectionResult select_views(const ScoreTable& table, const SelectOpts& o) {
  const auto pool = candidates_from(table);
  const SelectionConfig cfg = o.config();
  cfg.check(pool.size());
  return greedy_select(pool, cfg);
}

// ---- CSV ingest --------------------------------------------------------------

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r')) c.remove_suffix(1);
  }
  return cells;
}

template <typename T>
T parse_number(std::string_view cell, std::size_t line_no, const char* what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw Error(fmt::format("line {}: cannot parse {} from '{}'", line_no, what, cell));
  }
  return value;
}

// Rows of `landmark_id,height_level,azimuth_deg,f0,...`. A first line whose
// first cell is not numeric is taken as a header.
EmbeddingDatabase read_csv(const std::string& path, Role role) {
  std::ifstream in(path);
  if (!in) throw LoadError(LoadErrorKind::kIo, fmt::format("cannot open {}", path));
  std::vector<ViewDescriptor> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (line_no == 1 && (cells[0].empty() || !std::isdigit(static_cast<unsigned char>(cells[0][0])))) continue;
    if (cells.size() < 4) throw Error(fmt::format("line {}: need landmark, height, azimuth and features", line_no));
    ViewDescriptor d;
    d.landmark_id = parse_number<std::uint32_t>(cells[0], line_no, "landmark_id");
    d.pose.height_level = parse_number<std::uint8_t>(cells[1], line_no, "height_level");
    d.pose.azimuth_deg = parse_number<std::uint16_t>(cells[2], line_no, "azimuth_deg");
    for (std::size_t i = 3; i < cells.size(); ++i) d.feature.push_back(parse_number<float>(cells[i], line_no, "feature"));
    if (dim == 0) dim = d.feature.size();
    if (d.feature.size() != dim) {
      throw LoadError(LoadErrorKind::kDimensionMismatch,
                      fmt::format("line {}: {} features, expected {}", line_no, d.feature.size(), dim), rows.size());
    }
    rows.push_back(std::move(d));
  }
  if (rows.empty()) throw Error(fmt::format("{} holds no records", path));
  return EmbeddingDatabase(role, static_cast<std::uint32_t>(dim), std::move(rows));
}

void print_violations(const std::vector<Violation>& v, std::ostream& out) {
  fmt::print(out, "rule,record,landmark_id,slot,message\n");
  for (const auto& x : v) {
    fmt::print(out, "{},{},{},{},\"{}\"\n", to_string(x.rule), x.record ? std::to_string(*x.record) : "",
               x.landmark_id, x.slot, x.message);
  }
}

// Rejects anything load_database would not round-trip.
void check_db(const EmbeddingDatabase& db, std::ostream& err) {
  const auto v = validate(db);
  for (const auto& x : v) {
    if (x.rule != Rule::kMissingSlot) {
      if (x.record) {
        fmt::print(err, "error: record {}: {}\n", *x.record, x.message);
      } else {
        fmt::print(err, "error: {}\n", x.message);
      }
      throw Error(fmt::format("{} validation error(s); run `mvgeo validate` for the full list", v.size()));
    }
  }
}

// ---- subcommands -----------------------------------------------------------

void add_ingest(CLI::App& app, Context& ctx, std::function<void()>& action) {
  auto* sub = app.add_subcommand("ingest", "convert a CSV of descriptors into an MGEO database");
  auto csv = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto role = std::make_shared<std::string>("drone");
  sub->add_option("--csv", *csv, "landmark_id,height_level,azimuth_deg,f0,... rows")->required();
  sub->add_option("--out", *out, "MGEO file to write")->required();
  sub->add_option("--role", *role, "drone or satellite")
      ->capture_default_str()
      ->check(CLI::IsMember({"drone", "satellite"}));
  sub->callback([&, csv, out, role] {
    action = [&, csv, out, role] {
      const EmbeddingDatabase db = read_csv(*csv, parse_role(*role));
      check_db(db, ctx.err);
      save_database(db, *out);
      fmt::print(ctx.out, "path,role,dim,count\n{},{},{},{}\n", *out, to_string(db.role()), db.dim(), db.size());
    };
  });
}

void add_manifest(CLI::App& app, Context& ctx, std::function<void()>& action) {
  auto* sub = app.add_subcommand("manifest", "list the records of a database");
  auto db = std::make_shared<std::string>();
  sub->add_option("--db", *db, "MGEO file")->required();
  sub->callback([&, db] { action = [&, db] { ctx.out << manifest_csv(load_database(*db)); }; });
}

void add_validate(CLI::App& app, Context& ctx, std::function<void()>& action) {
  auto* sub = app.add_subcommand("validate", "report rule violations of one database or a drone/satellite pair");
  auto drone = std::make_shared<std::string>();
  auto sat = std::make_shared<std::string>();
  sub->add_option("--drone", *drone, "drone MGEO file");
  sub->add_option("--sat", *sat, "satellite MGEO file");
  sub->callback([&, drone, sat] {
    if (drone->empty() && sat->empty()) throw UsageError("validate needs --drone, --sat or both");
    action = [&, drone, sat] {
      std::vector<Violation> all;
      std::optional<EmbeddingDatabase> d, s;
      if (!drone->empty()) {
        d = load_database(*drone);
        auto v = validate(*d);
        all.insert(all.end(), v.begin(), v.end());
      }
      if (!sat->empty()) {
        s = load_database(*sat);
        auto v = validate(*s);
        all.insert(all.end(), v.begin(), v.end());
      }
      if (d && s) {
        auto v = validate_pair(*d, *s);
        all.insert(all.end(), v.begin(), v.end());
      }
      print_violations(all, ctx.out);
      if (!all.empty()) throw VerificationFailure(fmt::format("{} violation(s)", all.size()));
    };
  });
}

void print_scores(const ScoreTable& t, std::ostream& out) {
  fmt::print(out, "slot,height_level,azimuth_deg,samples,h_marginal,h_range,sigma2_between,sigma2_within,mi_approx,score\n");
  for (const auto& s : t.slots) {
    fmt::print(out, "{},{},{},{},{},{},{},{},{},{}\n", s.slot, s.pose.height_level, s.pose.azimuth_deg, s.samples,
               fmt_double(s.h_marginal), fmt_double(s.h_range), fmt_double(s.sigma2_between),
               fmt_double(s.sigma2_within), fmt_double(s.mi_approx), fmt_double(s.score));
  }
}

void add_score(CLI::App& app, Context& ctx, std::function<void()>& action) {
  auto* sub = app.add_subcommand("score", "per-slot information scores of a drone database");
  auto drone = std::make_shared<std::string>();
  auto eps = std::make_shared<double>(kDefaultEps);
  sub->add_option("--drone", *drone, "drone MGEO file")->required();
  sub->add_option("--eps", *eps, "variance regularizer")->capture_default_str()->check(CLI::PositiveNumber);
  sub->callback([&, drone, eps] {
    action = [&, drone, eps] {
      SelectOpts o;
      o.eps = *eps;
      const ScoreTable t = score_db(load_database(*drone), o, ctx.threads);
      for (int s : t.excluded) ctx.log(fmt::format("slot {} excluded: fewer than two landmarks", s));
      print_scores(t, ctx.out);
    };
  });
}

void add_select(CLI::App& app, Context& ctx, std::function<void()>& action) {
  auto* sub = app.add_subcommand("select", "greedy information/diversity view selection");
  auto drone = std::make_shared<std::string>();
  auto opts = std::make_shared<SelectOpts>();
  sub->add_option("--drone", *drone, "drone MGEO file")->required();
  opts->add(sub);
  sub->callback([&, drone, opts] {
    action = [&, drone, opts] {
      const ScoreTable t = score_db(load_database(*drone), *opts, ctx.threads);
      const SelectionResult sel = select_views(t, *opts);
      const auto pool = candidates_from(t);
      const SelectionConfig cfg = opts->config();
      fmt::print(ctx.out, "rank,slot,height_level,azimuth_deg,score,gain,objective\n");
      std::vector<Candidate> prefix;
      for (std::size_t i = 0; i < sel.selected.size(); ++i) {
        const int slot = sel.selected[i];
        prefix.push_back(pick(pool, std::span<const int>(&slot, 1)).front());
        const Candidate& c = prefix.back();
        fmt::print(ctx.out, "{},{},{},{},{},{},{}\n", i + 1, c.slot, c.pose.height_level, c.pose.azimuth_deg,
                   fmt_double(c.score), fmt_double(sel.gains[i]), fmt_double(objective(prefix, cfg)));
      }
    };
  });
}

void add_aggregate(CLI::App& app, Context& ctx, std::function<void()>& action) {
  auto* sub = app.add_subcommand("aggregate", "fuse the selected views of every landmark into one descriptor");
  auto drone = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto opts = std::make_shared<SelectOpts>();
  auto tau = std::make_shared<double>(1.0);
  auto l2 = std::make_shared<bool>(false);
  sub->add_option("--drone", *drone, "drone MGEO file")->required();
  sub->add_option("--out", *out, "fused MGEO file to write")->required();
  opts->add(sub);
  sub->add_option("--tau", *tau, "softmax temperature of the slot weights")->capture_default_str();
  sub->add_flag("--l2", *l2, "L2-normalize fused descriptors");
  sub->callback([&, drone, out, opts, tau, l2] {
    action = [&, drone, out, opts, tau, l2] {
      const EmbeddingDatabase db = load_database(*drone);
      const ScoreTable t = score_db(db, *opts, ctx.threads);
      const SelectionResult sel = select_views(t, *opts);
      AggregationConfig ac;
      ac.tau = *tau;
      ac.l2_normalize = *l2;
      ac.threads = ctx.threads;
      const EmbeddingDatabase fused = aggregate_database(db, sel, t, ac);
      save_database(fused, *out);
      fmt::print(ctx.out, "landmark_id,views\n");
      for (std::uint32_t id : fused.landmark_ids()) {
        std::size_t views = 0;
        for (int s : sel.selected) views += db.find(id, s).has_value();
        fmt::print(ctx.out, "{},{}\n", id, views);
      }
    };
  });
}

void add_retrieve(CLI::App& app, Context& ctx, std::function<void()>& action) {
  auto* sub = app.add_subcommand("retrieve", "rank a gallery database for every query record");
  auto query = std::make_shared<std::string>();
  auto gallery = std::make_shared<std::string>();
  auto sim = std::make_shared<std::string>("cosine");
  auto top = std::make_shared<std::size_t>(10);
  sub->add_option("--query", *query, "query MGEO file")->required();
  sub->add_option("--gallery", *gallery, "gallery MGEO file")->required();
  sub->add_option("--similarity", *sim, "cosine or euclidean")
      ->capture_default_str()
      ->check(CLI::IsMember({"cosine", "euclidean"}));
  sub->add_option("--top", *top, "ranked items printed per query")->capture_default_str()->check(CLI::PositiveNumber);
  sub->callback([&, query, gallery, sim, top] {
    action = [&, query, gallery, sim, top] {
      const EmbeddingDatabase q = load_database(*query);
      const EmbeddingDatabase g = load_database(*gallery, q.dim());
      const LabeledMatrix qm = to_matrix(q);
      const LabeledMatrix gm = to_matrix(g);
      const Similarity kind = parse_similarity(*sim);
      std::vector<std::string> lines(qm.rows.rows());
      std::uint64_t ops = 0;
      for (std::size_t i = 0; i < qm.rows.rows(); ++i) {
        const auto ranked = rank_gallery(qm.rows.row(i), gm.rows, kind, ops);
        for (std::size_t r = 0; r < std::min(*top, ranked.size()); ++r) {
          const std::size_t j = ranked[r];
          lines[i] += fmt::format("{},{},{},{},{},{}\n", i, qm.labels[i], r + 1, j, gm.labels[j],
                                  fmt_double(similarity(qm.rows.row(i), gm.rows.row(j), kind)));
        }
      }
      fmt::print(ctx.out, "query_index,query_landmark,rank,gallery_index,gallery_landmark,score\n");
      for (const auto& l : lines) ctx.out << l;
    };
  });
}

void print_report(const RetrievalReport& r, std::ostream& out) {
  fmt::print(out, "metric,value\n");
  fmt::print(out, "direction,{}\n", to_string(r.direction));
  fmt::print(out, "msrm,{}\n", r.use_msrm ? 1 : 0);
  fmt::print(out, "queries,{}\n", r.query_count);
  fmt::print(out, "gallery,{}\n", r.gallery_count);
  for (const auto& [k, v] : r.recall_at) fmt::print(out, "recall@{},{}\n", k, fmt_double(v));
  fmt::print(out, "ap,{}\n", fmt_double(r.ap_mean));
  fmt::print(out, "ap_relevance,{}\n", r.ap_relevance);
  fmt::print(out, "distance_ops,{}\n", r.distance_ops);
}

struct EvalOpts {
  std::string drone, sat, direction = "drone2sat", similarity = "cosine";
  bool msrm = false;
  double tau = 1.0;
  std::vector<std::size_t> recall = {1, 5, 10};
  SelectOpts select;
};

void add_eval_options(CLI::App* sub, EvalOpts& o) {
  sub->add_option("--drone", o.drone, "drone MGEO file")->required();
  sub->add_option("--sat", o.sat, "satellite MGEO file")->required();
  sub->add_flag("--msrm", o.msrm, "score, select and fuse drone views before matching");
  sub->add_option("--direction", o.direction, "drone2sat or sat2drone")
      ->capture_default_str()
      ->check(CLI::IsMember({"drone2sat", "sat2drone"}));
  sub->add_option("--similarity", o.similarity, "cosine or euclidean")
      ->capture_default_str()
      ->check(CLI::IsMember({"cosine", "euclidean"}));
  sub->add_option("--tau", o.tau, "softmax temperature of the slot weights")->capture_default_str();
  sub->add_option("--recall", o.recall, "K values for recall@K")
      ->delimiter(',')
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  o.select.add(sub);
}

RetrievalReport run_eval(const EvalOpts& o, const EmbeddingDatabase& drone, const EmbeddingDatabase& sat,
                         unsigned threads, bool msrm) {
  RetrievalConfig rc;
  rc.direction = parse_direction(o.direction);
  rc.similarity = parse_similarity(o.similarity);
  rc.k_values = o.recall;
  rc.use_msrm = msrm;
  rc.tau = o.tau;
  rc.threads = threads;
  if (!msrm) return evaluate(drone, sat, nullptr, nullptr, rc);
  const ScoreTable t = score_db(drone, o.select, threads);
  const SelectionResult sel = select_views(t, o.select);
  return evaluate(drone, sat, &t, &sel, rc);
}

void add_evaluate(CLI::App& app, Context& ctx, std::function<void()>& action) {
  auto* sub = app.add_subcommand("evaluate", "recall@K and AP of a drone/satellite pair");
  auto o = std::make_shared<EvalOpts>();
  auto per_query = std::make_shared<bool>(false);
  add_eval_options(sub, *o);
  sub->add_flag("--per-query", *per_query, "print one row per query instead of the summary");
  sub->callback([&, o, per_query] {
    action = [&, o, per_query] {
      const EmbeddingDatabase drone = load_database(o->drone);
      const EmbeddingDatabase sat = load_database(o->sat, drone.dim());
      const RetrievalReport r = run_eval(*o, drone, sat, ctx.threads, o->msrm);
      if (*per_query) {
        fmt::print(ctx.out, "query,landmark_id,first_relevant_rank,ap\n");
        for (std::size_t i = 0; i < r.queries.size(); ++i) {
          const auto& q = r.queries[i];
          fmt::print(ctx.out, "{},{},{},{}\n", i, q.landmark_id, q.first_relevant_rank, fmt_double(q.ap));
        }
      } else {
        print_report(r, ctx.out);
      }
    };
  });
}

void add_bench(CLI::App& app, Context& ctx, std::function<void()>& action) {
  auto* sub = app.add_subcommand("bench", "distance operations and wall time with and without view fusion");
  auto o = std::make_shared<EvalOpts>();
  auto timing = std::make_shared<bool>(false);
  add_eval_options(sub, *o);
  sub->add_flag("--timing", *timing, "also print wall-clock seconds (not reproducible)");
  sub->callback([&, o, timing] {
    action = [&, o, timing] {
      const EmbeddingDatabase drone = load_database(o->drone);
      const EmbeddingDatabase sat = load_database(o->sat, drone.dim());
      using clock = std::chrono::steady_clock;
      const auto t0 = clock::now();
      const RetrievalReport plain = run_eval(*o, drone, sat, ctx.threads, false);
      const auto t1 = clock::now();
      const RetrievalReport fused = run_eval(*o, drone, sat, ctx.threads, true);
      const auto t2 = clock::now();
      fmt::print(ctx.out, "metric,value\n");
      fmt::print(ctx.out, "ops_single_view,{}\n", plain.distance_ops);
      fmt::print(ctx.out, "ops_fused,{}\n", fused.distance_ops);
      fmt::print(ctx.out, "ops_ratio,{}\n",
                 fmt_double(static_cast<double>(plain.distance_ops) / static_cast<double>(fused.distance_ops)));
      fmt::print(ctx.out, "recall@1_single_view,{}\n", fmt_double(plain.recall_at.begin()->second));
      fmt::print(ctx.out, "recall@1_fused,{}\n", fmt_double(fused.recall_at.begin()->second));
      if (*timing) {
        fmt::print(ctx.out, "seconds_single_view,{}\n", fmt_double(std::chrono::duration<double>(t1 - t0).count()));
        fmt::print(ctx.out, "seconds_fused,{}\n", fmt_double(std::chrono::duration<double>(t2 - t1).count()));
      }
    };
  });
}

void add_gradcheck(CLI::App& app, Context& ctx, std::function<void()>& action) {
  auto* sub = app.add_subcommand("gradcheck", "finite-difference check of every loss gradient");
  auto points = std::make_shared<std::size_t>(100);
  auto seed = std::make_shared<std::uint64_t>(1);
  auto tol = std::make_shared<double>(1e-4);
  auto h = std::make_shared<double>(1e-4);
  sub->add_option("--points", *points, "random points per loss")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--seed", *seed, "master seed")->capture_default_str();
  sub->add_option("--tol", *tol, "max relative error")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--step", *h, "largest central-difference step")->capture_default_str()->check(CLI::Range(1e-7, 1e-3));
  sub->callback([&, points, seed, tol, h] {
    action = [&, points, seed, tol, h] {
      GradCheckOptions opt;
      opt.h = *h;
      const auto rows = run_grad_suite(*points, *seed, *tol, opt);
      fmt::print(ctx.out, "loss,points,max_rel_error,resamples,status\n");
      std::size_t failed = 0;
      for (const auto& r : rows) {
        fmt::print(ctx.out, "{},{},{:.3e},{},{}\n", r.name, r.points, r.max_rel_error, r.resamples,
                   r.passed ? "pass" : "FAIL");
        failed += !r.passed;
      }
      if (failed) throw VerificationFailure(fmt::format("{} loss(es) above tolerance {}", failed, *tol));
    };
  });
}

void add_verify(CLI::App& app, Context& ctx, std::function<void()>& action) {
  auto* sub = app.add_subcommand("verify", "Monte-Carlo and exhaustive checks of the selection theory");
  sub->require_subcommand(1);

  auto* p1 = sub->add_subcommand("prop1", "Fisher bound vs Monte-Carlo mutual information");
  auto count = std::make_shared<std::size_t>(200);
  auto seed1 = std::make_shared<std::uint64_t>(11);
  auto mc = std::make_shared<std::size_t>(20000);
  auto spc = std::make_shared<std::size_t>(200);
  auto sep = std::make_shared<double>(2.0);
  auto need1 = std::make_shared<double>(0.95);
  p1->add_option("--count", *count, "number of random specs")->capture_default_str()->check(CLI::PositiveNumber);
  p1->add_option("--seed", *seed1, "master seed")->capture_default_str();
  p1->add_option("--mc-samples", *mc, "Monte-Carlo samples per spec")->capture_default_str()->check(CLI::Range(
      std::size_t{1000}, std::size_t{100000000}));
  p1->add_option("--samples-per-class", *spc, "empirical samples per class")->capture_default_str()->check(
      CLI::Range(std::size_t{2}, std::size_t{1000000}));
  p1->add_option("--max-separation", *sep, "upper bound of the mean spread")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  p1->add_option("--min-fraction", *need1, "required fraction of holding trials")->capture_default_str()->check(
      CLI::Range(0.0, 1.0));
  p1->callback([&, count, seed1, mc, spc, sep, need1] {
    action = [&, count, seed1, mc, spc, sep, need1] {
      const auto specs = random_prop1_specs(*count, *seed1, *sep, *spc);
      const Prop1Report rep = verify_prop1(specs, *mc, ctx.threads);
      fmt::print(ctx.out,
                 "trial,seed,classes,dim,separation,sigma2_between,sigma2_within,bound,bound_count_weighted,"
                 "mc_estimate,mc_stderr,holds,holds_count_weighted,exceeds_label_entropy\n");
      for (const auto& t : rep.trials) {
        fmt::print(ctx.out, "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", t.index, t.seed, t.classes, t.dim,
                   fmt_double(t.separation), fmt_double(t.sigma2_between), fmt_double(t.sigma2_within),
                   fmt_double(t.bound), fmt_double(t.bound_count_weighted), fmt_double(t.mc_estimate),
                   fmt_double(t.mc_stderr), int(t.holds), int(t.holds_count_weighted), int(t.exceeds_label_entropy));
      }
      fmt::print(ctx.err, "holds {:.4f} (count weighted {:.4f}), saturations {}\n", rep.holds_fraction(),
                 rep.holds_fraction_count_weighted(), rep.saturations());
      if (rep.holds_fraction() < *need1) {
        throw VerificationFailure(fmt::format("bound held in {:.4f} of trials, below {}", rep.holds_fraction(), *need1));
      }
    };
  });

  auto* p2 = sub->add_subcommand("prop2", "greedy vs exhaustive view selection");
  auto trials = std::make_shared<std::size_t>(1000);
  auto seed2 = std::make_shared<std::uint64_t>(5);
  auto n = std::make_shared<std::size_t>(12);
  auto ks = std::make_shared<std::vector<int>>(std::vector<int>{2, 3, 4});
  auto need2 = std::make_shared<double>(0.99);
  auto base = std::make_shared<SelectOpts>();
  p2->add_option("--trials", *trials, "random instances")->capture_default_str()->check(CLI::PositiveNumber);
  p2->add_option("--seed", *seed2, "master seed")->capture_default_str();
  p2->add_option("--n", *n, "candidate pool size")->capture_default_str()->check(CLI::Range(1, 20));
  p2->add_option("--k", *ks, "subset sizes, cycled over trials")->delimiter(',')->capture_default_str()->check(
      CLI::Range(1, 20));
  p2->add_option("--min-fraction", *need2, "required fraction at ratio >= 1 - 1/e")->capture_default_str()->check(
      CLI::Range(0.0, 1.0));
  p2->add_option("--omega-h", base->omega_h, "height weight")->capture_default_str()->check(CLI::NonNegativeNumber);
  p2->add_option("--omega-theta", base->omega_theta, "azimuth weight")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  p2->callback([&, trials, seed2, n, ks, need2, base] {
    action = [&, trials, seed2, n, ks, need2, base] {
      for (int k : *ks) {
        if (static_cast<std::size_t>(k) > *n) throw UsageError(fmt::format("--k {} exceeds --n {}", k, *n));
      }
      const Prop2Report rep = verify_prop2(*trials, *seed2, *n, *ks, base->config(), ctx.threads);
      fmt::print(ctx.out, "trial,seed,n,k,lambda,f_greedy,f_opt,ratio,greedy,optimal\n");
      auto slots = [](const std::vector<int>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
        return s;
      };
      for (const auto& t : rep.trials) {
        fmt::print(ctx.out, "{},{},{},{},{:.1f},{},{},{},{},{}\n", t.index, t.seed, t.n, t.k, t.lambda,
                   fmt_double(t.f_greedy), fmt_double(t.f_opt), fmt_double(t.ratio), slots(t.greedy),
                   slots(t.optimal));
      }
      const double frac = rep.fraction_at_least(1.0 - 1.0 / std::exp(1.0));
      fmt::print(ctx.err, "ratio >= 1-1/e in {:.4f} of trials; modular exact {}/{}\n", frac, rep.modular_exact(),
                 rep.modular_trials());
      if (frac < *need2 || rep.modular_exact() != rep.modular_trials()) {
        throw VerificationFailure("greedy fell short of the approximation target");
      }
    };
  });
}

void add_synth(CLI::App& app, Context& ctx, std::function<void()>& action) {
  auto* sub = app.add_subcommand("synth", "generate synthetic fixtures");
  sub->require_subcommand(1);

  auto* grid = sub->add_subcommand("grid", "54-slot drone grid plus satellite database");
  auto spec = std::make_shared<ViewGridSpec>();
  auto informative = std::make_shared<std::size_t>(40);
  auto slots = std::make_shared<std::vector<int>>();
  auto profile_seed = std::make_shared<std::uint64_t>(99);
  auto out_drone = std::make_shared<std::string>();
  auto out_sat = std::make_shared<std::string>();
  grid->add_option("--landmarks", spec->landmarks, "landmark count")->capture_default_str()->check(
      CLI::Range(std::size_t{2}, std::size_t{1000000}));
  grid->add_option("--dim", spec->dim, "descriptor dimension")->capture_default_str()->check(CLI::PositiveNumber);
  grid->add_option("--noise", spec->noise, "drone view noise norm")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  grid->add_option("--sat-noise", spec->sat_noise, "satellite noise norm")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  grid->add_option("--informative", *informative, "number of informative slots (random profile)")
      ->capture_default_str()
      ->check(CLI::Range(std::size_t{0}, std::size_t{kSlotCount}));
  grid->add_option("--slots", *slots, "explicit informative slots, overrides --informative")
      ->delimiter(',')
      ->check(CLI::Range(0, kSlotCount - 1));
  grid->add_option("--profile-seed", *profile_seed, "seed of the random profile")->capture_default_str();
  grid->add_option("--informative-gain", spec->informative_gain, "prototype scale at informative slots")
      ->capture_default_str();
  grid->add_option("--base-gain", spec->base_gain, "prototype scale elsewhere")->capture_default_str();
  grid->add_option("--seed", spec->seed, "generator seed")->capture_default_str();
  grid->add_option("--out-drone", *out_drone, "drone MGEO file")->required();
  grid->add_option("--out-sat", *out_sat, "satellite MGEO file")->required();
  grid->callback([&, spec, informative, slots, profile_seed, out_drone, out_sat] {
    action = [&, spec, informative, slots, profile_seed, out_drone, out_sat] {
      ViewGridSpec s = *spec;
      s.informative_slots = slots->empty() ? random_slot_profile(*informative, *profile_seed) : *slots;
      const ViewGrid g = gen_view_grid(s);
      save_database(g.drone, *out_drone);
      save_database(g.satellite, *out_sat);
      fmt::print(ctx.out, "path,role,dim,count\n");
      fmt::print(ctx.out, "{},drone,{},{}\n{},satellite,{},{}\n", *out_drone, g.drone.dim(), g.drone.size(), *out_sat,
                 g.satellite.dim(), g.satellite.size());
    };
  });

  auto* gauss = sub->add_subcommand("gaussian", "labeled samples from one random equal-covariance Gaussian spec");
  auto seed = std::make_shared<std::uint64_t>(11);
  auto index = std::make_shared<std::size_t>(0);
  auto spc = std::make_shared<std::size_t>(200);
  auto sep = std::make_shared<double>(2.0);
  gauss->add_option("--seed", *seed, "master seed of the spec family")->capture_default_str();
  gauss->add_option("--index", *index, "spec index within the family")->capture_default_str();
  gauss->add_option("--samples-per-class", *spc, "samples per class")->capture_default_str()->check(
      CLI::PositiveNumber);
  gauss->add_option("--max-separation", *sep, "upper bound of the mean spread")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  gauss->callback([&, seed, index, spc, sep] {
    action = [&, seed, index, spc, sep] {
      const auto specs = random_prop1_specs(*index + 1, *seed, *sep, *spc);
      const LabeledSamples s = gen_gaussian(specs.back());
      std::vector<std::string> header{"label"};
      for (std::size_t d = 0; d < s.features.cols(); ++d) header.push_back(fmt::format("x{}", d));
      fmt::print(ctx.out, "{}\n", join(header));
      for (std::size_t r = 0; r < s.features.rows(); ++r) {
        std::vector<std::string> cells{std::to_string(s.labels[r])};
        for (double v : s.features.row(r)) cells.push_back(fmt_double(v));
        fmt::print(ctx.out, "{}\n", join(cells));
      }
    };
  });
}

void add_ablation(CLI::App& app, Context& ctx, std::function<void()>& action) {
  auto* sub = app.add_subcommand("ablation", "fused-retrieval accuracy against the number of kept views");
  auto spec = std::make_shared<AblationSpec>();
  auto informative = std::make_shared<std::size_t>(40);
  auto profile_seed = std::make_shared<std::uint64_t>(99);
  auto opts = std::make_shared<SelectOpts>();
  spec->grid.landmarks = 800;
  spec->grid.dim = 32;
  spec->grid.noise = 6.0;
  spec->grid.base_gain = 0.0;
  spec->grid.seed = 3;
  sub->add_option("--landmarks", spec->grid.landmarks, "landmark count")->capture_default_str()->check(
      CLI::Range(std::size_t{2}, std::size_t{1000000}));
  sub->add_option("--dim", spec->grid.dim, "descriptor dimension")->capture_default_str()->check(
      CLI::PositiveNumber);
  sub->add_option("--noise", spec->grid.noise, "drone view noise norm")->capture_default_str()->check(
      CLI::NonNegativeNumber);
  sub->add_option("--base-gain", spec->grid.base_gain, "prototype scale at uninformative slots")
      ->capture_default_str();
  sub->add_option("--informative", *informative, "number of informative slots")->capture_default_str()->check(
      CLI::Range(std::size_t{0}, std::size_t{kSlotCount}));
  sub->add_option("--profile-seed", *profile_seed, "seed of the informative profile")->capture_default_str();
  sub->add_option("--seed", spec->grid.seed, "grid seed")->capture_default_str();
  sub->add_option("--ks", spec->k_values, "view counts to evaluate")->delimiter(',')->capture_default_str()->check(
      CLI::Range(1, kSlotCount));
  sub->add_option("--lambda", opts->lambda, "information vs diversity trade-off")->capture_default_str()->check(
      CLI::Range(0.0, 1.0));
  sub->callback([&, spec, informative, profile_seed, opts] {
    action = [&, spec, informative, profile_seed, opts] {
      AblationSpec s = *spec;
      s.grid.informative_slots = random_slot_profile(*informative, *profile_seed);
      s.selection = opts->config();
      s.retrieval.threads = ctx.threads;
      const AblationReport rep = run_ablation(s);
      fmt::print(ctx.out, "setting,k,recall@1,ap,informative_selected\n");
      fmt::print(ctx.out, "single_view,1,{},,\n", fmt_double(rep.baseline_recall_at_1));
      for (const auto& r : rep.rows) {
        fmt::print(ctx.out, "{},{},{},{},{}\n", r.label, r.k, fmt_double(r.recall_at_1), fmt_double(r.ap),
                   r.informative_selected);
      }
    };
  });
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mvgeo: multi-view drone/satellite embedding toolkit", "mvgeo"};
  app.require_subcommand(1);
  Context ctx{out, err};
  app.add_option("--threads", ctx.threads, "worker threads (0: MVGEO_THREADS or 1)")->capture_default_str();
  app.add_flag("-v,--verbose", ctx.verbosity, "log progress to stderr");

  std::function<void()> action;
  add_ingest(app, ctx, action);
  add_manifest(app, ctx, action);
  add_validate(app, ctx, action);
  add_score(app, ctx, action);
  add_select(app, ctx, action);
  add_aggregate(app, ctx, action);
  add_retrieve(app, ctx, action);
  add_evaluate(app, ctx, action);
  add_bench(app, ctx, action);
  add_gradcheck(app, ctx, action);
  add_verify(app, ctx, action);
  add_synth(app, ctx, action);
  add_ablation(app, ctx, action);

  if (args.empty()) {
    out << app.help();
    return kUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    fmt::print(err, "error: {}\nhint: run `mvgeo --help` or `mvgeo <subcommand> --help`\n", e.what());
    return kUsage;
  } catch (const UsageError& e) {
    fmt::print(err, "error: {}\nhint: run `mvgeo <subcommand> --help`\n", e.what());
    return kUsage;
  }

  try {
    if (action) action();
    return kOk;
  } catch (const UsageError& e) {
    fmt::print(err, "error: {}\nhint: run `mvgeo <subcommand> --help`\n", e.what());
    return kUsage;
  } catch (const VerificationFailure& e) {
    fmt::print(err, "verification failed: {}\n", e.what());
    return kVerificationFailed;
  } catch (const LoadError& e) {
    fmt::print(err, "error: {}\nhint: {}\n", e.what(), hint_for(e.kind()));
    return kDataError;
  } catch (const Error& e) {
    fmt::print(err, "error: {}\nhint: check the input databases and parameters against `mvgeo <subcommand> --help`\n",
               e.what());
    return kDataError;
  } catch (const std::exception& e) {
    fmt::print(err, "internal error: {}\n", e.what());
    return kInternal;
  }
}

}  // namespace mvgeo::cli
