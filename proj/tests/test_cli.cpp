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

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "fixtures.hpp"

using mvgeo::cli::run;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::size_t fields(const std::string& line) {
  std::size_t n = 1;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) ++n;
  }
  return n;
}

// Header row present and every row has as many fields as the header.
bool valid_csv(const std::string& s) {
  const auto lines = lines_of(s);
  if (lines.empty()) return false;
  for (const auto& l : lines) {
    if (fields(l) != fields(lines[0])) return false;
  }
  return true;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string value_of(const std::string& csv, const std::string& key) {
  for (const auto& l : lines_of(csv)) {
    if (l.rfind(key + ",", 0) == 0) return l.substr(key.size() + 1);
  }
  return "";
}

struct Grid {
  fixtures::TempDir dir{"cli"};
  std::string drone = (dir / "d.mgeo").string();
  std::string sat = (dir / "s.mgeo").string();
  Grid() {
    const auto r = call({"synth", "grid", "--landmarks", "50", "--dim", "64", "--noise", "1.5", "--seed", "3",
                         "--out-drone", drone, "--out-sat", sat});
    REQUIRE(r.code == 0);
  }
};

}  // namespace

TEST_CASE("no arguments prints usage and exits 2") {
  const auto r = call({});
  CHECK(r.code == 2);
  CHECK(r.out.find("evaluate") != std::string::npos);
  CHECK(r.out.find("gradcheck") != std::string::npos);
}

TEST_CASE("usage errors exit 2 with a hint") {
  CHECK(call({"frobnicate"}).code == 2);
  const auto r = call({"evaluate", "--drone", "a", "--sat", "b", "--bogus"});
  CHECK(r.code == 2);
  CHECK(r.err.find("hint:") != std::string::npos);
  CHECK(call({"evaluate", "--drone", "a", "--sat", "b", "--k", "55"}).code == 2);
  CHECK(call({"evaluate", "--drone", "a", "--sat", "b", "--lambda", "2"}).code == 2);
  CHECK(call({"evaluate", "--drone", "a"}).code == 2);
  CHECK(call({"verify"}).code == 2);
  CHECK(call({"verify", "prop2", "--n", "3", "--k", "4"}).code == 2);
  CHECK(call({"--help"}).code == 0);
}

TEST_CASE("missing input is a data error") {
  const auto r = call({"evaluate", "--drone", "/nonexistent/d.mgeo", "--sat", "/nonexistent/s.mgeo"});
  CHECK(r.code == 3);
  CHECK(r.err.find("hint:") != std::string::npos);
}

TEST_CASE("evaluate with fusion on the synthetic grid") {
  Grid g;
  const auto plain = call({"evaluate", "--drone", g.drone, "--sat", g.sat});
  REQUIRE(plain.code == 0);
  CHECK(valid_csv(plain.out));
  CHECK(lines_of(plain.out)[0] == "metric,value");
  const auto fused = call({"evaluate", "--drone", g.drone, "--sat", g.sat, "--msrm", "--k", "40"});
  REQUIRE(fused.code == 0);
  CHECK(valid_csv(fused.out));
  CHECK(value_of(fused.out, "recall@1") == "1.000000");
  CHECK(std::stod(value_of(plain.out, "recall@1")) < 1.0);
  CHECK(std::stoull(value_of(plain.out, "distance_ops")) == 54 * std::stoull(value_of(fused.out, "distance_ops")));

  const auto per = call({"evaluate", "--drone", g.drone, "--sat", g.sat, "--per-query", "--direction", "sat2drone"});
  REQUIRE(per.code == 0);
  CHECK(valid_csv(per.out));
  CHECK(lines_of(per.out).size() == 51);
}

TEST_CASE("bench reports the operation ratio") {
  Grid g;
  const auto r = call({"bench", "--drone", g.drone, "--sat", g.sat});
  REQUIRE(r.code == 0);
  CHECK(valid_csv(r.out));
  CHECK(value_of(r.out, "ops_ratio") == "54.000000");
  CHECK(value_of(r.out, "seconds_fused").empty());
}

TEST_CASE("fusion with k beyond the scored slots is a data error") {
  fixtures::TempDir dir("cli_sparse");
  std::vector<mvgeo::ViewDescriptor> rows;
  for (std::uint32_t l = 0; l < 3; ++l) {
    for (int s = 0; s < 5; ++s) rows.push_back({l, mvgeo::ViewPose::from_slot(s), {float(l + s), 1.0f}});
  }
  mvgeo::save_database(mvgeo::EmbeddingDatabase(mvgeo::Role::kDrone, 2, rows), dir / "d.mgeo");
  mvgeo::save_database(fixtures::satellite(3, 2, 1), dir / "s.mgeo");
  const auto r = call({"select", "--drone", (dir / "d.mgeo").string(), "--k", "6"});
  CHECK(r.code == 3);
  CHECK(r.err.find("k = 6") != std::string::npos);
}

TEST_CASE("gradcheck prints one row per loss") {
  const auto r = call({"gradcheck", "--points", "3"});
  REQUIRE(r.code == 0);
  CHECK(valid_csv(r.out));
  CHECK(lines_of(r.out).size() == 16);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(call({"gradcheck", "--points", "3", "--tol", "1e-20"}).code == 4);
}

TEST_CASE("verify exits 4 exactly when the target is missed") {
  const auto p2 = call({"verify", "prop2", "--trials", "60"});
  REQUIRE(p2.code == 0);
  CHECK(valid_csv(p2.out));
  CHECK(lines_of(p2.out).size() == 61);

  const auto p1 = call({"verify", "prop1", "--count", "20", "--mc-samples", "2000", "--min-fraction", "1"});
  CHECK(valid_csv(p1.out));
  bool all_hold = true;
  const auto lines = lines_of(p1.out);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string> cells;
    std::stringstream ss(lines[i]);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    all_hold = all_hold && cells[11] == "1";
  }
  CHECK(p1.code == (all_hold ? 0 : 4));
  CHECK(call({"verify", "prop1", "--count", "5", "--mc-samples", "999"}).code == 2);
}

TEST_CASE("ingest, manifest, score, select, aggregate, retrieve") {
  fixtures::TempDir dir("cli_chain");
  {
    std::ofstream csv(dir / "drone.csv");
    csv << "landmark_id,height_level,azimuth_deg,f0,f1,f2\n";
    mvgeo::Rng rng(4);
    for (int l = 0; l < 6; ++l) {
      for (int s = 0; s < 54; ++s) {
        const auto p = mvgeo::ViewPose::from_slot(s);
        csv << l << ',' << int(p.height_level) << ',' << p.azimuth_deg;
        for (int j = 0; j < 3; ++j) csv << ',' << (j == l % 3 ? 2.0 : 0.0) + l * 0.1 + 0.3 * rng.normal();
        csv << '\n';
      }
    }
    std::ofstream sat(dir / "sat.csv");
    for (int l = 0; l < 6; ++l) {
      sat << l << ",255,0";
      for (int j = 0; j < 3; ++j) sat << ',' << (j == l % 3 ? 2.0 : 0.0) + l * 0.1;
      sat << '\n';
    }
  }
  const std::string d = (dir / "d.mgeo").string(), s = (dir / "s.mgeo").string(), f = (dir / "f.mgeo").string();
  auto r = call({"ingest", "--csv", (dir / "drone.csv").string(), "--out", d});
  REQUIRE(r.code == 0);
  CHECK(r.out == "path,role,dim,count\n" + d + ",drone,3,324\n");
  REQUIRE(call({"ingest", "--csv", (dir / "sat.csv").string(), "--role", "satellite", "--out", s}).code == 0);
  CHECK(call({"validate", "--drone", d, "--sat", s}).code == 0);

  r = call({"manifest", "--db", d});
  REQUIRE(r.code == 0);
  CHECK(valid_csv(r.out));
  CHECK(lines_of(r.out).size() == 325);

  r = call({"score", "--drone", d});
  REQUIRE(r.code == 0);
  CHECK(valid_csv(r.out));
  CHECK(lines_of(r.out)[0] ==
        "slot,height_level,azimuth_deg,samples,h_marginal,h_range,sigma2_between,sigma2_within,mi_approx,score");
  CHECK(lines_of(r.out).size() == 55);

  r = call({"select", "--drone", d, "--k", "7", "--lambda", "0.3"});
  REQUIRE(r.code == 0);
  CHECK(valid_csv(r.out));
  CHECK(lines_of(r.out).size() == 8);

  r = call({"aggregate", "--drone", d, "--out", f, "--k", "7", "--l2"});
  REQUIRE(r.code == 0);
  CHECK(valid_csv(r.out));
  const auto fused = mvgeo::load_database(f);
  CHECK(fused.fused());
  CHECK(fused.size() == 6);

  r = call({"retrieve", "--query", f, "--gallery", s, "--top", "2"});
  REQUIRE(r.code == 0);
  CHECK(valid_csv(r.out));
  CHECK(lines_of(r.out).size() == 13);

  r = call({"evaluate", "--drone", f, "--sat", s, "--recall", "1,3"});
  REQUIRE(r.code == 0);
  CHECK(value_of(r.out, "recall@3") != "");
}

TEST_CASE("bad CSV rows are data errors naming the record") {
  fixtures::TempDir dir("cli_bad");
  {
    std::ofstream csv(dir / "bad.csv");
    csv << "1,255,0,1,2\n2,255,0,nan,1\n";
  }
  const auto r = call({"ingest", "--csv", (dir / "bad.csv").string(), "--role", "satellite", "--out",
                       (dir / "b.mgeo").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("record 1") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "b.mgeo"));
  {
    std::ofstream csv(dir / "ragged.csv");
    csv << "1,0,0,1,2\n2,0,0,1\n";
  }
  CHECK(call({"ingest", "--csv", (dir / "ragged.csv").string(), "--out", (dir / "r.mgeo").string()}).code == 3);
}

TEST_CASE("validate reports violations and exits 4") {
  fixtures::TempDir dir("cli_validate");
  std::vector<mvgeo::ViewDescriptor> rows;
  for (int s = 0; s < 53; ++s) rows.push_back({7, mvgeo::ViewPose::from_slot(s), {1.0f}});
  mvgeo::save_database(mvgeo::EmbeddingDatabase(mvgeo::Role::kDrone, 1, rows), dir / "d.mgeo");
  const auto r = call({"validate", "--drone", (dir / "d.mgeo").string()});
  CHECK(r.code == 4);
  CHECK(valid_csv(r.out));
  CHECK(lines_of(r.out).size() == 2);
  CHECK(r.out.find("missing-slot") != std::string::npos);
}

TEST_CASE("outputs are identical across runs, thread counts and MVGEO_THREADS") {
  Grid g;
  const std::vector<std::vector<std::string>> commands = {
      {"score", "--drone", g.drone},
      {"select", "--drone", g.drone},
      {"evaluate", "--drone", g.drone, "--sat", g.sat, "--msrm"},
      {"evaluate", "--drone", g.drone, "--sat", g.sat, "--direction", "sat2drone", "--similarity", "euclidean"},
      {"verify", "prop2", "--trials", "40"},
      {"verify", "prop1", "--count", "6", "--mc-samples", "1000", "--min-fraction", "0"},
  };
  for (const auto& cmd : commands) {
    auto one = cmd, four = cmd;
    one.insert(one.begin(), {"--threads", "1"});
    four.insert(four.begin(), {"--threads", "4"});
    const auto a = call(one), b = call(four), c = call(one);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out == c.out);
    ::setenv("MVGEO_THREADS", "3", 1);
    const auto d = call(cmd);
    ::unsetenv("MVGEO_THREADS");
    CHECK(a.out == d.out);
  }
  const auto f1 = (g.dir / "f1.mgeo").string(), f4 = (g.dir / "f4.mgeo").string();
  CHECK(call({"--threads", "1", "aggregate", "--drone", g.drone, "--out", f1}).code == 0);
  CHECK(call({"--threads", "4", "aggregate", "--drone", g.drone, "--out", f4}).code == 0);
  CHECK(slurp(f1) == slurp(f4));
}
