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


#ifndef MVGEO_TESTS_FIXTURES_HPP_
#define MVGEO_TESTS_FIXTURES_HPP_

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "mvgeo/embedding_store.hpp"
#include "mvgeo/matrix.hpp"
#include "mvgeo/rng.hpp"

namespace fixtures {

inline std::vector<float> random_feature(mvgeo::Rng& rng, std::uint32_t dim) {
  std::vector<float> f(dim);
  for (auto& v : f) v = static_cast<float>(rng.normal());
  return f;
}

// Drone database with every landmark holding all 54 slots.
inline mvgeo::EmbeddingDatabase full_grid(std::size_t landmarks, std::uint32_t dim, std::uint64_t seed) {
  mvgeo::Rng rng(seed);
  std::vector<mvgeo::ViewDescriptor> rows;
  for (std::uint32_t l = 0; l < landmarks; ++l) {
    for (int s = 0; s < mvgeo::kSlotCount; ++s) {
      rows.push_back({l, mvgeo::ViewPose::from_slot(s), random_feature(rng, dim)});
    }
  }
  return {mvgeo::Role::kDrone, dim, std::move(rows)};
}

inline mvgeo::EmbeddingDatabase satellite(std::size_t landmarks, std::uint32_t dim, std::uint64_t seed) {
  mvgeo::Rng rng(seed);
  std::vector<mvgeo::ViewDescriptor> rows;
  for (std::uint32_t l = 0; l < landmarks; ++l) rows.push_back({l, mvgeo::ViewPose::sentinel(), random_feature(rng, dim)});
  return {mvgeo::Role::kSatellite, dim, std::move(rows)};
}

inline mvgeo::Matrix random_matrix(mvgeo::Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  mvgeo::Matrix m(rows, cols);
  for (auto& v : m.flat()) v = scale * rng.normal();
  return m;
}

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mvgeo_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures

#endif  // MVGEO_TESTS_FIXTURES_HPP_
