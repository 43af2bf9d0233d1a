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

#ifndef MVGEO_EMBEDDING_STORE_HPP_
#define MVGEO_EMBEDDING_STORE_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvgeo {

// Base class for every data-level failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kHeightLevels = 3;
inline constexpr int kAzimuthStepDeg = 20;
inline constexpr int kAzimuthSteps = 18;
inline constexpr int kSlotCount = kHeightLevels * kAzimuthSteps;  // 54
inline constexpr std::uint8_t kSentinelHeight = 255;

// Capture position of a drone frame on the 3 x 18 acquisition grid.
struct ViewPose {
  std::uint8_t height_level = 0;
  std::uint16_t azimuth_deg = 0;

  static constexpr ViewPose sentinel() { return {kSentinelHeight, 0}; }
  static ViewPose from_slot(int slot);

  bool valid() const;
  bool is_sentinel() const { return height_level == kSentinelHeight && azimuth_deg == 0; }
  // slot = 18 * height_level + azimuth_deg / 20; only meaningful when valid().
  int slot() const { return kAzimuthSteps * height_level + azimuth_deg / kAzimuthStepDeg; }

  friend bool operator==(const ViewPose&, const ViewPose&) = default;
};

struct ViewDescriptor {
  std::uint32_t landmark_id = 0;
  ViewPose pose;
  std::vector<float> feature;
};

enum class Role : std::uint8_t { kDrone = 0, kSatellite = 1 };

const char* to_string(Role role);

// Immutable collection of descriptors sharing one dimension and role.
// The constructor only enforces shape (every feature has length dim);
// semantic rules are reported by validate().
class EmbeddingDatabase {
 public:
  EmbeddingDatabase(Role role, std::uint32_t dim, std::vector<ViewDescriptor> descriptors);

  Role role() const { return role_; }
  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return descriptors_.size(); }
  bool empty() const { return descriptors_.empty(); }
  const ViewDescriptor& operator[](std::size_t i) const { return descriptors_[i]; }
  std::span<const ViewDescriptor> descriptors() const { return descriptors_; }

  // A drone database whose records all carry the sentinel pose: one fused
  // descriptor per landmark (the output of aggregation).
  bool fused() const;

  // Sorted, unique landmark ids.
  std::vector<std::uint32_t> landmark_ids() const;

  // Record index of (landmark, slot), if present. Drone databases only.
  std::optional<std::size_t> find(std::uint32_t landmark_id, int slot) const;

 private:
  Role role_;
  std::uint32_t dim_;
  std::vector<ViewDescriptor> descriptors_;
  // (landmark_id << 8 | slot) -> record index, sorted by key.
  std::vector<std::pair<std::uint64_t, std::size_t>> slot_index_;
};

enum class LoadErrorKind {
  kIo,
  kBadMagic,
  kVersionMismatch,
  kBadRole,
  kDimensionMismatch,
  kNonFinite,
  kInvalidPose,
  kDuplicateSlot,
};

const char* to_string(LoadErrorKind kind);

class LoadError : public Error {
 public:
  LoadError(LoadErrorKind kind, std::string what, std::optional<std::uint64_t> record = std::nullopt);

  LoadErrorKind kind() const { return kind_; }
  std::optional<std::uint64_t> record() const { return record_; }

 private:
  LoadErrorKind kind_;
  std::optional<std::uint64_t> record_;
};

inline constexpr char kMagic[4] = {'M', 'G', 'E', 'O'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kFileHeaderBytes = 4 + 4 + 1 + 4 + 8;
inline constexpr std::size_t kRecordHeaderBytes = 4 + 1 + 2;

// Encodes a database in the MGEO binary layout (all integers and floats
// little-endian).
std::vector<std::uint8_t> encode_database(const EmbeddingDatabase& db);

// Decodes and validates. Any rule violation that load_database rejects is
// thrown as LoadError; missing drone slots are tolerated.
EmbeddingDatabase decode_database(std::span<const std::uint8_t> bytes,
                                  std::optional<std::uint32_t> expected_dim = std::nullopt);

EmbeddingDatabase load_database(const std::filesystem::path& path,
                                std::optional<std::uint32_t> expected_dim = std::nullopt);
void save_database(const EmbeddingDatabase& db, const std::filesystem::path& path);

enum class Rule {
  kDimension,
  kNonFinite,
  kInvalidPose,
  kSatellitePose,
  kDuplicateSlot,
  kDuplicateLandmark,
  kMissingSlot,
  kLandmarkSetMismatch,
};

const char* to_string(Rule rule);

struct Violation {
  Rule rule;
  std::optional<std::size_t> record;  // absent for rules about absent data
  std::uint32_t landmark_id = 0;
  int slot = -1;
  std::string message;
};

std::vector<Violation> validate(const EmbeddingDatabase& db);

// Cross-database rule: drone and satellite landmark sets must agree.
std::vector<Violation> validate_pair(const EmbeddingDatabase& drone, const EmbeddingDatabase& satellite);

// `landmark_id,height_level,azimuth_deg` per record, with a header row.
std::string manifest_csv(const EmbeddingDatabase& db);

}  // namespace mvgeo

#endif  // MVGEO_EMBEDDING_STORE_HPP_
