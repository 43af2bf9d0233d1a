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

#include "mvgeo/embedding_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include <fmt/format.h>

namespace mvgeo {

namespace {

std::uint64_t slot_key(std::uint32_t landmark_id, int slot) {
  return (static_cast<std::uint64_t>(landmark_id) << 8) | static_cast<std::uint64_t>(slot);
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

void put_f32(std::vector<std::uint8_t>& out, float value) {
  put_le(out, std::bit_cast<std::uint32_t>(value));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  template <typename T>
  T get_le() {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return value;
  }

  float get_f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ViewPose ViewPose::from_slot(int slot) {
  if (slot < 0 || slot >= kSlotCount) throw Error(fmt::format("slot {} outside 0..{}", slot, kSlotCount - 1));
  return {static_cast<std::uint8_t>(slot / kAzimuthSteps),
          static_cast<std::uint16_t>((slot % kAzimuthSteps) * kAzimuthStepDeg)};
}

bool ViewPose::valid() const {
  return height_level < kHeightLevels && azimuth_deg % kAzimuthStepDeg == 0 && azimuth_deg <= 340;
}

const char* to_string(Role role) {
  switch (role) {
    case Role::kDrone:
      return "drone";
    case Role::kSatellite:
      return "satellite";
  }
  return "?";
}

EmbeddingDatabase::EmbeddingDatabase(Role role, std::uint32_t dim, std::vector<ViewDescriptor> descriptors)
    : role_(role), dim_(dim), descriptors_(std::move(descriptors)) {
  if (dim_ == 0) throw Error("embedding dimension must be positive");
  for (std::size_t i = 0; i < descriptors_.size(); ++i) {
    if (descriptors_[i].feature.size() != dim_) {
      throw Error(fmt::format("record {}: feature length {} != dimension {}", i, descriptors_[i].feature.size(), dim_));
    }
  }
  if (role_ == Role::kDrone) {
    slot_index_.reserve(descriptors_.size());
    for (std::size_t i = 0; i < descriptors_.size(); ++i) {
      const auto& d = descriptors_[i];
      if (d.pose.valid()) slot_index_.emplace_back(slot_key(d.landmark_id, d.pose.slot()), i);
    }
    std::stable_sort(slot_index_.begin(), slot_index_.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
  }
}

bool EmbeddingDatabase::fused() const {
  return role_ == Role::kDrone && !descriptors_.empty() &&
         std::all_of(descriptors_.begin(), descriptors_.end(), [](const auto& d) { return d.pose.is_sentinel(); });
}

std::vector<std::uint32_t> EmbeddingDatabase::landmark_ids() const {
  std::vector<std::uint32_t> ids;
  ids.reserve(descriptors_.size());
  for (const auto& d : descriptors_) ids.push_back(d.landmark_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::optional<std::size_t> EmbeddingDatabase::find(std::uint32_t landmark_id, int slot) const {
  const auto key = slot_key(landmark_id, slot);
  auto it = std::lower_bound(slot_index_.begin(), slot_index_.end(), key,
                             [](const auto& entry, std::uint64_t k) { return entry.first < k; });
  if (it == slot_index_.end() || it->first != key) return std::nullopt;
  return it->second;
}

const char* to_string(LoadErrorKind kind) {
  switch (kind) {
    case LoadErrorKind::kIo:
      return "io";
    case LoadErrorKind::kBadMagic:
      return "bad-magic";
    case LoadErrorKind::kVersionMismatch:
      return "version-mismatch";
    case LoadErrorKind::kBadRole:
      return "bad-role";
    case LoadErrorKind::kDimensionMismatch:
      return "dimension-mismatch";
    case LoadErrorKind::kNonFinite:
      return "non-finite";
    case LoadErrorKind::kInvalidPose:
      return "invalid-pose";
    case LoadErrorKind::kDuplicateSlot:
      return "duplicate-slot";
  }
  return "?";
}

LoadError::LoadError(LoadErrorKind kind, std::string what, std::optional<std::uint64_t> record)
    : Error(std::move(what)), kind_(kind), record_(record) {}

std::vector<std::uint8_t> encode_database(const EmbeddingDatabase& db) {
  std::vector<std::uint8_t> out;
  out.reserve(kFileHeaderBytes + db.size() * (kRecordHeaderBytes + 4 * std::size_t{db.dim()}));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(db.role()));
  put_le<std::uint32_t>(out, db.dim());
  put_le<std::uint64_t>(out, db.size());
  for (const auto& d : db.descriptors()) {
    put_le<std::uint32_t>(out, d.landmark_id);
    put_le<std::uint8_t>(out, d.pose.height_level);
    put_le<std::uint16_t>(out, d.pose.azimuth_deg);
    for (float v : d.feature) put_f32(out, v);
  }
  return out;
}

EmbeddingDatabase decode_database(std::span<const std::uint8_t> bytes, std::optional<std::uint32_t> expected_dim) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw LoadError(LoadErrorKind::kBadMagic, "missing MGEO magic bytes");
  }
  if (bytes.size() < kFileHeaderBytes) throw LoadError(LoadErrorKind::kIo, "truncated header");
  Reader in(bytes.subspan(4));
  const auto version = in.get_le<std::uint32_t>();
  if (version != kFormatVersion) {
    throw LoadError(LoadErrorKind::kVersionMismatch, fmt::format("format version {} (expected {})", version, kFormatVersion));
  }
  const auto role_byte = in.get_le<std::uint8_t>();
  if (role_byte > 1) throw LoadError(LoadErrorKind::kBadRole, fmt::format("unknown role byte {}", role_byte));
  const auto role = static_cast<Role>(role_byte);
  const auto dim = in.get_le<std::uint32_t>();
  const auto count = in.get_le<std::uint64_t>();
  if (dim == 0) throw LoadError(LoadErrorKind::kDimensionMismatch, "dimension is 0");
  if (expected_dim && *expected_dim != dim) {
    throw LoadError(LoadErrorKind::kDimensionMismatch, fmt::format("dimension {} (expected {})", dim, *expected_dim));
  }
  const std::uint64_t record_bytes = kRecordHeaderBytes + 4ull * dim;
  if (count > in.remaining() / record_bytes || count * record_bytes != in.remaining()) {
    throw LoadError(LoadErrorKind::kDimensionMismatch,
                    fmt::format("body is {} bytes, header promises {} records of dimension {}", in.remaining(), count, dim));
  }

  std::vector<ViewDescriptor> descriptors(count);
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < count; ++i) {
    auto& d = descriptors[i];
    d.landmark_id = in.get_le<std::uint32_t>();
    d.pose.height_level = in.get_le<std::uint8_t>();
    d.pose.azimuth_deg = in.get_le<std::uint16_t>();
    d.feature.resize(dim);
    for (auto& v : d.feature) {
      v = in.get_f32();
      if (!std::isfinite(v)) throw LoadError(LoadErrorKind::kNonFinite, fmt::format("record {}: non-finite value", i), i);
    }
    // A drone file is either a view grid or, when its first record carries
    // the sentinel, a fused one-row-per-landmark database.
    const bool fused_file = role == Role::kDrone && descriptors[0].pose.is_sentinel();
    if (role == Role::kDrone && !fused_file) {
      if (!d.pose.valid()) {
        throw LoadError(LoadErrorKind::kInvalidPose,
                        fmt::format("record {}: invalid pose (h={}, az={})", i, d.pose.height_level, d.pose.azimuth_deg), i);
      }
      if (!seen.insert(slot_key(d.landmark_id, d.pose.slot())).second) {
        throw LoadError(LoadErrorKind::kDuplicateSlot,
                        fmt::format("record {}: landmark {} slot {} appears twice", i, d.landmark_id, d.pose.slot()), i);
      }
    } else {
      if (fused_file && !d.pose.is_sentinel()) {
        throw LoadError(LoadErrorKind::kInvalidPose, fmt::format("record {}: fused drone record without sentinel pose", i), i);
      }
      if (!seen.insert(d.landmark_id).second) {
        throw LoadError(LoadErrorKind::kDuplicateSlot,
                        fmt::format("record {}: landmark {} has more than one single-descriptor row", i, d.landmark_id), i);
      }
    }
  }
  return EmbeddingDatabase(role, dim, std::move(descriptors));
}

EmbeddingDatabase load_database(const std::filesystem::path& path, std::optional<std::uint32_t> expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(LoadErrorKind::kIo, fmt::format("cannot open {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw LoadError(LoadErrorKind::kIo, fmt::format("read failure on {}", path.string()));
  return decode_database(bytes, expected_dim);
}

void save_database(const EmbeddingDatabase& db, const std::filesystem::path& path) {
  const auto bytes = encode_database(db);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot open {} for writing", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(fmt::format("write failure on {}", path.string()));
}

const char* to_string(Rule rule) {
  switch (rule) {
    case Rule::kDimension:
      return "dimension";
    case Rule::kNonFinite:
      return "non-finite";
    case Rule::kInvalidPose:
      return "invalid-pose";
    case Rule::kSatellitePose:
      return "satellite-pose";
    case Rule::kDuplicateSlot:
      return "duplicate-slot";
    case Rule::kDuplicateLandmark:
      return "duplicate-landmark";
    case Rule::kMissingSlot:
      return "missing-slot";
    case Rule::kLandmarkSetMismatch:
      return "landmark-set-mismatch";
  }
  return "?";
}

std::vector<Violation> validate(const EmbeddingDatabase& db) {
  std::vector<Violation> out;
  // Every occurrence of a key after the first is flagged.
  std::map<std::uint64_t, int> occurrences;
  std::map<std::uint32_t, std::set<int>> slots_of;
  const bool fused = db.fused();

  for (std::size_t i = 0; i < db.size(); ++i) {
    const auto& d = db[i];
    if (std::any_of(d.feature.begin(), d.feature.end(), [](float v) { return !std::isfinite(v); })) {
      out.push_back({Rule::kNonFinite, i, d.landmark_id, -1, "non-finite feature component"});
    }
    if (db.role() == Role::kDrone && !fused) {
      if (!d.pose.valid()) {
        out.push_back({Rule::kInvalidPose, i, d.landmark_id, -1,
                       fmt::format("h={} az={}", d.pose.height_level, d.pose.azimuth_deg)});
        continue;
      }
      const int slot = d.pose.slot();
      slots_of[d.landmark_id].insert(slot);
      if (occurrences[slot_key(d.landmark_id, slot)]++ > 0) {
        out.push_back({Rule::kDuplicateSlot, i, d.landmark_id, slot, "slot already present for landmark"});
      }
    } else {
      if (!d.pose.is_sentinel()) {
        out.push_back({fused ? Rule::kInvalidPose : Rule::kSatellitePose, i, d.landmark_id, -1, "satellite pose must be the (255, 0) sentinel"});
      }
      if (occurrences[d.landmark_id]++ > 0) {
        out.push_back({Rule::kDuplicateLandmark, i, d.landmark_id, -1, "landmark already has a satellite row"});
      }
    }
  }

  if (db.role() == Role::kDrone && !fused) {
    for (const auto& [landmark, slots] : slots_of) {
      for (int s = 0; s < kSlotCount; ++s) {
        if (!slots.contains(s)) {
          out.push_back({Rule::kMissingSlot, std::nullopt, landmark, s, fmt::format("landmark {} lacks slot {}", landmark, s)});
        }
      }
    }
  }
  return out;
}

std::vector<Violation> validate_pair(const EmbeddingDatabase& drone, const EmbeddingDatabase& satellite) {
  std::vector<Violation> out;
  const auto a = drone.landmark_ids();
  const auto b = satellite.landmark_ids();
  std::vector<std::uint32_t> only_drone, only_sat;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(only_drone));
  std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(only_sat));
  for (auto id : only_drone) {
    out.push_back({Rule::kLandmarkSetMismatch, std::nullopt, id, -1, "landmark has drone views but no satellite row"});
  }
  for (auto id : only_sat) {
    out.push_back({Rule::kLandmarkSetMismatch, std::nullopt, id, -1, "landmark has a satellite row but no drone views"});
  }
  if (drone.dim() != satellite.dim()) {
    out.push_back({Rule::kDimension, std::nullopt, 0, -1,
                   fmt::format("drone dimension {} != satellite dimension {}", drone.dim(), satellite.dim())});
  }
  return out;
}

std::string manifest_csv(const EmbeddingDatabase& db) {
  std::string out = "landmark_id,height_level,azimuth_deg\n";
  for (const auto& d : db.descriptors()) {
    out += fmt::format("{},{},{}\n", d.landmark_id, d.pose.height_level, d.pose.azimuth_deg);
  }
  return out;
}

}  // namespace mvgeo
