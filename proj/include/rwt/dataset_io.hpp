#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "rwt/association.hpp"
#include "rwt/binary_io.hpp"
#include "rwt/config.hpp"
#include "rwt/error.hpp"
#include "rwt/feature_mask.hpp"
#include "rwt/geometry.hpp"
#include "rwt/types.hpp"

namespace rwt {

namespace fs = std::filesystem;

inline constexpr double kDefaultMaxDt = 0.02;

/// TUM freiburg3 calibration, used when a sequence ships no camera.cfg.
inline CameraIntrinsics tum_fr3_intrinsics() { return {535.4, 539.2, 320.1, 247.6, 640, 480}; }

struct SequenceEntry {
  double timestamp = 0.0;
  fs::path rgb_path;
  fs::path depth_path;
  std::optional<Pose> gt_pose;
};

struct SequenceIndex {
  std::vector<SequenceEntry> entries;
  CameraIntrinsics intrinsics;
  double depth_scale = kDefaultDepthScale;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(Errc::ParseError, where + ": not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9f", v);
  std::string out(buf);
  if (out.find_first_not_of("-0.") == std::string::npos) out = out.substr(out.front() == '-' ? 1 : 0);
  return out;
}

}  // namespace detail

struct ListEntry {
  double timestamp = 0.0;
  std::string filename;
};

/// Parses a TUM "timestamp filename" list. Timestamps must be strictly increasing.
inline std::vector<ListEntry> read_list_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, "cannot open " + path.string());
  std::vector<ListEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = detail::split_ws(body);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() != 2) throw Error(Errc::ParseError, where + ": expected 'timestamp filename'");
    ListEntry e{detail::parse_double(fields[0], where), std::string(fields[1])};
    if (!out.empty() && e.timestamp <= out.back().timestamp) {
      throw Error(Errc::ParseError, where + ": timestamps must be strictly increasing");
    }
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trajectories

inline std::vector<Pose> read_trajectory(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, "cannot open " + path.string());
  std::vector<Pose> poses;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto f = detail::split_ws(body);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 8) {
      throw Error(Errc::ParseError, where + ": expected 8 fields, got " + std::to_string(f.size()));
    }
    double v[8];
    for (int i = 0; i < 8; ++i) v[i] = detail::parse_double(f[static_cast<std::size_t>(i)], where);
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    const double norm = q.norm();
    if (std::abs(norm - 1.0) > 1e-3) {
      throw Error(Errc::NonUnitQuaternion, where + ": quaternion norm " + std::to_string(norm));
    }
    q.normalize();
    Pose p;
    p.timestamp = v[0];
    p.translation = Eigen::Vector3d(v[1], v[2], v[3]);
    p.rotation = q;
    poses.push_back(p);
  }
  return poses;
}

inline std::string format_pose(const Pose& p) {
  using detail::format_double;
  return format_double(p.timestamp) + ' ' + format_double(p.translation.x()) + ' ' +
         format_double(p.translation.y()) + ' ' + format_double(p.translation.z()) + ' ' +
         format_double(p.rotation.x()) + ' ' + format_double(p.rotation.y()) + ' ' +
         format_double(p.rotation.z()) + ' ' + format_double(p.rotation.w());
}

inline void write_trajectory(const fs::path& path, const std::vector<Pose>& poses) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot open " + path.string() + " for writing");
  out << "# timestamp tx ty tz qx qy qz qw\n";
  for (const auto& p : poses) out << format_pose(p) << '\n';
  if (!out) throw Error(Errc::IoError, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Sequences

/// Reads intrinsics and depth_scale from a key-value config; missing keys keep `base` values.
inline void apply_camera_config(const KeyValueConfig& cfg, CameraIntrinsics& K, double& depth_scale) {
  K.fx = cfg.get_double("fx").value_or(K.fx);
  K.fy = cfg.get_double("fy").value_or(K.fy);
  K.cx = cfg.get_double("cx").value_or(K.cx);
  K.cy = cfg.get_double("cy").value_or(K.cy);
  K.width = static_cast<int>(cfg.get_int("width").value_or(K.width));
  K.height = static_cast<int>(cfg.get_int("height").value_or(K.height));
  depth_scale = cfg.get_double("depth_scale").value_or(depth_scale);
}

/// Loads a TUM RGB-D directory: rgb.txt and depth.txt are associated by nearest timestamp, an
/// optional groundtruth.txt is attached the same way, and an optional camera.cfg provides
/// intrinsics and depth_scale.
inline SequenceIndex load_tum_sequence(const fs::path& dir, double max_dt = kDefaultMaxDt) {
  const auto rgb_file = dir / "rgb.txt";
  const auto depth_file = dir / "depth.txt";
  if (!fs::exists(rgb_file)) throw Error(Errc::MissingFile, rgb_file.string() + " not found");
  if (!fs::exists(depth_file)) throw Error(Errc::MissingFile, depth_file.string() + " not found");
  const auto rgb = read_list_file(rgb_file);
  const auto depth = read_list_file(depth_file);

  std::vector<double> rgb_ts;
  std::vector<double> depth_ts;
  for (const auto& e : rgb) rgb_ts.push_back(e.timestamp);
  for (const auto& e : depth) depth_ts.push_back(e.timestamp);
  const auto pairs = associate_timestamps(rgb_ts, depth_ts, max_dt);
  if (pairs.empty()) throw Error(Errc::EmptySequence, "no rgb/depth pairs within " + std::to_string(max_dt) + " s in " + dir.string());

  SequenceIndex seq;
  seq.intrinsics = tum_fr3_intrinsics();
  if (fs::exists(dir / "camera.cfg")) {
    apply_camera_config(KeyValueConfig::load(dir / "camera.cfg"), seq.intrinsics, seq.depth_scale);
  }
  for (const auto& [ir, id] : pairs) {
    seq.entries.push_back({rgb[ir].timestamp, dir / rgb[ir].filename, dir / depth[id].filename, std::nullopt});
  }

  const auto gt_file = dir / "groundtruth.txt";
  if (fs::exists(gt_file)) {
    const auto gt = read_trajectory(gt_file);
    std::vector<double> gt_ts;
    for (const auto& p : gt) gt_ts.push_back(p.timestamp);
    std::vector<double> entry_ts;
    for (const auto& e : seq.entries) entry_ts.push_back(e.timestamp);
    if (std::is_sorted(gt_ts.begin(), gt_ts.end())) {
      for (const auto& [ie, ig] : associate_timestamps(entry_ts, gt_ts, max_dt)) seq.entries[ie].gt_pose = gt[ig];
    }
  }
  return seq;
}

// ---------------------------------------------------------------------------
// RWTF feature files: "RWTF", version u32 = 1, count u32, dim u32 = 384, then per keypoint
// u f32, v f32, dim x f32. Little-endian.

inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;
inline constexpr std::size_t kFeatureRecordBytes = 8 + 4 * kDescriptorDim;

inline std::vector<std::uint8_t> serialize_features(const FrameFeatures& f) {
  if (f.keypoints.size() != f.descriptors.size()) {
    throw Error(Errc::DimensionMismatch, "keypoints and descriptors differ in length");
  }
  binary::Writer w;
  w.buffer().reserve(kFeatureHeaderBytes + f.size() * kFeatureRecordBytes);
  w.bytes("RWTF", 4);
  w.u32(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(f.size()));
  w.u32(static_cast<std::uint32_t>(kDescriptorDim));
  for (std::size_t i = 0; i < f.size(); ++i) {
    w.f32(f.keypoints[i].u);
    w.f32(f.keypoints[i].v);
    for (float x : f.descriptors[i].values) w.f32(x);
  }
  return std::move(w.buffer());
}

inline FrameFeatures deserialize_features(const std::vector<std::uint8_t>& bytes, std::uint64_t frame_id = 0) {
  if (bytes.size() >= 4 && !std::equal(bytes.begin(), bytes.begin() + 4, "RWTF")) {
    throw Error(Errc::BadMagic, "not an RWTF feature file");
  }
  binary::Reader r(bytes, Errc::TruncatedFile, "feature file");
  r.need(kFeatureHeaderBytes);
  r.u32();
  const std::uint32_t version = r.u32();
  if (version != kFeatureVersion) {
    throw Error(Errc::UnsupportedVersion, "feature file version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  if (dim != kDescriptorDim) {
    throw Error(Errc::DimensionMismatch, "descriptor dimension " + std::to_string(dim) + ", expected 384");
  }
  r.need(static_cast<std::size_t>(count) * kFeatureRecordBytes);
  if (r.remaining() != static_cast<std::size_t>(count) * kFeatureRecordBytes) {
    throw Error(Errc::ParseError, "feature file has trailing bytes");
  }
  FrameFeatures f;
  f.frame_id = frame_id;
  f.keypoints.resize(count);
  f.descriptors.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    f.keypoints[i].u = r.f32();
    f.keypoints[i].v = r.f32();
    for (float& x : f.descriptors[i].values) x = r.f32();
  }
  return f;
}

inline FrameFeatures read_feature_file(const fs::path& path, std::uint64_t frame_id = 0) {
  return deserialize_features(binary::read_file(path), frame_id);
}

inline void write_feature_file(const fs::path& path, const FrameFeatures& features) {
  binary::write_file(path, serialize_features(features));
}

// ---------------------------------------------------------------------------
// Depth and images

/// Raw depth sample per keypoint. `.json` sidecars carry {"depth": [...]} aligned with the
/// keypoint order; anything else is read as a 16-bit depth image sampled at the nearest pixel.
/// Zero marks a missing sample; filtering happens at backprojection.
inline std::vector<double> load_keypoint_depths(const fs::path& depth_path, const FrameFeatures& features) {
  if (!fs::exists(depth_path)) throw Error(Errc::MissingFile, depth_path.string() + " not found");
  std::vector<double> depths(features.size(), 0.0);
  if (depth_path.extension() == ".json") {
    std::ifstream in(depth_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, depth_path.string() + ": " + e.what());
    }
    if (!j.contains("depth") || !j["depth"].is_array()) {
      throw Error(Errc::ParseError, depth_path.string() + ": missing 'depth' array");
    }
    const auto& arr = j["depth"];
    if (arr.size() != features.size()) {
      throw Error(Errc::DimensionMismatch, depth_path.string() + ": " + std::to_string(arr.size()) +
                                               " depth samples for " + std::to_string(features.size()) +
                                               " keypoints");
    }
    for (std::size_t i = 0; i < arr.size(); ++i) depths[i] = arr[i].is_number() ? arr[i].get<double>() : 0.0;
    return depths;
  }
  const cv::Mat img = cv::imread(depth_path.string(), cv::IMREAD_ANYDEPTH);
  if (img.empty()) throw Error(Errc::ParseError, "unreadable depth image " + depth_path.string());
  cv::Mat depth16;
  img.convertTo(depth16, CV_32F);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const int x = std::clamp(static_cast<int>(std::lround(features.keypoints[i].u)), 0, depth16.cols - 1);
    const int y = std::clamp(static_cast<int>(std::lround(features.keypoints[i].v)), 0, depth16.rows - 1);
    depths[i] = depth16.at<float>(y, x);
  }
  return depths;
}

inline GrayImage load_gray_image(const fs::path& path) {
  const cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw Error(Errc::ParseError, "unreadable image " + path.string());
  GrayImage out(img.cols, img.rows);
  for (int y = 0; y < img.rows; ++y) {
    const auto* row = img.ptr<std::uint8_t>(y);
    std::copy(row, row + img.cols, out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * img.cols);
  }
  return out;
}

inline void save_gray_image(const fs::path& path, const GrayImage& image) {
  const cv::Mat m(image.height, image.width, CV_8UC1, const_cast<std::uint8_t*>(image.pixels.data()));
  if (!cv::imwrite(path.string(), m)) throw Error(Errc::IoError, "cannot write " + path.string());
}

}  // namespace rwt
