#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace rwt {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr std::size_t kCoarseDim = 256;
inline constexpr std::size_t kFineDim = 128;
inline constexpr std::size_t kDescriptorDim = kCoarseDim + kFineDim;

/// 384-dim descriptor: coarse part at [0, 256), fine part at [256, 384).
struct HierarchicalDescriptor {
  std::array<float, kDescriptorDim> values{};
  bool normalized = false;
  // Zero vector that could not be normalized. Matching treats it as infinitely far.
  bool degenerate = false;

  std::span<const float, kCoarseDim> coarse() const {
    return std::span<const float, kDescriptorDim>(values).first<kCoarseDim>();
  }
  std::span<const float, kFineDim> fine() const {
    return std::span<const float, kDescriptorDim>(values).last<kFineDim>();
  }

  friend bool operator==(const HierarchicalDescriptor&, const HierarchicalDescriptor&) = default;
};

struct Keypoint {
  float u = 0.0F;
  float v = 0.0F;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct FrameFeatures {
  std::uint64_t frame_id = 0;
  std::vector<Keypoint> keypoints;
  std::vector<HierarchicalDescriptor> descriptors;  // parallel to keypoints

  std::size_t size() const { return keypoints.size(); }
  bool empty() const { return keypoints.empty(); }
};

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && cx > 0.0 && cx < width && cy > 0.0 && cy < height;
  }
  bool contains(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u < width && v < height;
  }
};

/// Timestamped camera-to-world pose in TUM convention.
struct Pose {
  double timestamp = 0.0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
};

}  // namespace rwt
