#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "rwt/error.hpp"
#include "rwt/types.hpp"

namespace rwt {

/// Feature-map cell index at 1/8 image resolution.
struct GridCoord {
  int x = 0;
  int y = 0;
};

/// Sub-pixel offset inside the 5x5 fine window, in window units.
struct SubpixelOffset {
  double x = 0.0;
  double y = 0.0;
};

inline constexpr int kCoarseStride = 8;
inline constexpr int kFineStride = 2;
inline constexpr double kFineWindowHalfExtent = 2.5;

struct PixelPosition {
  int u = 0;
  int v = 0;
  friend bool operator==(const PixelPosition&, const PixelPosition&) = default;
};

struct FinePixelPosition {
  double u = 0.0;
  double v = 0.0;
  bool clamped = false;
};

inline int grid_cols(int width) { return (width + kCoarseStride - 1) / kCoarseStride; }
inline int grid_rows(int height) { return (height + kCoarseStride - 1) / kCoarseStride; }

inline void check_grid(GridCoord g, int width, int height) {
  if (g.x < 0 || g.y < 0 || g.x >= grid_cols(width) || g.y >= grid_rows(height)) {
    throw Error(Errc::OutOfBounds, "grid cell (" + std::to_string(g.x) + "," + std::to_string(g.y) +
                                       ") outside " + std::to_string(grid_cols(width)) + "x" +
                                       std::to_string(grid_rows(height)) + " grid");
  }
}

/// Coarse match position: i = 8 * grid index.
inline PixelPosition map_coarse_to_image(GridCoord g, int width, int height) {
  check_grid(g, width, height);
  return {kCoarseStride * g.x, kCoarseStride * g.y};
}

/// Refined match position: j = 8 * grid index + 2 * sub-pixel offset, clamped into the image.
inline FinePixelPosition map_fine_to_image(GridCoord g, SubpixelOffset s, int width, int height) {
  check_grid(g, width, height);
  if (!(std::abs(s.x) <= kFineWindowHalfExtent) || !(std::abs(s.y) <= kFineWindowHalfExtent)) {
    throw Error(Errc::OutOfBounds, "sub-pixel offset outside the 5x5 fine window");
  }
  FinePixelPosition p;
  p.u = kCoarseStride * static_cast<double>(g.x) + kFineStride * s.x;
  p.v = kCoarseStride * static_cast<double>(g.y) + kFineStride * s.y;
  const double max_u = width - 1;
  const double max_v = height - 1;
  const double cu = std::clamp(p.u, 0.0, max_u);
  const double cv = std::clamp(p.v, 0.0, max_v);
  p.clamped = cu != p.u || cv != p.v;
  p.u = cu;
  p.v = cv;
  return p;
}

/// Fixed-size slice of a hierarchical descriptor, validated on construction.
template <std::size_t N>
class DescriptorPart {
 public:
  static constexpr std::size_t kDim = N;

  explicit DescriptorPart(std::span<const float> v) {
    if (v.size() != N) {
      throw Error(Errc::DimensionMismatch,
                  "expected " + std::to_string(N) + " components, got " + std::to_string(v.size()));
    }
    for (float x : v) {
      if (!std::isfinite(x)) throw Error(Errc::NumericalFailure, "non-finite descriptor component");
    }
    std::copy(v.begin(), v.end(), values_.begin());
  }

  const std::array<float, N>& values() const { return values_; }

 private:
  std::array<float, N> values_{};
};

using CoarseDescriptor = DescriptorPart<kCoarseDim>;
using FineDescriptor = DescriptorPart<kFineDim>;

/// Scales to unit Euclidean norm in place. A zero vector is left as is and flagged degenerate.
inline void normalize_descriptor(HierarchicalDescriptor& d) {
  double sq = 0.0;
  for (float x : d.values) sq += static_cast<double>(x) * x;
  if (sq == 0.0) {
    d.normalized = false;
    d.degenerate = true;
    return;
  }
  const double inv = 1.0 / std::sqrt(sq);
  for (float& x : d.values) x = static_cast<float>(x * inv);
  d.normalized = true;
  d.degenerate = false;
}

/// Concatenates coarse and fine parts into the 384-dim descriptor.
inline HierarchicalDescriptor assemble_descriptor(const CoarseDescriptor& coarse,
                                                  const FineDescriptor& fine, bool normalize) {
  HierarchicalDescriptor d;
  std::copy(coarse.values().begin(), coarse.values().end(), d.values.begin());
  std::copy(fine.values().begin(), fine.values().end(), d.values.begin() + kCoarseDim);
  if (normalize) normalize_descriptor(d);
  return d;
}

inline HierarchicalDescriptor assemble_descriptor(std::span<const float> coarse,
                                                  std::span<const float> fine, bool normalize) {
  return assemble_descriptor(CoarseDescriptor(coarse), FineDescriptor(fine), normalize);
}

/// Which descriptor slices take part in matching.
struct DescriptorSlices {
  bool use_coarse = true;
  bool use_fine = true;
};

/// Zeroes the disabled slice and renormalizes the remainder, so distances are computed on the
/// active slice only.
inline void apply_slices(HierarchicalDescriptor& d, DescriptorSlices slices, bool normalize = true) {
  if (!slices.use_coarse && !slices.use_fine) {
    throw Error(Errc::ConfigError, "at least one of the coarse and fine slices must be enabled");
  }
  if (!slices.use_coarse) std::fill(d.values.begin(), d.values.begin() + kCoarseDim, 0.0F);
  if (!slices.use_fine) std::fill(d.values.begin() + kCoarseDim, d.values.end(), 0.0F);
  if (normalize) {
    normalize_descriptor(d);
  } else {
    d.normalized = false;
  }
}

inline void prepare_descriptors(FrameFeatures& features, DescriptorSlices slices, bool normalize = true) {
  for (auto& d : features.descriptors) apply_slices(d, slices, normalize);
}

}  // namespace rwt
