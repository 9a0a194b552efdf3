#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "rwt/error.hpp"
#include "rwt/types.hpp"

namespace rwt {

/// 8-bit single-channel image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  bool empty() const { return width <= 0 || height <= 0; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct MaskParams {
  double canny_lo = 50.0;
  double canny_hi = 150.0;
  int canny_aperture = 3;
  double hough_rho = 1.0;
  double hough_theta_deg = 1.0;
  int hough_threshold = 50;
  double hough_min_len = 50.0;
  double hough_max_gap = 10.0;
  int line_width = 20;

  void validate() const {
    if (line_width < 1) throw Error(Errc::ConfigError, "line_width must be >= 1");
    if (!(canny_lo >= 0.0) || !(canny_hi >= canny_lo)) throw Error(Errc::ConfigError, "need 0 <= canny_lo <= canny_hi");
    if (hough_threshold < 1) throw Error(Errc::ConfigError, "hough_threshold must be >= 1");
    if (!(hough_min_len >= 0.0) || !(hough_max_gap >= 0.0)) {
      throw Error(Errc::ConfigError, "hough lengths must be non-negative");
    }
  }
};

struct LineSegment {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;
};

class FeatureMask {
 public:
  FeatureMask() = default;
  FeatureMask(int width, int height, int line_width_px, bool fill = false)
      : width_(width), height_(height), line_width_(line_width_px),
        bits_(static_cast<std::size_t>(width) * height, fill ? 1 : 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int line_width_px() const { return line_width_; }

  bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool value = true) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = value ? 1 : 0;
  }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  /// Every pixel whose center lies strictly closer than line_width/2 to the segment.
  void draw_segment(const LineSegment& s) {
    const double r = 0.5 * line_width_;
    const double r2 = r * r;
    const int x_lo = std::max(0, static_cast<int>(std::floor(std::min(s.x0, s.x1) - r)));
    const int x_hi = std::min(width_ - 1, static_cast<int>(std::ceil(std::max(s.x0, s.x1) + r)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(std::min(s.y0, s.y1) - r)));
    const int y_hi = std::min(height_ - 1, static_cast<int>(std::ceil(std::max(s.y0, s.y1) + r)));
    const double dx = s.x1 - s.x0;
    const double dy = s.y1 - s.y0;
    const double len2 = dx * dx + dy * dy;
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        double t = len2 > 0.0 ? ((x - s.x0) * dx + (y - s.y0) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double ex = s.x0 + t * dx - x;
        const double ey = s.y0 + t * dy - y;
        if (ex * ex + ey * ey < r2) set(x, y);
      }
    }
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int line_width_ = 20;
  std::vector<std::uint8_t> bits_;
};

/// Canny edges followed by probabilistic Hough line extraction.
inline std::vector<LineSegment> detect_line_segments(const GrayImage& gray, const MaskParams& params) {
  if (gray.empty()) throw Error(Errc::EmptyImage, "image has zero area");
  // cv::Mat only reads through the header here.
  const cv::Mat src(gray.height, gray.width, CV_8UC1,
                    const_cast<std::uint8_t*>(gray.pixels.data()));
  cv::Mat edges;
  cv::Canny(src, edges, params.canny_lo, params.canny_hi, params.canny_aperture);
  std::vector<cv::Vec4i> lines;
  cv::HoughLinesP(edges, lines, params.hough_rho, params.hough_theta_deg * std::numbers::pi / 180.0,
                  params.hough_threshold, params.hough_min_len, params.hough_max_gap);
  std::vector<LineSegment> out;
  out.reserve(lines.size());
  for (const auto& l : lines) {
    out.push_back({static_cast<double>(l[0]), static_cast<double>(l[1]), static_cast<double>(l[2]),
                   static_cast<double>(l[3])});
  }
  return out;
}

inline FeatureMask rasterize_segments(int width, int height, int line_width,
                                      const std::vector<LineSegment>& segments) {
  FeatureMask mask(width, height, line_width);
  for (const auto& s : segments) mask.draw_segment(s);
  return mask;
}

inline FeatureMask compute_feature_mask(const GrayImage& gray, const MaskParams& params = {}) {
  params.validate();
  const auto segments = detect_line_segments(gray, params);
  return rasterize_segments(gray.width, gray.height, params.line_width, segments);
}

struct FilterResult {
  FrameFeatures features;
  std::vector<std::size_t> kept;  // indices into the input
  bool fallback = false;
};

/// Keeps keypoints whose nearest pixel is set in the mask. Falls back to the unfiltered set when
/// fewer than fallback_min survive.
inline FilterResult filter_keypoints(const FrameFeatures& features, const FeatureMask& mask,
                                     std::size_t fallback_min) {
  FilterResult result;
  result.features.frame_id = features.frame_id;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& kp = features.keypoints[i];
    if (!(kp.u >= 0.0F && kp.v >= 0.0F && kp.u < mask.width() && kp.v < mask.height())) {
      throw Error(Errc::DimensionMismatch,
                  "keypoint (" + std::to_string(kp.u) + "," + std::to_string(kp.v) + ") outside " +
                      std::to_string(mask.width()) + "x" + std::to_string(mask.height()) + " mask");
    }
    const int x = std::min(mask.width() - 1, static_cast<int>(std::lround(kp.u)));
    const int y = std::min(mask.height() - 1, static_cast<int>(std::lround(kp.v)));
    if (mask.at(x, y)) result.kept.push_back(i);
  }
  if (result.kept.size() < fallback_min) {
    result.kept.resize(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) result.kept[i] = i;
    result.features = features;
    result.fallback = true;
    return result;
  }
  result.features.keypoints.reserve(result.kept.size());
  result.features.descriptors.reserve(result.kept.size());
  for (std::size_t i : result.kept) {
    result.features.keypoints.push_back(features.keypoints[i]);
    result.features.descriptors.push_back(features.descriptors[i]);
  }
  return result;
}

}  // namespace rwt
