#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rwt/association.hpp"
#include "rwt/error.hpp"
#include "rwt/geometry.hpp"
#include "rwt/types.hpp"

namespace rwt {

inline void check_time_ordered(std::span<const Pose> poses, const char* what) {
  for (std::size_t i = 1; i < poses.size(); ++i) {
    if (!(poses[i].timestamp > poses[i - 1].timestamp)) {
      throw Error(Errc::DegenerateInput, std::string(what) + " timestamps are not strictly increasing");
    }
  }
}

/// Mutual-nearest timestamp pairing; each pose is used at most once.
inline std::vector<std::pair<Pose, Pose>> associate(std::span<const Pose> est, std::span<const Pose> gt,
                                                    double max_dt) {
  check_time_ordered(est, "estimate");
  check_time_ordered(gt, "ground truth");
  std::vector<double> ta;
  std::vector<double> tb;
  for (const auto& p : est) ta.push_back(p.timestamp);
  for (const auto& p : gt) tb.push_back(p.timestamp);
  std::vector<std::pair<Pose, Pose>> out;
  for (const auto& [i, j] : associate_timestamps(ta, tb, max_dt)) out.emplace_back(est[i], gt[j]);
  if (out.empty()) throw Error(Errc::NoOverlap, "no estimate/ground-truth pairs within " + std::to_string(max_dt) + " s");
  return out;
}

struct AteReport {
  double rmse = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  std::size_t matched_pairs = 0;
  Similarity alignment;

  std::string to_text() const {
    char buf[512];
    const Eigen::Quaterniond q(alignment.R);
    std::snprintf(buf, sizeof(buf),
                  "rmse: %.9f\nmean: %.9f\nmedian: %.9f\nmax: %.9f\nmatched_pairs: %zu\n"
                  "alignment_translation: %.9f %.9f %.9f\nalignment_rotation: %.9f %.9f %.9f %.9f\n"
                  "alignment_scale: %.9f\n",
                  rmse, mean, median, max, matched_pairs, alignment.t.x(), alignment.t.y(), alignment.t.z(),
                  q.x(), q.y(), q.z(), q.w(), alignment.scale);
    return buf;
  }

  /// Tab-separated row: rmse mean median max matched_pairs.
  std::string table_row() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.6f\t%.6f\t%.6f\t%.6f\t%zu", rmse, mean, median, max, matched_pairs);
    return buf;
  }
};

/// Absolute trajectory error on translations after aligning the estimate onto ground truth.
inline AteReport ate_rmse(std::span<const Pose> est, std::span<const Pose> gt, double max_dt = 0.02,
                          bool with_scale = false) {
  const auto pairs = associate(est, gt, max_dt);
  std::vector<Eigen::Vector3d> P;
  std::vector<Eigen::Vector3d> Q;
  for (const auto& [e, g] : pairs) {
    P.push_back(e.translation);
    Q.push_back(g.translation);
  }
  AteReport report;
  report.matched_pairs = pairs.size();
  report.alignment = umeyama_align(P, Q, with_scale);
  std::vector<double> errors;
  double sq = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double e = (Q[i] - report.alignment * P[i]).norm();
    errors.push_back(e);
    sq += e * e;
    sum += e;
    report.max = std::max(report.max, e);
  }
  const double n = static_cast<double>(errors.size());
  report.rmse = std::sqrt(sq / n);
  report.mean = sum / n;
  std::sort(errors.begin(), errors.end());
  const std::size_t mid = errors.size() / 2;
  report.median = errors.size() % 2 == 1 ? errors[mid] : 0.5 * (errors[mid - 1] + errors[mid]);
  return report;
}

/// Shorter-arc spherical interpolation.
inline Eigen::Quaterniond slerp(Eigen::Quaterniond a, Eigen::Quaterniond b, double s) {
  a.normalize();
  b.normalize();
  double d = a.coeffs().dot(b.coeffs());
  if (d < 0.0) {
    b.coeffs() = -b.coeffs();
    d = -d;
  }
  if (d > 1.0 - 1e-12) {
    Eigen::Quaterniond q(a.coeffs() + s * (b.coeffs() - a.coeffs()));
    return q.normalized();
  }
  const double theta = std::acos(std::min(1.0, d));
  const double sin_theta = std::sin(theta);
  const double wa = std::sin((1.0 - s) * theta) / sin_theta;
  const double wb = std::sin(s * theta) / sin_theta;
  Eigen::Quaterniond q(wa * a.coeffs() + wb * b.coeffs());
  return q.normalized();
}

struct InterpolatedTrajectory {
  std::vector<Pose> poses;
  std::vector<bool> clamped;  // query fell outside [first, last] and took the endpoint pose
};

/// Linear translation and slerp rotation between bracketing knots. Queries at a knot return it
/// exactly; queries outside the covered range clamp to the nearest endpoint.
inline InterpolatedTrajectory interpolate_trajectory(std::span<const Pose> sparse,
                                                     std::span<const double> queries) {
  if (sparse.size() < 2) throw Error(Errc::TooFewPoses, "interpolation needs at least 2 poses");
  check_time_ordered(sparse, "sparse trajectory");
  InterpolatedTrajectory out;
  out.poses.reserve(queries.size());
  out.clamped.reserve(queries.size());
  for (double t : queries) {
    Pose p;
    bool clamped = false;
    if (t <= sparse.front().timestamp) {
      clamped = t < sparse.front().timestamp;
      p = sparse.front();
    } else if (t >= sparse.back().timestamp) {
      clamped = t > sparse.back().timestamp;
      p = sparse.back();
    } else {
      const auto it = std::upper_bound(sparse.begin(), sparse.end(), t,
                                       [](double v, const Pose& q) { return v < q.timestamp; });
      const Pose& hi = *it;
      const Pose& lo = *(it - 1);
      if (t == lo.timestamp) {
        p = lo;
      } else {
        const double s = (t - lo.timestamp) / (hi.timestamp - lo.timestamp);
        p.translation = (1.0 - s) * lo.translation + s * hi.translation;
        p.rotation = slerp(lo.rotation, hi.rotation, s);
      }
    }
    p.timestamp = t;
    out.poses.push_back(p);
    out.clamped.push_back(clamped);
  }
  return out;
}

}  // namespace rwt
