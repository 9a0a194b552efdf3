#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rwt/error.hpp"
#include "rwt/geometry.hpp"
#include "rwt/matching.hpp"
#include "rwt/se3.hpp"
#include "rwt/types.hpp"
#include "rwt/vocabulary.hpp"

namespace rwt {

struct TrackerParams {
  KnnParams knn;
  bool mutual_check = false;
  PnpParams pnp;
  BaParams ba;
  std::size_t min_track_inliers = 15;
  std::size_t min_init_points = 50;
  double kf_inlier_ratio = 0.9;
  int kf_max_frames = 20;
  std::size_t local_map_keyframes = 10;
  double depth_scale = kDefaultDepthScale;
  DepthRange depth_range;
  double cull_min_found_ratio = 0.25;
  std::uint32_t cull_min_visible = 8;
  std::size_t cull_recent_keyframes = 3;
  double loop_min_score = 0.3;
  std::size_t reloc_candidates = 5;
};

enum class TrackingStatus { Initializing, Tracking, Lost };

inline const char* to_string(TrackingStatus s) {
  switch (s) {
    case TrackingStatus::Initializing: return "INITIALIZING";
    case TrackingStatus::Tracking: return "TRACKING";
    case TrackingStatus::Lost: return "LOST";
  }
  return "UNKNOWN";
}

struct Observation {
  std::uint64_t keyframe_id = 0;
  std::size_t keypoint_index = 0;
};

struct MapPoint {
  std::uint64_t id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  HierarchicalDescriptor descriptor;
  std::vector<Observation> observations;
  std::uint32_t visible_count = 1;
  std::uint32_t found_count = 1;
  bool bad = false;

  double found_ratio() const {
    return visible_count == 0 ? 1.0 : static_cast<double>(found_count) / visible_count;
  }
};

inline constexpr std::int64_t kNoMapPoint = -1;

struct KeyFrame {
  std::uint64_t id = 0;
  std::uint64_t frame_index = 0;
  double timestamp = 0.0;
  SE3 pose;  // world-to-camera
  FrameFeatures features;
  BowVector bow;
  std::vector<double> depth_m;             // NaN where invalid
  std::vector<std::int64_t> map_points;    // per keypoint, kNoMapPoint if none
};

/// One frame handed to the tracker. depth_raw is parallel to features.keypoints.
struct FrameData {
  std::uint64_t frame_index = 0;
  double timestamp = 0.0;
  FrameFeatures features;
  std::vector<double> depth_raw;
};

struct LoopCandidate {
  std::uint64_t query_keyframe = 0;
  std::uint64_t match_keyframe = 0;
  double score = 0.0;
};

struct TrackResult {
  TrackingStatus status = TrackingStatus::Initializing;
  SE3 pose;  // world-to-camera; meaningful when status is Tracking
  std::size_t matches = 0;
  std::size_t inliers = 0;
  bool keyframe_inserted = false;
  bool relocalized = false;
  std::vector<LoopCandidate> loops;
};

struct TrackerState {
  TrackingStatus status = TrackingStatus::Initializing;
  SE3 last_pose;
  std::uint64_t reference_kf = 0;
  std::vector<std::uint64_t> local_map;
  std::vector<std::uint64_t> keyframes;
};

/// Keyframe insertion policy: tracked inliers fell below a fraction of the reference keyframe's
/// map points, or too many frames passed since the last keyframe.
inline bool need_keyframe(std::size_t tracked_inliers, std::size_t reference_points, int frames_since_keyframe,
                          const TrackerParams& params) {
  return static_cast<double>(tracked_inliers) < params.kf_inlier_ratio * static_cast<double>(reference_points) ||
         frames_since_keyframe >= params.kf_max_frames;
}

/// Sequential RGB-D tracker. Frames are matched to map points by descriptor KNN (reference
/// keyframe first, then the covisible local map); pose from PnP-RANSAC refined by motion-only BA.
class Tracker {
 public:
  Tracker(CameraIntrinsics K, TrackerParams params, const VocabTree* vocabulary = nullptr)
      : K_(K), params_(std::move(params)), vocabulary_(vocabulary) {}

  TrackingStatus status() const { return status_; }
  const std::vector<KeyFrame>& keyframes() const { return keyframes_; }
  const std::vector<MapPoint>& map_points() const { return map_points_; }
  const CameraIntrinsics& intrinsics() const { return K_; }
  const TrackerParams& params() const { return params_; }

  std::size_t alive_map_points() const {
    return static_cast<std::size_t>(
        std::count_if(map_points_.begin(), map_points_.end(), [](const MapPoint& m) { return !m.bad; }));
  }

  TrackerState state() const {
    TrackerState s;
    s.status = status_;
    s.last_pose = last_pose_;
    s.reference_kf = reference_kf_;
    if (!keyframes_.empty()) s.local_map = local_map_points();
    for (const auto& kf : keyframes_) s.keyframes.push_back(kf.id);
    return s;
  }

  /// First keyframe at the origin, map points from every keypoint with usable depth.
  void initialize(const FrameData& frame) {
    std::size_t valid = 0;
    for (std::size_t i = 0; i < frame.features.size(); ++i) {
      if (camera_point(frame, i)) ++valid;
    }
    if (valid < params_.min_init_points) {
      throw Error(Errc::NotEnoughPoints, std::to_string(valid) + " keypoints with valid depth, need " +
                                             std::to_string(params_.min_init_points));
    }
    keyframes_.clear();
    map_points_.clear();
    std::vector<std::int64_t> assoc(frame.features.size(), kNoMapPoint);
    add_keyframe(frame, SE3::identity(), assoc);
    status_ = TrackingStatus::Tracking;
    last_pose_ = SE3::identity();
    frames_since_keyframe_ = 0;
  }

  /// Runs the state machine for one frame.
  TrackResult process(const FrameData& frame) {
    TrackResult result;
    if (status_ == TrackingStatus::Initializing) {
      try {
        initialize(frame);
      } catch (const Error& e) {
        if (e.code() != Errc::NotEnoughPoints) throw;
        result.status = TrackingStatus::Initializing;
        return result;
      }
      result.status = TrackingStatus::Tracking;
      result.pose = last_pose_;
      result.matches = alive_map_points();
      result.inliers = result.matches;
      result.keyframe_inserted = true;
      return result;
    }

    FrameTrack track;
    if (status_ == TrackingStatus::Tracking) {
      track = track_against_map(frame, true);
    } else {
      track = relocalize_frame(frame.features);
      result.relocalized = track.success;
      if (track.success) reference_kf_ = track.reference;
    }
    ++frames_since_keyframe_;
    result.matches = track.matches;
    result.inliers = track.inliers;
    if (!track.success) {
      status_ = TrackingStatus::Lost;
      result.status = status_;
      return result;
    }
    status_ = TrackingStatus::Tracking;
    last_pose_ = track.pose;
    result.status = status_;
    result.pose = track.pose;
    if (rwt::need_keyframe(track.inliers, reference_point_count(), frames_since_keyframe_, params_)) {
      result.loops = insert_keyframe(frame, track.pose, track.assoc);
      result.keyframe_inserted = true;
    }
    return result;
  }

  /// Pose of a frame against the current map without mutating the map. Used for tests and
  /// diagnostics; process() is the normal entry point.
  TrackResult track_frame(const FrameData& frame) {
    TrackResult result;
    const auto track = track_against_map(frame, false);
    result.matches = track.matches;
    result.inliers = track.inliers;
    result.pose = track.pose;
    result.status = track.success ? TrackingStatus::Tracking : TrackingStatus::Lost;
    return result;
  }

  bool need_keyframe(const TrackResult& result) const {
    return result.status == TrackingStatus::Tracking &&
           rwt::need_keyframe(result.inliers, reference_point_count(), frames_since_keyframe_, params_);
  }

  /// Candidate retrieval by BoW score (or recency without a vocabulary), then KNN + PnP on each
  /// candidate in order. Does not change tracker state.
  std::optional<SE3> relocalize(const FrameFeatures& features) const {
    const auto track = relocalize_frame(features);
    if (!track.success) return std::nullopt;
    return track.pose;
  }

  /// Adds a keyframe at `pose` (world-to-camera). `assoc` maps keypoints to existing map points.
  /// Returns loop candidates found for the new keyframe.
  std::vector<LoopCandidate> insert_keyframe(const FrameData& frame, const SE3& pose,
                                             const std::vector<std::int64_t>& assoc) {
    const auto kf_id = add_keyframe(frame, pose, assoc);
    cull_map_points(kf_id);
    frames_since_keyframe_ = 0;
    return detect_loops(kf_id);
  }

  /// Keyframes sharing map points with `kf_id`, by descending shared count (lower id on ties).
  std::vector<std::pair<std::uint64_t, std::size_t>> covisible_keyframes(std::uint64_t kf_id) const {
    std::map<std::uint64_t, std::size_t> shared;
    for (std::int64_t mp : keyframes_[kf_id].map_points) {
      if (mp == kNoMapPoint || map_points_[static_cast<std::size_t>(mp)].bad) continue;
      std::set<std::uint64_t> seen;
      for (const auto& obs : map_points_[static_cast<std::size_t>(mp)].observations) {
        if (obs.keyframe_id != kf_id && seen.insert(obs.keyframe_id).second) ++shared[obs.keyframe_id];
      }
    }
    std::vector<std::pair<std::uint64_t, std::size_t>> out(shared.begin(), shared.end());
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
  }

  // Test hook: direct counter manipulation for culling checks.
  MapPoint& map_point(std::uint64_t id) { return map_points_.at(id); }

 private:
  struct FrameTrack {
    bool success = false;
    SE3 pose;
    std::size_t matches = 0;
    std::size_t inliers = 0;
    std::vector<std::int64_t> assoc;  // per keypoint: inlier map point or kNoMapPoint
    std::uint64_t reference = 0;       // keyframe a relocalization succeeded against
  };

  std::optional<Eigen::Vector3d> camera_point(const FrameData& frame, std::size_t i) const {
    if (i >= frame.depth_raw.size()) return std::nullopt;
    const auto& kp = frame.features.keypoints[i];
    return try_backproject(kp.u, kp.v, frame.depth_raw[i], K_, params_.depth_scale, params_.depth_range);
  }

  std::size_t reference_point_count() const {
    if (keyframes_.empty()) return 0;
    std::size_t n = 0;
    for (std::int64_t mp : keyframes_[reference_kf_].map_points) {
      if (mp != kNoMapPoint && !map_points_[static_cast<std::size_t>(mp)].bad) ++n;
    }
    return n;
  }

  std::vector<std::uint64_t> keyframe_points(std::uint64_t kf_id) const {
    std::vector<std::uint64_t> out;
    for (std::int64_t mp : keyframes_[kf_id].map_points) {
      if (mp != kNoMapPoint && !map_points_[static_cast<std::size_t>(mp)].bad) {
        out.push_back(static_cast<std::uint64_t>(mp));
      }
    }
    return out;
  }

  /// Map points of the reference keyframe and its most covisible neighbours, ascending by id.
  std::vector<std::uint64_t> local_map_points() const {
    std::set<std::uint64_t> ids;
    for (auto id : keyframe_points(reference_kf_)) ids.insert(id);
    const auto covis = covisible_keyframes(reference_kf_);
    for (std::size_t i = 0; i < covis.size() && i < params_.local_map_keyframes; ++i) {
      for (auto id : keyframe_points(covis[i].first)) ids.insert(id);
    }
    return {ids.begin(), ids.end()};
  }

  /// Descriptor matches from query keypoints to candidate map points, at most one keypoint per
  /// map point (the closest wins).
  std::vector<std::pair<std::size_t, std::uint64_t>> match_to_points(
      const FrameFeatures& features, const std::vector<std::size_t>& query_idx,
      const std::vector<std::uint64_t>& candidates) const {
    const std::size_t needed = params_.knn.ratio_test ? std::max<std::size_t>(params_.knn.k, 2) : 1;
    if (candidates.size() < needed || query_idx.empty()) return {};
    std::vector<HierarchicalDescriptor> A;
    A.reserve(query_idx.size());
    for (auto i : query_idx) A.push_back(features.descriptors[i]);
    std::vector<HierarchicalDescriptor> B;
    B.reserve(candidates.size());
    for (auto id : candidates) B.push_back(map_points_[id].descriptor);
    const auto matches = match_descriptors(A, B, params_.knn, params_.mutual_check);
    std::map<std::size_t, const Match*> best_for_point;
    for (const auto& m : matches) {
      auto [it, inserted] = best_for_point.try_emplace(m.index_b, &m);
      if (!inserted && m.distance < it->second->distance) it->second = &m;
    }
    std::vector<std::pair<std::size_t, std::uint64_t>> out;
    for (const auto& [b, m] : best_for_point) out.emplace_back(query_idx[m->index_a], candidates[b]);
    std::sort(out.begin(), out.end());
    return out;
  }

  Correspondence correspondence(const FrameFeatures& f, std::size_t kp, std::uint64_t mp) const {
    Correspondence c;
    c.point = map_points_[mp].position;
    c.pixel = Eigen::Vector2d(f.keypoints[kp].u, f.keypoints[kp].v);
    return c;
  }

  FrameTrack track_against_map(const FrameData& frame, bool update_counters) {
    FrameTrack out;
    const auto& f = frame.features;
    out.assoc.assign(f.size(), kNoMapPoint);
    std::vector<std::size_t> all(f.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

    // Stage 1: reference keyframe.
    const auto ref_points = keyframe_points(reference_kf_);
    const auto stage1 = match_to_points(f, all, ref_points);
    out.matches = stage1.size();
    if (stage1.size() < 4) return out;
    std::vector<Correspondence> corrs;
    for (const auto& [kp, mp] : stage1) corrs.push_back(correspondence(f, kp, mp));
    PnpResult pnp;
    try {
      pnp = pnp_ransac(corrs, K_, params_.pnp);
    } catch (const Error& e) {
      if (e.code() != Errc::NotEnoughInliers && e.code() != Errc::DegenerateConfiguration) throw;
      return out;
    }

    std::vector<std::pair<std::size_t, std::uint64_t>> tracked;
    std::set<std::uint64_t> used;
    for (std::size_t i = 0; i < stage1.size(); ++i) {
      if (!pnp.inliers[i]) continue;
      tracked.push_back(stage1[i]);
      used.insert(stage1[i].second);
    }

    // Stage 2: remaining local map against keypoints not yet associated.
    const auto local = local_map_points();
    std::vector<std::uint64_t> remaining;
    for (auto id : local) {
      if (!used.count(id)) remaining.push_back(id);
    }
    std::vector<bool> taken(f.size(), false);
    for (const auto& [kp, mp] : tracked) taken[kp] = true;
    std::vector<std::size_t> free_kps;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!taken[i]) free_kps.push_back(i);
    }
    const auto stage2 = match_to_points(f, free_kps, remaining);
    out.matches += stage2.size();
    tracked.insert(tracked.end(), stage2.begin(), stage2.end());

    corrs.clear();
    for (const auto& [kp, mp] : tracked) corrs.push_back(correspondence(f, kp, mp));
    BaResult ba;
    try {
      ba = motion_only_ba(pnp.pose, corrs, K_, params_.ba);
    } catch (const Error& e) {
      if (e.code() != Errc::NumericalFailure) throw;
      return out;
    }
    out.pose = ba.pose;
    out.inliers = ba.inlier_count;
    out.success = ba.inlier_count >= params_.min_track_inliers;

    if (out.success) {
      for (std::size_t i = 0; i < tracked.size(); ++i) {
        if (ba.inliers[i]) out.assoc[tracked[i].first] = static_cast<std::int64_t>(tracked[i].second);
      }
      if (update_counters) update_visibility(local, out.pose, out.assoc);
    }
    return out;
  }

  void update_visibility(const std::vector<std::uint64_t>& local, const SE3& pose,
                         const std::vector<std::int64_t>& assoc) {
    for (auto id : local) {
      const Eigen::Vector3d pc = pose * map_points_[id].position;
      if (pc.z() <= 0.0) continue;
      const Eigen::Vector2d px = project(pc, K_);
      if (K_.contains(px.x(), px.y())) ++map_points_[id].visible_count;
    }
    for (std::int64_t mp : assoc) {
      if (mp != kNoMapPoint) ++map_points_[static_cast<std::size_t>(mp)].found_count;
    }
  }

  FrameTrack relocalize_frame(const FrameFeatures& features) const {
    FrameTrack out;
    out.assoc.assign(features.size(), kNoMapPoint);
    if (keyframes_.empty() || features.empty()) return out;

    std::vector<std::uint64_t> order;
    if (vocabulary_ != nullptr && !vocabulary_->empty()) {
      const auto bow = transform(features.descriptors, *vocabulary_);
      std::vector<std::pair<double, std::uint64_t>> scored;
      for (const auto& kf : keyframes_) scored.emplace_back(similarity(bow, kf.bow), kf.id);
      std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      for (const auto& s : scored) order.push_back(s.second);
    } else {
      for (auto it = keyframes_.rbegin(); it != keyframes_.rend(); ++it) order.push_back(it->id);
    }
    if (order.size() > params_.reloc_candidates) order.resize(params_.reloc_candidates);

    std::vector<std::size_t> all(features.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    for (auto kf_id : order) {
      const auto matches = match_to_points(features, all, keyframe_points(kf_id));
      out.matches = std::max(out.matches, matches.size());
      if (matches.size() < 4) continue;
      std::vector<Correspondence> corrs;
      for (const auto& [kp, mp] : matches) corrs.push_back(correspondence(features, kp, mp));
      try {
        const auto pnp = pnp_ransac(corrs, K_, params_.pnp);
        const auto ba = motion_only_ba(pnp.pose, corrs, K_, params_.ba);
        if (ba.inlier_count < params_.min_track_inliers) continue;
        out.success = true;
        out.pose = ba.pose;
        out.inliers = ba.inlier_count;
        out.matches = matches.size();
        for (std::size_t i = 0; i < matches.size(); ++i) {
          if (ba.inliers[i]) out.assoc[matches[i].first] = static_cast<std::int64_t>(matches[i].second);
        }
        out.reference = kf_id;
        return out;
      } catch (const Error& e) {
        if (e.code() != Errc::NotEnoughInliers && e.code() != Errc::DegenerateConfiguration &&
            e.code() != Errc::NumericalFailure) {
          throw;
        }
      }
    }
    return out;
  }

  /// Medoid-like choice: the observation descriptor with the smallest median distance to the
  /// others.
  void update_descriptor(MapPoint& mp) const {
    std::vector<const HierarchicalDescriptor*> descs;
    for (const auto& obs : mp.observations) {
      descs.push_back(&keyframes_[obs.keyframe_id].features.descriptors[obs.keypoint_index]);
    }
    if (descs.empty()) return;
    if (descs.size() <= 2) {
      mp.descriptor = *descs.front();
      return;
    }
    std::size_t best = 0;
    double best_median = std::numeric_limits<double>::infinity();
    std::vector<double> dists(descs.size());
    for (std::size_t i = 0; i < descs.size(); ++i) {
      for (std::size_t j = 0; j < descs.size(); ++j) dists[j] = distance(*descs[i], *descs[j]);
      std::vector<double> tmp = dists;
      std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(tmp.size() / 2), tmp.end());
      const double median = tmp[tmp.size() / 2];
      if (median < best_median) {
        best_median = median;
        best = i;
      }
    }
    mp.descriptor = *descs[best];
  }

  std::uint64_t add_keyframe(const FrameData& frame, const SE3& pose, const std::vector<std::int64_t>& assoc) {
    KeyFrame kf;
    kf.id = keyframes_.size();
    kf.frame_index = frame.frame_index;
    kf.timestamp = frame.timestamp;
    kf.pose = pose;
    kf.features = frame.features;
    kf.depth_m.assign(frame.features.size(), std::numeric_limits<double>::quiet_NaN());
    kf.map_points.assign(frame.features.size(), kNoMapPoint);
    if (vocabulary_ != nullptr && !vocabulary_->empty()) kf.bow = transform(kf.features.descriptors, *vocabulary_);
    const SE3 T_wc = pose.inverse();
    std::vector<std::size_t> touched;
    std::vector<std::uint64_t> created;
    for (std::size_t i = 0; i < frame.features.size(); ++i) {
      const auto pc = camera_point(frame, i);
      if (pc) kf.depth_m[i] = pc->z();
      if (i < assoc.size() && assoc[i] != kNoMapPoint) {
        const auto mp = static_cast<std::size_t>(assoc[i]);
        if (map_points_[mp].bad) continue;
        kf.map_points[i] = assoc[i];
        map_points_[mp].observations.push_back({kf.id, i});
        touched.push_back(mp);
      } else if (pc) {
        MapPoint mp;
        mp.id = map_points_.size();
        mp.position = T_wc * *pc;
        mp.descriptor = frame.features.descriptors[i];
        mp.observations.push_back({kf.id, i});
        kf.map_points[i] = static_cast<std::int64_t>(mp.id);
        map_points_.push_back(std::move(mp));
      }
    }
    keyframes_.push_back(std::move(kf));
    for (auto mp : touched) update_descriptor(map_points_[mp]);
    reference_kf_ = keyframes_.back().id;
    return keyframes_.back().id;
  }

  /// Drops map points with found/visible below the threshold when they are either well sampled
  /// (visible >= cull_min_visible) or no longer observed by the most recent keyframes.
  void cull_map_points(std::uint64_t newest_kf) {
    const std::uint64_t recent_from =
        newest_kf + 1 >= params_.cull_recent_keyframes ? newest_kf + 1 - params_.cull_recent_keyframes : 0;
    for (auto& mp : map_points_) {
      if (mp.bad || mp.found_ratio() >= params_.cull_min_found_ratio) continue;
      const bool recent = std::any_of(mp.observations.begin(), mp.observations.end(),
                                      [&](const Observation& o) { return o.keyframe_id >= recent_from; });
      if (mp.visible_count < params_.cull_min_visible && recent) continue;
      mp.bad = true;
      for (const auto& obs : mp.observations) keyframes_[obs.keyframe_id].map_points[obs.keypoint_index] = kNoMapPoint;
      mp.observations.clear();
    }
  }

  std::vector<LoopCandidate> detect_loops(std::uint64_t kf_id) const {
    std::vector<LoopCandidate> out;
    if (vocabulary_ == nullptr || vocabulary_->empty()) return out;
    std::set<std::uint64_t> neighbours{kf_id};
    for (const auto& [id, count] : covisible_keyframes(kf_id)) neighbours.insert(id);
    for (const auto& kf : keyframes_) {
      if (neighbours.count(kf.id)) continue;
      const double s = similarity(keyframes_[kf_id].bow, kf.bow);
      if (s >= params_.loop_min_score) out.push_back({kf_id, kf.id, s});
    }
    return out;
  }

  CameraIntrinsics K_;
  TrackerParams params_;
  const VocabTree* vocabulary_ = nullptr;

  TrackingStatus status_ = TrackingStatus::Initializing;
  SE3 last_pose_;
  std::uint64_t reference_kf_ = 0;
  int frames_since_keyframe_ = 0;
  std::vector<KeyFrame> keyframes_;
  std::vector<MapPoint> map_points_;
};

}  // namespace rwt
