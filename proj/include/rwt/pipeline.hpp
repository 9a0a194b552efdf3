#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "rwt/config.hpp"
#include "rwt/dataset_io.hpp"
#include "rwt/descriptor.hpp"
#include "rwt/error.hpp"
#include "rwt/evaluation.hpp"
#include "rwt/feature_mask.hpp"
#include "rwt/tracking.hpp"
#include "rwt/vocabulary.hpp"

namespace rwt {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitDataError = 3,
  kExitNotInitialized = 4,
};

/// Log verbosity from RWT_VERBOSITY: 0 quiet, 1 info (default), 2 debug.
inline int log_level() {
  const char* v = std::getenv("RWT_VERBOSITY");
  if (v == nullptr) return 1;
  return std::atoi(v);
}

struct RunConfig {
  fs::path dataset_dir;
  fs::path features_dir;
  std::optional<fs::path> vocab_path;
  fs::path output_dir = "rwt_out";
  int frame_stride = 5;
  DescriptorSlices slices;
  bool use_mask = true;
  bool use_knn_ratio = true;
  std::uint64_t seed = 42;
  double max_dt = kDefaultMaxDt;
  std::size_t fallback_min = 100;
  double min_tracked_fraction = 0.6;
  MaskParams mask;
  TrackerParams tracker;
  // Camera overrides; unset values come from the sequence's camera.cfg.
  std::optional<double> fx, fy, cx, cy, depth_scale;
  std::optional<int> width, height;

  void validate() const {
    if (!slices.use_coarse && !slices.use_fine) {
      throw Error(Errc::ConfigError, "use_coarse and use_fine cannot both be false");
    }
    if (frame_stride < 1) throw Error(Errc::ConfigError, "frame_stride must be >= 1");
    mask.validate();
    if (tracker.knn.k < 1) throw Error(Errc::ConfigError, "knn_k must be >= 1");
    if (!(tracker.knn.ratio > 0.0)) throw Error(Errc::ConfigError, "knn_ratio must be positive");
  }
};

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}
inline std::string fmt(bool v) { return v ? "true" : "false"; }
inline std::string fmt(long long v) { return std::to_string(v); }

}  // namespace detail

/// Field table shared by parsing and manifest serialization so the two cannot drift apart.
struct ConfigField {
  std::string key;
  std::function<void(RunConfig&, const KeyValueConfig&)> read;
  std::function<std::optional<std::string>(const RunConfig&)> write;
};

inline const std::vector<ConfigField>& config_fields() {
  using detail::fmt;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    const auto add_double = [&f](std::string key, auto member) {
      f.push_back({key,
                   [key, member](RunConfig& c, const KeyValueConfig& kv) {
                     if (auto v = kv.get_double(key)) member(c) = *v;
                   },
                   [member](const RunConfig& c) -> std::optional<std::string> {
                     return fmt(static_cast<double>(member(const_cast<RunConfig&>(c))));
                   }});
    };
    const auto add_int = [&f](std::string key, auto member) {
      f.push_back({key,
                   [key, member](RunConfig& c, const KeyValueConfig& kv) {
                     if (auto v = kv.get_int(key)) {
                       if (*v < 0) throw Error(Errc::ConfigError, key + " must be non-negative");
                       member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(*v);
                     }
                   },
                   [member](const RunConfig& c) -> std::optional<std::string> {
                     return fmt(static_cast<long long>(member(const_cast<RunConfig&>(c))));
                   }});
    };
    const auto add_bool = [&f](std::string key, auto member) {
      f.push_back({key,
                   [key, member](RunConfig& c, const KeyValueConfig& kv) {
                     if (auto v = kv.get_bool(key)) member(c) = *v;
                   },
                   [member](const RunConfig& c) -> std::optional<std::string> {
                     return fmt(static_cast<bool>(member(const_cast<RunConfig&>(c))));
                   }});
    };
    const auto add_path = [&f](std::string key, auto member) {
      f.push_back({key,
                   [key, member](RunConfig& c, const KeyValueConfig& kv) {
                     if (auto v = kv.get_string(key)) member(c) = *v;
                   },
                   [member](const RunConfig& c) -> std::optional<std::string> {
                     return member(const_cast<RunConfig&>(c)).string();
                   }});
    };
    const auto add_opt_double = [&f](std::string key, auto member) {
      f.push_back({key,
                   [key, member](RunConfig& c, const KeyValueConfig& kv) {
                     if (auto v = kv.get_double(key)) member(c) = *v;
                   },
                   [member](const RunConfig& c) -> std::optional<std::string> {
                     const auto& v = member(const_cast<RunConfig&>(c));
                     if (!v) return std::nullopt;
                     return fmt(static_cast<double>(*v));
                   }});
    };
    const auto add_opt_int = [&f](std::string key, auto member) {
      f.push_back({key,
                   [key, member](RunConfig& c, const KeyValueConfig& kv) {
                     if (auto v = kv.get_int(key)) member(c) = static_cast<int>(*v);
                   },
                   [member](const RunConfig& c) -> std::optional<std::string> {
                     const auto& v = member(const_cast<RunConfig&>(c));
                     if (!v) return std::nullopt;
                     return fmt(static_cast<long long>(*v));
                   }});
    };

    add_path("dataset_dir", [](RunConfig& c) -> fs::path& { return c.dataset_dir; });
    add_path("features_dir", [](RunConfig& c) -> fs::path& { return c.features_dir; });
    add_path("output_dir", [](RunConfig& c) -> fs::path& { return c.output_dir; });
    f.push_back({"vocab_path",
                 [](RunConfig& c, const KeyValueConfig& kv) {
                   if (auto v = kv.get_string("vocab_path")) {
                     if (v->empty()) {
                       c.vocab_path.reset();
                     } else {
                       c.vocab_path = *v;
                     }
                   }
                 },
                 [](const RunConfig& c) -> std::optional<std::string> {
                   if (!c.vocab_path) return std::nullopt;
                   return c.vocab_path->string();
                 }});
    add_int("frame_stride", [](RunConfig& c) -> int& { return c.frame_stride; });
    add_bool("use_coarse", [](RunConfig& c) -> bool& { return c.slices.use_coarse; });
    add_bool("use_fine", [](RunConfig& c) -> bool& { return c.slices.use_fine; });
    add_bool("use_mask", [](RunConfig& c) -> bool& { return c.use_mask; });
    add_bool("use_knn_ratio", [](RunConfig& c) -> bool& { return c.use_knn_ratio; });
    add_int("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; });
    add_double("max_dt", [](RunConfig& c) -> double& { return c.max_dt; });
    add_int("fallback_min", [](RunConfig& c) -> std::size_t& { return c.fallback_min; });
    add_double("min_tracked_fraction", [](RunConfig& c) -> double& { return c.min_tracked_fraction; });
    add_double("canny_lo", [](RunConfig& c) -> double& { return c.mask.canny_lo; });
    add_double("canny_hi", [](RunConfig& c) -> double& { return c.mask.canny_hi; });
    add_int("hough_threshold", [](RunConfig& c) -> int& { return c.mask.hough_threshold; });
    add_double("hough_min_len", [](RunConfig& c) -> double& { return c.mask.hough_min_len; });
    add_double("hough_max_gap", [](RunConfig& c) -> double& { return c.mask.hough_max_gap; });
    add_int("line_width", [](RunConfig& c) -> int& { return c.mask.line_width; });
    add_int("knn_k", [](RunConfig& c) -> std::size_t& { return c.tracker.knn.k; });
    add_double("knn_ratio", [](RunConfig& c) -> double& { return c.tracker.knn.ratio; });
    add_bool("mutual_check", [](RunConfig& c) -> bool& { return c.tracker.mutual_check; });
    add_int("pnp_iterations", [](RunConfig& c) -> int& { return c.tracker.pnp.iterations; });
    add_double("pnp_reproj_thresh", [](RunConfig& c) -> double& { return c.tracker.pnp.reproj_thresh_px; });
    add_int("pnp_min_inliers", [](RunConfig& c) -> std::size_t& { return c.tracker.pnp.min_inliers; });
    add_double("huber_delta", [](RunConfig& c) -> double& { return c.tracker.ba.huber_delta_px; });
    add_int("ba_max_iters", [](RunConfig& c) -> int& { return c.tracker.ba.max_iters; });
    add_int("min_track_inliers", [](RunConfig& c) -> std::size_t& { return c.tracker.min_track_inliers; });
    add_int("min_init_points", [](RunConfig& c) -> std::size_t& { return c.tracker.min_init_points; });
    add_double("kf_inlier_ratio", [](RunConfig& c) -> double& { return c.tracker.kf_inlier_ratio; });
    add_int("kf_max_frames", [](RunConfig& c) -> int& { return c.tracker.kf_max_frames; });
    add_int("local_map_keyframes", [](RunConfig& c) -> std::size_t& { return c.tracker.local_map_keyframes; });
    add_double("depth_min", [](RunConfig& c) -> double& { return c.tracker.depth_range.min_m; });
    add_double("depth_max", [](RunConfig& c) -> double& { return c.tracker.depth_range.max_m; });
    add_double("loop_min_score", [](RunConfig& c) -> double& { return c.tracker.loop_min_score; });
    add_opt_double("fx", [](RunConfig& c) -> std::optional<double>& { return c.fx; });
    add_opt_double("fy", [](RunConfig& c) -> std::optional<double>& { return c.fy; });
    add_opt_double("cx", [](RunConfig& c) -> std::optional<double>& { return c.cx; });
    add_opt_double("cy", [](RunConfig& c) -> std::optional<double>& { return c.cy; });
    add_opt_int("width", [](RunConfig& c) -> std::optional<int>& { return c.width; });
    add_opt_int("height", [](RunConfig& c) -> std::optional<int>& { return c.height; });
    add_opt_double("depth_scale", [](RunConfig& c) -> std::optional<double>& { return c.depth_scale; });
    return f;
  }();
  return fields;
}

/// Applies every recognized key; unknown keys are a configuration error. "version" is accepted so
/// that run manifests load back as configs.
inline void apply_config(RunConfig& config, const KeyValueConfig& kv) {
  for (const auto& [key, value] : kv.values()) {
    if (key == "version") continue;
    const bool known = std::any_of(config_fields().begin(), config_fields().end(),
                                   [&](const ConfigField& f) { return f.key == key; });
    if (!known) throw Error(Errc::ConfigError, "unknown configuration key '" + key + "'");
  }
  for (const auto& field : config_fields()) field.read(config, kv);
}

inline KeyValueConfig to_key_values(const RunConfig& config) {
  KeyValueConfig kv;
  for (const auto& field : config_fields()) {
    if (auto v = field.write(config)) kv.set(field.key, *v);
  }
  return kv;
}

/// Everything needed to reproduce a run: configuration, seed and library version.
inline std::string manifest_text(const RunConfig& config) {
  auto kv = to_key_values(config);
  kv.set("version", kVersion);
  return "# rwt run manifest\n" + kv.to_string();
}

struct FrameLog {
  double timestamp = 0.0;
  TrackingStatus status = TrackingStatus::Initializing;
  std::size_t inliers = 0;
  std::size_t matches = 0;
  std::optional<Pose> pose;  // camera-to-world
};

struct RunOutcome {
  int exit_code = kExitOk;
  std::string message;
  std::vector<FrameLog> frames;
  std::vector<std::pair<double, LoopCandidate>> loops;
  std::vector<Pose> trajectory;  // interpolated to every sequence frame
  std::size_t processed = 0;
  std::size_t tracked = 0;
  bool initialized = false;
  std::optional<AteReport> ate;

  double tracked_fraction() const {
    return processed == 0 ? 0.0 : static_cast<double>(tracked) / static_cast<double>(processed);
  }
  /// Tracking never initialized, or tracked too small a share of the processed frames.
  bool failed(double min_fraction) const { return !initialized || tracked_fraction() < min_fraction; }
};

inline fs::path feature_path_for(const RunConfig& config, const SequenceEntry& entry) {
  return config.features_dir / (entry.rgb_path.stem().string() + ".rwtf");
}

inline TrackerParams effective_tracker_params(const RunConfig& config, double depth_scale) {
  TrackerParams p = config.tracker;
  p.knn.ratio_test = config.use_knn_ratio;
  if (!config.use_knn_ratio) p.knn.k = 1;
  p.pnp.seed = config.seed;
  p.depth_scale = depth_scale;
  return p;
}

/// Runs tracking over the sequence without touching the output directory.
inline RunOutcome run_sequence(const RunConfig& config) {
  RunOutcome outcome;
  config.validate();
  if (!fs::is_directory(config.features_dir)) {
    throw Error(Errc::MissingFile, "features directory not found: " + config.features_dir.string());
  }
  SequenceIndex seq = load_tum_sequence(config.dataset_dir, config.max_dt);
  CameraIntrinsics K = seq.intrinsics;
  K.fx = config.fx.value_or(K.fx);
  K.fy = config.fy.value_or(K.fy);
  K.cx = config.cx.value_or(K.cx);
  K.cy = config.cy.value_or(K.cy);
  K.width = config.width.value_or(K.width);
  K.height = config.height.value_or(K.height);
  const double depth_scale = config.depth_scale.value_or(seq.depth_scale);
  if (!K.valid()) throw Error(Errc::ConfigError, "camera intrinsics are invalid");
  if (!(depth_scale > 0.0)) throw Error(Errc::ConfigError, "depth_scale must be positive");

  std::optional<VocabTree> vocab;
  if (config.vocab_path) vocab = load_vocab(*config.vocab_path);
  Tracker tracker(K, effective_tracker_params(config, depth_scale), vocab ? &*vocab : nullptr);

  std::vector<Pose> knots;
  for (std::size_t i = 0; i < seq.entries.size(); i += static_cast<std::size_t>(config.frame_stride)) {
    const auto& entry = seq.entries[i];
    FrameData frame;
    frame.frame_index = i;
    frame.timestamp = entry.timestamp;
    const auto feature_file = feature_path_for(config, entry);
    if (!fs::exists(feature_file)) throw Error(Errc::MissingFile, "feature file not found: " + feature_file.string());
    FrameFeatures features = read_feature_file(feature_file, i);
    auto depth = load_keypoint_depths(entry.depth_path, features);
    prepare_descriptors(features, config.slices);
    if (config.use_mask) {
      const auto gray = load_gray_image(entry.rgb_path);
      const auto mask = compute_feature_mask(gray, config.mask);
      auto filtered = filter_keypoints(features, mask, config.fallback_min);
      std::vector<double> kept_depth;
      kept_depth.reserve(filtered.kept.size());
      for (auto k : filtered.kept) kept_depth.push_back(depth[k]);
      features = std::move(filtered.features);
      depth = std::move(kept_depth);
    }
    frame.features = std::move(features);
    frame.depth_raw = std::move(depth);

    const auto result = tracker.process(frame);
    ++outcome.processed;
    FrameLog log;
    log.timestamp = entry.timestamp;
    log.status = result.status;
    log.inliers = result.inliers;
    log.matches = result.matches;
    if (result.status == TrackingStatus::Tracking) {
      ++outcome.tracked;
      outcome.initialized = true;
      log.pose = to_pose(result.pose.inverse(), entry.timestamp);
      knots.push_back(*log.pose);
    }
    for (const auto& loop : result.loops) outcome.loops.emplace_back(entry.timestamp, loop);
    if (log_level() >= 2) {
      std::cerr << "frame " << i << ' ' << to_string(result.status) << " matches=" << result.matches
                << " inliers=" << result.inliers << '\n';
    }
    outcome.frames.push_back(std::move(log));
  }

  if (!outcome.initialized) {
    outcome.exit_code = kExitNotInitialized;
    outcome.message = "tracking never initialized";
    return outcome;
  }
  std::vector<double> all_ts;
  for (const auto& e : seq.entries) all_ts.push_back(e.timestamp);
  if (knots.size() == 1) {
    for (double t : all_ts) {
      Pose p = knots.front();
      p.timestamp = t;
      outcome.trajectory.push_back(p);
    }
  } else {
    outcome.trajectory = interpolate_trajectory(knots, all_ts).poses;
  }

  std::vector<Pose> gt;
  for (const auto& e : seq.entries) {
    if (e.gt_pose) gt.push_back(*e.gt_pose);
  }
  if (gt.size() >= 3) {
    try {
      outcome.ate = ate_rmse(outcome.trajectory, gt, config.max_dt);
    } catch (const Error& e) {
      if (e.code() != Errc::NoOverlap && e.code() != Errc::DegenerateInput) throw;
    }
  }
  return outcome;
}

inline void write_run_artifacts(const RunConfig& config, const RunOutcome& outcome) {
  fs::create_directories(config.output_dir);
  {
    std::ofstream out(config.output_dir / "manifest.cfg", std::ios::trunc);
    out << manifest_text(config);
  }
  {
    std::ofstream out(config.output_dir / "tracking.log", std::ios::trunc);
    out << "# timestamp status inliers matches tx ty tz qx qy qz qw\n";
    for (const auto& f : outcome.frames) {
      out << detail::format_double(f.timestamp) << ' ' << to_string(f.status) << ' ' << f.inliers << ' '
          << f.matches << ' ';
      if (f.pose) {
        const auto line = format_pose(*f.pose);
        out << line.substr(line.find(' ') + 1) << '\n';
      } else {
        out << "- - - - - - -\n";
      }
    }
  }
  {
    std::ofstream out(config.output_dir / "loops.log", std::ios::trunc);
    out << "# timestamp query_keyframe match_keyframe score\n";
    for (const auto& [t, loop] : outcome.loops) {
      out << detail::format_double(t) << ' ' << loop.query_keyframe << ' ' << loop.match_keyframe << ' '
          << detail::format_double(loop.score) << '\n';
    }
  }
  if (!outcome.trajectory.empty()) write_trajectory(config.output_dir / "trajectory.txt", outcome.trajectory);
  if (outcome.ate) {
    std::ofstream out(config.output_dir / "ate.txt", std::ios::trunc);
    out << outcome.ate->to_text();
  }
}

inline int exit_code_for(const Error& e) {
  return e.code() == Errc::ConfigError ? kExitConfigError : kExitDataError;
}

/// `run`: track a sequence and write trajectory.txt, tracking.log, loops.log, manifest.cfg and,
/// with ground truth, ate.txt.
inline int cmd_run(const RunConfig& config, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto outcome = run_sequence(config);
    if (outcome.exit_code == kExitNotInitialized) {
      write_run_artifacts(config, outcome);
      err << "error: " << outcome.message << '\n';
      return outcome.exit_code;
    }
    write_run_artifacts(config, outcome);
    if (log_level() >= 1) {
      out << "frames processed: " << outcome.processed << ", tracked: " << outcome.tracked << " ("
          << static_cast<int>(100.0 * outcome.tracked_fraction() + 0.5) << "%)\n";
      if (outcome.ate) out << outcome.ate->to_text();
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDataError;
  }
}

struct AblationRow {
  std::string name;
  RunConfig config;
  std::optional<double> rmse;  // empty when the run failed or had no ground truth
  std::string failure;
};

/// The five descriptor/mask/matcher configurations compared in the ablation table.
inline std::vector<AblationRow> ablation_grid(const RunConfig& base) {
  std::vector<AblationRow> rows;
  const auto make = [&](std::string name, bool coarse, bool fine, bool mask, bool ratio) {
    AblationRow row;
    row.name = std::move(name);
    row.config = base;
    row.config.slices = {coarse, fine};
    row.config.use_mask = mask;
    row.config.use_knn_ratio = ratio;
    row.config.output_dir = base.output_dir / row.name;
    rows.push_back(std::move(row));
  };
  make("coarse_only", true, false, true, true);
  make("fine_only", false, true, true, true);
  make("no_mask", true, true, false, true);
  make("no_ratio_test", true, true, true, false);
  make("full", true, true, true, true);
  return rows;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "config\tuse_coarse\tuse_fine\tuse_mask\tuse_knn_ratio\tate_rmse\n";
  for (const auto& r : rows) {
    out << r.name << '\t' << r.config.slices.use_coarse << '\t' << r.config.slices.use_fine << '\t'
        << r.config.use_mask << '\t' << r.config.use_knn_ratio << '\t';
    if (r.rmse) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", *r.rmse);
      out << buf;
    } else {
      out << '-';
    }
    out << '\n';
  }
  return out.str();
}

/// `ablate`: runs every grid cell; a failing cell is reported as "-" and does not stop the grid.
inline int cmd_ablate(const RunConfig& base, std::vector<AblationRow>* rows_out = nullptr,
                      std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    RunConfig probe = base;
    probe.validate();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  auto rows = ablation_grid(base);
  for (auto& row : rows) {
    try {
      const auto outcome = run_sequence(row.config);
      write_run_artifacts(row.config, outcome);
      if (outcome.failed(row.config.min_tracked_fraction)) {
        row.failure = outcome.initialized ? "tracked fraction below threshold" : "never initialized";
      } else if (!outcome.ate) {
        row.failure = "no ground truth";
      } else {
        row.rmse = outcome.ate->rmse;
      }
    } catch (const Error& e) {
      row.failure = e.what();
    }
    if (!row.failure.empty() && log_level() >= 1) err << row.name << ": " << row.failure << '\n';
  }
  const auto table = ablation_table(rows);
  fs::create_directories(base.output_dir);
  std::ofstream(base.output_dir / "ablation.tsv", std::ios::trunc) << table;
  out << table;
  if (rows_out != nullptr) *rows_out = std::move(rows);
  return kExitOk;
}

/// All RWTF files of a directory, sorted by filename.
inline std::vector<fs::path> list_feature_files(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) throw Error(Errc::MissingFile, "features directory not found: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".rwtf") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// `vocab-train`: one training document per feature file.
inline int cmd_vocab_train(const fs::path& features_dir, const VocabParams& params, const fs::path& out_path,
                           std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto files = list_feature_files(features_dir);
    std::vector<std::vector<HierarchicalDescriptor>> docs;
    std::size_t total = 0;
    for (std::size_t i = 0; i < files.size(); ++i) {
      auto f = read_feature_file(files[i], i);
      prepare_descriptors(f, {});
      total += f.size();
      docs.push_back(std::move(f.descriptors));
    }
    if (total == 0) throw Error(Errc::InsufficientData, "no descriptors found in " + features_dir.string());
    const auto tree = train_vocabulary(docs, params);
    save_vocab(tree, out_path);
    out << "documents: " << docs.size() << "\ndescriptors: " << total << "\nnodes: " << tree.nodes().size()
        << "\nwords: " << tree.word_count() << "\nbranching: " << params.branching << "\ndepth: " << params.depth
        << '\n';
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

/// `eval`: ATE between two TUM trajectory files.
inline int cmd_eval(const fs::path& est_path, const fs::path& gt_path, double max_dt, bool with_scale,
                    std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto est = read_trajectory(est_path);
    const auto gt = read_trajectory(gt_path);
    if (est.empty() || gt.empty()) throw Error(Errc::NoOverlap, "empty trajectory");
    const auto report = ate_rmse(est, gt, max_dt, with_scale);
    out << report.to_text();
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

/// `mask-debug`: writes the binary mask and a side-by-side overlay (`<stem>_overlay.png`).
inline int cmd_mask_debug(const fs::path& image_path, const MaskParams& params, const fs::path& out_path,
                          std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    params.validate();
    const auto gray = load_gray_image(image_path);
    const auto mask = compute_feature_mask(gray, params);
    GrayImage mask_img(gray.width, gray.height);
    for (int y = 0; y < gray.height; ++y) {
      for (int x = 0; x < gray.width; ++x) mask_img.at(x, y) = mask.at(x, y) ? 255 : 0;
    }
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    save_gray_image(out_path, mask_img);

    cv::Mat overlay(gray.height, gray.width * 2, CV_8UC3);
    for (int y = 0; y < gray.height; ++y) {
      for (int x = 0; x < gray.width; ++x) {
        const std::uint8_t g = gray.at(x, y);
        overlay.at<cv::Vec3b>(y, x) = cv::Vec3b(g, g, g);
        cv::Vec3b px(g, g, g);
        if (mask.at(x, y)) px = cv::Vec3b(static_cast<std::uint8_t>(g / 2), static_cast<std::uint8_t>(g / 2),
                                          static_cast<std::uint8_t>(128 + g / 2));
        overlay.at<cv::Vec3b>(y, gray.width + x) = px;
      }
    }
    const auto overlay_path = out_path.parent_path() / (out_path.stem().string() + "_overlay.png");
    if (!cv::imwrite(overlay_path.string(), overlay)) throw Error(Errc::IoError, "cannot write " + overlay_path.string());
    out << "mask pixels: " << mask.count() << " of " << static_cast<std::size_t>(gray.width) * gray.height << '\n';
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace rwt
