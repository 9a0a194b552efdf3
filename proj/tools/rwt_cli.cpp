// rwt: command-line front end for tracking, ablation, vocabulary training and evaluation.
// Verbosity: RWT_VERBOSITY=0 (quiet), 1 (default), 2 (per-frame debug on stderr).

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rwt/pipeline.hpp"

namespace {

struct RunFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> dataset_dir, features_dir, output_dir, vocab_path;
  std::optional<int> frame_stride;
  std::optional<std::uint64_t> seed;
  std::optional<bool> use_coarse, use_fine, use_mask, use_knn_ratio;
};

void add_run_flags(CLI::App* app, RunFlags& f) {
  app->add_option("-c,--config", f.config_path, "key = value configuration file");
  app->add_option("--dataset-dir", f.dataset_dir, "TUM-layout sequence directory");
  app->add_option("--features-dir", f.features_dir, "directory of per-frame .rwtf files");
  app->add_option("--output-dir", f.output_dir, "output directory");
  app->add_option("--vocab-path", f.vocab_path, "vocabulary file for relocalization and loops");
  app->add_option("--frame-stride", f.frame_stride, "process every n-th frame");
  app->add_option("--seed", f.seed, "RANSAC seed");
  app->add_option("--use-coarse", f.use_coarse, "use the coarse descriptor slice");
  app->add_option("--use-fine", f.use_fine, "use the fine descriptor slice");
  app->add_option("--use-mask", f.use_mask, "filter keypoints with the line mask");
  app->add_option("--use-knn-ratio", f.use_knn_ratio, "apply the nearest-neighbour ratio test");
  app->add_option("--set", f.sets, "override any configuration key (key=value), repeatable");
}

rwt::RunConfig resolve(const RunFlags& f) {
  rwt::KeyValueConfig kv;
  if (!f.config_path.empty()) {
    try {
      kv = rwt::KeyValueConfig::load(f.config_path);
    } catch (const rwt::Error& e) {
      throw rwt::Error(rwt::Errc::ConfigError, e.what());
    }
  }
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw rwt::Error(rwt::Errc::ConfigError, "--set expects key=value, got '" + s + "'");
    kv.set(std::string(rwt::trim(s.substr(0, eq))), std::string(rwt::trim(s.substr(eq + 1))));
  }
  const auto put = [&kv](const char* key, const auto& v) {
    if (v) kv.set(key, rwt::detail::fmt(*v));
  };
  if (f.dataset_dir) kv.set("dataset_dir", *f.dataset_dir);
  if (f.features_dir) kv.set("features_dir", *f.features_dir);
  if (f.output_dir) kv.set("output_dir", *f.output_dir);
  if (f.vocab_path) kv.set("vocab_path", *f.vocab_path);
  if (f.frame_stride) kv.set("frame_stride", std::to_string(*f.frame_stride));
  if (f.seed) kv.set("seed", std::to_string(*f.seed));
  put("use_coarse", f.use_coarse);
  put("use_fine", f.use_fine);
  put("use_mask", f.use_mask);
  put("use_knn_ratio", f.use_knn_ratio);
  rwt::RunConfig config;
  rwt::apply_config(config, kv);
  if (config.dataset_dir.empty()) throw rwt::Error(rwt::Errc::ConfigError, "dataset_dir is required");
  if (config.features_dir.empty()) throw rwt::Error(rwt::Errc::ConfigError, "features_dir is required");
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-D tracking with hierarchical learned descriptors"};
  app.set_version_flag("--version", std::string(rwt::kVersion));
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "track a sequence and write the trajectory");
  add_run_flags(run, run_flags);

  RunFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "run the descriptor/mask/ratio ablation grid");
  add_run_flags(ablate, ablate_flags);

  std::string vocab_features;
  std::string vocab_out;
  rwt::VocabParams vocab_params;
  auto* vocab = app.add_subcommand("vocab-train", "train a hierarchical vocabulary");
  vocab->add_option("--features-dir", vocab_features, "directory of .rwtf files")->required();
  vocab->add_option("-o,--output", vocab_out, "vocabulary output path")->required();
  vocab->add_option("-k,--branching", vocab_params.branching, "branching factor")->capture_default_str();
  vocab->add_option("-L,--depth", vocab_params.depth, "tree depth")->capture_default_str();
  vocab->add_option("--seed", vocab_params.seed, "k-means seed")->capture_default_str();

  std::string est_path;
  std::string gt_path;
  double max_dt = rwt::kDefaultMaxDt;
  bool with_scale = false;
  auto* eval = app.add_subcommand("eval", "absolute trajectory error against ground truth");
  eval->add_option("estimate", est_path, "estimated trajectory (TUM format)")->required();
  eval->add_option("groundtruth", gt_path, "ground-truth trajectory (TUM format)")->required();
  eval->add_option("--max-dt", max_dt, "association tolerance in seconds")->capture_default_str();
  eval->add_flag("--with-scale", with_scale, "estimate a similarity instead of a rigid alignment");

  std::string image_path;
  std::string mask_out;
  rwt::MaskParams mask_params;
  auto* mask = app.add_subcommand("mask-debug", "write the line mask and an overlay for one image");
  mask->add_option("image", image_path, "input image")->required();
  mask->add_option("-o,--output", mask_out, "mask output path (PNG)")->required();
  mask->add_option("--line-width", mask_params.line_width, "mask line width in pixels")->capture_default_str();
  mask->add_option("--canny-lo", mask_params.canny_lo)->capture_default_str();
  mask->add_option("--canny-hi", mask_params.canny_hi)->capture_default_str();
  mask->add_option("--hough-threshold", mask_params.hough_threshold)->capture_default_str();
  mask->add_option("--hough-min-len", mask_params.hough_min_len)->capture_default_str();
  mask->add_option("--hough-max-gap", mask_params.hough_max_gap)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rwt::kExitConfigError;
  }

  try {
    if (run->parsed()) return rwt::cmd_run(resolve(run_flags));
    if (ablate->parsed()) return rwt::cmd_ablate(resolve(ablate_flags));
  } catch (const rwt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return rwt::exit_code_for(e);
  }
  if (vocab->parsed()) return rwt::cmd_vocab_train(vocab_features, vocab_params, vocab_out);
  if (eval->parsed()) return rwt::cmd_eval(est_path, gt_path, max_dt, with_scale);
  if (mask->parsed()) return rwt::cmd_mask_debug(image_path, mask_params, mask_out);
  return rwt::kExitConfigError;
}
