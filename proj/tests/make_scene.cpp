// Writes a synthetic RGB-D sequence for CLI tests and demos.
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "support/synthetic_scene.hpp"

int main(int argc, char** argv) {
  CLI::App app{"write a synthetic sequence (dataset/ and features/) under a directory"};
  std::string out;
  rwt::testing::SceneOptions opt;
  app.add_option("out", out, "output root")->required();
  app.add_option("--landmarks", opt.landmarks)->capture_default_str();
  app.add_option("--poses", opt.poses)->capture_default_str();
  app.add_option("--noise", opt.noise_sigma)->capture_default_str();
  app.add_option("--seed", opt.seed)->capture_default_str();
  app.add_flag("--constant-fine", opt.constant_fine, "share one fine descriptor part across landmarks");
  CLI11_PARSE(app, argc, argv);
  const auto seq = rwt::testing::write_sequence(out, opt);
  std::cout << seq.dataset_dir.string() << '\n' << seq.features_dir.string() << '\n';
  return 0;
}
