// Writes procedural backgrounds and RGBA logos for trying out `slbr synth`.
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "slbr/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"procedural backgrounds and watermark logos"};
  std::string out = "demo_assets";
  int backgrounds = 10, logos = 4, size = 64, logo_size = 32;
  std::uint64_t seed = 1;
  app.add_option("--out", out, "output root (gets backgrounds/ and watermarks/)");
  app.add_option("--backgrounds", backgrounds);
  app.add_option("--logos", logos);
  app.add_option("--size", size, "background side");
  app.add_option("--logo-size", logo_size);
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);

  namespace fs = std::filesystem;
  const fs::path bg_dir = fs::path(out) / "backgrounds", wm_dir = fs::path(out) / "watermarks";
  fs::create_directories(bg_dir);
  fs::create_directories(wm_dir);
  slbr::Rng rng(seed);
  auto name = [](int i) {
    std::ostringstream os;
    os << std::setw(4) << std::setfill('0') << i << ".png";
    return os.str();
  };
  for (int i = 0; i < backgrounds; ++i) {
    slbr::write_png(bg_dir / name(i), slbr::procedural_background(size, size, rng));
  }
  for (int i = 0; i < logos; ++i) {
    const slbr::WatermarkAsset a = slbr::procedural_watermark(logo_size, logo_size, rng);
    slbr::write_png(wm_dir / name(i), a.rgb, &a.opacity);
  }
  std::cout << backgrounds << " backgrounds, " << logos << " logos under " << out << "\n";
  return 0;
}
