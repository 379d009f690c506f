#pragma once

// Synthetic watermarked images. Logos are placed at random and alpha
// blended; datasets live in a fixed directory layout.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "slbr/image.hpp"
#include "slbr/module.hpp"

namespace slbr {

inline constexpr double kMaskThreshold = 0.01;

struct WatermarkAsset {
  Image rgb;      // 3 x h x w
  Image opacity;  // 1 x h x w, the logo's own alpha channel

  void validate() const;
};

struct BlendSpec {
  double scale = 1.0;
  double rotation_deg = 0.0;  // [0, 360)
  int row = 0;                // top-left of the rotated footprint on the canvas
  int col = 0;
  double global_alpha = 0.5;
  std::uint64_t seed = 0;
};

struct Footprint {
  int height = 0;
  int width = 0;
};

// Bounding box of the scaled and rotated asset. Throws ContractError when
// the scaled asset is smaller than one pixel.
Footprint footprint(const WatermarkAsset& asset, const BlendSpec& spec);

struct Placement {
  Image wm_layer;   // 3 x H x W, logo colors inside the footprint, 0 elsewhere
  Image alpha_map;  // 1 x H x W, global_alpha x resampled opacity
  Image mask;       // 1 x H x W, alpha_map > kMaskThreshold
};

Placement render_placement(const WatermarkAsset& asset, const BlendSpec& spec, int canvas_h,
                           int canvas_w);

// J = alpha * W + (1 - alpha) * I, per channel.
Image blend(const Image& background, const Image& wm_layer, const Image& alpha_map);

struct Sample {
  Image watermarked;  // J
  Image background;   // I
  Image mask;         // M, binary
  Image wm_layer;     // W rendered at the placement
  Image alpha_map;    // effective per-pixel opacity
};

Sample make_sample(const Image& background, const WatermarkAsset& asset, const BlendSpec& spec);

struct SynthConfig {
  double alpha_min = 0.3;
  double alpha_max = 0.7;
  // Longest footprint side as a fraction of the canvas side.
  double size_min = 0.3;
  double size_max = 0.6;
  double max_rotation_deg = 30.0;
  int image_size = 256;
  int count = 0;  // 0 = one sample per background
  std::uint64_t seed = 0;

  void validate() const;
};

// Draws scale, rotation, position and opacity; the footprint always lies
// fully inside the canvas.
BlendSpec random_blend_spec(const WatermarkAsset& asset, int canvas_h, int canvas_w,
                            const SynthConfig& cfg, Rng& rng);

struct ManifestEntry {
  int index = 0;
  int background = 0;
  int asset = 0;
  BlendSpec spec;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  int count = 0;
  double alpha_min = 0.3;
  double alpha_max = 0.7;
  int image_size = 0;
  std::vector<ManifestEntry> entries;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;
};

// Backgrounds are resized to image_size; sample i uses background
// i mod |backgrounds| and a randomly drawn asset.
Dataset synthesize(const std::vector<Image>& backgrounds, const std::vector<WatermarkAsset>& assets,
                   const SynthConfig& cfg);

// root/{watermarked,target,mask,wm_layer,alpha}/NNNNNN.png + manifest.json.
void write_dataset(const Dataset& dataset, const std::filesystem::path& root);
Dataset read_dataset(const std::filesystem::path& root);

std::vector<Image> load_backgrounds(const std::filesystem::path& dir);
// RGBA PNGs use their alpha as opacity; opaque PNGs are fully opaque.
std::vector<WatermarkAsset> load_watermarks(const std::filesystem::path& dir);

// Procedural stand-ins for photographs and logos (tests, demos).
Image procedural_background(int height, int width, Rng& rng);
WatermarkAsset procedural_watermark(int height, int width, Rng& rng);

}  // namespace slbr
