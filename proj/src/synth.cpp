#include "slbr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "slbr/errors.hpp"

namespace slbr {
namespace fs = std::filesystem;

namespace {

constexpr const char* kSubdirs[] = {"watermarked", "target", "mask", "wm_layer", "alpha"};

double sample_bilinear_clamped(const Image& img, int c, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(img.height() - 1));
  x = std::clamp(x, 0.0, static_cast<double>(img.width() - 1));
  const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
  const int y1 = std::min(y0 + 1, img.height() - 1), x1 = std::min(x0 + 1, img.width() - 1);
  const double ly = y - y0, lx = x - x0;
  const double top = (1.0 - lx) * img.at(c, y0, x0) + lx * img.at(c, y0, x1);
  const double bot = (1.0 - lx) * img.at(c, y1, x0) + lx * img.at(c, y1, x1);
  return (1.0 - ly) * top + ly * bot;
}

std::string index_name(int i) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << i << ".png";
  return os.str();
}

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Image to_rgb(const Image& img) {
  if (img.channels() == 3) return img;
  Image out(3, img.height(), img.width());
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) out.at(c, y, x) = img.at(0, y, x);
    }
  }
  return out;
}

double smoothstep01(double edge_distance) {
  // Coverage of a 1px anti-aliased edge; distance > 0 is inside.
  return std::clamp(edge_distance + 0.5, 0.0, 1.0);
}

}  // namespace

void WatermarkAsset::validate() const {
  require(rgb.channels() == 3, "WatermarkAsset: rgb must have 3 channels");
  require(opacity.channels() == 1 && opacity.same_geometry(rgb),
          "WatermarkAsset: opacity must be 1 x h x w matching rgb");
  require(rgb.height() >= 4 && rgb.width() >= 4, "WatermarkAsset: dims must be >= 4x4");
  const auto vals = opacity.values();
  require(std::any_of(vals.begin(), vals.end(), [](double v) { return v > 0.0; }),
          "WatermarkAsset: opacity is zero everywhere");
}

Footprint footprint(const WatermarkAsset& asset, const BlendSpec& spec) {
  require(spec.scale > 0.0, "BlendSpec: scale must be > 0");
  const double sh = asset.rgb.height() * spec.scale;
  const double sw = asset.rgb.width() * spec.scale;
  require(sh >= 1.0 && sw >= 1.0, "BlendSpec: scale " + std::to_string(spec.scale) +
                                      " shrinks the watermark below one pixel");
  const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::abs(std::cos(theta)), s = std::abs(std::sin(theta));
  const double bh = sh * c + sw * s;
  const double bw = sw * c + sh * s;
  return {std::max(1, static_cast<int>(std::ceil(bh - 1e-9))),
          std::max(1, static_cast<int>(std::ceil(bw - 1e-9)))};
}

Placement render_placement(const WatermarkAsset& asset, const BlendSpec& spec, int canvas_h,
                           int canvas_w) {
  asset.validate();
  require(canvas_h >= 8 && canvas_w >= 8, "render_placement: canvas must be at least 8x8");
  require(spec.global_alpha >= 0.0 && spec.global_alpha <= 1.0,
          "render_placement: global_alpha must lie in [0, 1]");
  require(spec.rotation_deg >= 0.0 && spec.rotation_deg < 360.0,
          "render_placement: rotation must lie in [0, 360)");
  const Footprint fp = footprint(asset, spec);
  const int y_begin = std::max(0, spec.row), y_end = std::min(canvas_h, spec.row + fp.height);
  const int x_begin = std::max(0, spec.col), x_end = std::min(canvas_w, spec.col + fp.width);
  require(y_begin < y_end && x_begin < x_end,
          "render_placement: watermark footprint lies entirely outside the canvas");

  Placement out{Image(3, canvas_h, canvas_w), Image(1, canvas_h, canvas_w),
                Image(1, canvas_h, canvas_w)};
  const double theta = spec.rotation_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cy = spec.row + fp.height / 2.0, cx = spec.col + fp.width / 2.0;
  const double h = asset.rgb.height(), w = asset.rgb.width();
  for (int y = y_begin; y < y_end; ++y) {
    for (int x = x_begin; x < x_end; ++x) {
      const double py = y + 0.5 - cy, px = x + 0.5 - cx;
      // Inverse rotation back into the (scaled) asset frame.
      const double qx = ct * px + st * py;
      const double qy = -st * px + ct * py;
      const double u = qy / spec.scale + h / 2.0;
      const double v = qx / spec.scale + w / 2.0;
      if (u < 0.0 || u > h || v < 0.0 || v > w) continue;
      for (int c = 0; c < 3; ++c) {
        out.wm_layer.at(c, y, x) = sample_bilinear_clamped(asset.rgb, c, u - 0.5, v - 0.5);
      }
      const double a = spec.global_alpha * sample_bilinear_clamped(asset.opacity, 0, u - 0.5, v - 0.5);
      out.alpha_map.at(0, y, x) = a;
      out.mask.at(0, y, x) = a > kMaskThreshold ? 1.0 : 0.0;
    }
  }
  return out;
}

Image blend(const Image& background, const Image& wm_layer, const Image& alpha_map) {
  require(background.channels() == 3 && wm_layer.channels() == 3 && alpha_map.channels() == 1,
          "blend: expected 3-channel images and a 1-channel alpha map");
  require(background.same_geometry(wm_layer) && background.same_geometry(alpha_map),
          "blend: inputs must share H x W");
  Image out(3, background.height(), background.width());
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        const double a = alpha_map.at(0, y, x);
        const double v = a * wm_layer.at(c, y, x) + (1.0 - a) * background.at(c, y, x);
        out.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

Sample make_sample(const Image& background, const WatermarkAsset& asset, const BlendSpec& spec) {
  require(background.channels() == 3, "make_sample: background must be RGB");
  Placement p = render_placement(asset, spec, background.height(), background.width());
  Sample s;
  s.watermarked = blend(background, p.wm_layer, p.alpha_map);
  s.background = background;
  s.mask = std::move(p.mask);
  s.wm_layer = std::move(p.wm_layer);
  s.alpha_map = std::move(p.alpha_map);
  return s;
}

void SynthConfig::validate() const {
  if (!(alpha_min >= 0.0 && alpha_min <= alpha_max && alpha_max <= 1.0)) {
    throw ConfigError("alpha range must satisfy 0 <= alpha_min <= alpha_max <= 1");
  }
  if (!(size_min > 0.0 && size_min <= size_max && size_max <= 1.0)) {
    throw ConfigError("size range must satisfy 0 < size_min <= size_max <= 1");
  }
  if (!(max_rotation_deg >= 0.0 && max_rotation_deg <= 180.0)) {
    throw ConfigError("max_rotation_deg must lie in [0, 180]");
  }
  if (image_size < 8) throw ConfigError("image_size must be >= 8");
  if (count < 0) throw ConfigError("count must be >= 0");
}

BlendSpec random_blend_spec(const WatermarkAsset& asset, int canvas_h, int canvas_w,
                            const SynthConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> size_dist(cfg.size_min, cfg.size_max);
  std::uniform_real_distribution<double> rot_dist(-cfg.max_rotation_deg, cfg.max_rotation_deg);
  std::uniform_real_distribution<double> alpha_dist(cfg.alpha_min, cfg.alpha_max);

  BlendSpec spec;
  const double longest = std::max(asset.rgb.height(), asset.rgb.width());
  spec.scale = size_dist(rng) * std::min(canvas_h, canvas_w) / longest;
  const double rot = rot_dist(rng);
  spec.rotation_deg = rot < 0.0 ? rot + 360.0 : rot;
  if (spec.rotation_deg >= 360.0) spec.rotation_deg = 0.0;
  Footprint fp = footprint(asset, spec);
  while (fp.height > canvas_h || fp.width > canvas_w) {
    spec.scale *= 0.9;
    fp = footprint(asset, spec);
  }
  spec.row = std::uniform_int_distribution<int>(0, canvas_h - fp.height)(rng);
  spec.col = std::uniform_int_distribution<int>(0, canvas_w - fp.width)(rng);
  spec.global_alpha = alpha_dist(rng);
  spec.seed = rng();
  return spec;
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
  j = nlohmann::json{{"seed", m.seed},           {"count", m.count},
                     {"alpha_min", m.alpha_min}, {"alpha_max", m.alpha_max},
                     {"image_size", m.image_size}, {"samples", nlohmann::json::array()}};
  for (const ManifestEntry& e : m.entries) {
    j["samples"].push_back({{"index", e.index},
                            {"background", e.background},
                            {"asset", e.asset},
                            {"scale", e.spec.scale},
                            {"rotation_deg", e.spec.rotation_deg},
                            {"row", e.spec.row},
                            {"col", e.spec.col},
                            {"global_alpha", e.spec.global_alpha},
                            {"seed", e.spec.seed}});
  }
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
  j.at("seed").get_to(m.seed);
  j.at("count").get_to(m.count);
  j.at("alpha_min").get_to(m.alpha_min);
  j.at("alpha_max").get_to(m.alpha_max);
  j.at("image_size").get_to(m.image_size);
  m.entries.clear();
  if (j.contains("samples")) {
    for (const auto& s : j.at("samples")) {
      ManifestEntry e;
      s.at("index").get_to(e.index);
      s.at("background").get_to(e.background);
      s.at("asset").get_to(e.asset);
      s.at("scale").get_to(e.spec.scale);
      s.at("rotation_deg").get_to(e.spec.rotation_deg);
      s.at("row").get_to(e.spec.row);
      s.at("col").get_to(e.spec.col);
      s.at("global_alpha").get_to(e.spec.global_alpha);
      s.at("seed").get_to(e.spec.seed);
      m.entries.push_back(e);
    }
  }
}

Dataset synthesize(const std::vector<Image>& backgrounds, const std::vector<WatermarkAsset>& assets,
                   const SynthConfig& cfg) {
  cfg.validate();
  if (backgrounds.empty()) throw ConfigError("no background images");
  if (assets.empty()) throw ConfigError("no watermark assets");
  for (const auto& a : assets) a.validate();

  Dataset ds;
  const int count = cfg.count > 0 ? cfg.count : static_cast<int>(backgrounds.size());
  ds.manifest = {cfg.seed, count, cfg.alpha_min, cfg.alpha_max, cfg.image_size, {}};
  Rng rng(cfg.seed);
  std::vector<Image> resized;
  resized.reserve(backgrounds.size());
  for (const Image& b : backgrounds) {
    resized.push_back(resize_image(to_rgb(b), cfg.image_size, cfg.image_size));
  }
  std::uniform_int_distribution<int> pick(0, static_cast<int>(assets.size()) - 1);
  for (int i = 0; i < count; ++i) {
    ManifestEntry e;
    e.index = i;
    e.background = i % static_cast<int>(resized.size());
    e.asset = pick(rng);
    e.spec = random_blend_spec(assets[e.asset], cfg.image_size, cfg.image_size, cfg, rng);
    ds.samples.push_back(make_sample(resized[e.background], assets[e.asset], e.spec));
    ds.manifest.entries.push_back(e);
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const fs::path& root) {
  require(dataset.manifest.count == static_cast<int>(dataset.samples.size()),
          "write_dataset: manifest count does not match sample count");
  for (const char* sub : kSubdirs) fs::create_directories(root / sub);
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const Sample& s = dataset.samples[i];
    const std::string name = index_name(static_cast<int>(i));
    write_png(root / "watermarked" / name, s.watermarked);
    write_png(root / "target" / name, s.background);
    write_png(root / "mask" / name, s.mask);
    write_png(root / "wm_layer" / name, s.wm_layer);
    write_png(root / "alpha" / name, s.alpha_map);
  }
  std::ofstream out(root / "manifest.json", std::ios::trunc);
  if (!out) throw LoadError("cannot write '" + (root / "manifest.json").string() + "'");
  out << nlohmann::json(dataset.manifest).dump(2) << "\n";
}

Dataset read_dataset(const fs::path& root) {
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::is_regular_file(manifest_path)) {
    throw LoadError("dataset '" + root.string() + "': missing manifest.json");
  }
  Dataset ds;
  try {
    std::ifstream in(manifest_path);
    ds.manifest = nlohmann::json::parse(in).get<DatasetManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("dataset '" + root.string() + "': malformed manifest.json: " + e.what());
  }
  if (ds.manifest.count <= 0) throw LoadError("dataset '" + root.string() + "': manifest count is 0");
  for (const char* sub : kSubdirs) {
    if (!fs::is_directory(root / sub)) {
      throw LoadError("dataset '" + root.string() + "': missing subdirectory '" + sub + "'");
    }
  }
  auto load = [&](const char* sub, int i, int channels) {
    const fs::path p = root / sub / index_name(i);
    if (!fs::is_regular_file(p)) {
      throw LoadError("dataset '" + root.string() + "': missing entry " + std::string(sub) + "/" +
                      index_name(i) + " (index " + std::to_string(i) + ")");
    }
    Image img = read_png(p).color;
    if (channels == 3) img = to_rgb(img);
    if (img.channels() != channels) {
      throw LoadError("'" + p.string() + "': expected " + std::to_string(channels) + " channel(s)");
    }
    return img;
  };
  for (int i = 0; i < ds.manifest.count; ++i) {
    Sample s;
    s.watermarked = load("watermarked", i, 3);
    s.background = load("target", i, 3);
    s.mask = load("mask", i, 1);
    s.wm_layer = load("wm_layer", i, 3);
    s.alpha_map = load("alpha", i, 1);
    if (!s.watermarked.same_geometry(s.background) || !s.watermarked.same_geometry(s.mask) ||
        !s.watermarked.same_geometry(s.wm_layer) || !s.watermarked.same_geometry(s.alpha_map)) {
      throw LoadError("dataset '" + root.string() + "': geometry mismatch at index " +
                      std::to_string(i));
    }
    for (double& v : s.mask.values()) v = v >= 0.5 ? 1.0 : 0.0;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<Image> load_backgrounds(const fs::path& dir) {
  std::vector<Image> out;
  for (const fs::path& p : sorted_pngs(dir)) out.push_back(to_rgb(read_png(p).color));
  return out;
}

std::vector<WatermarkAsset> load_watermarks(const fs::path& dir) {
  std::vector<WatermarkAsset> out;
  for (const fs::path& p : sorted_pngs(dir)) {
    PngImage png = read_png(p);
    WatermarkAsset a;
    a.rgb = to_rgb(png.color);
    a.opacity = png.alpha ? *png.alpha : Image(1, a.rgb.height(), a.rgb.width(), 1.0);
    try {
      a.validate();
    } catch (const ContractError& e) {
      throw LoadError("watermark '" + p.string() + "': " + e.what());
    }
    out.push_back(std::move(a));
  }
  return out;
}

Image procedural_background(int height, int width, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(3, height, width);
  for (int c = 0; c < 3; ++c) {
    const double base = 0.25 + 0.5 * u(rng);
    const double gy = (u(rng) - 0.5) * 0.4, gx = (u(rng) - 0.5) * 0.4;
    const double fy = 1.0 + 3.0 * u(rng), fx = 1.0 + 3.0 * u(rng), ph = 6.28 * u(rng);
    const double amp = 0.05 + 0.1 * u(rng);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double ny = static_cast<double>(y) / height, nx = static_cast<double>(x) / width;
        img.at(c, y, x) = base + gy * (ny - 0.5) + gx * (nx - 0.5) +
                          amp * std::sin(6.28 * (fy * ny + fx * nx) + ph);
      }
    }
  }
  // A few soft-edged discs as "objects".
  const int discs = 2 + static_cast<int>(u(rng) * 3);
  for (int k = 0; k < discs; ++k) {
    const double cy = u(rng) * height, cx = u(rng) * width;
    const double r = (0.08 + 0.15 * u(rng)) * std::min(height, width);
    const double color[3] = {u(rng), u(rng), u(rng)};
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double d = r - std::hypot(y + 0.5 - cy, x + 0.5 - cx);
        const double cov = smoothstep01(d);
        if (cov <= 0.0) continue;
        for (int c = 0; c < 3; ++c) {
          img.at(c, y, x) = (1.0 - cov) * img.at(c, y, x) + cov * (0.15 + 0.7 * color[c]);
        }
      }
    }
  }
  for (double& v : img.values()) v = std::clamp(v, 0.02, 0.98);
  return img;
}

WatermarkAsset procedural_watermark(int height, int width, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  WatermarkAsset a{Image(3, height, width), Image(1, height, width)};
  // Filled badge (disc or rounded box) with contrasting glyph strokes.
  double fill[3], ink[3];
  for (int c = 0; c < 3; ++c) {
    fill[c] = u(rng) < 0.5 ? 0.05 + 0.2 * u(rng) : 0.75 + 0.2 * u(rng);
    ink[c] = 1.0 - fill[c];
  }
  const bool disc = u(rng) < 0.5;
  const double cy = height / 2.0, cx = width / 2.0;
  const double ry = 0.48 * height, rx = 0.48 * width;
  const double corner = 0.25 * std::min(height, width);
  const double stroke = std::max(1.5, 0.12 * std::min(height, width));
  const int glyphs = 2 + static_cast<int>(u(rng) * 2);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double py = y + 0.5 - cy, px = x + 0.5 - cx;
      double inside;
      if (disc) {
        const double r = std::min(ry, rx);
        inside = r - std::hypot(py, px);
      } else {
        const double qy = std::max(std::abs(py) - (ry - corner), 0.0);
        const double qx = std::max(std::abs(px) - (rx - corner), 0.0);
        inside = corner - std::hypot(qy, qx);
      }
      a.opacity.at(0, y, x) = smoothstep01(inside);
      // Vertical strokes evenly spaced, joined by a horizontal bar.
      double ink_cov = smoothstep01(stroke / 2.0 - std::abs(py)) *
                       smoothstep01(0.3 * width - std::abs(px));
      for (int g = 0; g < glyphs; ++g) {
        const double gx = (g + 0.5) / glyphs * 0.6 * width - 0.3 * width;
        ink_cov = std::max(ink_cov, smoothstep01(stroke / 2.0 - std::abs(px - gx)) *
                                        smoothstep01(0.25 * height - std::abs(py)));
      }
      for (int c = 0; c < 3; ++c) a.rgb.at(c, y, x) = (1.0 - ink_cov) * fill[c] + ink_cov * ink[c];
    }
  }
  return a;
}

}  // namespace slbr
