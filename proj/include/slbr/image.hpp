#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "slbr/tensor.hpp"

namespace slbr {

// Planar C x H x W image with values nominally in [0, 1]. Masks and alpha
// maps are single-channel images.
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, double fill = 0.0);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }
  std::size_t plane() const { return static_cast<std::size_t>(height_) * width_; }

  double& at(int c, int y, int x) {
    return data_[static_cast<std::size_t>(c) * plane() + static_cast<std::size_t>(y) * width_ + x];
  }
  double at(int c, int y, int x) const {
    return data_[static_cast<std::size_t>(c) * plane() + static_cast<std::size_t>(y) * width_ + x];
  }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_geometry(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool operator==(const Image&) const = default;

  // (1, C, H, W)
  Tensor to_tensor() const;
  static Image from_tensor(const Tensor& t, int batch_index = 0);

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// (N, C, H, W) from N images of identical geometry.
Tensor stack_images(std::span<const Image* const> images);

Image resize_image(const Image& img, int height, int width);
// Mirror padding (no edge repeat) to the given size; origin stays top-left.
Image reflect_pad(const Image& img, int height, int width);
Image crop(const Image& img, int height, int width);

// 8-bit quantization used for every on-disk image.
std::uint8_t to_byte(double v);
Image quantize(const Image& img);

struct PngImage {
  Image color;                 // 1 or 3 channels
  std::optional<Image> alpha;  // present for PNGs with an alpha channel
};

// Reads any 8/16-bit PNG; gray stays single-channel, palette/RGB become RGB.
PngImage read_png(const std::filesystem::path& path);
// 8-bit gray (1 channel) or RGB (3 channels), plus an optional alpha plane.
void write_png(const std::filesystem::path& path, const Image& img, const Image* alpha = nullptr);

}  // namespace slbr
