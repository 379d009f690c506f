#include "slbr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

#include "slbr/errors.hpp"
#include "slbr/ops.hpp"

namespace slbr {

Image::Image(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  require(channels > 0 && height > 0 && width > 0, "Image: dims must be positive");
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Tensor Image::to_tensor() const {
  return Tensor(Shape{1, channels_, height_, width_}, data_);
}

Image Image::from_tensor(const Tensor& t, int batch_index) {
  const Shape s = t.shape();
  require(batch_index >= 0 && batch_index < s.n, "Image::from_tensor: batch index out of range");
  Image img(s.c, s.h, s.w);
  const double* src = t.plane(batch_index, 0);
  std::copy_n(src, img.data_.size(), img.data_.begin());
  return img;
}

Tensor stack_images(std::span<const Image* const> images) {
  require(!images.empty(), "stack_images: no images");
  const Image& first = *images[0];
  Tensor t(Shape{static_cast<int>(images.size()), first.channels(), first.height(), first.width()});
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = *images[i];
    require(img.channels() == first.channels() && img.same_geometry(first),
            "stack_images: geometry mismatch");
    std::copy(img.values().begin(), img.values().end(), t.plane(static_cast<int>(i), 0));
  }
  return t;
}

Image resize_image(const Image& img, int height, int width) {
  if (img.height() == height && img.width() == width) return img;
  // Box-average integer downscales first so bilinear sampling does not alias.
  Tensor t = img.to_tensor();
  int fy = img.height() / height, fx = img.width() / width;
  if (fy >= 2 && fx >= 2) {
    const int f = std::min(fy, fx);
    const int h2 = img.height() / f, w2 = img.width() / f;
    Tensor pooled(Shape{1, img.channels(), h2, w2});
    for (int c = 0; c < img.channels(); ++c) {
      for (int y = 0; y < h2; ++y) {
        for (int x = 0; x < w2; ++x) {
          double acc = 0.0;
          for (int dy = 0; dy < f; ++dy) {
            for (int dx = 0; dx < f; ++dx) acc += img.at(c, y * f + dy, x * f + dx);
          }
          pooled.at(0, c, y, x) = acc / (f * f);
        }
      }
    }
    t = std::move(pooled);
  }
  return Image::from_tensor(ops::resize_bilinear_tensor(t, height, width));
}

Image reflect_pad(const Image& img, int height, int width) {
  require(height >= img.height() && width >= img.width(), "reflect_pad: target smaller than image");
  require(height - img.height() < img.height() && width - img.width() < img.width(),
          "reflect_pad: padding exceeds image size");
  auto mirror = [](int i, int n) { return i < n ? i : 2 * n - 2 - i; };
  Image out(img.channels(), height, width);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        out.at(c, y, x) = img.at(c, mirror(y, img.height()), mirror(x, img.width()));
      }
    }
  }
  return out;
}

Image crop(const Image& img, int height, int width) {
  require(height <= img.height() && width <= img.width(), "crop: target larger than image");
  Image out(img.channels(), height, width);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) out.at(c, y, x) = img.at(c, y, x);
    }
  }
  return out;
}

std::uint8_t to_byte(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

Image quantize(const Image& img) {
  Image out = img;
  for (double& v : out.values()) v = to_byte(v) / 255.0;
  return out;
}

PngImage read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw LoadError("cannot read PNG '" + path.string() + "': " + msg);
  }
  const bool has_alpha = (png.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  const bool has_color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = has_color ? (has_alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB)
                         : (has_alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY);
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw LoadError("cannot decode PNG '" + path.string() + "': " + msg);
  }
  const int w = static_cast<int>(png.width), h = static_cast<int>(png.height);
  const int color_channels = has_color ? 3 : 1;
  const int stride = color_channels + (has_alpha ? 1 : 0);
  PngImage result{Image(color_channels, h, w), std::nullopt};
  if (has_alpha) result.alpha = Image(1, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const png_byte* px = buffer.data() + (static_cast<std::size_t>(y) * w + x) * stride;
      for (int c = 0; c < color_channels; ++c) result.color.at(c, y, x) = px[c] / 255.0;
      if (has_alpha) result.alpha->at(0, y, x) = px[color_channels] / 255.0;
    }
  }
  return result;
}

void write_png(const std::filesystem::path& path, const Image& img, const Image* alpha) {
  require(img.channels() == 1 || img.channels() == 3, "write_png: need 1 or 3 channels");
  require(alpha == nullptr || (alpha->channels() == 1 && alpha->same_geometry(img)),
          "write_png: alpha must be 1 x H x W");
  const int h = img.height(), w = img.width();
  const int c = img.channels() + (alpha != nullptr ? 1 : 0);
  std::vector<png_byte> buffer(static_cast<std::size_t>(h) * w * c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      png_byte* px = &buffer[(static_cast<std::size_t>(y) * w + x) * c];
      for (int k = 0; k < img.channels(); ++k) px[k] = to_byte(img.at(k, y, x));
      if (alpha != nullptr) px[c - 1] = to_byte(alpha->at(0, y, x));
    }
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(w);
  png.height = static_cast<png_uint_32>(h);
  if (img.channels() == 3) {
    png.format = alpha != nullptr ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  } else {
    png.format = alpha != nullptr ? PNG_FORMAT_GA : PNG_FORMAT_GRAY;
  }
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw LoadError("cannot write PNG '" + path.string() + "': " + msg);
  }
}

}  // namespace slbr
