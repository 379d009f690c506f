#include "slbr/blocks.hpp"

#include <array>

#include "slbr/errors.hpp"
#include "slbr/ops.hpp"

namespace slbr {
namespace {

void require_dyadic(const Var& prev, const Var& skip, const char* who) {
  const Shape p = prev.shape(), s = skip.shape();
  require(p.n == s.n && s.h == 2 * p.h && s.w == 2 * p.w,
          std::string(who) + ": skip " + s.str() + " must be exactly twice prev " + p.str());
}
}  // namespace

void BlockConfig::validate() const {
  require(in_channels > 0 && out_channels > 0, "BlockConfig: channels must be positive");
  require(residual_depth >= 1, "BlockConfig: residual_depth must be >= 1");
  require(norm_groups >= 1, "BlockConfig: norm_groups must be >= 1");
}

EncoderBlock::EncoderBlock(const BlockConfig& cfg, bool downsample, Rng& rng)
    : downsample_(downsample),
      conv1_(cfg.in_channels, cfg.out_channels, 3, downsample ? 2 : 1, rng),
      conv2_(cfg.out_channels, cfg.out_channels, 3, 1, rng),
      norm1_(cfg.out_channels, cfg.norm_groups),
      norm2_(cfg.out_channels, cfg.norm_groups) {
  cfg.validate();
  register_module("conv1", conv1_);
  register_module("norm1", norm1_);
  register_module("conv2", conv2_);
  register_module("norm2", norm2_);
}

Var EncoderBlock::forward(const Var& x) const {
  if (downsample_) {
    require(x.shape().h % 2 == 0 && x.shape().w % 2 == 0,
            "EncoderBlock: downsampling block needs even spatial dims, got " + x.shape().str());
  }
  Var h = ops::silu(norm1_.forward(conv1_.forward(x)));
  return ops::silu(norm2_.forward(conv2_.forward(h)));
}

ResidualBlock::ResidualBlock(int channels, int norm_groups, Rng& rng)
    : conv1_(channels, channels, 3, 1, rng),
      conv2_(channels, channels, 3, 1, rng),
      norm1_(channels, norm_groups),
      norm2_(channels, norm_groups) {
  register_module("conv1", conv1_);
  register_module("norm1", norm1_);
  register_module("conv2", conv2_);
  register_module("norm2", norm2_);
}

Var ResidualBlock::forward(const Var& x) const {
  Var h = ops::silu(norm1_.forward(conv1_.forward(x)));
  return ops::add(x, norm2_.forward(conv2_.forward(h)));
}

void ResidualBlock::zero_convs() {
  conv1_.zero();
  conv2_.zero();
}

ResidualStack::ResidualStack(int channels, int depth, int norm_groups, Rng& rng) {
  require(depth >= 1, "ResidualStack: depth must be >= 1");
  for (int i = 0; i < depth; ++i) {
    blocks_.push_back(std::make_unique<ResidualBlock>(channels, norm_groups, rng));
    register_module(std::to_string(i), *blocks_.back());
  }
}

Var ResidualStack::forward(const Var& x) const {
  Var h = x;
  for (const auto& b : blocks_) h = b->forward(h);
  return h;
}

void ResidualStack::zero_convs() {
  for (auto& b : blocks_) b->zero_convs();
}

DecoderBlock::DecoderBlock(int prev_channels, int skip_channels, const BlockConfig& cfg,
                           Rng& rng)
    : prev_(prev_channels),
      skip_(skip_channels),
      out_(cfg.out_channels),
      up_conv_(prev_channels, cfg.out_channels, 3, 1, rng),
      fuse_conv_(cfg.out_channels + skip_channels, cfg.out_channels, 3, 1, rng),
      fuse_norm_(cfg.out_channels, cfg.norm_groups),
      residuals_(cfg.out_channels, cfg.residual_depth, cfg.norm_groups, rng) {
  cfg.validate();
  register_module("up", up_conv_);
  register_module("fuse", fuse_conv_);
  register_module("fuse_norm", fuse_norm_);
  register_module("res", residuals_);
}

Var DecoderBlock::forward(const Var& prev, const Var& skip) const {
  require_dyadic(prev, skip, "DecoderBlock");
  require(prev.shape().c == prev_ && skip.shape().c == skip_,
          "DecoderBlock: channel mismatch (prev " + prev.shape().str() + ", skip " +
              skip.shape().str() + ")");
  Var up = up_conv_.forward(ops::resize_bilinear(prev, skip.shape().h, skip.shape().w));
  const std::array<Var, 2> parts{up, skip};
  Var fused = ops::silu(fuse_norm_.forward(fuse_conv_.forward(ops::concat_channels(parts))));
  return residuals_.forward(fused);
}

SmrBlock::SmrBlock(int prev_channels, int skip_channels, const BlockConfig& cfg, Rng& rng)
    : fuse_(prev_channels, skip_channels, cfg, rng),
      mask_head_(cfg.out_channels, 1, 1, 1, rng),
      project_(cfg.out_channels, cfg.out_channels, 1, 1, rng),
      fc_(cfg.out_channels, cfg.out_channels, 1, 1, rng),
      affinity_(2 * cfg.out_channels, 1, 1, 1, rng) {
  register_module("decoder", fuse_);
  register_module("mask_head", mask_head_);
  register_module("project", project_);
  register_module("fc", fc_);
  register_module("affinity", affinity_);
}

Var SmrBlock::rough_mask(const Var& feature) const {
  return ops::sigmoid(mask_head_.forward(feature));
}

Var SmrBlock::affinity(const Var& feature, const Var& rough) const {
  const Shape s = feature.shape();
  Var pooled = ops::masked_avg_pool(feature, rough, kPoolEps);
  Var projected = project_.forward(feature);
  Var broadcast = ops::expand_spatial(fc_.forward(pooled), s.h, s.w);
  const std::array<Var, 2> parts{projected, broadcast};
  return ops::sigmoid(affinity_.forward(ops::concat_channels(parts)));
}

MaskPair SmrBlock::calibrate(const Var& feature) const {
  Var rough = rough_mask(feature);
  return {rough, affinity(feature, rough)};
}

MaskDecoderOutput SmrBlock::forward(const Var& prev, const Var& skip) const {
  Var feature = fuse_.forward(prev, skip);
  return {feature, calibrate(feature)};
}

PlainMaskDecoder::PlainMaskDecoder(int prev_channels, int skip_channels,
                                   const BlockConfig& cfg, Rng& rng)
    : fuse_(prev_channels, skip_channels, cfg, rng), mask_head_(cfg.out_channels, 1, 1, 1, rng) {
  register_module("decoder", fuse_);
  register_module("mask_head", mask_head_);
}

MaskDecoderOutput PlainMaskDecoder::forward(const Var& prev, const Var& skip) const {
  Var feature = fuse_.forward(prev, skip);
  Var mask = ops::sigmoid(mask_head_.forward(feature));
  return {feature, {mask, mask}};
}

MbeBlock::MbeBlock(int prev_channels, int skip_channels, const BlockConfig& cfg, Rng& rng,
                   int repeats)
    : fuse_(prev_channels, skip_channels, cfg, rng) {
  require(repeats >= 1, "MbeBlock: repeats must be >= 1");
  register_module("decoder", fuse_);
  for (int t = 0; t < repeats; ++t) {
    residues_.push_back(std::make_unique<Conv2d>(cfg.out_channels + 1, cfg.out_channels, 3, 1, rng));
    register_module("residue" + std::to_string(t), *residues_.back());
  }
}

Var MbeBlock::forward(const Var& prev, const Var& skip, const Var& mask) const {
  Var f = fuse_.forward(prev, skip);
  const Shape fs = f.shape();
  require(mask.shape().c == 1 && mask.shape().n == fs.n,
          "MbeBlock: mask must be (N, 1, H, W), got " + mask.shape().str());
  Var m = ops::resize_bilinear(mask, fs.h, fs.w);
  require(m.shape().h == fs.h && m.shape().w == fs.w, "MbeBlock: mask/feature size mismatch");
  for (const auto& conv : residues_) {
    const std::array<Var, 2> parts{f, m};
    f = ops::add(f, conv->forward(ops::concat_channels(parts)));
  }
  return f;
}

void MbeBlock::zero_residues() {
  for (auto& c : residues_) c->zero();
}

CffModule::CffModule(const std::vector<int>& level_channels, int residual_depth,
                     int norm_groups, Rng& rng)
    : channels_(level_channels) {
  require(level_channels.size() >= 2, "CffModule: needs at least two levels");
  const int top = level_channels.back();
  for (std::size_t i = 0; i + 1 < level_channels.size(); ++i) {
    fuse_.push_back(std::make_unique<Conv2d>(level_channels[i] + top, level_channels[i], 1, 1, rng));
    register_module("fuse" + std::to_string(i), *fuse_.back());
  }
  for (std::size_t i = 0; i < level_channels.size(); ++i) {
    residuals_.push_back(
        std::make_unique<ResidualStack>(level_channels[i], residual_depth, norm_groups, rng));
    register_module("res" + std::to_string(i), *residuals_.back());
  }
}

std::vector<Var> CffModule::forward(const std::vector<Var>& levels) const {
  require(levels.size() == channels_.size(), "CffModule: level count mismatch");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    require(levels[i].shape().c == channels_[i], "CffModule: channel mismatch at level " +
                                                     std::to_string(i));
    if (i > 0) {
      const Shape a = levels[i - 1].shape(), b = levels[i].shape();
      require(a.h == 2 * b.h && a.w == 2 * b.w,
              "CffModule: levels must halve in size, got " + a.str() + " then " + b.str());
    }
  }
  const Var& top = levels.back();
  std::vector<Var> out;
  out.reserve(levels.size());
  for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
    const Shape s = levels[i].shape();
    const std::array<Var, 2> parts{levels[i], ops::resize_bilinear(top, s.h, s.w)};
    out.push_back(residuals_[i]->forward(fuse_[i]->forward(ops::concat_channels(parts))));
  }
  out.push_back(residuals_.back()->forward(top));
  return out;
}

void CffModule::zero_residual_convs() {
  for (auto& r : residuals_) r->zero_convs();
}

}  // namespace slbr
