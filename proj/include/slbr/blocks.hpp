#pragma once

// Network building blocks shared by the coarse and refinement stages.
//
// Conventions: encoder nonlinearity is leaky ReLU (0.2), decoder-side
// nonlinearity is ReLU, normalization is per-sample group normalization.
// Every block is deterministic for fixed weights and inputs.

#include <memory>
#include <vector>

#include "slbr/module.hpp"

namespace slbr {

enum class UpsampleMode { bilinear_conv };

struct BlockConfig {
  int in_channels = 0;
  int out_channels = 0;
  int residual_depth = 2;
  int norm_groups = 1;
  UpsampleMode upsample_mode = UpsampleMode::bilinear_conv;

  void validate() const;
};

// conv3x3 (stride 1 or 2) -> norm -> silu -> conv3x3 -> norm -> silu.
// The stem keeps the resolution; every other encoder block halves it.
class EncoderBlock : public Module {
 public:
  EncoderBlock(const BlockConfig& cfg, bool downsample, Rng& rng);
  Var forward(const Var& x) const;
  bool downsamples() const { return downsample_; }

 private:
  bool downsample_;
  Conv2d conv1_, conv2_;
  Norm norm1_, norm2_;
};

// x + norm(conv(silu(norm(conv(x))))).
class ResidualBlock : public Module {
 public:
  ResidualBlock(int channels, int norm_groups, Rng& rng);
  Var forward(const Var& x) const;
  void zero_convs();

 private:
  Conv2d conv1_, conv2_;
  Norm norm1_, norm2_;
};

class ResidualStack : public Module {
 public:
  ResidualStack(int channels, int depth, int norm_groups, Rng& rng);
  Var forward(const Var& x) const;
  void zero_convs();

 private:
  std::vector<std::unique_ptr<ResidualBlock>> blocks_;
};

// Upsamples `prev` to the skip resolution (bilinear + conv3x3), concatenates
// the skip feature, fuses with conv3x3 -> norm -> silu and refines with a
// residual stack. `skip` must be exactly twice `prev` spatially.
class DecoderBlock : public Module {
 public:
  DecoderBlock(int prev_channels, int skip_channels, const BlockConfig& cfg, Rng& rng);
  Var forward(const Var& prev, const Var& skip) const;
  int out_channels() const { return out_; }

 private:
  int prev_, skip_, out_;
  Conv2d up_conv_, fuse_conv_;
  Norm fuse_norm_;
  ResidualStack residuals_;
};

// Rough mask estimate and calibrated affinity map, both (N, 1, H, W) in [0,1].
struct MaskPair {
  Var m_hat;
  Var m_hat_prime;
};

struct MaskDecoderOutput {
  Var feature;  // X^m, passed to the next decoder level
  MaskPair masks;
};

// Common surface of a mask-branch decoder level (SMR or its ablation).
class MaskDecoderBlock : public Module {
 public:
  virtual MaskDecoderOutput forward(const Var& prev, const Var& skip) const = 0;
};

// Self-calibrated mask refinement. After the decoder fusion produces X^m:
//   M_hat   = sigmoid(conv1x1(X^m))
//   x^m     = sum_p X^m(p) M_hat(p) / (sum_p M_hat(p) + eps)
//   M_hat'  = sigmoid(conv1x1([conv1x1(X^m), expand(fc(x^m))]))
class SmrBlock : public MaskDecoderBlock {
 public:
  static constexpr double kPoolEps = 1e-6;

  SmrBlock(int prev_channels, int skip_channels, const BlockConfig& cfg, Rng& rng);
  MaskDecoderOutput forward(const Var& prev, const Var& skip) const override;
  // Mask heads only, on an already fused feature.
  MaskPair calibrate(const Var& feature) const;

  // Exposed for targeted tests of the pooling path.
  Var rough_mask(const Var& feature) const;
  Var affinity(const Var& feature, const Var& rough) const;

 private:
  DecoderBlock fuse_;
  Conv2d mask_head_, project_, fc_, affinity_;
};

// Ablated mask level: plain decoder block plus a 1x1 mask head; the same
// prediction is reported as both M_hat and M_hat'.
class PlainMaskDecoder : public MaskDecoderBlock {
 public:
  PlainMaskDecoder(int prev_channels, int skip_channels, const BlockConfig& cfg, Rng& rng);
  MaskDecoderOutput forward(const Var& prev, const Var& skip) const override;

 private:
  DecoderBlock fuse_;
  Conv2d mask_head_;
};

// Mask-guided background enhancement:
//   F_0 = fuse(prev, skip);  F_{t+1} = F_t + conv3x3([F_t, M_hat']),  t < repeats.
// The mask is bilinearly resampled to F_0's resolution when needed.
class MbeBlock : public Module {
 public:
  MbeBlock(int prev_channels, int skip_channels, const BlockConfig& cfg, Rng& rng,
           int repeats = 3);
  Var forward(const Var& prev, const Var& skip, const Var& mask) const;
  Var fuse(const Var& prev, const Var& skip) const { return fuse_.forward(prev, skip); }
  void zero_residues();

 private:
  DecoderBlock fuse_;
  std::vector<std::unique_ptr<Conv2d>> residues_;
};

// Cross-level feature fusion with sparse fan-out. Levels are ordered from
// highest resolution to lowest, each exactly half the previous one. The
// lowest-resolution level T is upsampled into every other level:
//   L_i' = residuals_i(conv1x1([L_i, up(T)])),   T' = residuals_T(T).
class CffModule : public Module {
 public:
  CffModule(const std::vector<int>& level_channels, int residual_depth, int norm_groups,
            Rng& rng);
  std::vector<Var> forward(const std::vector<Var>& levels) const;
  void zero_residual_convs();

 private:
  std::vector<int> channels_;
  std::vector<std::unique_ptr<Conv2d>> fuse_;
  std::vector<std::unique_ptr<ResidualStack>> residuals_;
};

}  // namespace slbr
