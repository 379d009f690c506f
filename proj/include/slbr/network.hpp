#pragma once

// The two-stage watermark removal network.
//
// Coarse stage: five shared encoder blocks (stem at H, then H/2 ... H/16),
// one shared decoder block to H/8, then a mask branch and a background
// branch of three decoder levels each (H/4, H/2, H). Refinement stage: three
// encoder blocks over [I_coarse, M_hat'] with skip-stage links from the
// background branch, N cross-level fusion modules, and a resize-and-sum head.

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "slbr/blocks.hpp"

namespace slbr {

enum class RefineFusion { cff, decoder };

struct NetworkConfig {
  std::array<int, 5> encoder_channels{32, 64, 128, 256, 512};
  std::array<int, 3> refine_channels{32, 64, 128};
  int n_cff = 3;
  int n_smr = 3;
  int n_mbe = 3;
  int n_skip_stage = 3;
  int residual_depth = 2;
  int norm_groups = 1;
  // Coarse-only networks report I_coarse as the final prediction.
  bool refine_stage = true;
  // `decoder` replaces the fusion modules with a plain U-Net decoder.
  RefineFusion refine_fusion = RefineFusion::cff;

  static NetworkConfig defaults() { return {}; }
  static NetworkConfig toy();

  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

// One row of the component ablation (rows 1..13). Rows 1-5 have no
// refinement stage; row 13 swaps the fusion modules for decoder blocks.
struct AblationRow {
  int row = 12;
  int n_smr = 3;
  int n_mbe = 3;
  bool refine_stage = true;
  int n_cff = 3;
  RefineFusion refine_fusion = RefineFusion::cff;
  int n_skip_stage = 3;
};

AblationRow ablation_row(int row);
NetworkConfig apply_ablation(NetworkConfig base, const AblationRow& row);

struct CoarseOutput {
  Var i_coarse;
  // Scales H/4, H/2, H (coarse to fine).
  std::vector<MaskPair> mask_pairs;
  // Background-branch decoder features at H, H/2, H/4 (fine to coarse).
  std::vector<Var> background_features;

  const MaskPair& finest() const { return mask_pairs.back(); }
};

struct RefineOutput {
  Var i_refined;
};

struct SlbrOutput {
  CoarseOutput coarse;
  RefineOutput refined;
};

class SlbrNetwork : public Module {
 public:
  SlbrNetwork(const NetworkConfig& config, std::uint64_t seed);

  // J: (N, 3, S, S) with S divisible by 16 and S >= 32.
  CoarseOutput coarse_forward(const Var& watermarked) const;
  RefineOutput refine_forward(const Var& i_coarse, const Var& mask,
                              const std::vector<Var>& background_features) const;
  SlbrOutput forward(const Var& watermarked) const;

  const NetworkConfig& config() const { return config_; }

  static void check_input(const Shape& s);

 private:
  NetworkConfig config_;
  std::vector<std::unique_ptr<EncoderBlock>> encoder_;
  std::unique_ptr<DecoderBlock> shared_decoder_;
  std::vector<std::unique_ptr<MaskDecoderBlock>> mask_branch_;
  // Exactly one of the two is set per level.
  std::vector<std::unique_ptr<MbeBlock>> mbe_branch_;
  std::vector<std::unique_ptr<DecoderBlock>> plain_background_;
  std::unique_ptr<Conv2d> coarse_head_;

  std::vector<std::unique_ptr<EncoderBlock>> refine_encoder_;
  std::vector<std::unique_ptr<Conv2d>> skip_stage_;
  std::vector<std::unique_ptr<CffModule>> cff_;
  std::vector<std::unique_ptr<DecoderBlock>> refine_decoder_;
  std::vector<std::unique_ptr<Conv2d>> aggregate_;
  std::unique_ptr<Conv2d> refine_head_;
};

}  // namespace slbr
