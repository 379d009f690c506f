#include "slbr/network.hpp"

#include "slbr/errors.hpp"
#include "slbr/ops.hpp"

namespace slbr {
namespace {

// Decoder levels are indexed coarse to fine (H/4, H/2, H). Ablation counts
// enable modules starting from the shallowest (full-resolution) level.
bool level_enabled(int coarse_to_fine_index, int count) {
  return coarse_to_fine_index >= 3 - count;
}

std::string to_string(RefineFusion f) { return f == RefineFusion::cff ? "cff" : "decoder"; }

}  // namespace

NetworkConfig NetworkConfig::toy() {
  NetworkConfig c;
  c.encoder_channels = {8, 16, 32, 32, 32};
  c.refine_channels = {8, 16, 32};
  return c;
}

void NetworkConfig::validate() const {
  for (int ch : encoder_channels) require(ch > 0, "NetworkConfig: encoder channels must be > 0");
  for (int ch : refine_channels) require(ch > 0, "NetworkConfig: refine channels must be > 0");
  require(n_cff >= 0, "NetworkConfig: n_cff must be >= 0");
  require(n_smr >= 0 && n_smr <= 3, "NetworkConfig: n_smr must be in [0, 3]");
  require(n_mbe >= 0 && n_mbe <= 3, "NetworkConfig: n_mbe must be in [0, 3]");
  require(n_skip_stage >= 0 && n_skip_stage <= 3, "NetworkConfig: n_skip_stage must be in [0, 3]");
  require(residual_depth >= 1, "NetworkConfig: residual_depth must be >= 1");
  require(norm_groups >= 1, "NetworkConfig: norm_groups must be >= 1");
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = nlohmann::json{{"encoder_channels", c.encoder_channels},
                     {"refine_channels", c.refine_channels},
                     {"n_cff", c.n_cff},
                     {"n_smr", c.n_smr},
                     {"n_mbe", c.n_mbe},
                     {"n_skip_stage", c.n_skip_stage},
                     {"residual_depth", c.residual_depth},
                     {"norm_groups", c.norm_groups},
                     {"refine_stage", c.refine_stage},
                     {"refine_fusion", to_string(c.refine_fusion)}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  j.at("encoder_channels").get_to(c.encoder_channels);
  j.at("refine_channels").get_to(c.refine_channels);
  j.at("n_cff").get_to(c.n_cff);
  j.at("n_smr").get_to(c.n_smr);
  j.at("n_mbe").get_to(c.n_mbe);
  j.at("n_skip_stage").get_to(c.n_skip_stage);
  j.at("residual_depth").get_to(c.residual_depth);
  j.at("norm_groups").get_to(c.norm_groups);
  j.at("refine_stage").get_to(c.refine_stage);
  const std::string fusion = j.at("refine_fusion").get<std::string>();
  if (fusion == "cff") {
    c.refine_fusion = RefineFusion::cff;
  } else if (fusion == "decoder") {
    c.refine_fusion = RefineFusion::decoder;
  } else {
    throw ConfigError("unknown refine_fusion '" + fusion + "'");
  }
}

AblationRow ablation_row(int row) {
  AblationRow r;
  r.row = row;
  switch (row) {
    case 1: r.n_smr = 0, r.n_mbe = 0, r.refine_stage = false; break;
    case 2: r.n_smr = 1, r.n_mbe = 0, r.refine_stage = false; break;
    case 3: r.n_smr = 3, r.n_mbe = 0, r.refine_stage = false; break;
    case 4: r.n_smr = 3, r.n_mbe = 1, r.refine_stage = false; break;
    case 5: r.n_smr = 3, r.n_mbe = 3, r.refine_stage = false; break;
    case 6: case 7: case 8: case 9:
      r.n_cff = row - 6;
      r.n_skip_stage = 0;
      break;
    case 10: case 11: case 12:
      r.n_skip_stage = row - 9;
      break;
    case 13:
      r.refine_fusion = RefineFusion::decoder;
      r.n_cff = 0;
      break;
    default: throw ConfigError("ablation row must be in [1, 13], got " + std::to_string(row));
  }
  if (!r.refine_stage) {
    r.n_cff = 0;
    r.n_skip_stage = 0;
  }
  return r;
}

NetworkConfig apply_ablation(NetworkConfig base, const AblationRow& row) {
  base.n_smr = row.n_smr;
  base.n_mbe = row.n_mbe;
  base.refine_stage = row.refine_stage;
  base.n_cff = row.n_cff;
  base.refine_fusion = row.refine_fusion;
  base.n_skip_stage = row.n_skip_stage;
  return base;
}

SlbrNetwork::SlbrNetwork(const NetworkConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto& e = config_.encoder_channels;
  const int depth = config_.residual_depth;
  const int groups = config_.norm_groups;

  int in = 3;
  for (int i = 0; i < 5; ++i) {
    encoder_.push_back(
        std::make_unique<EncoderBlock>(BlockConfig{in, e[i], depth, groups}, i > 0, rng));
    register_module("coarse.enc" + std::to_string(i), *encoder_.back());
    in = e[i];
  }
  shared_decoder_ = std::make_unique<DecoderBlock>(e[4], e[3], BlockConfig{e[4], e[3], depth, groups}, rng);
  register_module("coarse.shared_dec", *shared_decoder_);

  for (int k = 0; k < 3; ++k) {
    const int prev = e[3 - k], skip = e[2 - k];
    const BlockConfig cfg{prev, skip, depth, groups};
    if (level_enabled(k, config_.n_smr)) {
      mask_branch_.push_back(std::make_unique<SmrBlock>(prev, skip, cfg, rng));
    } else {
      mask_branch_.push_back(std::make_unique<PlainMaskDecoder>(prev, skip, cfg, rng));
    }
    register_module("coarse.mask" + std::to_string(k), *mask_branch_.back());
  }
  for (int k = 0; k < 3; ++k) {
    const int prev = e[3 - k], skip = e[2 - k];
    const BlockConfig cfg{prev, skip, depth, groups};
    if (level_enabled(k, config_.n_mbe)) {
      mbe_branch_.push_back(std::make_unique<MbeBlock>(prev, skip, cfg, rng));
      plain_background_.push_back(nullptr);
      register_module("coarse.bg" + std::to_string(k), *mbe_branch_.back());
    } else {
      mbe_branch_.push_back(nullptr);
      plain_background_.push_back(std::make_unique<DecoderBlock>(prev, skip, cfg, rng));
      register_module("coarse.bg" + std::to_string(k), *plain_background_.back());
    }
  }
  coarse_head_ = std::make_unique<Conv2d>(e[0], 3, 1, 1, rng);
  register_module("coarse.head", *coarse_head_);

  if (!config_.refine_stage) return;

  const auto& r = config_.refine_channels;
  in = 4;
  for (int i = 0; i < 3; ++i) {
    refine_encoder_.push_back(
        std::make_unique<EncoderBlock>(BlockConfig{in, r[i], depth, groups}, i > 0, rng));
    register_module("refine.enc" + std::to_string(i), *refine_encoder_.back());
    in = r[i];
  }
  for (int i = 0; i < config_.n_skip_stage; ++i) {
    skip_stage_.push_back(std::make_unique<Conv2d>(r[i] + e[i], r[i], 1, 1, rng));
    register_module("refine.skip_stage" + std::to_string(i), *skip_stage_.back());
  }
  const std::vector<int> levels(r.begin(), r.end());
  if (config_.refine_fusion == RefineFusion::cff) {
    for (int t = 0; t < config_.n_cff; ++t) {
      cff_.push_back(std::make_unique<CffModule>(levels, depth, groups, rng));
      register_module("refine.cff" + std::to_string(t), *cff_.back());
    }
  } else {
    // Upward path: (r2 -> r1 at H/2), then (r1 -> r0 at H).
    refine_decoder_.push_back(
        std::make_unique<DecoderBlock>(r[2], r[1], BlockConfig{r[2], r[1], depth, groups}, rng));
    register_module("refine.dec1", *refine_decoder_.back());
    refine_decoder_.push_back(
        std::make_unique<DecoderBlock>(r[1], r[0], BlockConfig{r[1], r[0], depth, groups}, rng));
    register_module("refine.dec0", *refine_decoder_.back());
  }
  for (int i = 0; i < 3; ++i) {
    aggregate_.push_back(std::make_unique<Conv2d>(r[i], r[0], 1, 1, rng));
    register_module("refine.aggregate" + std::to_string(i), *aggregate_.back());
  }
  refine_head_ = std::make_unique<Conv2d>(r[0], 3, 1, 1, rng);
  register_module("refine.head", *refine_head_);
}

void SlbrNetwork::check_input(const Shape& s) {
  require(s.c == 3, "network input must have 3 channels, got " + s.str());
  require(s.h == s.w, "network input must be square, got " + s.str());
  require(s.h >= 32 && s.h % 16 == 0,
          "network input side must be a multiple of 16 and >= 32, got " + s.str());
}

CoarseOutput SlbrNetwork::coarse_forward(const Var& watermarked) const {
  check_input(watermarked.shape());
  std::vector<Var> enc;
  Var h = watermarked;
  for (const auto& block : encoder_) {
    h = block->forward(h);
    enc.push_back(h);
  }
  const Var shared = shared_decoder_->forward(enc[4], enc[3]);

  CoarseOutput out;
  Var mask_prev = shared;
  for (int k = 0; k < 3; ++k) {
    MaskDecoderOutput level = mask_branch_[k]->forward(mask_prev, enc[2 - k]);
    out.mask_pairs.push_back(level.masks);
    mask_prev = level.feature;
  }

  Var bg_prev = shared;
  std::vector<Var> bg_coarse_to_fine;
  for (int k = 0; k < 3; ++k) {
    if (mbe_branch_[k]) {
      bg_prev = mbe_branch_[k]->forward(bg_prev, enc[2 - k], out.mask_pairs[k].m_hat_prime);
    } else {
      bg_prev = plain_background_[k]->forward(bg_prev, enc[2 - k]);
    }
    bg_coarse_to_fine.push_back(bg_prev);
  }
  out.background_features.assign(bg_coarse_to_fine.rbegin(), bg_coarse_to_fine.rend());
  out.i_coarse = ops::sigmoid(coarse_head_->forward(bg_prev));
  return out;
}

RefineOutput SlbrNetwork::refine_forward(const Var& i_coarse, const Var& mask,
                                         const std::vector<Var>& background_features) const {
  if (!config_.refine_stage) return {i_coarse};
  const Shape s = i_coarse.shape();
  require(mask.shape() == Shape{s.n, 1, s.h, s.w},
          "refine_forward: mask " + mask.shape().str() + " does not match image " + s.str());
  require(background_features.size() == 3, "refine_forward: expected 3 background features");

  const std::array<Var, 2> input_parts{i_coarse, mask};
  Var h = ops::concat_channels(input_parts);
  std::vector<Var> levels;
  for (int i = 0; i < 3; ++i) {
    h = refine_encoder_[i]->forward(h);
    if (i < static_cast<int>(skip_stage_.size())) {
      const Var& bg = background_features[i];
      require(bg.shape().h == h.shape().h && bg.shape().w == h.shape().w,
              "refine_forward: skip-stage scale mismatch at level " + std::to_string(i) + " (" +
                  bg.shape().str() + " vs " + h.shape().str() + ")");
      const std::array<Var, 2> parts{h, bg};
      h = skip_stage_[i]->forward(ops::concat_channels(parts));
    }
    levels.push_back(h);
  }

  if (config_.refine_fusion == RefineFusion::cff) {
    for (const auto& cff : cff_) levels = cff->forward(levels);
  } else {
    Var d1 = refine_decoder_[0]->forward(levels[2], levels[1]);
    Var d0 = refine_decoder_[1]->forward(d1, levels[0]);
    levels = {d0, d1, levels[2]};
  }

  Var sum;
  for (int i = 0; i < 3; ++i) {
    Var projected = ops::resize_bilinear(aggregate_[i]->forward(levels[i]), s.h, s.w);
    sum = sum.defined() ? ops::add(sum, projected) : projected;
  }
  return {ops::sigmoid(refine_head_->forward(sum))};
}

SlbrOutput SlbrNetwork::forward(const Var& watermarked) const {
  CoarseOutput coarse = coarse_forward(watermarked);
  RefineOutput refined =
      refine_forward(coarse.i_coarse, coarse.finest().m_hat_prime, coarse.background_features);
  return {std::move(coarse), std::move(refined)};
}

}  // namespace slbr
