#include "micro_net.hpp"

#include "slbr/ops.hpp"

namespace slbr::testing {

BlockConfig MicroNet::cfg(int in, int out) {
  BlockConfig c;
  c.in_channels = in;
  c.out_channels = out;
  c.residual_depth = 1;
  c.norm_groups = 1;
  return c;
}

MicroNet::MicroNet(std::uint64_t seed)
    : rng_(seed),
      stem_(cfg(3, 1), false, rng_),
      down_(cfg(1, 1), true, rng_),
      smr_(1, 1, cfg(1, 1), rng_),
      mbe_(1, 1, cfg(1, 1), rng_),
      coarse_head_(1, 3, 1, 1, rng_),
      refine0_(cfg(4, 1), false, rng_),
      refine1_(cfg(1, 1), true, rng_),
      skip_stage_(2, 1, 1, 1, rng_),
      cff_({1, 1}, 1, 1, rng_),
      agg0_(1, 1, 1, 1, rng_),
      agg1_(1, 1, 1, 1, rng_),
      refine_head_(1, 3, 1, 1, rng_) {
  register_module("stem", stem_);
  register_module("down", down_);
  register_module("smr", smr_);
  register_module("mbe", mbe_);
  register_module("coarse_head", coarse_head_);
  register_module("refine0", refine0_);
  register_module("refine1", refine1_);
  register_module("skip_stage", skip_stage_);
  register_module("cff", cff_);
  register_module("agg0", agg0_);
  register_module("agg1", agg1_);
  register_module("refine_head", refine_head_);
}

CoarseOutput MicroNet::coarse(const Var& j) const {
  const Var e0 = stem_.forward(j);
  const Var e1 = down_.forward(e0);
  const MaskDecoderOutput m = smr_.forward(e1, e0);
  const Var bg = mbe_.forward(e1, e0, m.masks.m_hat_prime);
  CoarseOutput out;
  out.mask_pairs = {m.masks};
  out.background_features = {bg};
  out.i_coarse = ops::sigmoid(coarse_head_.forward(bg));
  return out;
}

RefineOutput MicroNet::refine(const CoarseOutput& c) const {
  const Shape s = c.i_coarse.shape();
  const std::array<Var, 2> in{c.i_coarse, c.finest().m_hat_prime};
  Var h0 = refine0_.forward(ops::concat_channels(in));
  const std::array<Var, 2> skip{h0, c.background_features[0]};
  h0 = skip_stage_.forward(ops::concat_channels(skip));
  const Var h1 = refine1_.forward(h0);
  const std::vector<Var> fused = cff_.forward({h0, h1});
  Var sum = ops::add(agg0_.forward(fused[0]),
                     ops::resize_bilinear(agg1_.forward(fused[1]), s.h, s.w));
  return {ops::sigmoid(refine_head_.forward(sum))};
}

}  // namespace slbr::testing
