#pragma once

// Miniature coarse + refinement network on 8x8 inputs, one channel wide,
// built from the library blocks. Small enough for exhaustive finite
// differences over every parameter.

#include "slbr/blocks.hpp"
#include "slbr/network.hpp"
#include "slbr/objectives.hpp"

namespace slbr::testing {

class MicroNet : public Module {
 public:
  explicit MicroNet(std::uint64_t seed);

  CoarseOutput coarse(const Var& j) const;
  RefineOutput refine(const CoarseOutput& c) const;

 private:
  static BlockConfig cfg(int in, int out);

  Rng rng_;
  EncoderBlock stem_, down_;
  SmrBlock smr_;
  MbeBlock mbe_;
  Conv2d coarse_head_;
  EncoderBlock refine0_, refine1_;
  Conv2d skip_stage_;
  CffModule cff_;
  Conv2d agg0_, agg1_, refine_head_;
};

}  // namespace slbr::testing
