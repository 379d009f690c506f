#pragma once

// Training objectives: mask BCE, L1 reconstruction, perceptual distance and
// the weighted total
//   L_all = L1(I_c) + L1(I_r) + lambda_vgg * L_vgg + lambda_mask * (L_mask + L'_mask).

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "slbr/network.hpp"
#include "slbr/ops.hpp"

namespace slbr {

struct LossWeights {
  double lambda_vgg = 0.001;
  double lambda_mask = 1.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

using ops::Reduction;

inline constexpr double kBceClamp = 1e-7;

// -sum[M log M_hat + (1 - M) log(1 - M_hat)], optionally divided by the
// element count.
Var mask_bce(const Var& pred, const Tensor& target, Reduction reduction = Reduction::mean);

// Mean absolute difference over every element.
Var l1_loss(const Var& pred, const Var& target);

enum class ExtractorProvenance { pretrained_vgg16, seeded_random };

// Three feature taps Phi^1..3 (end of each of the first three conv stages of
// a VGG-style stack). Weights are fixed; gradients flow only to the input.
// A default-constructed extractor is uninitialized and rejected by
// perceptual_loss.
class PerceptualExtractor {
 public:
  PerceptualExtractor() = default;

  // Random He-initialized stack, one 3x3 conv per stage by default.
  static PerceptualExtractor seeded(std::uint64_t seed,
                                    std::array<int, 3> widths = {8, 16, 32},
                                    std::array<int, 3> convs_per_stage = {1, 1, 1});
  // VGG16 conv1_1 .. conv3_3 from a tensor file with torchvision naming
  // (features.{0,2,5,7,10,12,14}.{weight,bias}).
  static PerceptualExtractor from_file(const std::filesystem::path& path);
  // Uses SLBR_VGG_WEIGHTS when set, otherwise the seeded extractor; the
  // fallback is reported on `log` when given.
  static PerceptualExtractor from_environment(std::uint64_t seed, std::ostream* log);

  bool initialized() const { return initialized_; }
  ExtractorProvenance provenance() const { return provenance_; }
  std::array<Var, 3> features(const Var& image) const;

 private:
  struct Layer {
    Var weight;
    Var bias;
  };
  bool initialized_ = false;
  ExtractorProvenance provenance_ = ExtractorProvenance::seeded_random;
  std::array<std::vector<Layer>, 3> stages_;
};

// sum_k mean|Phi^k(pred) - Phi^k(target)|.
Var perceptual_loss(const Var& pred, const Var& target, const PerceptualExtractor& extractor);

struct LossTerms {
  double coarse_l1 = 0.0;
  double refined_l1 = 0.0;
  double vgg = 0.0;
  double mask = 0.0;        // averaged over mask scales
  double mask_prime = 0.0;  // averaged over mask scales
  double total = 0.0;

  bool all_finite() const;
};

struct LossResult {
  Var total;
  LossTerms terms;
};

// background: (N, 3, H, W); mask: (N, 1, H, W) binary ground truth. Side
// masks are compared at their own resolution against the max-pooled truth.
LossResult total_loss(const CoarseOutput& coarse, const RefineOutput& refined,
                      const Tensor& background, const Tensor& mask, const LossWeights& weights,
                      const PerceptualExtractor& extractor);

}  // namespace slbr
