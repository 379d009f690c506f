#include "slbr/objectives.hpp"

#include <cmath>
#include <cstdlib>
#include <ostream>

#include "slbr/errors.hpp"
#include "slbr/module.hpp"
#include "slbr/tensor_file.hpp"

namespace slbr {
namespace {

constexpr std::array<double, 3> kImageNetMean{0.485, 0.456, 0.406};
constexpr std::array<double, 3> kImageNetStd{0.229, 0.224, 0.225};

}  // namespace

void LossWeights::validate() const {
  if (!(lambda_vgg >= 0.0) || !(lambda_mask >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
}

Var mask_bce(const Var& pred, const Tensor& target, Reduction reduction) {
  return ops::binary_cross_entropy(pred, target, reduction, kBceClamp);
}

Var l1_loss(const Var& pred, const Var& target) { return ops::mean_abs_diff(pred, target); }

PerceptualExtractor PerceptualExtractor::seeded(std::uint64_t seed, std::array<int, 3> widths,
                                                std::array<int, 3> convs_per_stage) {
  PerceptualExtractor ex;
  Rng rng(seed);
  int in = 3;
  for (int s = 0; s < 3; ++s) {
    require(widths[s] > 0 && convs_per_stage[s] > 0, "PerceptualExtractor: bad stage spec");
    for (int k = 0; k < convs_per_stage[s]; ++k) {
      Tensor w({widths[s], in, 3, 3});
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (9.0 * in)));
      for (double& v : w.values()) v = dist(rng);
      Tensor b({1, widths[s], 1, 1});
      for (double& v : b.values()) v = 0.1 * dist(rng);
      ex.stages_[s].push_back({Var(std::move(w)), Var(std::move(b))});
      in = widths[s];
    }
  }
  ex.initialized_ = true;
  ex.provenance_ = ExtractorProvenance::seeded_random;
  return ex;
}

PerceptualExtractor PerceptualExtractor::from_file(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);
  constexpr std::array<std::array<int, 3>, 3> kLayerIndex{{{0, 2, -1}, {5, 7, -1}, {10, 12, 14}}};
  PerceptualExtractor ex;
  int in = 3;
  for (int s = 0; s < 3; ++s) {
    for (int idx : kLayerIndex[s]) {
      if (idx < 0) continue;
      const std::string prefix = "features." + std::to_string(idx);
      Tensor w = file.at(prefix + ".weight");
      Tensor b = file.at(prefix + ".bias");
      if (w.shape().c != in || w.shape().h != 3 || w.shape().w != 3) {
        throw CompatibilityError("'" + path.string() + "': " + prefix + ".weight has shape " +
                                 w.shape().str());
      }
      if (b.shape() != Shape{1, w.shape().n, 1, 1}) {
        throw CompatibilityError("'" + path.string() + "': " + prefix + ".bias has shape " +
                                 b.shape().str());
      }
      in = w.shape().n;
      ex.stages_[s].push_back({Var(std::move(w)), Var(std::move(b))});
    }
  }
  ex.initialized_ = true;
  ex.provenance_ = ExtractorProvenance::pretrained_vgg16;
  return ex;
}

PerceptualExtractor PerceptualExtractor::from_environment(std::uint64_t seed, std::ostream* log) {
  const char* path = std::getenv("SLBR_VGG_WEIGHTS");
  if (path != nullptr && *path != '\0') return from_file(path);
  if (log != nullptr) {
    *log << "note: SLBR_VGG_WEIGHTS not set; using seeded random perceptual extractor (seed "
         << seed << ")\n";
  }
  return seeded(seed);
}

std::array<Var, 3> PerceptualExtractor::features(const Var& image) const {
  if (!initialized_) throw ConfigError("perceptual extractor is not initialized");
  require(image.shape().c == 3, "PerceptualExtractor: expected 3-channel input");
  std::array<Var, 3> taps;
  Var h = ops::channel_standardize(image, kImageNetMean, kImageNetStd);
  for (int s = 0; s < 3; ++s) {
    if (s > 0) h = ops::max_pool2(h);
    for (const Layer& layer : stages_[s]) {
      h = ops::relu(ops::conv2d(h, layer.weight, layer.bias, 1, 1));
    }
    taps[s] = h;
  }
  return taps;
}

Var perceptual_loss(const Var& pred, const Var& target, const PerceptualExtractor& extractor) {
  if (!extractor.initialized()) throw ConfigError("perceptual extractor is not initialized");
  require(pred.shape() == target.shape(), "perceptual_loss: shape mismatch");
  const std::array<Var, 3> fp = extractor.features(pred);
  std::array<Var, 3> ft;
  {
    NoGradGuard guard;
    ft = extractor.features(Var(target.value()));
  }
  Var total;
  for (int k = 0; k < 3; ++k) {
    Var term = ops::mean_abs_diff(fp[k], ft[k]);
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total;
}

bool LossTerms::all_finite() const {
  return std::isfinite(coarse_l1) && std::isfinite(refined_l1) && std::isfinite(vgg) &&
         std::isfinite(mask) && std::isfinite(mask_prime) && std::isfinite(total);
}

LossResult total_loss(const CoarseOutput& coarse, const RefineOutput& refined,
                      const Tensor& background, const Tensor& mask, const LossWeights& weights,
                      const PerceptualExtractor& extractor) {
  weights.validate();
  const Shape s = background.shape();
  require(mask.shape() == Shape{s.n, 1, s.h, s.w},
          "total_loss: mask " + mask.shape().str() + " does not match background " + s.str());
  require(!coarse.mask_pairs.empty(), "total_loss: no mask predictions");
  const Var target(background);

  Var lc = l1_loss(coarse.i_coarse, target);
  Var lr = l1_loss(refined.i_refined, target);
  Var lv = perceptual_loss(refined.i_refined, target, extractor);

  Var lm, lmp;
  const double inv_scales = 1.0 / static_cast<double>(coarse.mask_pairs.size());
  for (const MaskPair& pair : coarse.mask_pairs) {
    const Shape ms = pair.m_hat.shape();
    require(s.h % ms.h == 0 && s.h / ms.h == s.w / ms.w,
            "total_loss: side mask " + ms.str() + " is not a dyadic scale of " + s.str());
    const Tensor gt = ops::max_pool_tensor(mask, s.h / ms.h);
    Var a = ops::scale(mask_bce(pair.m_hat, gt), inv_scales);
    Var b = ops::scale(mask_bce(pair.m_hat_prime, gt), inv_scales);
    lm = lm.defined() ? ops::add(lm, a) : a;
    lmp = lmp.defined() ? ops::add(lmp, b) : b;
  }

  Var total = ops::add(lc, lr);
  total = ops::add(total, ops::scale(lv, weights.lambda_vgg));
  total = ops::add(total, ops::scale(ops::add(lm, lmp), weights.lambda_mask));

  LossResult result;
  result.total = total;
  result.terms.coarse_l1 = lc.item();
  result.terms.refined_l1 = lr.item();
  result.terms.vgg = lv.item();
  result.terms.mask = lm.item();
  result.terms.mask_prime = lmp.item();
  result.terms.total = total.item();
  return result;
}

}  // namespace slbr
