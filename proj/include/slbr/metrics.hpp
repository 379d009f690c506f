#pragma once

// Restoration (PSNR, SSIM, RMSE, RMSEw) and localization (F1, IoU) scores.

#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slbr/image.hpp"
#include "slbr/network.hpp"
#include "slbr/synth.hpp"

namespace slbr {

inline constexpr double kPsnrCap = 100.0;

// Peak 1.0; identical images give kPsnrCap.
double psnr(const Image& pred, const Image& target);

// Gaussian window 11, sigma 1.5, C1 = 0.01^2, C2 = 0.03^2, valid windows
// only, averaged over channels.
double ssim(const Image& pred, const Image& target);

// 0..255 scale.
double rmse(const Image& pred, const Image& target);
// Empty when the mask has no set pixel.
std::optional<double> rmse_w(const Image& pred, const Image& target, const Image& mask);

struct MaskScores {
  double f1 = 0.0;
  double iou_pct = 0.0;
};

MaskScores mask_f1_iou(const Image& pred, const Image& gt, double threshold = 0.5);

struct ImageScores {
  double psnr = 0.0;
  double ssim = 0.0;
  double rmse = 0.0;
  std::optional<double> rmsew;
  double f1 = 0.0;
  double iou = 0.0;
};

ImageScores score_image(const Image& pred, const Image& target, const Image& pred_mask,
                        const Image& gt_mask);

struct MetricsReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double rmse = 0.0;
  double rmsew = 0.0;  // mean over images with a nonempty mask
  double f1 = 0.0;
  double iou = 0.0;
  int n_images = 0;
  int excluded_empty_mask = 0;
  std::vector<ImageScores> per_image;

  static MetricsReport aggregate(std::vector<ImageScores> scores);
};

void to_json(nlohmann::json& j, const MetricsReport& r);

struct Restoration {
  Image image;   // final prediction
  Image coarse;  // first-stage prediction
  Image mask;    // finest calibrated mask
};

class Restorer {
 public:
  virtual ~Restorer() = default;
  virtual Restoration restore(const Image& watermarked) const = 0;
};

class NetworkRestorer : public Restorer {
 public:
  explicit NetworkRestorer(const SlbrNetwork& net) : net_(net) {}
  Restoration restore(const Image& watermarked) const override;

 private:
  const SlbrNetwork& net_;
};

// Returns J unchanged with an all-zero mask.
class IdentityRestorer : public Restorer {
 public:
  Restoration restore(const Image& watermarked) const override;
};

MetricsReport evaluate_corpus(const Restorer& model, const std::vector<Sample>& samples);

}  // namespace slbr
