#include "slbr/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "slbr/errors.hpp"

namespace slbr {
namespace {

void check_pair(const Image& a, const Image& b, const char* what) {
  require(a.channels() == b.channels() && a.same_geometry(b),
          std::string(what) + ": images differ in shape");
  require(!a.empty(), std::string(what) + ": empty image");
}

double mse(const Image& a, const Image& b) {
  const auto va = a.values(), vb = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = va[i] - vb[i];
    acc += d * d;
  }
  return acc / static_cast<double>(va.size());
}

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> g{};
  double total = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable valid-mode filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::array<double, kWin>& g) {
  const int oh = h - kWin + 1, ow = w - kWin + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double psnr(const Image& pred, const Image& target) {
  check_pair(pred, target, "psnr");
  const double e = mse(pred, target);
  if (e <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / e));
}

double ssim(const Image& pred, const Image& target) {
  check_pair(pred, target, "ssim");
  const int h = pred.height(), w = pred.width();
  require(h >= kWin && w >= kWin, "ssim: image smaller than the 11x11 window");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto g = gaussian_window();
  const std::size_t plane = pred.plane();
  double total = 0.0;
  for (int c = 0; c < pred.channels(); ++c) {
    std::vector<double> a(plane), b(plane), aa(plane), bb(plane), ab(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      a[i] = pred.values()[c * plane + i];
      b[i] = target.values()[c * plane + i];
      aa[i] = a[i] * a[i];
      bb[i] = b[i] * b[i];
      ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, h, w, g), mu_b = filter_valid(b, h, w, g);
    const auto s_aa = filter_valid(aa, h, w, g), s_bb = filter_valid(bb, h, w, g);
    const auto s_ab = filter_valid(ab, h, w, g);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
      acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / pred.channels();
}

double rmse(const Image& pred, const Image& target) {
  check_pair(pred, target, "rmse");
  return 255.0 * std::sqrt(mse(pred, target));
}

std::optional<double> rmse_w(const Image& pred, const Image& target, const Image& mask) {
  check_pair(pred, target, "rmse_w");
  require(mask.channels() == 1 && mask.same_geometry(pred), "rmse_w: mask must be 1 x H x W");
  const std::size_t plane = pred.plane();
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    if (mask.values()[i] < 0.5) continue;
    for (int c = 0; c < pred.channels(); ++c) {
      const double d = pred.values()[c * plane + i] - target.values()[c * plane + i];
      acc += d * d;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return 255.0 * std::sqrt(acc / static_cast<double>(count));
}

MaskScores mask_f1_iou(const Image& pred, const Image& gt, double threshold) {
  check_pair(pred, gt, "mask_f1_iou");
  require(pred.channels() == 1, "mask_f1_iou: masks must be single-channel");
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.values().size(); ++i) {
    const bool p = pred.values()[i] >= threshold;
    const bool t = gt.values()[i] >= 0.5;
    tp += p && t;
    fp += p && !t;
    fn += !p && t;
  }
  if (tp + fp + fn == 0) return {1.0, 100.0};
  const double f1 = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
  const double iou = 100.0 * tp / static_cast<double>(tp + fp + fn);
  return {f1, iou};
}

ImageScores score_image(const Image& pred, const Image& target, const Image& pred_mask,
                        const Image& gt_mask) {
  ImageScores s;
  s.psnr = psnr(pred, target);
  s.ssim = ssim(pred, target);
  s.rmse = rmse(pred, target);
  s.rmsew = rmse_w(pred, target, gt_mask);
  const MaskScores m = mask_f1_iou(pred_mask, gt_mask);
  s.f1 = m.f1;
  s.iou = m.iou_pct;
  return s;
}

MetricsReport MetricsReport::aggregate(std::vector<ImageScores> scores) {
  MetricsReport r;
  r.n_images = static_cast<int>(scores.size());
  if (scores.empty()) return r;
  int with_mask = 0;
  for (const ImageScores& s : scores) {
    r.psnr += s.psnr;
    r.ssim += s.ssim;
    r.rmse += s.rmse;
    r.f1 += s.f1;
    r.iou += s.iou;
    if (s.rmsew) {
      r.rmsew += *s.rmsew;
      ++with_mask;
    }
  }
  const double n = static_cast<double>(scores.size());
  r.psnr /= n;
  r.ssim /= n;
  r.rmse /= n;
  r.f1 /= n;
  r.iou /= n;
  r.rmsew = with_mask > 0 ? r.rmsew / with_mask : 0.0;
  r.excluded_empty_mask = r.n_images - with_mask;
  r.per_image = std::move(scores);
  return r;
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = nlohmann::json{{"psnr", r.psnr},         {"ssim", r.ssim}, {"rmse", r.rmse},
                     {"rmsew", r.rmsew},       {"f1", r.f1},     {"iou", r.iou},
                     {"n_images", r.n_images}, {"excluded_empty_mask", r.excluded_empty_mask}};
}

Restoration NetworkRestorer::restore(const Image& watermarked) const {
  require(watermarked.channels() == 3, "restore: expected an RGB image");
  const int h = watermarked.height(), w = watermarked.width();
  int side = std::max({h, w, 32});
  side = (side + 15) / 16 * 16;
  const bool padded = side != h || side != w;
  const Image input = padded ? reflect_pad(watermarked, side, side) : watermarked;
  NoGradGuard guard;
  const SlbrOutput out = net_.forward(Var(input.to_tensor()));
  Restoration r{Image::from_tensor(out.refined.i_refined.value()),
                Image::from_tensor(out.coarse.i_coarse.value()),
                Image::from_tensor(out.coarse.finest().m_hat_prime.value())};
  if (padded) {
    r.image = crop(r.image, h, w);
    r.coarse = crop(r.coarse, h, w);
    r.mask = crop(r.mask, h, w);
  }
  return r;
}

Restoration IdentityRestorer::restore(const Image& watermarked) const {
  return {watermarked, watermarked, Image(1, watermarked.height(), watermarked.width())};
}

MetricsReport evaluate_corpus(const Restorer& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw ConfigError("evaluation corpus is empty");
  std::vector<ImageScores> scores;
  scores.reserve(samples.size());
  for (const Sample& s : samples) {
    const Restoration r = model.restore(s.watermarked);
    scores.push_back(score_image(r.image, s.background, r.mask, s.mask));
  }
  return MetricsReport::aggregate(std::move(scores));
}

}  // namespace slbr
