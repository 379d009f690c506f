#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "slbr/autograd.hpp"
#include "slbr/image.hpp"
#include "slbr/module.hpp"
#include "slbr/synth.hpp"

namespace slbr::testing {

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline Image random_image(int c, int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Image img(c, h, w);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : img.values()) v = u(rng);
  return img;
}

// Largest relative disagreement between backprop and central differences
// over every element of every input. f must return a scalar Var.
inline double grad_check(const std::function<Var(const std::vector<Var>&)>& f,
                         const std::vector<Tensor>& inputs, double h = 1e-5,
                         double floor = 1e-7) {
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.emplace_back(t, true);
  backward(f(vars));
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = vars[i].grad();
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      auto eval = [&](double delta) {
        std::vector<Var> probe;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == i) t[k] += delta;
          probe.emplace_back(t);
        }
        NoGradGuard guard;
        return f(probe).item();
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      const double denom = std::max({std::abs(numeric), std::abs(analytic[k]), floor});
      worst = std::max(worst, std::abs(numeric - analytic[k]) / denom);
    }
  }
  return worst;
}

// Small deterministic corpus: procedural backgrounds and logos.
inline Dataset toy_dataset(int count, int size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Image> backgrounds;
  for (int i = 0; i < count; ++i) backgrounds.push_back(procedural_background(size, size, rng));
  std::vector<WatermarkAsset> assets;
  for (int i = 0; i < 2; ++i) assets.push_back(procedural_watermark(size / 2, size / 2, rng));
  SynthConfig cfg;
  cfg.image_size = size;
  cfg.count = count;
  cfg.seed = seed;
  return synthesize(backgrounds, assets, cfg);
}

}  // namespace slbr::testing
