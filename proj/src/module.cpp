#include "slbr/module.hpp"

#include <cmath>

#include "slbr/errors.hpp"
#include "slbr/ops.hpp"

namespace slbr {

NamedParameters Module::named_parameters() const {
  NamedParameters out;
  collect("", out);
  return out;
}

std::vector<Var> Module::parameters() const {
  std::vector<Var> out;
  for (auto& [name, v] : named_parameters()) out.push_back(v);
  return out;
}

std::size_t Module::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, v] : named_parameters()) n += v.value().size();
  return n;
}

void Module::zero_grad() {
  for (auto& [name, v] : named_parameters()) v.zero_grad();
}

Var Module::register_parameter(std::string name, Tensor init) {
  Var v(std::move(init), true);
  params_.emplace_back(std::move(name), v);
  return v;
}

void Module::register_module(std::string name, Module& child) {
  children_.emplace_back(std::move(name), &child);
}

void Module::collect(const std::string& prefix, NamedParameters& out) const {
  for (const auto& [name, v] : params_) out.emplace_back(prefix + name, v);
  for (const auto& [name, child] : children_) child->collect(prefix + name + ".", out);
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, Rng& rng)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride) {
  require(in_channels > 0 && out_channels > 0, "Conv2d: channel counts must be positive");
  require(kernel % 2 == 1, "Conv2d: kernel size must be odd");
  Tensor w({out_channels, in_channels, kernel, kernel});
  const double fan_in = static_cast<double>(in_channels) * kernel * kernel;
  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases. He-scaled
  // heads saturated the output sigmoids at initialization.
  const double bound = 1.0 / std::sqrt(fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : w.values()) v = dist(rng);
  Tensor b({1, out_channels, 1, 1});
  for (double& v : b.values()) v = dist(rng);
  weight = register_parameter("weight", std::move(w));
  bias = register_parameter("bias", std::move(b));
}

Var Conv2d::forward(const Var& x) const {
  return ops::conv2d(x, weight, bias, stride_, kernel_ / 2);
}

void Conv2d::zero() {
  weight.mutable_value().fill(0.0);
  bias.mutable_value().fill(0.0);
}

Norm::Norm(int channels, int groups) : groups_(fit_groups(channels, groups)) {
  gamma = register_parameter("gamma", Tensor({1, channels, 1, 1}, 1.0));
  beta = register_parameter("beta", Tensor({1, channels, 1, 1}, 0.0));
}

Var Norm::forward(const Var& x) const { return ops::group_norm(x, gamma, beta, groups_); }

int fit_groups(int channels, int requested) {
  int g = std::max(1, std::min(requested, channels));
  while (channels % g != 0) --g;
  return g;
}

}  // namespace slbr
