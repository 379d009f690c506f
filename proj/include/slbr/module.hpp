#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "slbr/autograd.hpp"

namespace slbr {

using Rng = std::mt19937_64;

using NamedParameters = std::vector<std::pair<std::string, Var>>;

// Owner of learnable parameters and child modules. Parameter names are the
// dotted path of registration names, e.g. "coarse.enc0.conv1.weight".
// Modules are pinned in memory once constructed (children hold raw pointers).
class Module {
 public:
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  NamedParameters named_parameters() const;
  std::vector<Var> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

 protected:
  Module() = default;
  Var register_parameter(std::string name, Tensor init);
  void register_module(std::string name, Module& child);

 private:
  void collect(const std::string& prefix, NamedParameters& out) const;

  std::vector<std::pair<std::string, Var>> params_;
  std::vector<std::pair<std::string, Module*>> children_;
};

// 2-D convolution with bias; He-normal initialization from the given stream.
class Conv2d : public Module {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, Rng& rng);

  Var forward(const Var& x) const;
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  // Sets weight and bias to exactly zero.
  void zero();

  Var weight;
  Var bias;

 private:
  int in_, out_, kernel_, stride_;
};

// Per-sample group normalization with per-channel affine (gamma=1, beta=0).
class Norm : public Module {
 public:
  Norm(int channels, int groups);
  Var forward(const Var& x) const;

  Var gamma;
  Var beta;

 private:
  int groups_;
};

// Largest divisor of `channels` not exceeding `requested` (>= 1).
int fit_groups(int channels, int requested);

}  // namespace slbr
