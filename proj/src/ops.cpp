#include "slbr/ops.hpp"

#include <algorithm>
#include <cmath>

#include "slbr/errors.hpp"
#include "slbr/kernels.hpp"

namespace slbr::ops {
namespace {

bool wants_grad(const Node& self, std::size_t i) {
  return i < self.inputs.size() && self.inputs[i] && self.inputs[i]->requires_grad;
}

Tensor& input_grad(Node& self, std::size_t i) { return self.inputs[i]->grad_buffer(); }
const Tensor& input_value(const Node& self, std::size_t i) { return self.inputs[i]->value; }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + a.shape().str() +
                                      " vs " + b.shape().str());
}

struct ConvGeometry {
  int cin, h, w, kh, kw, stride, pad, ho, wo;
  std::size_t k() const { return static_cast<std::size_t>(cin) * kh * kw; }
  std::size_t p() const { return static_cast<std::size_t>(ho) * wo; }
  bool direct() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void im2col(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t p = g.p();
  for (int c = 0; c < g.cin; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        double* dst = col + (static_cast<std::size_t>(c * g.kh + ki) * g.kw + kj) * p;
        for (int oy = 0; oy < g.ho; ++oy) {
          double* row = dst + static_cast<std::size_t>(oy) * g.wo;
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) {
            std::fill(row, row + g.wo, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            row[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* dx) {
  const std::size_t p = g.p();
  for (int c = 0; c < g.cin; ++c) {
    double* xc = dx + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const double* src = col + (static_cast<std::size_t>(c * g.kh + ki) * g.kw + kj) * p;
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.h) continue;
          const double* row = src + static_cast<std::size_t>(oy) * g.wo;
          double* dst = xc + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.w) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

struct Bilinear1d {
  std::vector<int> i0, i1;
  std::vector<double> l;
};

Bilinear1d bilinear_axis(int in, int out) {
  Bilinear1d axis;
  axis.i0.resize(out);
  axis.i1.resize(out);
  axis.l.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    axis.i0[o] = i0;
    axis.i1[o] = std::min(i0 + 1, in - 1);
    axis.l[o] = src - i0;
  }
  return axis;
}

Tensor resize_forward(const Tensor& x, const Bilinear1d& ay, const Bilinear1d& ax,
                      int out_h, int out_w) {
  const Shape s = x.shape();
  Tensor y({s.n, s.c, out_h, out_w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = x.plane(n, c);
      double* dst = y.plane(n, c);
      for (int oy = 0; oy < out_h; ++oy) {
        const double ly = ay.l[oy];
        const double* r0 = src + static_cast<std::size_t>(ay.i0[oy]) * s.w;
        const double* r1 = src + static_cast<std::size_t>(ay.i1[oy]) * s.w;
        for (int ox = 0; ox < out_w; ++ox) {
          const double lx = ax.l[ox];
          const int x0 = ax.i0[ox], x1 = ax.i1[ox];
          const double top = (1.0 - lx) * r0[x0] + lx * r0[x1];
          const double bot = (1.0 - lx) * r1[x0] + lx * r1[x1];
          dst[static_cast<std::size_t>(oy) * out_w + ox] = (1.0 - ly) * top + ly * bot;
        }
      }
    }
  }
  return y;
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(ws.c == xs.c, "conv2d: input has " + std::to_string(xs.c) +
                            " channels, weight expects " + std::to_string(ws.c));
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  if (bias.defined()) {
    require(bias.shape() == Shape{1, ws.n, 1, 1}, "conv2d: bias shape " + bias.shape().str());
  }
  ConvGeometry g{xs.c, xs.h, xs.w, ws.h, ws.w, stride, pad, 0, 0};
  g.ho = (xs.h + 2 * pad - ws.h) / stride + 1;
  g.wo = (xs.w + 2 * pad - ws.w) / stride + 1;
  require(g.ho > 0 && g.wo > 0, "conv2d: kernel larger than padded input");

  const auto& kt = kernels::active();
  const int cout = ws.n;
  const std::size_t kdim = g.k(), pdim = g.p();
  Tensor y({xs.n, cout, g.ho, g.wo});
  std::vector<double> col(g.direct() ? 0 : kdim * pdim);
  for (int n = 0; n < xs.n; ++n) {
    const double* colp = x.value().plane(n, 0);
    if (!g.direct()) {
      im2col(g, colp, col.data());
      colp = col.data();
    }
    double* yn = y.plane(n, 0);
    kt.gemm(cout, pdim, kdim, weight.value().data(), static_cast<std::ptrdiff_t>(kdim), 1, colp,
            static_cast<std::ptrdiff_t>(pdim), yn, static_cast<std::ptrdiff_t>(pdim), false);
    if (bias.defined()) {
      for (int o = 0; o < cout; ++o) {
        const double b = bias.value()[o];
        double* yo = yn + static_cast<std::size_t>(o) * pdim;
        for (std::size_t i = 0; i < pdim; ++i) yo[i] += b;
      }
    }
  }

  return make_op_result(std::move(y), {x, weight, bias}, [g, cout](Node& self) {
    const auto& kt = kernels::active();
    const Tensor& gy = self.grad;
    const Tensor& xv = input_value(self, 0);
    const Tensor& wv = input_value(self, 1);
    const std::size_t kdim = g.k(), pdim = g.p();
    const int batch = gy.shape().n;
    if (wants_grad(self, 2)) {
      Tensor& db = input_grad(self, 2);
      for (int n = 0; n < batch; ++n) {
        for (int o = 0; o < cout; ++o) db[o] += kt.sum(pdim, gy.plane(n, o));
      }
    }
    const bool gw = wants_grad(self, 1);
    const bool gx = wants_grad(self, 0);
    std::vector<double> col(g.direct() ? 0 : kdim * pdim);
    std::vector<double> dcol(g.direct() || !gx ? 0 : kdim * pdim);
    for (int n = 0; n < batch; ++n) {
      const double* gyn = gy.plane(n, 0);
      if (gw) {
        const double* colp = xv.plane(n, 0);
        if (!g.direct()) {
          im2col(g, colp, col.data());
          colp = col.data();
        }
        kt.gemm_abt(cout, kdim, pdim, gyn, static_cast<std::ptrdiff_t>(pdim), colp,
                    static_cast<std::ptrdiff_t>(pdim), input_grad(self, 1).data(),
                    static_cast<std::ptrdiff_t>(kdim));
      }
      if (gx) {
        double* dxn = input_grad(self, 0).plane(n, 0);
        // dcol = W^T * gy: W^T(k, o) = W[o * K + k].
        if (g.direct()) {
          kt.gemm(kdim, pdim, cout, wv.data(), 1, static_cast<std::ptrdiff_t>(kdim), gyn,
                  static_cast<std::ptrdiff_t>(pdim), dxn, static_cast<std::ptrdiff_t>(pdim), true);
        } else {
          kt.gemm(kdim, pdim, cout, wv.data(), 1, static_cast<std::ptrdiff_t>(kdim), gyn,
                  static_cast<std::ptrdiff_t>(pdim), dcol.data(),
                  static_cast<std::ptrdiff_t>(pdim), false);
          col2im_add(g, dcol.data(), dxn);
        }
      }
    }
  });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
  const Shape s = x.shape();
  require(groups >= 1 && s.c % groups == 0,
          "group_norm: " + std::to_string(s.c) + " channels not divisible into " +
              std::to_string(groups) + " groups");
  require(gamma.shape() == Shape{1, s.c, 1, 1} && beta.shape() == Shape{1, s.c, 1, 1},
          "group_norm: affine parameters must be (1, C, 1, 1)");
  const int cg = s.c / groups;
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(cg) * static_cast<double>(plane);

  auto xhat = std::make_shared<Tensor>(s);
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(s.n) * groups);
  Tensor y(s);
  for (int n = 0; n < s.n; ++n) {
    for (int gi = 0; gi < groups; ++gi) {
      double mean = 0.0;
      for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
        const double* xp = x.value().plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) mean += xp[i];
      }
      mean /= count;
      double var = 0.0;
      for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
        const double* xp = x.value().plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = xp[i] - mean;
          var += d * d;
        }
      }
      var /= count;
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[static_cast<std::size_t>(n) * groups + gi] = is;
      for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
        const double* xp = x.value().plane(n, c);
        double* hp = xhat->plane(n, c);
        double* yp = y.plane(n, c);
        const double ga = gamma.value()[c], be = beta.value()[c];
        for (std::size_t i = 0; i < plane; ++i) {
          hp[i] = (xp[i] - mean) * is;
          yp[i] = hp[i] * ga + be;
        }
      }
    }
  }

  return make_op_result(std::move(y), {x, gamma, beta},
                        [xhat, inv_std, groups, cg, plane, count](Node& self) {
    const Tensor& gy = self.grad;
    const Shape s = gy.shape();
    const Tensor& ga = input_value(self, 1);
    if (wants_grad(self, 1) || wants_grad(self, 2)) {
      for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
          const double* gp = gy.plane(n, c);
          const double* hp = xhat->plane(n, c);
          double sg = 0.0, sgh = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            sg += gp[i];
            sgh += gp[i] * hp[i];
          }
          if (wants_grad(self, 1)) input_grad(self, 1)[c] += sgh;
          if (wants_grad(self, 2)) input_grad(self, 2)[c] += sg;
        }
      }
    }
    if (!wants_grad(self, 0)) return;
    Tensor& gx = input_grad(self, 0);
    for (int n = 0; n < s.n; ++n) {
      for (int gi = 0; gi < groups; ++gi) {
        double s1 = 0.0, s2 = 0.0;
        for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
          const double* gp = gy.plane(n, c);
          const double* hp = xhat->plane(n, c);
          const double gam = ga[c];
          for (std::size_t i = 0; i < plane; ++i) {
            const double d = gp[i] * gam;
            s1 += d;
            s2 += d * hp[i];
          }
        }
        s1 /= count;
        s2 /= count;
        const double is = (*inv_std)[static_cast<std::size_t>(n) * groups + gi];
        for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
          const double* gp = gy.plane(n, c);
          const double* hp = xhat->plane(n, c);
          double* dp = gx.plane(n, c);
          const double gam = ga[c];
          for (std::size_t i = 0; i < plane; ++i) {
            dp[i] += is * (gp[i] * gam - s1 - hp[i] * s2);
          }
        }
      }
    }
  });
}

Var leaky_relu(const Var& x, double slope) {
  Tensor y(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
  return make_op_result(std::move(y), {x}, [slope](Node& self) {
    const Tensor& xv = input_value(self, 0);
    Tensor& gx = input_grad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * (xv[i] > 0.0 ? 1.0 : slope);
    }
  });
}

Var silu(const Var& x) {
  Tensor y(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] / (1.0 + std::exp(-xv[i]));
  return make_op_result(std::move(y), {x}, [](Node& self) {
    const Tensor& xv = input_value(self, 0);
    Tensor& gx = input_grad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-xv[i]));
      gx[i] += self.grad[i] * s * (1.0 + xv[i] * (1.0 - s));
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor y(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = xv[i];
    if (v >= 0.0) {
      y[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      y[i] = e / (1.0 + e);
    }
  }
  return make_op_result(std::move(y), {x}, [](Node& self) {
    Tensor& gx = input_grad(self, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = self.value[i];
      gx[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  kernels::active().axpy(y.size(), 1.0, b.value().data(), y.data());
  return make_op_result(std::move(y), {a, b}, [](Node& self) {
    const auto& kt = kernels::active();
    for (std::size_t i = 0; i < 2; ++i) {
      if (wants_grad(self, i)) {
        kt.axpy(self.grad.size(), 1.0, self.grad.data(), input_grad(self, i).data());
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  kernels::active().axpy(y.size(), -1.0, b.value().data(), y.data());
  return make_op_result(std::move(y), {a, b}, [](Node& self) {
    const auto& kt = kernels::active();
    if (wants_grad(self, 0)) kt.axpy(self.grad.size(), 1.0, self.grad.data(), input_grad(self, 0).data());
    if (wants_grad(self, 1)) kt.axpy(self.grad.size(), -1.0, self.grad.data(), input_grad(self, 1).data());
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return make_op_result(std::move(y), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants_grad(self, k)) continue;
      const Tensor& other = input_value(self, 1 - k);
      Tensor& g = input_grad(self, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * other[i];
    }
  });
}

Var scale(const Var& x, double s) {
  Tensor y = x.value();
  for (double& v : y.values()) v *= s;
  return make_op_result(std::move(y), {x}, [s](Node& self) {
    kernels::active().axpy(self.grad.size(), s, self.grad.data(), input_grad(self, 0).data());
  });
}

Var concat_channels(std::span<const Var> parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  Shape s = parts[0].shape();
  int channels = 0;
  for (const Var& p : parts) {
    const Shape ps = p.shape();
    require(ps.n == s.n && ps.h == s.h && ps.w == s.w,
            "concat_channels: spatial/batch mismatch " + ps.str() + " vs " + s.str());
    channels += ps.c;
  }
  s.c = channels;
  Tensor y(s);
  int offset = 0;
  std::vector<int> offsets;
  for (const Var& p : parts) {
    offsets.push_back(offset);
    const Shape ps = p.shape();
    for (int n = 0; n < s.n; ++n) {
      std::copy_n(p.value().plane(n, 0), static_cast<std::size_t>(ps.c) * ps.plane(),
                  y.plane(n, offset));
    }
    offset += ps.c;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_op_result(std::move(y), std::move(inputs), [offsets](Node& self) {
    const Shape s = self.grad.shape();
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      if (!wants_grad(self, k)) continue;
      Tensor& g = input_grad(self, k);
      const std::size_t len = static_cast<std::size_t>(g.shape().c) * s.plane();
      for (int n = 0; n < s.n; ++n) {
        kernels::active().axpy(len, 1.0, self.grad.plane(n, offsets[k]), g.plane(n, 0));
      }
    }
  });
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  const Shape s = x.shape();
  require(out_h > 0 && out_w > 0, "resize_bilinear: bad output size");
  if (s.h == out_h && s.w == out_w) return x;
  auto ay = std::make_shared<Bilinear1d>(bilinear_axis(s.h, out_h));
  auto ax = std::make_shared<Bilinear1d>(bilinear_axis(s.w, out_w));
  Tensor y = resize_forward(x.value(), *ay, *ax, out_h, out_w);
  return make_op_result(std::move(y), {x}, [ay, ax, out_h, out_w](Node& self) {
    Tensor& gx = input_grad(self, 0);
    const Shape s = gx.shape();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const double* gp = self.grad.plane(n, c);
        double* dst = gx.plane(n, c);
        for (int oy = 0; oy < out_h; ++oy) {
          const double ly = ay->l[oy];
          double* r0 = dst + static_cast<std::size_t>(ay->i0[oy]) * s.w;
          double* r1 = dst + static_cast<std::size_t>(ay->i1[oy]) * s.w;
          for (int ox = 0; ox < out_w; ++ox) {
            const double g = gp[static_cast<std::size_t>(oy) * out_w + ox];
            const double lx = ax->l[ox];
            const int x0 = ax->i0[ox], x1 = ax->i1[ox];
            r0[x0] += (1.0 - ly) * (1.0 - lx) * g;
            r0[x1] += (1.0 - ly) * lx * g;
            r1[x0] += ly * (1.0 - lx) * g;
            r1[x1] += ly * lx * g;
          }
        }
      }
    }
  });
}

Var max_pool2(const Var& x) {
  const Shape s = x.shape();
  require(s.h >= 2 && s.w >= 2, "max_pool2: input smaller than 2x2");
  const int ho = s.h / 2, wo = s.w / 2;
  Tensor y({s.n, s.c, ho, wo});
  auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());
  std::size_t idx = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = x.value().plane(n, c);
      const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * s.plane();
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox, ++idx) {
          std::size_t best = static_cast<std::size_t>(2 * oy) * s.w + 2 * ox;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t p = static_cast<std::size_t>(2 * oy + dy) * s.w + 2 * ox + dx;
              if (src[p] > src[best]) best = p;
            }
          }
          y[idx] = src[best];
          (*argmax)[idx] = base + best;
        }
      }
    }
  }
  return make_op_result(std::move(y), {x}, [argmax](Node& self) {
    Tensor& gx = input_grad(self, 0);
    for (std::size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += self.grad[i];
  });
}

Var masked_avg_pool(const Var& x, const Var& mask, double eps) {
  const Shape s = x.shape();
  const Shape ms = mask.shape();
  require(ms.n == s.n && ms.c == 1 && ms.h == s.h && ms.w == s.w,
          "masked_avg_pool: mask " + ms.str() + " does not match feature " + s.str());
  const std::size_t plane = s.plane();
  auto denom = std::make_shared<std::vector<double>>(s.n);
  Tensor y({s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n) {
    const double* m = mask.value().plane(n, 0);
    const double d = kernels::active().sum(plane, m) + eps;
    (*denom)[n] = d;
    for (int c = 0; c < s.c; ++c) {
      y.at(n, c, 0, 0) = kernels::active().dot(plane, x.value().plane(n, c), m) / d;
    }
  }
  return make_op_result(std::move(y), {x, mask}, [denom, plane](Node& self) {
    const auto& kt = kernels::active();
    const Tensor& xv = input_value(self, 0);
    const Tensor& mv = input_value(self, 1);
    const Shape s = xv.shape();
    for (int n = 0; n < s.n; ++n) {
      const double d = (*denom)[n];
      if (wants_grad(self, 0)) {
        Tensor& gx = input_grad(self, 0);
        for (int c = 0; c < s.c; ++c) {
          kt.axpy(plane, self.grad.at(n, c, 0, 0) / d, mv.plane(n, 0), gx.plane(n, c));
        }
      }
      if (wants_grad(self, 1)) {
        double* gm = input_grad(self, 1).plane(n, 0);
        for (int c = 0; c < s.c; ++c) {
          const double g = self.grad.at(n, c, 0, 0) / d;
          const double pooled = self.value.at(n, c, 0, 0);
          const double* xp = xv.plane(n, c);
          for (std::size_t i = 0; i < plane; ++i) gm[i] += g * (xp[i] - pooled);
        }
      }
    }
  });
}

Var expand_spatial(const Var& v, int h, int w) {
  const Shape s = v.shape();
  require(s.h == 1 && s.w == 1, "expand_spatial: input must be (N, C, 1, 1), got " + s.str());
  Tensor y({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      double* p = y.plane(n, c);
      std::fill(p, p + y.shape().plane(), v.value().at(n, c, 0, 0));
    }
  }
  return make_op_result(std::move(y), {v}, [](Node& self) {
    Tensor& g = input_grad(self, 0);
    const Shape s = self.grad.shape();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        g.at(n, c, 0, 0) += kernels::active().sum(s.plane(), self.grad.plane(n, c));
      }
    }
  });
}

Var channel_standardize(const Var& x, std::span<const double> shift,
                        std::span<const double> div) {
  const Shape s = x.shape();
  require(shift.size() == static_cast<std::size_t>(s.c) && div.size() == shift.size(),
          "channel_standardize: per-channel constants do not match channel count");
  Tensor y = x.value();
  std::vector<double> inv(div.size());
  for (std::size_t c = 0; c < div.size(); ++c) inv[c] = 1.0 / div[c];
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      double* p = y.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) p[i] = (p[i] - shift[c]) * inv[c];
    }
  }
  return make_op_result(std::move(y), {x}, [inv](Node& self) {
    Tensor& g = input_grad(self, 0);
    const Shape s = g.shape();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        kernels::active().axpy(s.plane(), inv[c], self.grad.plane(n, c), g.plane(n, c));
      }
    }
  });
}

Var binary_cross_entropy(const Var& pred, const Tensor& target, Reduction reduction,
                         double clamp_eps) {
  require(pred.shape() == target.shape(), "binary_cross_entropy: shape mismatch " +
                                              pred.shape().str() + " vs " +
                                              target.shape().str());
  const Tensor& p = pred.value();
  const double lo = clamp_eps, hi = 1.0 - clamp_eps;
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], lo, hi);
    const double t = target[i];
    total -= t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
  }
  const double count = static_cast<double>(p.size());
  const double norm = reduction == Reduction::mean ? 1.0 / count : 1.0;
  // Divide rather than multiply so mean == sum / N holds bit for bit.
  Tensor out({1, 1, 1, 1}, reduction == Reduction::mean ? total / count : total);
  return make_op_result(std::move(out), {pred}, [target, norm, lo, hi](Node& self) {
    const Tensor& p = input_value(self, 0);
    Tensor& g = input_grad(self, 0);
    const double up = self.grad[0] * norm;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double q = p[i];
      if (q <= lo || q >= hi) continue;
      const double t = target[i];
      g[i] += up * (-(t / q) + (1.0 - t) / (1.0 - q));
    }
  });
}

Var mean_abs_diff(const Var& a, const Var& b) {
  require_same_shape(a, b, "mean_abs_diff");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i] - bv[i]);
  const double norm = 1.0 / static_cast<double>(av.size());
  Tensor out({1, 1, 1, 1}, acc * norm);
  return make_op_result(std::move(out), {a, b}, [norm](Node& self) {
    const Tensor& av = input_value(self, 0);
    const Tensor& bv = input_value(self, 1);
    const double up = self.grad[0] * norm;
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants_grad(self, k)) continue;
      Tensor& g = input_grad(self, k);
      const double sign_k = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = av[i] - bv[i];
        if (d > 0.0) g[i] += sign_k * up;
        else if (d < 0.0) g[i] -= sign_k * up;
      }
    }
  });
}

Tensor max_pool_tensor(const Tensor& x, int factor) {
  const Shape s = x.shape();
  require(factor >= 1 && s.h % factor == 0 && s.w % factor == 0,
          "max_pool_tensor: size " + s.str() + " not divisible by " + std::to_string(factor));
  if (factor == 1) return x;
  const int ho = s.h / factor, wo = s.w / factor;
  Tensor y({s.n, s.c, ho, wo});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          double best = x.at(n, c, oy * factor, ox * factor);
          for (int dy = 0; dy < factor; ++dy) {
            for (int dx = 0; dx < factor; ++dx) {
              best = std::max(best, x.at(n, c, oy * factor + dy, ox * factor + dx));
            }
          }
          y.at(n, c, oy, ox) = best;
        }
      }
    }
  }
  return y;
}

Tensor resize_bilinear_tensor(const Tensor& x, int out_h, int out_w) {
  const Shape s = x.shape();
  if (s.h == out_h && s.w == out_w) return x;
  return resize_forward(x, bilinear_axis(s.h, out_h), bilinear_axis(s.w, out_w), out_h, out_w);
}

}  // namespace slbr::ops
