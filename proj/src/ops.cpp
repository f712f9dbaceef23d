#include "jdiff/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace jdiff {

namespace {

void expect_rank(const char* op, const Tensor& t, size_t rank) {
  if (t.shape().size() != rank)
    throw std::invalid_argument(std::string(op) + ": expected rank-" + std::to_string(rank) + " tensor, got " +
                                shape_str(t.shape()));
}

std::vector<double> pad_nchw(const std::vector<double>& x, int n, int c, int h, int w, int p) {
  if (p == 0) return x;
  int hp = h + 2 * p, wp = w + 2 * p;
  std::vector<double> out(static_cast<size_t>(n) * c * hp * wp, 0.0);
  for (int i = 0; i < n * c; ++i)
    for (int y = 0; y < h; ++y)
      std::copy_n(x.data() + (static_cast<size_t>(i) * h + y) * w, w,
                  out.data() + ((static_cast<size_t>(i) * hp + y + p) * wp + p));
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  expect_rank("conv2d", input, 4);
  expect_rank("conv2d", weight, 4);
  expect_rank("conv2d", bias, 1);
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  int k = ws[0], kh = ws[2], kw = ws[3];
  if (ws[1] != c)
    throw std::invalid_argument("conv2d: input channels of " + shape_str(xs) + " do not match weight " +
                                shape_str(ws));
  if (bias.shape()[0] != k)
    throw std::invalid_argument("conv2d: bias " + shape_str(bias.shape()) + " does not match weight " +
                                shape_str(ws));
  if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel extents must be odd");
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride/padding");
  int hp = h + 2 * padding, wp = w + 2 * padding;
  if (hp < kh || wp < kw)
    throw std::invalid_argument("conv2d: kernel " + shape_str(ws) + " larger than padded input " + shape_str(xs));
  int ho = (hp - kh) / stride + 1, wo = (wp - kw) / stride + 1;

  std::vector<double> xp = pad_nchw(input.values(), n, c, h, w, padding);
  const std::vector<double>& wv = weight.values();
  std::vector<double> out(static_cast<size_t>(n) * k * ho * wo);
  for (int in = 0; in < n; ++in) {
    for (int ik = 0; ik < k; ++ik) {
      double* orow = out.data() + (static_cast<size_t>(in) * k + ik) * ho * wo;
      double b = bias.values()[ik];
      for (int i = 0; i < ho * wo; ++i) orow[i] = b;
      for (int ic = 0; ic < c; ++ic) {
        const double* xc = xp.data() + (static_cast<size_t>(in) * c + ic) * hp * wp;
        for (int ikh = 0; ikh < kh; ++ikh) {
          for (int ikw = 0; ikw < kw; ++ikw) {
            double wgt = wv[((static_cast<size_t>(ik) * c + ic) * kh + ikh) * kw + ikw];
            for (int oh = 0; oh < ho; ++oh) {
              const double* xrow = xc + (oh * stride + ikh) * wp + ikw;
              double* orow2 = orow + oh * wo;
              if (stride == 1) {
                for (int ow = 0; ow < wo; ++ow) orow2[ow] += wgt * xrow[ow];
              } else {
                for (int ow = 0; ow < wo; ++ow) orow2[ow] += wgt * xrow[ow * stride];
              }
            }
          }
        }
      }
    }
  }

  auto backward = [=, xp = std::move(xp), wv = weight.values()](Tensor::Node& nd) {
    auto& px = *nd.parents[0];
    auto& pw = *nd.parents[1];
    auto& pb = *nd.parents[2];
    const std::vector<double>& go = nd.grad;
    if (px.requires_grad) {
      if (px.grad.empty()) px.grad.assign(px.value.size(), 0.0);
      std::vector<double> gxp(static_cast<size_t>(n) * c * hp * wp, 0.0);
      for (int in = 0; in < n; ++in)
        for (int ik = 0; ik < k; ++ik) {
          const double* grow = go.data() + (static_cast<size_t>(in) * k + ik) * ho * wo;
          for (int ic = 0; ic < c; ++ic) {
            double* gxc = gxp.data() + (static_cast<size_t>(in) * c + ic) * hp * wp;
            for (int ikh = 0; ikh < kh; ++ikh)
              for (int ikw = 0; ikw < kw; ++ikw) {
                double wgt = wv[((static_cast<size_t>(ik) * c + ic) * kh + ikh) * kw + ikw];
                for (int oh = 0; oh < ho; ++oh) {
                  const double* grow2 = grow + oh * wo;
                  double* gxrow = gxc + (oh * stride + ikh) * wp + ikw;
                  for (int ow = 0; ow < wo; ++ow) gxrow[ow * stride] += wgt * grow2[ow];
                }
              }
          }
        }
      for (int i = 0; i < n * c; ++i)
        for (int y = 0; y < h; ++y)
          for (int x2 = 0; x2 < w; ++x2)
            px.grad[(static_cast<size_t>(i) * h + y) * w + x2] +=
                gxp[(static_cast<size_t>(i) * hp + y + padding) * wp + x2 + padding];
    }
    if (pw.requires_grad) {
      if (pw.grad.empty()) pw.grad.assign(pw.value.size(), 0.0);
      for (int ik = 0; ik < k; ++ik)
        for (int ic = 0; ic < c; ++ic)
          for (int ikh = 0; ikh < kh; ++ikh)
            for (int ikw = 0; ikw < kw; ++ikw) {
              double acc = 0.0;
              for (int in = 0; in < n; ++in) {
                const double* grow = go.data() + (static_cast<size_t>(in) * k + ik) * ho * wo;
                const double* xc = xp.data() + (static_cast<size_t>(in) * c + ic) * hp * wp;
                for (int oh = 0; oh < ho; ++oh) {
                  const double* xrow = xc + (oh * stride + ikh) * wp + ikw;
                  const double* grow2 = grow + oh * wo;
                  for (int ow = 0; ow < wo; ++ow) acc += grow2[ow] * xrow[ow * stride];
                }
              }
              pw.grad[((static_cast<size_t>(ik) * c + ic) * kh + ikh) * kw + ikw] += acc;
            }
    }
    if (pb.requires_grad) {
      if (pb.grad.empty()) pb.grad.assign(pb.value.size(), 0.0);
      for (int ik = 0; ik < k; ++ik) {
        double acc = 0.0;
        for (int in = 0; in < n; ++in) {
          const double* grow = go.data() + (static_cast<size_t>(in) * k + ik) * ho * wo;
          for (int i = 0; i < ho * wo; ++i) acc += grow[i];
        }
        pb.grad[ik] += acc;
      }
    }
  };

  return detail::make_op("conv2d", {n, k, ho, wo}, std::move(out), {input, weight, bias}, std::move(backward));
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gain, const Tensor& bias) {
  expect_rank("group_norm", x, 4);
  const Shape& s = x.shape();
  int n = s[0], c = s[1], hw = s[2] * s[3];
  if (groups < 1 || c % groups != 0)
    throw std::invalid_argument("group_norm: channels " + std::to_string(c) + " not divisible by groups " +
                                std::to_string(groups));
  if (gain.shape() != Shape{c} || bias.shape() != Shape{c})
    throw std::invalid_argument("group_norm: affine parameters must have shape [" + std::to_string(c) + "]");
  constexpr double kEps = 1e-5;
  int cpg = c / groups;
  int m = cpg * hw;

  std::vector<double> xhat(x.values().size());
  std::vector<double> inv_std(static_cast<size_t>(n) * groups);
  std::vector<double> out(x.values().size());
  for (int in = 0; in < n; ++in)
    for (int g = 0; g < groups; ++g) {
      const double* xg = x.values().data() + (static_cast<size_t>(in) * c + static_cast<size_t>(g) * cpg) * hw;
      double mean = 0.0;
      for (int i = 0; i < m; ++i) mean += xg[i];
      mean /= m;
      double var = 0.0;
      for (int i = 0; i < m; ++i) {
        double d = xg[i] - mean;
        var += d * d;
      }
      var /= m;
      double inv = 1.0 / std::sqrt(var + kEps);
      inv_std[static_cast<size_t>(in) * groups + g] = inv;
      double* xh = xhat.data() + (static_cast<size_t>(in) * c + static_cast<size_t>(g) * cpg) * hw;
      double* og = out.data() + (static_cast<size_t>(in) * c + static_cast<size_t>(g) * cpg) * hw;
      for (int j = 0; j < cpg; ++j) {
        int ch = g * cpg + j;
        double a = gain.values()[ch], b = bias.values()[ch];
        for (int i = 0; i < hw; ++i) {
          double v = (xg[static_cast<size_t>(j) * hw + i] - mean) * inv;
          xh[static_cast<size_t>(j) * hw + i] = v;
          og[static_cast<size_t>(j) * hw + i] = a * v + b;
        }
      }
    }

  auto backward = [=, xhat = std::move(xhat), inv_std = std::move(inv_std), gv = gain.values()](Tensor::Node& nd) {
    auto& px = *nd.parents[0];
    auto& pg = *nd.parents[1];
    auto& pb = *nd.parents[2];
    const std::vector<double>& go = nd.grad;
    if (px.requires_grad) {
      if (px.grad.empty()) px.grad.assign(px.value.size(), 0.0);
      for (int in = 0; in < n; ++in)
        for (int g = 0; g < groups; ++g) {
          size_t base = (static_cast<size_t>(in) * c + static_cast<size_t>(g) * cpg) * hw;
          double sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (int j = 0; j < cpg; ++j) {
            double a = gv[g * cpg + j];
            for (int i = 0; i < hw; ++i) {
              double dxh = go[base + static_cast<size_t>(j) * hw + i] * a;
              sum_dxh += dxh;
              sum_dxh_xh += dxh * xhat[base + static_cast<size_t>(j) * hw + i];
            }
          }
          double inv = inv_std[static_cast<size_t>(in) * groups + g];
          double mean_dxh = sum_dxh / m, mean_dxh_xh = sum_dxh_xh / m;
          for (int j = 0; j < cpg; ++j) {
            double a = gv[g * cpg + j];
            for (int i = 0; i < hw; ++i) {
              size_t idx = base + static_cast<size_t>(j) * hw + i;
              double dxh = go[idx] * a;
              px.grad[idx] += inv * (dxh - mean_dxh - xhat[idx] * mean_dxh_xh);
            }
          }
        }
    }
    if (pg.requires_grad) {
      if (pg.grad.empty()) pg.grad.assign(pg.value.size(), 0.0);
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int in = 0; in < n; ++in) {
          size_t base = (static_cast<size_t>(in) * c + ch) * hw;
          for (int i = 0; i < hw; ++i) acc += go[base + i] * xhat[base + i];
        }
        pg.grad[ch] += acc;
      }
    }
    if (pb.requires_grad) {
      if (pb.grad.empty()) pb.grad.assign(pb.value.size(), 0.0);
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int in = 0; in < n; ++in) {
          size_t base = (static_cast<size_t>(in) * c + ch) * hw;
          for (int i = 0; i < hw; ++i) acc += go[base + i];
        }
        pb.grad[ch] += acc;
      }
    }
  };

  return detail::make_op("group_norm", s, std::move(out), {x, gain, bias}, std::move(backward));
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  expect_rank("linear", x, 2);
  expect_rank("linear", weight, 2);
  int n = x.shape()[0], d = x.shape()[1], o = weight.shape()[0];
  if (weight.shape()[1] != d)
    throw std::invalid_argument("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
  if (bias.shape() != Shape{o})
    throw std::invalid_argument("linear: bias must have shape [" + std::to_string(o) + "]");
  std::vector<double> out(static_cast<size_t>(n) * o);
  for (int in = 0; in < n; ++in)
    for (int io = 0; io < o; ++io) {
      double acc = bias.values()[io];
      const double* xr = x.values().data() + static_cast<size_t>(in) * d;
      const double* wr = weight.values().data() + static_cast<size_t>(io) * d;
      for (int id = 0; id < d; ++id) acc += xr[id] * wr[id];
      out[static_cast<size_t>(in) * o + io] = acc;
    }
  auto backward = [=, xv = x.values(), wv = weight.values()](Tensor::Node& nd) {
    auto& px = *nd.parents[0];
    auto& pw = *nd.parents[1];
    auto& pb = *nd.parents[2];
    const std::vector<double>& go = nd.grad;
    if (px.requires_grad) {
      if (px.grad.empty()) px.grad.assign(px.value.size(), 0.0);
      for (int in = 0; in < n; ++in)
        for (int id = 0; id < d; ++id) {
          double acc = 0.0;
          for (int io = 0; io < o; ++io)
            acc += go[static_cast<size_t>(in) * o + io] * wv[static_cast<size_t>(io) * d + id];
          px.grad[static_cast<size_t>(in) * d + id] += acc;
        }
    }
    if (pw.requires_grad) {
      if (pw.grad.empty()) pw.grad.assign(pw.value.size(), 0.0);
      for (int io = 0; io < o; ++io)
        for (int id = 0; id < d; ++id) {
          double acc = 0.0;
          for (int in = 0; in < n; ++in)
            acc += go[static_cast<size_t>(in) * o + io] * xv[static_cast<size_t>(in) * d + id];
          pw.grad[static_cast<size_t>(io) * d + id] += acc;
        }
    }
    if (pb.requires_grad) {
      if (pb.grad.empty()) pb.grad.assign(pb.value.size(), 0.0);
      for (int io = 0; io < o; ++io) {
        double acc = 0.0;
        for (int in = 0; in < n; ++in) acc += go[static_cast<size_t>(in) * o + io];
        pb.grad[io] += acc;
      }
    }
  };
  return detail::make_op("linear", {n, o}, std::move(out), {x, weight, bias}, std::move(backward));
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  expect_rank("add_channel_bias", x, 4);
  expect_rank("add_channel_bias", b, 2);
  const Shape& s = x.shape();
  int n = s[0], c = s[1], hw = s[2] * s[3];
  if (b.shape()[0] != n || b.shape()[1] != c)
    throw std::invalid_argument("add_channel_bias: " + shape_str(s) + " vs " + shape_str(b.shape()));
  std::vector<double> out(x.values());
  for (int i = 0; i < n * c; ++i) {
    double bv = b.values()[i];
    double* row = out.data() + static_cast<size_t>(i) * hw;
    for (int j = 0; j < hw; ++j) row[j] += bv;
  }
  return detail::make_op("add_channel_bias", s, std::move(out), {x, b}, [n, c, hw](Tensor::Node& nd) {
    auto& px = *nd.parents[0];
    auto& pb = *nd.parents[1];
    detail::accum_grad(px, nd.grad);
    if (pb.requires_grad) {
      if (pb.grad.empty()) pb.grad.assign(pb.value.size(), 0.0);
      for (int i = 0; i < n * c; ++i) {
        double acc = 0.0;
        const double* row = nd.grad.data() + static_cast<size_t>(i) * hw;
        for (int j = 0; j < hw; ++j) acc += row[j];
        pb.grad[i] += acc;
      }
    }
  });
}

Tensor upsample_nearest2x(const Tensor& x) {
  expect_rank("upsample_nearest2x", x, 4);
  const Shape& s = x.shape();
  int n = s[0], c = s[1], h = s[2], w = s[3];
  std::vector<double> out(static_cast<size_t>(n) * c * 4 * h * w);
  for (int i = 0; i < n * c; ++i)
    for (int y = 0; y < h; ++y)
      for (int x2 = 0; x2 < w; ++x2) {
        double v = x.values()[(static_cast<size_t>(i) * h + y) * w + x2];
        size_t base = (static_cast<size_t>(i) * 2 * h + 2 * y) * 2 * w + 2 * x2;
        out[base] = out[base + 1] = v;
        out[base + 2 * w] = out[base + 2 * w + 1] = v;
      }
  return detail::make_op("upsample_nearest2x", {n, c, 2 * h, 2 * w}, std::move(out), {x},
                         [n, c, h, w](Tensor::Node& nd) {
                           auto& p = *nd.parents[0];
                           if (!p.requires_grad) return;
                           if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
                           for (int i = 0; i < n * c; ++i)
                             for (int y = 0; y < h; ++y)
                               for (int x2 = 0; x2 < w; ++x2) {
                                 size_t base = (static_cast<size_t>(i) * 2 * h + 2 * y) * 2 * w + 2 * x2;
                                 p.grad[(static_cast<size_t>(i) * h + y) * w + x2] +=
                                     nd.grad[base] + nd.grad[base + 1] + nd.grad[base + 2 * w] +
                                     nd.grad[base + 2 * w + 1];
                               }
                         });
}

Tensor global_avg_pool(const Tensor& x) {
  expect_rank("global_avg_pool", x, 4);
  const Shape& s = x.shape();
  int n = s[0], c = s[1], hw = s[2] * s[3];
  std::vector<double> out(static_cast<size_t>(n) * c);
  for (int i = 0; i < n * c; ++i) {
    double acc = 0.0;
    const double* row = x.values().data() + static_cast<size_t>(i) * hw;
    for (int j = 0; j < hw; ++j) acc += row[j];
    out[i] = acc / hw;
  }
  return detail::make_op("global_avg_pool", {n, c}, std::move(out), {x}, [n, c, hw](Tensor::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    for (int i = 0; i < n * c; ++i) {
      double g = nd.grad[i] / hw;
      double* row = p.grad.data() + static_cast<size_t>(i) * hw;
      for (int j = 0; j < hw; ++j) row[j] += g;
    }
  });
}

Tensor nchw_to_nlc(const Tensor& x) {
  expect_rank("nchw_to_nlc", x, 4);
  const Shape& s = x.shape();
  int n = s[0], c = s[1], hw = s[2] * s[3];
  std::vector<double> out(x.values().size());
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic)
      for (int i = 0; i < hw; ++i)
        out[(static_cast<size_t>(in) * hw + i) * c + ic] = x.values()[(static_cast<size_t>(in) * c + ic) * hw + i];
  return detail::make_op("nchw_to_nlc", {n, hw, c}, std::move(out), {x}, [n, c, hw](Tensor::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    for (int in = 0; in < n; ++in)
      for (int ic = 0; ic < c; ++ic)
        for (int i = 0; i < hw; ++i)
          p.grad[(static_cast<size_t>(in) * c + ic) * hw + i] += nd.grad[(static_cast<size_t>(in) * hw + i) * c + ic];
  });
}

Tensor nlc_to_nchw(const Tensor& x, int h, int w) {
  expect_rank("nlc_to_nchw", x, 3);
  const Shape& s = x.shape();
  int n = s[0], hw = s[1], c = s[2];
  if (hw != h * w) throw std::invalid_argument("nlc_to_nchw: sequence length mismatch");
  std::vector<double> out(x.values().size());
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic)
      for (int i = 0; i < hw; ++i)
        out[(static_cast<size_t>(in) * c + ic) * hw + i] = x.values()[(static_cast<size_t>(in) * hw + i) * c + ic];
  return detail::make_op("nlc_to_nchw", {n, c, h, w}, std::move(out), {x}, [n, c, hw](Tensor::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    for (int in = 0; in < n; ++in)
      for (int ic = 0; ic < c; ++ic)
        for (int i = 0; i < hw; ++i)
          p.grad[(static_cast<size_t>(in) * hw + i) * c + ic] += nd.grad[(static_cast<size_t>(in) * c + ic) * hw + i];
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  expect_rank("bmm", a, 3);
  expect_rank("bmm", b, 3);
  int n = a.shape()[0], p = a.shape()[1], q = a.shape()[2], r = b.shape()[2];
  if (b.shape()[0] != n || b.shape()[1] != q)
    throw std::invalid_argument("bmm: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(n) * p * r, 0.0);
  for (int in = 0; in < n; ++in) {
    const double* av = a.values().data() + static_cast<size_t>(in) * p * q;
    const double* bv = b.values().data() + static_cast<size_t>(in) * q * r;
    double* ov = out.data() + static_cast<size_t>(in) * p * r;
    for (int ip = 0; ip < p; ++ip)
      for (int iq = 0; iq < q; ++iq) {
        double av2 = av[static_cast<size_t>(ip) * q + iq];
        const double* brow = bv + static_cast<size_t>(iq) * r;
        double* orow = ov + static_cast<size_t>(ip) * r;
        for (int ir = 0; ir < r; ++ir) orow[ir] += av2 * brow[ir];
      }
  }
  auto backward = [=, av = a.values(), bv = b.values()](Tensor::Node& nd) {
    auto& pa = *nd.parents[0];
    auto& pb = *nd.parents[1];
    const std::vector<double>& go = nd.grad;
    if (pa.requires_grad) {
      if (pa.grad.empty()) pa.grad.assign(pa.value.size(), 0.0);
      for (int in = 0; in < n; ++in)
        for (int ip = 0; ip < p; ++ip)
          for (int iq = 0; iq < q; ++iq) {
            double acc = 0.0;
            const double* grow = go.data() + (static_cast<size_t>(in) * p + ip) * r;
            const double* brow = bv.data() + (static_cast<size_t>(in) * q + iq) * r;
            for (int ir = 0; ir < r; ++ir) acc += grow[ir] * brow[ir];
            pa.grad[(static_cast<size_t>(in) * p + ip) * q + iq] += acc;
          }
    }
    if (pb.requires_grad) {
      if (pb.grad.empty()) pb.grad.assign(pb.value.size(), 0.0);
      for (int in = 0; in < n; ++in)
        for (int iq = 0; iq < q; ++iq)
          for (int ip = 0; ip < p; ++ip) {
            double av2 = av[(static_cast<size_t>(in) * p + ip) * q + iq];
            const double* grow = go.data() + (static_cast<size_t>(in) * p + ip) * r;
            double* brow = pb.grad.data() + (static_cast<size_t>(in) * q + iq) * r;
            for (int ir = 0; ir < r; ++ir) brow[ir] += av2 * grow[ir];
          }
    }
  };
  return detail::make_op("bmm", {n, p, r}, std::move(out), {a, b}, std::move(backward));
}

Tensor transpose_last2(const Tensor& x) {
  expect_rank("transpose_last2", x, 3);
  int n = x.shape()[0], p = x.shape()[1], q = x.shape()[2];
  std::vector<double> out(x.values().size());
  for (int in = 0; in < n; ++in)
    for (int ip = 0; ip < p; ++ip)
      for (int iq = 0; iq < q; ++iq)
        out[(static_cast<size_t>(in) * q + iq) * p + ip] = x.values()[(static_cast<size_t>(in) * p + ip) * q + iq];
  return detail::make_op("transpose_last2", {n, q, p}, std::move(out), {x}, [n, p, q](Tensor::Node& nd) {
    auto& px = *nd.parents[0];
    if (!px.requires_grad) return;
    if (px.grad.empty()) px.grad.assign(px.value.size(), 0.0);
    for (int in = 0; in < n; ++in)
      for (int ip = 0; ip < p; ++ip)
        for (int iq = 0; iq < q; ++iq)
          px.grad[(static_cast<size_t>(in) * p + ip) * q + iq] += nd.grad[(static_cast<size_t>(in) * q + iq) * p + ip];
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  expect_rank("softmax_lastdim", x, 3);
  int rows = x.shape()[0] * x.shape()[1], k = x.shape()[2];
  std::vector<double> out(x.values().size());
  for (int r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + static_cast<size_t>(r) * k;
    double* orow = out.data() + static_cast<size_t>(r) * k;
    double mx = xr[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, xr[i]);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      orow[i] = std::exp(xr[i] - mx);
      sum += orow[i];
    }
    for (int i = 0; i < k; ++i) orow[i] /= sum;
  }
  return detail::make_op("softmax_lastdim", x.shape(), std::move(out), {x}, [rows, k](Tensor::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    for (int r = 0; r < rows; ++r) {
      const double* s = nd.value.data() + static_cast<size_t>(r) * k;
      const double* g = nd.grad.data() + static_cast<size_t>(r) * k;
      double dot = 0.0;
      for (int i = 0; i < k; ++i) dot += g[i] * s[i];
      for (int i = 0; i < k; ++i) p.grad[static_cast<size_t>(r) * k + i] += s[i] * (g[i] - dot);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.shape().size() != 2)
    throw std::invalid_argument("cross_entropy: expected [N,K] logits, got " + shape_str(logits.shape()));
  int n = logits.shape()[0], k = logits.shape()[1];
  if (static_cast<int>(labels.size()) != n) throw std::invalid_argument("cross_entropy: label count mismatch");
  for (int l : labels)
    if (l < 0 || l >= k) throw std::invalid_argument("cross_entropy: label out of range");
  std::vector<double> probs(logits.values().size());
  double loss = 0.0;
  for (int in = 0; in < n; ++in) {
    const double* row = logits.values().data() + static_cast<size_t>(in) * k;
    double mx = row[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      probs[static_cast<size_t>(in) * k + i] = std::exp(row[i] - mx);
      sum += probs[static_cast<size_t>(in) * k + i];
    }
    for (int i = 0; i < k; ++i) probs[static_cast<size_t>(in) * k + i] /= sum;
    loss -= std::log(probs[static_cast<size_t>(in) * k + labels[in]]);
  }
  loss /= n;
  auto backward = [n, k, labels, probs = std::move(probs)](Tensor::Node& nd) {
    auto& p = *nd.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    double g = nd.grad[0] / n;
    for (int in = 0; in < n; ++in)
      for (int i = 0; i < k; ++i)
        p.grad[static_cast<size_t>(in) * k + i] +=
            g * (probs[static_cast<size_t>(in) * k + i] - (labels[in] == i ? 1.0 : 0.0));
  };
  return detail::make_op("cross_entropy", {1}, {loss}, {logits}, std::move(backward));
}

std::vector<double> softmax_rows(const Tensor& logits) {
  int n = logits.shape()[0], k = logits.shape()[1];
  std::vector<double> out(logits.values().size());
  for (int in = 0; in < n; ++in) {
    const double* row = logits.values().data() + static_cast<size_t>(in) * k;
    double mx = row[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      out[static_cast<size_t>(in) * k + i] = std::exp(row[i] - mx);
      sum += out[static_cast<size_t>(in) * k + i];
    }
    for (int i = 0; i < k; ++i) out[static_cast<size_t>(in) * k + i] /= sum;
  }
  return out;
}

Tensor sinusoidal_time_embedding(int64_t t, int dim) {
  Tensor row = sinusoidal_time_embedding_batch({static_cast<int>(t)}, dim);
  return Tensor::from_vector({dim}, row.values());
}

Tensor sinusoidal_time_embedding_batch(const std::vector<int>& ts, int dim) {
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument("sinusoidal_time_embedding: dim must be even and >= 2, got " + std::to_string(dim));
  int half = dim / 2;
  int n = static_cast<int>(ts.size());
  std::vector<double> out(static_cast<size_t>(n) * dim);
  for (int in = 0; in < n; ++in)
    for (int i = 0; i < half; ++i) {
      double freq = std::exp(-std::log(10000.0) * i / half);
      double arg = static_cast<double>(ts[in]) * freq;
      out[static_cast<size_t>(in) * dim + i] = std::sin(arg);
      out[static_cast<size_t>(in) * dim + half + i] = std::cos(arg);
    }
  return detail::make_op("sinusoidal_time_embedding", {n, dim}, std::move(out), {}, nullptr);
}

}  // namespace jdiff
