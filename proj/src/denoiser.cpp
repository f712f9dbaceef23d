#include "jdiff/denoiser.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "jdiff/ops.hpp"
#include "json.hpp"

namespace jdiff {

std::string DenoiserConfig::to_json() const {
  nlohmann::json j;
  j["in_channels"] = in_channels;
  j["base_width"] = base_width;
  j["channel_mult"] = channel_mult;
  j["res_blocks"] = res_blocks;
  j["time_embed_dim"] = time_embed_dim;
  j["attention"] = attention;
  return j.dump();
}

DenoiserConfig DenoiserConfig::from_json(const std::string& json) {
  nlohmann::json j = nlohmann::json::parse(json);
  DenoiserConfig c;
  c.in_channels = j.at("in_channels");
  c.base_width = j.at("base_width");
  c.channel_mult = j.at("channel_mult").get<std::vector<int>>();
  c.res_blocks = j.at("res_blocks");
  c.time_embed_dim = j.at("time_embed_dim");
  c.attention = j.at("attention").get<std::vector<bool>>();
  return c;
}

int norm_groups(int channels) { return std::min(8, channels); }

void DenoiserConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("DenoiserConfig: in_channels must be >= 1");
  if (levels() < 2) throw std::invalid_argument("DenoiserConfig: need at least 2 resolution levels");
  if (res_blocks < 1) throw std::invalid_argument("DenoiserConfig: res_blocks must be >= 1");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
    throw std::invalid_argument("DenoiserConfig: time_embed_dim must be even and >= 2");
  for (int l = 0; l < levels(); ++l) {
    int w = width(l);
    if (w < 1 || w % norm_groups(w) != 0)
      throw std::invalid_argument("DenoiserConfig: level " + std::to_string(l) + " width " + std::to_string(w) +
                                  " is not divisible by its norm group count " + std::to_string(norm_groups(w)));
  }
}

namespace {

// Walks the architecture for both construction and evaluation. When `rng` is
// set, missing parameters are created on first use (Kaiming fan-in normals for
// weights); otherwise a missing parameter is a logic error.
struct LayerCtx {
  ParameterStore& ps;
  Rng* rng = nullptr;

  Tensor param(const std::string& name, Shape shape, double kaiming_fan_in, bool zero, double fill = 0.0) {
    if (!ps.has(name)) {
      if (!rng) throw std::logic_error("denoiser: parameter '" + name + "' missing from store");
      Tensor t = Tensor::zeros(shape);
      if (!zero && kaiming_fan_in > 0.0) {
        double std = std::sqrt(2.0 / kaiming_fan_in);
        for (double& v : t.values()) v = std * rng->normal();
      } else if (fill != 0.0) {
        for (double& v : t.values()) v = fill;
      }
      ps.add(name, std::move(t));
    }
    return ps.at(name);
  }

  Tensor conv(const std::string& name, const Tensor& x, int out_ch, int k, int stride, bool zero = false) {
    int in_ch = x.shape()[1];
    Tensor w = param(name + ".w", {out_ch, in_ch, k, k}, static_cast<double>(in_ch) * k * k, zero);
    Tensor b = param(name + ".b", {out_ch}, 0.0, true);
    return conv2d(x, w, b, stride, (k - 1) / 2);
  }

  Tensor dense(const std::string& name, const Tensor& x, int out_dim) {
    int in_dim = x.shape()[1];
    Tensor w = param(name + ".w", {out_dim, in_dim}, static_cast<double>(in_dim), false);
    Tensor b = param(name + ".b", {out_dim}, 0.0, true);
    return linear(x, w, b);
  }

  Tensor norm(const std::string& name, const Tensor& x) {
    int c = x.shape()[1];
    Tensor g = param(name + ".g", {c}, 0.0, true, 1.0);
    Tensor b = param(name + ".b", {c}, 0.0, true);
    return group_norm(x, norm_groups(c), g, b);
  }

  Tensor res_block(const std::string& prefix, const Tensor& x, int out_ch, const Tensor& temb) {
    int in_ch = x.shape()[1];
    Tensor h = silu(norm(prefix + ".norm1", x));
    h = conv(prefix + ".conv1", h, out_ch, 3, 1);
    h = add_channel_bias(h, dense(prefix + ".temb", silu(temb), out_ch));
    h = silu(norm(prefix + ".norm2", h));
    h = conv(prefix + ".conv2", h, out_ch, 3, 1);
    Tensor skip = in_ch == out_ch ? x : conv(prefix + ".skip", x, out_ch, 1, 1);
    return add(h, skip);
  }

  Tensor attn_block(const std::string& prefix, const Tensor& x) {
    int ch = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    Tensor hn = norm(prefix + ".norm", x);
    Tensor q = nchw_to_nlc(conv(prefix + ".q", hn, ch, 1, 1));
    Tensor k = nchw_to_nlc(conv(prefix + ".k", hn, ch, 1, 1));
    Tensor v = nchw_to_nlc(conv(prefix + ".v", hn, ch, 1, 1));
    Tensor att = softmax_lastdim(scale(bmm(q, transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(ch))));
    Tensor o = nlc_to_nchw(bmm(att, v), h, w);
    o = conv(prefix + ".proj", o, ch, 1, 1, /*zero=*/true);
    return add(x, o);
  }
};

Tensor unet_forward(const DenoiserConfig& cfg, LayerCtx& ctx, const Tensor& z, const std::vector<int>& ts) {
  Tensor temb = sinusoidal_time_embedding_batch(ts, cfg.time_embed_dim);
  temb = ctx.dense("time.l0", temb, cfg.time_embed_dim);
  temb = ctx.dense("time.l1", silu(temb), cfg.time_embed_dim);

  int L = cfg.levels();
  std::vector<Tensor> skips;
  Tensor h = ctx.conv("stem", z, cfg.width(0), 3, 1);
  skips.push_back(h);
  for (int l = 0; l < L; ++l) {
    for (int i = 0; i < cfg.res_blocks; ++i) {
      h = ctx.res_block("down" + std::to_string(l) + ".res" + std::to_string(i), h, cfg.width(l), temb);
      if (cfg.attn_at(l)) h = ctx.attn_block("down" + std::to_string(l) + ".attn" + std::to_string(i), h);
      skips.push_back(h);
    }
    if (l < L - 1) {
      h = ctx.conv("down" + std::to_string(l) + ".downsample", h, cfg.width(l + 1), 3, 2);
      skips.push_back(h);
    }
  }

  h = ctx.res_block("mid.res0", h, cfg.width(L - 1), temb);
  if (cfg.attn_at(L - 1)) h = ctx.attn_block("mid.attn", h);
  h = ctx.res_block("mid.res1", h, cfg.width(L - 1), temb);

  for (int l = L - 1; l >= 0; --l) {
    for (int i = 0; i <= cfg.res_blocks; ++i) {
      Tensor skip = skips.back();
      skips.pop_back();
      h = ctx.res_block("up" + std::to_string(l) + ".res" + std::to_string(i), concat_channels(h, skip),
                        cfg.width(l), temb);
      if (cfg.attn_at(l)) h = ctx.attn_block("up" + std::to_string(l) + ".attn" + std::to_string(i), h);
    }
    if (l > 0) {
      h = upsample_nearest2x(h);
      h = ctx.conv("up" + std::to_string(l) + ".upsample", h, cfg.width(l), 3, 1);
    }
  }

  h = silu(ctx.norm("out.norm", h));
  return ctx.conv("out.conv", h, cfg.in_channels, 3, 1, /*zero=*/true);
}

}  // namespace

DenoiserModel build_denoiser(const DenoiserConfig& config, Rng& rng) {
  config.validate();
  DenoiserModel model;
  model.config = config;
  // Parameters are created lazily on first use, so a dummy forward pass at the
  // smallest valid resolution instantiates the full store in a fixed order.
  int side = 4 << (config.levels() - 1);
  NoGradGuard ng;
  LayerCtx ctx{model.params, &rng};
  Tensor dummy = Tensor::zeros({1, config.in_channels, side, side});
  unet_forward(config, ctx, dummy, {1});
  return model;
}

Tensor predict_noise(const DenoiserModel& model, const Tensor& z, const std::vector<int>& ts) {
  if (z.shape().size() != 4 || z.shape()[1] != model.config.in_channels)
    throw std::invalid_argument("predict_noise: input " + shape_str(z.shape()) + " does not carry " +
                                std::to_string(model.config.in_channels) + " channels");
  if (static_cast<int>(ts.size()) != z.shape()[0])
    throw std::invalid_argument("predict_noise: need one timestep per batch element");
  for (int t : ts)
    if (t < 1) throw std::invalid_argument("predict_noise: timestep " + std::to_string(t) + " out of range");
  LayerCtx ctx{const_cast<ParameterStore&>(model.params)};
  return unet_forward(model.config, ctx, z, ts);
}

}  // namespace jdiff
