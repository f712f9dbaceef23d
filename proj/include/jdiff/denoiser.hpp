#pragma once

#include <vector>

#include "jdiff/params.hpp"
#include "jdiff/rng.hpp"
#include "jdiff/tensor.hpp"

namespace jdiff {

// U-Net noise predictor over channel-concatenated inputs. Output shape always
// equals input shape: the network predicts noise for generation and guiding
// channels alike.
struct DenoiserConfig {
  int in_channels = 2;
  int base_width = 32;
  std::vector<int> channel_mult = {1, 2};  // one entry per resolution level
  int res_blocks = 1;
  int time_embed_dim = 64;
  std::vector<bool> attention;  // per level; empty means no attention anywhere

  int levels() const { return static_cast<int>(channel_mult.size()); }
  int width(int level) const { return base_width * channel_mult[level]; }
  bool attn_at(int level) const {
    return !attention.empty() && level < static_cast<int>(attention.size()) && attention[level];
  }
  void validate() const;

  std::string to_json() const;
  static DenoiserConfig from_json(const std::string& json);
};

// Group count for a given channel width (conventional DDPM choice).
int norm_groups(int channels);

struct DenoiserModel {
  DenoiserConfig config;
  ParameterStore params;
};

// Kaiming fan-in initialization; the final output convolution is
// zero-initialized so an untrained model predicts zero noise.
DenoiserModel build_denoiser(const DenoiserConfig& config, Rng& rng);

// z [N,C,H,W] with C == config.in_channels, one timestep (>= 1) per batch
// element. Differentiable w.r.t. parameters and input.
Tensor predict_noise(const DenoiserModel& model, const Tensor& z, const std::vector<int>& ts);

}  // namespace jdiff
