#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "jdiff/denoiser.hpp"
#include "jdiff/ops.hpp"
#include "jdiff/tensor.hpp"

using namespace jdiff;
using jdiff::testing::max_rel_grad_error;
using jdiff::testing::random_tensor;

namespace {

DenoiserConfig tiny_config(int channels = 2) {
  DenoiserConfig cfg;
  cfg.in_channels = channels;
  cfg.base_width = 8;
  cfg.channel_mult = {1, 2};
  cfg.res_blocks = 1;
  cfg.time_embed_dim = 8;
  return cfg;
}

}  // namespace

TEST_CASE("config validation rejects bad shapes") {
  DenoiserConfig cfg = tiny_config();
  cfg.channel_mult = {1};
  CHECK_THROWS(cfg.validate());
  cfg = tiny_config();
  cfg.base_width = 9;  // not divisible by the norm group count
  CHECK_THROWS(cfg.validate());
  cfg = tiny_config();
  cfg.in_channels = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("config json round trip") {
  DenoiserConfig cfg = tiny_config(3);
  cfg.attention = {false, true};
  DenoiserConfig back = DenoiserConfig::from_json(cfg.to_json());
  CHECK(back.in_channels == 3);
  CHECK(back.base_width == cfg.base_width);
  CHECK(back.channel_mult == cfg.channel_mult);
  CHECK(back.attention == cfg.attention);
}

TEST_CASE("output shape equals input shape at several resolutions") {
  Rng rng(1, 0);
  DenoiserModel model = build_denoiser(tiny_config(), rng);
  for (int side : {8, 16}) {
    Tensor z = random_tensor({2, 2, side, side}, rng);
    Tensor out = predict_noise(model, z, {1, 3});
    CHECK(out.shape() == z.shape());
  }
}

TEST_CASE("zero-initialized output convolution predicts zero noise") {
  Rng rng(2, 0);
  DenoiserModel model = build_denoiser(tiny_config(), rng);
  Tensor z = random_tensor({1, 2, 8, 8}, rng);
  Tensor out = predict_noise(model, z, {5});
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("identical builds are bit identical; parameter count is stable") {
  Rng r1(3, 0), r2(3, 0);
  DenoiserModel a = build_denoiser(tiny_config(), r1);
  DenoiserModel b = build_denoiser(tiny_config(), r2);
  CHECK(a.params.parameter_count() == b.params.parameter_count());
  CHECK(a.params.parameter_count() > 1000);
  for (auto it = a.params.begin(); it != a.params.end(); ++it) {
    const Tensor& mine = it->second;
    const Tensor& theirs = b.params.at(it->first);
    for (int64_t i = 0; i < mine.size(); ++i) CHECK(mine.values()[i] == theirs.values()[i]);
  }
}

TEST_CASE("time conditioning is wired: outputs differ when only t changes") {
  Rng rng(4, 0);
  DenoiserModel model = build_denoiser(tiny_config(), rng);
  // give the zero-initialized output conv nonzero weights so timestep
  // information can reach the output
  Tensor& ow = model.params.at("out.conv.w");
  for (double& v : ow.values()) v = 0.05 * rng.normal();
  Tensor z = random_tensor({1, 2, 8, 8}, rng);
  Tensor a = predict_noise(model, z, {1});
  Tensor b = predict_noise(model, z, {40});
  double l2 = 0;
  for (int64_t i = 0; i < a.size(); ++i) l2 += (a.values()[i] - b.values()[i]) * (a.values()[i] - b.values()[i]);
  CHECK(l2 > 0.0);
}

TEST_CASE("attention-enabled config runs and preserves shape") {
  Rng rng(5, 0);
  DenoiserConfig cfg = tiny_config();
  cfg.attention = {false, true};
  DenoiserModel model = build_denoiser(cfg, rng);
  Tensor z = random_tensor({1, 2, 8, 8}, rng);
  CHECK(predict_noise(model, z, {2}).shape() == z.shape());
}

TEST_CASE("invalid inputs are rejected") {
  Rng rng(6, 0);
  DenoiserModel model = build_denoiser(tiny_config(), rng);
  Tensor z3 = random_tensor({1, 3, 8, 8}, rng);  // wrong channel count
  CHECK_THROWS(predict_noise(model, z3, {1}));
  Tensor z = random_tensor({2, 2, 8, 8}, rng);
  CHECK_THROWS(predict_noise(model, z, {1}));     // ts length mismatch
  CHECK_THROWS(predict_noise(model, z, {0, 1}));  // t must be >= 1
}

TEST_CASE("end-to-end gradients pass finite differences") {
  Rng rng(7, 0);
  DenoiserConfig cfg;
  cfg.in_channels = 1;
  cfg.base_width = 8;
  cfg.channel_mult = {1, 2};
  cfg.res_blocks = 1;
  cfg.time_embed_dim = 4;
  DenoiserModel model = build_denoiser(cfg, rng);
  // nonzero output conv so its input path carries gradient signal
  for (double& v : model.params.at("out.conv.w").values()) v = 0.2 * rng.normal();

  Tensor z = random_tensor({1, 1, 4, 4}, rng);
  Tensor target = random_tensor({1, 1, 4, 4}, rng);
  auto loss = [&] { return mse(predict_noise(model, z, {3}), target); };

  // probe a handful of elements of every parameter plus the input
  std::vector<Tensor> inputs;
  std::vector<std::vector<int64_t>> probe;
  inputs.push_back(z);
  probe.push_back({0, 5, 15});
  for (auto it = model.params.begin(); it != model.params.end(); ++it) {
    inputs.push_back(it->second);
    std::vector<int64_t> p = {0};
    if (it->second.size() > 7) p.push_back(7);
    if (it->second.size() > 31) p.push_back(31);
    probe.push_back(p);
  }
  CHECK(max_rel_grad_error(loss, inputs, probe, 1e-4) < 1e-3);
}
