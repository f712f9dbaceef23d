#include "jdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "jdiff/container.hpp"
#include "jdiff/ops.hpp"

namespace jdiff {

void ChannelMask::validate(int channels, bool guided) const {
  std::vector<int> cover(channels, 0);
  auto mark = [&](const std::vector<int>& set, const char* which) {
    for (int c : set) {
      if (c < 0 || c >= channels)
        throw std::invalid_argument(std::string("ChannelMask: ") + which + " channel " + std::to_string(c) +
                                    " out of [0," + std::to_string(channels) + ")");
      cover[c]++;
    }
  };
  mark(generation, "generation");
  mark(guiding, "guiding");
  for (int c = 0; c < channels; ++c)
    if (cover[c] != 1)
      throw std::invalid_argument("ChannelMask: channel " + std::to_string(c) +
                                  " must appear exactly once across generation and guiding sets");
  if (generation.empty()) throw std::invalid_argument("ChannelMask: generation set must be nonempty");
  if (guided && guiding.empty())
    throw std::invalid_argument("ChannelMask: guided sampling needs a nonempty guiding set");
}

ChannelMask ChannelMask::conditioning_on(const PackedLayout& layout, const std::string& guiding_modality) {
  const ModalityDesc& g = layout.modality(guiding_modality);
  ChannelMask mask;
  for (int c = 0; c < layout.total_channels(); ++c) {
    if (c >= g.channel_begin && c < g.channel_end)
      mask.guiding.push_back(c);
    else
      mask.generation.push_back(c);
  }
  return mask;
}

ChannelMask ChannelMask::unconditional(int channels) {
  ChannelMask mask;
  for (int c = 0; c < channels; ++c) mask.generation.push_back(c);
  return mask;
}

Tensor forward_step(const Tensor& x_prev, int t, const NoiseSchedule& schedule, Rng& rng) {
  if (t < 1 || t > schedule.T)
    throw std::invalid_argument("forward_step: t=" + std::to_string(t) + " outside [1," + std::to_string(schedule.T) + "]");
  double beta = schedule.beta(t);
  double keep = std::sqrt(1.0 - beta), inject = std::sqrt(beta);
  Tensor out = Tensor::zeros(x_prev.shape());
  for (size_t i = 0; i < out.values().size(); ++i)
    out.values()[i] = keep * x_prev.values()[i] + inject * rng.normal();
  return out;
}

Tensor q_sample(const Tensor& x0, int t, const NoiseSchedule& schedule, const Tensor& eps) {
  if (x0.shape() != eps.shape())
    throw std::invalid_argument("q_sample: shape mismatch " + shape_str(x0.shape()) + " vs " + shape_str(eps.shape()));
  if (t < 1 || t > schedule.T)
    throw std::invalid_argument("q_sample: t=" + std::to_string(t) + " outside [1," + std::to_string(schedule.T) + "]");
  double ab = schedule.alpha_bar(t);
  double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out = Tensor::zeros(x0.shape());
  for (size_t i = 0; i < out.values().size(); ++i) out.values()[i] = a * x0.values()[i] + b * eps.values()[i];
  return out;
}

TrainingState TrainingState::create(const DenoiserConfig& config, const NoiseSchedule& schedule,
                                    const OptimizerState& optimizer, uint64_t seed) {
  TrainingState st;
  Rng init(seed, 0);
  st.model = build_denoiser(config, init);
  st.optimizer = optimizer;
  st.schedule = schedule;
  st.seed = seed;
  st.noise_rng = Rng(seed, 1);
  st.timestep_rng = Rng(seed, 2);
  st.shuffle_rng = Rng(seed, 3);
  return st;
}

void TrainingState::save(const std::string& path) const {
  Container c;
  model.params.save_into(c, "param/");
  optimizer.save_into(c, "optim/");
  c.put_doubles("schedule/betas", schedule.betas);
  c.put_string("config", model.config.to_json());
  c.put_i64("state/epoch", epoch);
  c.put_i64("state/global_step", global_step);
  c.put_u64("state/seed", seed);
  c.put_u64("rng/noise_stream", noise_rng.stream());
  c.put_u64("rng/noise_counter", noise_rng.counter());
  c.put_u64("rng/timestep_stream", timestep_rng.stream());
  c.put_u64("rng/timestep_counter", timestep_rng.counter());
  c.put_u64("rng/shuffle_stream", shuffle_rng.stream());
  c.put_u64("rng/shuffle_counter", shuffle_rng.counter());
  c.save(path);
}

TrainingState TrainingState::restore(const std::string& path) {
  Container c = Container::load(path);
  TrainingState st;
  DenoiserConfig config = DenoiserConfig::from_json(c.get_string("config"));
  Rng dummy(0, 0);
  st.model = build_denoiser(config, dummy);
  st.model.params.load_from(c, "param/");
  st.optimizer.load_from(c, "optim/");
  st.schedule = schedule_from_betas(c.get_doubles("schedule/betas"));
  st.epoch = c.get_i64("state/epoch");
  st.global_step = c.get_i64("state/global_step");
  st.seed = c.get_u64("state/seed");
  auto restore_rng = [&](const std::string& name) {
    Rng r(st.seed, c.get_u64("rng/" + name + "_stream"));
    r.set_counter(c.get_u64("rng/" + name + "_counter"));
    return r;
  };
  st.noise_rng = restore_rng("noise");
  st.timestep_rng = restore_rng("timestep");
  st.shuffle_rng = restore_rng("shuffle");
  return st;
}

LossStats train_epoch(TrainingState& state, const PackedDataset& dataset, int batch_size,
                      const StepCallback& on_step) {
  if (dataset.size() == 0) throw std::invalid_argument("train_epoch: empty dataset");
  if (batch_size < 1) throw std::invalid_argument("train_epoch: batch_size must be >= 1");
  const Shape& ds = dataset.data.shape();
  int n = ds[0], c = ds[1], chw = ds[1] * ds[2] * ds[3];
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[state.shuffle_rng.uniform_int(0, i)]);

  LossStats stats;
  double sum = 0.0;
  for (int start = 0; start < n; start += batch_size) {
    int bs = std::min(batch_size, n - start);
    std::vector<int> ts(bs);
    std::vector<double> x0(static_cast<size_t>(bs) * chw);
    for (int i = 0; i < bs; ++i) {
      int idx = order[start + i];
      std::copy_n(dataset.data.values().data() + static_cast<size_t>(idx) * chw, chw,
                  x0.data() + static_cast<size_t>(i) * chw);
      ts[i] = static_cast<int>(state.timestep_rng.uniform_int(1, state.schedule.T));
    }
    std::vector<double> noise(x0.size());
    state.noise_rng.fill_normal(noise);
    std::vector<double> xt(x0.size());
    for (int i = 0; i < bs; ++i) {
      double ab = state.schedule.alpha_bar(ts[i]);
      double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
      for (int j = 0; j < chw; ++j) {
        size_t id = static_cast<size_t>(i) * chw + j;
        xt[id] = a * x0[id] + b * noise[id];
      }
    }
    double loss_v;
    try {
      Tensor input = Tensor::from_vector({bs, c, ds[2], ds[3]}, std::move(xt));
      Tensor target = Tensor::from_vector({bs, c, ds[2], ds[3]}, std::move(noise));
      Tensor pred = predict_noise(state.model, input, ts);
      Tensor loss = mse(pred, target);
      loss_v = loss.value();
      state.model.params.zero_grad();
      loss.backward();
      adamw_step(state.model.params, state.optimizer);
    } catch (const std::exception& e) {
      throw std::runtime_error("train_epoch: aborted at global step " + std::to_string(state.global_step) + ": " +
                               e.what());
    }
    state.global_step++;
    if (stats.batches == 0) {
      stats.min = stats.max = loss_v;
    } else {
      stats.min = std::min(stats.min, loss_v);
      stats.max = std::max(stats.max, loss_v);
    }
    sum += loss_v;
    stats.batches++;
    if (on_step) on_step(state.global_step, state.epoch, loss_v, state.optimizer.effective_lr());
  }
  state.epoch++;
  stats.mean = sum / stats.batches;
  return stats;
}

namespace {

void check_state_finite(const std::vector<double>& v, int t) {
  for (double x : v)
    if (!std::isfinite(x))
      throw std::runtime_error("sampler: non-finite state at reverse step t=" + std::to_string(t));
}

// Scatters per-mask channel blocks into a full [N,C,H,W] buffer.
Tensor assemble(const std::vector<int>& gen, const std::vector<int>& guide, const Tensor& c_gen,
                const Tensor& c_guide, int channels) {
  const Shape& s = c_gen.shape();
  int n = s[0], hw = s[2] * s[3];
  Tensor z = Tensor::zeros({n, channels, s[2], s[3]});
  for (int i = 0; i < n; ++i) {
    for (size_t j = 0; j < gen.size(); ++j)
      std::copy_n(c_gen.values().data() + (static_cast<size_t>(i) * gen.size() + j) * hw, hw,
                  z.values().data() + (static_cast<size_t>(i) * channels + gen[j]) * hw);
    for (size_t j = 0; j < guide.size(); ++j)
      std::copy_n(c_guide.values().data() + (static_cast<size_t>(i) * guide.size() + j) * hw, hw,
                  z.values().data() + (static_cast<size_t>(i) * channels + guide[j]) * hw);
  }
  return z;
}

// Gathers the listed channels of a full tensor into a compact block.
Tensor gather(const std::vector<int>& set, const Tensor& full) {
  const Shape& s = full.shape();
  int n = s[0], c = s[1], hw = s[2] * s[3];
  Tensor out = Tensor::zeros({n, static_cast<int>(set.size()), s[2], s[3]});
  for (int i = 0; i < n; ++i)
    for (size_t j = 0; j < set.size(); ++j)
      std::copy_n(full.values().data() + (static_cast<size_t>(i) * c + set[j]) * hw, hw,
                  out.values().data() + (static_cast<size_t>(i) * set.size() + j) * hw);
  return out;
}

// x_{t-1} = (x_t - beta/sqrt(1-abar_t) * eps_hat) / sqrt(1-beta) + sqrt(beta) * xi,
// with no noise injected at the final step.
void reverse_update(std::vector<double>& x, const std::vector<double>& eps_hat, int t,
                    const NoiseSchedule& schedule, Rng& rng) {
  double beta = schedule.beta(t);
  double coef = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
  double inv = 1.0 / std::sqrt(1.0 - beta);
  double sb = std::sqrt(beta);
  if (t > 1) {
    for (size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - coef * eps_hat[i]) * inv + sb * rng.normal();
  } else {
    for (size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - coef * eps_hat[i]) * inv;
  }
  check_state_finite(x, t);
}

enum class GuidanceMode { Random, Predicted, Constant };

Tensor sample_guided(GuidanceMode mode, const DenoiserModel& model, const NoiseSchedule& schedule,
                     const ChannelMask& mask, const Tensor& condition, Rng& rng, const SampleObserver& observe) {
  int channels = model.config.in_channels;
  mask.validate(channels, /*guided=*/true);
  if (condition.shape().size() != 4 || condition.shape()[1] != static_cast<int>(mask.guiding.size()))
    throw std::invalid_argument("guided sampler: condition " + shape_str(condition.shape()) + " must carry " +
                                std::to_string(mask.guiding.size()) + " guiding channels");
  NoGradGuard ng;
  const Shape& cs = condition.shape();
  int n = cs[0], h = cs[2], w = cs[3];
  int g = static_cast<int>(mask.generation.size());

  Tensor c_gen = Tensor::zeros({n, g, h, w});
  rng.fill_normal(c_gen.values());
  Tensor c_guide = Tensor::zeros(cs);
  if (mode == GuidanceMode::Predicted) {
    rng.fill_normal(c_guide.values());
  } else if (mode == GuidanceMode::Constant) {
    c_guide.values() = condition.values();
  }

  for (int t = schedule.T; t >= 1; --t) {
    if (mode == GuidanceMode::Random) {
      // Closed-form noising of the clean condition to level t, fresh noise
      // each step.
      double ab = schedule.alpha_bar(t);
      double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
      for (size_t i = 0; i < c_guide.values().size(); ++i)
        c_guide.values()[i] = a * condition.values()[i] + b * rng.normal();
    }
    Tensor z = assemble(mask.generation, mask.guiding, c_gen, c_guide, channels);
    if (observe) observe(t, z);
    std::vector<int> ts(n, t);
    Tensor eps_hat = predict_noise(model, z, ts);
    if (mode == GuidanceMode::Predicted) {
      // The model's guiding-channel prediction replaces the random draw when
      // noising the condition to level t-1.
      Tensor eps_guide = gather(mask.guiding, eps_hat);
      double ab = schedule.alpha_bar(t - 1);
      double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
      for (size_t i = 0; i < c_guide.values().size(); ++i)
        c_guide.values()[i] = a * condition.values()[i] + b * eps_guide.values()[i];
    }
    Tensor eps_gen = gather(mask.generation, eps_hat);
    reverse_update(c_gen.values(), eps_gen.values(), t, schedule, rng);
  }
  return c_gen;
}

}  // namespace

Tensor sample_unconditional(const DenoiserModel& model, const NoiseSchedule& schedule, const Shape& shape, Rng& rng,
                            const SampleObserver& observe) {
  if (shape.size() != 4 || shape[1] != model.config.in_channels)
    throw std::invalid_argument("sample_unconditional: shape " + shape_str(shape) + " must carry " +
                                std::to_string(model.config.in_channels) + " channels");
  NoGradGuard ng;
  Tensor x = Tensor::zeros(shape);
  rng.fill_normal(x.values());
  int n = shape[0];
  for (int t = schedule.T; t >= 1; --t) {
    if (observe) observe(t, x);
    std::vector<int> ts(n, t);
    Tensor eps_hat = predict_noise(model, x, ts);
    reverse_update(x.values(), eps_hat.values(), t, schedule, rng);
  }
  return x;
}

Tensor sample_guided_random(const DenoiserModel& model, const NoiseSchedule& schedule, const ChannelMask& mask,
                            const Tensor& condition, Rng& rng, const SampleObserver& observe) {
  return sample_guided(GuidanceMode::Random, model, schedule, mask, condition, rng, observe);
}

Tensor sample_guided_predicted(const DenoiserModel& model, const NoiseSchedule& schedule, const ChannelMask& mask,
                               const Tensor& condition, Rng& rng, const SampleObserver& observe) {
  return sample_guided(GuidanceMode::Predicted, model, schedule, mask, condition, rng, observe);
}

Tensor sample_guided_constant(const DenoiserModel& model, const NoiseSchedule& schedule, const ChannelMask& mask,
                              const Tensor& condition, Rng& rng, const SampleObserver& observe) {
  return sample_guided(GuidanceMode::Constant, model, schedule, mask, condition, rng, observe);
}

}  // namespace jdiff
