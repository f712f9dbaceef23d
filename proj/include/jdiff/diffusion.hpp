#pragma once

#include <functional>
#include <string>
#include <vector>

#include "jdiff/data.hpp"
#include "jdiff/denoiser.hpp"
#include "jdiff/optim.hpp"
#include "jdiff/rng.hpp"
#include "jdiff/schedule.hpp"
#include "jdiff/tensor.hpp"

namespace jdiff {

// Partition of the packed channel range into generation and guiding sets.
struct ChannelMask {
  std::vector<int> generation;
  std::vector<int> guiding;

  int total() const { return static_cast<int>(generation.size() + guiding.size()); }
  void validate(int channels, bool guided) const;

  // Mask for conditioning on one layout modality, generating the rest.
  static ChannelMask conditioning_on(const PackedLayout& layout, const std::string& guiding_modality);
  static ChannelMask unconditional(int channels);
};

// One forward noising step x_t = sqrt(1-beta_t) x_{t-1} + sqrt(beta_t) xi.
Tensor forward_step(const Tensor& x_prev, int t, const NoiseSchedule& schedule, Rng& rng);

// Closed-form composition: sqrt(abar_t) x_0 + sqrt(1-abar_t) eps.
Tensor q_sample(const Tensor& x0, int t, const NoiseSchedule& schedule, const Tensor& eps);

struct TrainingState {
  DenoiserModel model;
  OptimizerState optimizer;
  NoiseSchedule schedule;
  int64_t epoch = 0;
  int64_t global_step = 0;
  uint64_t seed = 0;
  Rng noise_rng{0, 0};
  Rng timestep_rng{0, 0};
  Rng shuffle_rng{0, 0};

  static TrainingState create(const DenoiserConfig& config, const NoiseSchedule& schedule,
                              const OptimizerState& optimizer, uint64_t seed);
  void save(const std::string& path) const;
  static TrainingState restore(const std::string& path);
};

struct LossStats {
  double mean = 0.0, min = 0.0, max = 0.0;
  int batches = 0;
};

// step, epoch, loss, lr after each optimizer step.
using StepCallback = std::function<void(int64_t step, int64_t epoch, double loss, double lr)>;

LossStats train_epoch(TrainingState& state, const PackedDataset& dataset, int batch_size,
                      const StepCallback& on_step = nullptr);

// Instrumentation hook: observes the model input at each reverse step.
using SampleObserver = std::function<void(int t, const Tensor& z_t)>;

// Ancestral sampling of all channels jointly from pure noise.
Tensor sample_unconditional(const DenoiserModel& model, const NoiseSchedule& schedule, const Shape& shape, Rng& rng,
                            const SampleObserver& observe = nullptr);

// Guided samplers: `condition` is the clean conditioning image with one
// channel per guiding-mask entry, [N,|guiding|,H,W]. Returns the generated
// channels [N,|generation|,H,W].
Tensor sample_guided_random(const DenoiserModel& model, const NoiseSchedule& schedule, const ChannelMask& mask,
                            const Tensor& condition, Rng& rng, const SampleObserver& observe = nullptr);
Tensor sample_guided_predicted(const DenoiserModel& model, const NoiseSchedule& schedule, const ChannelMask& mask,
                               const Tensor& condition, Rng& rng, const SampleObserver& observe = nullptr);
Tensor sample_guided_constant(const DenoiserModel& model, const NoiseSchedule& schedule, const ChannelMask& mask,
                              const Tensor& condition, Rng& rng, const SampleObserver& observe = nullptr);

}  // namespace jdiff
