#pragma once

#include <string>
#include <vector>

#include "jdiff/denoiser.hpp"
#include "jdiff/optim.hpp"

namespace jdiff {

// Fully determines a run; equal configs + seeds give bit-identical artifacts.
struct RunConfig {
  // [run]
  uint64_t seed = 42;
  std::string outdir = "out";

  // [schedule]
  int timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  // [model]
  int base_width = 32;
  std::vector<int> channel_mult = {1, 2};
  int res_blocks = 1;
  int time_embed_dim = 64;
  std::vector<bool> attention;

  // [optim]
  double lr = 2e-5;
  int warmup_steps = 500;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  // [train]
  int batch_size = 32;
  int epochs = 300;
  int checkpoint_every = 50;

  // [data]
  std::string source = "synthetic";  // synthetic | files
  int n_classes = 4;
  int per_class = 192;
  int resolution = 16;
  std::string idx_images, idx_labels;
  std::vector<std::string> cifar_batches;
  int quota = 5000;
  int target_h = 64, target_w = 64;
  std::string resample = "bilinear";

  // [sample]
  std::string mode = "joint";  // joint | random | predicted | constant
  int sample_count = 64;
  int sample_chunk = 50;
  std::string condition_modality;  // guiding modality name for guided modes
  int condition_class = -1;        // restrict conditions to one class; -1 = all
  int fixed_condition_index = -1;  // repeat one condition; -1 = vary

  // [eval]
  int classifier_epochs = 8;
  int is_splits = 10;

  DenoiserConfig denoiser_config(int in_channels) const;
  OptimizerState optimizer_state() const;

  // Canonical text form (echoed into manifests; digest input).
  std::string canonical() const;
  std::string digest() const;

  static RunConfig from_file(const std::string& path, const std::vector<std::string>& overrides = {});
  static RunConfig parse(const std::string& text, const std::vector<std::string>& overrides = {});
};

}  // namespace jdiff
