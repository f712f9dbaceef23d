#pragma once

#include <stdexcept>
#include <string>

#include "jdiff/config.hpp"
#include "jdiff/eval.hpp"

namespace jdiff {

// Bad user input (missing/malformed files, impossible requests). The CLI maps
// this — and config parse errors — to exit code 2; everything else is 1.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Output root: config outdir, re-rooted under $JDIFF_OUT_ROOT when that is
// set and outdir is relative.
std::string resolve_outdir(const RunConfig& config);

struct RunPaths {
  std::string root;

  std::string dataset() const { return root + "/dataset.jdck"; }
  std::string checkpoint_dir() const { return root + "/checkpoints"; }
  std::string checkpoint() const { return root + "/checkpoints/latest.jdck"; }
  std::string checkpoint_epoch(int64_t epoch) const;
  std::string loss_csv() const { return root + "/loss.csv"; }
  std::string grid_dir() const { return root + "/grids"; }
  std::string samples(const std::string& mode) const { return root + "/samples_" + mode + ".jdck"; }
  std::string classifier(const std::string& modality) const { return root + "/classifier_" + modality + ".jdck"; }
  std::string metrics_csv(const std::string& mode) const { return root + "/metrics_" + mode + ".csv"; }
  std::string metrics_txt(const std::string& mode) const { return root + "/metrics_" + mode + ".txt"; }
  std::string manifest(const std::string& command) const { return root + "/" + command + "_manifest.json"; }
};

RunPaths run_paths(const RunConfig& config);

// Builds the paired dataset cache and returns its digest.
std::string cmd_pack(const RunConfig& config);

// Trains (or resumes from `resume`) for config.epochs total epochs, writing
// periodic checkpoints and the loss CSV.
void cmd_train(const RunConfig& config, const std::string& resume = "");

// Samples per config.mode from the latest checkpoint; returns the dump path.
std::string cmd_sample(const RunConfig& config, const std::string& checkpoint = "");

// Evaluates the dump for config.mode, training per-modality classifiers on
// the packed cache if their checkpoints are absent.
MetricReport cmd_eval(const RunConfig& config);

// Human-readable summary of a container or manifest file.
std::string inspect_file(const std::string& path);

}  // namespace jdiff
