#pragma once

#include <string>
#include <vector>

#include "jdiff/params.hpp"
#include "jdiff/rng.hpp"
#include "jdiff/tensor.hpp"

namespace jdiff {

// Small convolutional classifier for one modality; its penultimate layer is
// the feature embedding used for FID.
struct FeatureClassifier {
  ParameterStore params;
  int in_channels = 1;
  int n_classes = 0;
  int base_width = 16;

  int feature_dim() const { return 2 * base_width; }

  void save(const std::string& path) const;
  static FeatureClassifier load(const std::string& path);
};

struct ClassifierOutput {
  Tensor features;  // [N,d]
  Tensor logits;    // [N,K]
};

ClassifierOutput classifier_forward(const FeatureClassifier& clf, const Tensor& images);
std::vector<int> classify(const FeatureClassifier& clf, const Tensor& images);

struct ClassifierTrainConfig {
  int epochs = 8;
  int batch_size = 32;
  double lr = 3e-3;
  double holdout_fraction = 0.1;
};

struct TrainedClassifier {
  FeatureClassifier classifier;
  double holdout_accuracy = 0.0;
};

// Cross-entropy training on [-1,1] images; the tail of the dataset is held
// out for the reported accuracy.
TrainedClassifier train_classifier(const Tensor& images, const std::vector<int>& labels, int n_classes,
                                   const ClassifierTrainConfig& config, Rng& rng);

struct GaussianFit {
  std::vector<double> mean;  // length d
  std::vector<double> cov;   // d*d row-major, symmetric
  int dim = 0;
};

// Unbiased (n-1) covariance; requires n >= d+1 samples.
GaussianFit fit_gaussian(const Tensor& features);

// Frechet distance between Gaussian fits, matrix square root via the
// symmetric eigendecomposition of S1^(1/2) S2 S1^(1/2).
double fid(const GaussianFit& a, const GaussianFit& b);

struct InceptionScore {
  double mean = 0.0;
  double std = 0.0;
};

// probs: row-stochastic [N,K] class posteriors.
InceptionScore inception_score(const std::vector<double>& probs, int n, int k, int n_splits = 10);

struct PerClassPR {
  std::vector<double> precision, recall;  // per class; NaN when undefined
  double macro_precision = 0.0, macro_recall = 0.0;
  int defined_precision_classes = 0, defined_recall_classes = 0;
  int samples = 0;
};

// Standard multiclass precision/recall of predictions against intended
// classes. Classes absent from both sides are excluded from the macro mean.
PerClassPR conditional_precision_recall(const std::vector<int>& predicted, const std::vector<int>& intended,
                                        int n_classes);

// Agreement metrics for jointly generated samples without ground truth: each
// modality's prediction serves as the label for the other.
PerClassPR matching_pseudo_precision(const std::vector<int>& preds_a, const std::vector<int>& preds_b, int n_classes);

struct MetricReport {
  double fid_a = 0.0, fid_b = 0.0;
  InceptionScore is_a, is_b;
  PerClassPR conditional;  // empty when the dump is unconditional
  PerClassPR matching;
  int sample_count = 0;
  std::string config_digest;
  std::string mode;

  // CSV rows (metric,modality,class,value) and a readable block.
  std::string to_csv() const;
  std::string to_text() const;
};

}  // namespace jdiff
