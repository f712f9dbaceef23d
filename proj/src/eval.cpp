#include "jdiff/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "jdiff/container.hpp"
#include "jdiff/ops.hpp"
#include "jdiff/optim.hpp"

namespace jdiff {

namespace {

Tensor make_conv_param(ParameterStore& ps, const std::string& name, int out_ch, int in_ch, int k, Rng& rng) {
  Tensor w = Tensor::zeros({out_ch, in_ch, k, k});
  double std = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
  for (double& v : w.values()) v = std * rng.normal();
  ps.add(name + ".w", std::move(w));
  ps.add(name + ".b", Tensor::zeros({out_ch}));
  return ps.at(name + ".w");
}

FeatureClassifier make_classifier(int in_channels, int n_classes, int base_width, Rng& rng) {
  FeatureClassifier clf;
  clf.in_channels = in_channels;
  clf.n_classes = n_classes;
  clf.base_width = base_width;
  make_conv_param(clf.params, "conv0", base_width, in_channels, 3, rng);
  make_conv_param(clf.params, "conv1", 2 * base_width, base_width, 3, rng);
  make_conv_param(clf.params, "conv2", 2 * base_width, 2 * base_width, 3, rng);
  Tensor w = Tensor::zeros({n_classes, clf.feature_dim()});
  double std = std::sqrt(2.0 / clf.feature_dim());
  for (double& v : w.values()) v = std * rng.normal();
  clf.params.add("head.w", std::move(w));
  clf.params.add("head.b", Tensor::zeros({n_classes}));
  return clf;
}

}  // namespace

ClassifierOutput classifier_forward(const FeatureClassifier& clf, const Tensor& images) {
  if (images.shape().size() != 4 || images.shape()[1] != clf.in_channels)
    throw std::invalid_argument("classifier: input " + shape_str(images.shape()) + " does not carry " +
                                std::to_string(clf.in_channels) + " channels");
  auto& ps = const_cast<ParameterStore&>(clf.params);
  Tensor h = silu(conv2d(images, ps.at("conv0.w"), ps.at("conv0.b"), 2, 1));
  h = silu(conv2d(h, ps.at("conv1.w"), ps.at("conv1.b"), 2, 1));
  h = silu(conv2d(h, ps.at("conv2.w"), ps.at("conv2.b"), 1, 1));
  Tensor features = global_avg_pool(h);
  Tensor logits = linear(features, ps.at("head.w"), ps.at("head.b"));
  return {features, logits};
}

std::vector<int> classify(const FeatureClassifier& clf, const Tensor& images) {
  NoGradGuard ng;
  ClassifierOutput out = classifier_forward(clf, images);
  int n = out.logits.shape()[0], k = out.logits.shape()[1];
  std::vector<int> preds(n);
  for (int i = 0; i < n; ++i) {
    const double* row = out.logits.values().data() + static_cast<size_t>(i) * k;
    preds[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return preds;
}

TrainedClassifier train_classifier(const Tensor& images, const std::vector<int>& labels, int n_classes,
                                   const ClassifierTrainConfig& config, Rng& rng) {
  if (n_classes < 2) throw std::invalid_argument("train_classifier: need at least two classes");
  const Shape& s = images.shape();
  int n = s[0], chw = s[1] * s[2] * s[3];
  if (static_cast<int>(labels.size()) != n) throw std::invalid_argument("train_classifier: label count mismatch");
  {
    std::vector<bool> present(n_classes, false);
    for (int l : labels) present.at(l) = true;
    for (int k = 0; k < n_classes; ++k)
      if (!present[k])
        throw std::invalid_argument("train_classifier: class " + std::to_string(k) + " absent from dataset");
  }
  int holdout = std::max(1, static_cast<int>(n * config.holdout_fraction));
  int train_n = n - holdout;
  if (train_n < 1) throw std::invalid_argument("train_classifier: dataset too small");

  TrainedClassifier result;
  result.classifier = make_classifier(s[1], n_classes, 16, rng);
  FeatureClassifier& clf = result.classifier;
  OptimizerState opt;
  opt.lr = config.lr;
  opt.warmup_steps = 20;

  // permute before splitting so the holdout is class-mixed even when the
  // dataset arrives in class-major order
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);

  std::vector<int> order(perm.begin(), perm.begin() + train_n);
  for (int e = 0; e < config.epochs; ++e) {
    for (int i = train_n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
    for (int start = 0; start < train_n; start += config.batch_size) {
      int bs = std::min(config.batch_size, train_n - start);
      std::vector<double> batch(static_cast<size_t>(bs) * chw);
      std::vector<int> batch_labels(bs);
      for (int i = 0; i < bs; ++i) {
        int idx = order[start + i];
        std::copy_n(images.values().data() + static_cast<size_t>(idx) * chw, chw,
                    batch.data() + static_cast<size_t>(i) * chw);
        batch_labels[i] = labels[idx];
      }
      Tensor x = Tensor::from_vector({bs, s[1], s[2], s[3]}, std::move(batch));
      Tensor loss = cross_entropy(classifier_forward(clf, x).logits, batch_labels);
      clf.params.zero_grad();
      loss.backward();
      adamw_step(clf.params, opt);
    }
  }

  // Held-out accuracy on the permuted tail.
  std::vector<double> hv(static_cast<size_t>(holdout) * chw);
  for (int i = 0; i < holdout; ++i)
    std::copy_n(images.values().data() + static_cast<size_t>(perm[train_n + i]) * chw, chw,
                hv.data() + static_cast<size_t>(i) * chw);
  Tensor hx = Tensor::from_vector({holdout, s[1], s[2], s[3]}, std::move(hv));
  std::vector<int> preds = classify(clf, hx);
  int correct = 0;
  for (int i = 0; i < holdout; ++i)
    if (preds[i] == labels[perm[train_n + i]]) ++correct;
  result.holdout_accuracy = static_cast<double>(correct) / holdout;
  return result;
}

void FeatureClassifier::save(const std::string& path) const {
  Container c;
  params.save_into(c, "param/");
  c.put_i64("in_channels", in_channels);
  c.put_i64("n_classes", n_classes);
  c.put_i64("base_width", base_width);
  c.save(path);
}

FeatureClassifier FeatureClassifier::load(const std::string& path) {
  Container c = Container::load(path);
  Rng dummy(0, 0);
  FeatureClassifier clf = make_classifier(static_cast<int>(c.get_i64("in_channels")),
                                          static_cast<int>(c.get_i64("n_classes")),
                                          static_cast<int>(c.get_i64("base_width")), dummy);
  clf.params.load_from(c, "param/");
  return clf;
}

GaussianFit fit_gaussian(const Tensor& features) {
  const Shape& s = features.shape();
  if (s.size() != 2) throw std::invalid_argument("fit_gaussian: expected [N,d] features");
  int n = s[0], d = s[1];
  if (n < d + 1)
    throw std::invalid_argument("fit_gaussian: need at least d+1=" + std::to_string(d + 1) + " samples, got " +
                                std::to_string(n));
  GaussianFit fit;
  fit.dim = d;
  fit.mean.assign(d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) fit.mean[j] += features.values()[static_cast<size_t>(i) * d + j];
  for (double& m : fit.mean) m /= n;
  fit.cov.assign(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      double dj = features.values()[static_cast<size_t>(i) * d + j] - fit.mean[j];
      for (int l = j; l < d; ++l) {
        double dl = features.values()[static_cast<size_t>(i) * d + l] - fit.mean[l];
        fit.cov[static_cast<size_t>(j) * d + l] += dj * dl;
      }
    }
  for (int j = 0; j < d; ++j)
    for (int l = j; l < d; ++l) {
      double v = fit.cov[static_cast<size_t>(j) * d + l] / (n - 1);
      fit.cov[static_cast<size_t>(j) * d + l] = v;
      fit.cov[static_cast<size_t>(l) * d + j] = v;
    }
  return fit;
}

double fid(const GaussianFit& a, const GaussianFit& b) {
  if (a.dim != b.dim)
    throw std::invalid_argument("fid: feature dimension mismatch " + std::to_string(a.dim) + " vs " +
                                std::to_string(b.dim));
  int d = a.dim;
  using Mat = Eigen::MatrixXd;
  Mat s1 = Eigen::Map<const Mat>(a.cov.data(), d, d);
  Mat s2 = Eigen::Map<const Mat>(b.cov.data(), d, d);

  auto psd_sqrt = [](const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    Eigen::VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) {
      if (ev[i] < -1e-6)
        std::cerr << "fid: clamping negative eigenvalue " << ev[i] << " to 0\n";
      ev[i] = std::max(0.0, ev[i]);
    }
    return Mat(es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose());
  };

  Mat root1 = psd_sqrt(s1);
  Mat inner = root1 * s2 * root1;
  Eigen::SelfAdjointEigenSolver<Mat> es(inner);
  double trace_sqrt = 0.0;
  for (int i = 0; i < d; ++i) {
    double ev = es.eigenvalues()[i];
    if (ev < -1e-6) std::cerr << "fid: clamping negative eigenvalue " << ev << " to 0\n";
    trace_sqrt += std::sqrt(std::max(0.0, ev));
  }
  double mean_sq = 0.0;
  for (int i = 0; i < d; ++i) {
    double diff = a.mean[i] - b.mean[i];
    mean_sq += diff * diff;
  }
  double value = mean_sq + s1.trace() + s2.trace() - 2.0 * trace_sqrt;
  return std::max(0.0, value);
}

InceptionScore inception_score(const std::vector<double>& probs, int n, int k, int n_splits) {
  if (n < 1 || k < 2 || static_cast<int>(probs.size()) != n * k)
    throw std::invalid_argument("inception_score: bad dimensions");
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += probs[static_cast<size_t>(i) * k + j];
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::invalid_argument("inception_score: row " + std::to_string(i) + " sums to " + std::to_string(sum));
  }
  n_splits = std::max(1, std::min(n_splits, n));
  std::vector<double> scores;
  for (int s = 0; s < n_splits; ++s) {
    int lo = s * n / n_splits, hi = (s + 1) * n / n_splits;
    if (hi <= lo) continue;
    std::vector<double> marginal(k, 0.0);
    for (int i = lo; i < hi; ++i)
      for (int j = 0; j < k; ++j) marginal[j] += probs[static_cast<size_t>(i) * k + j];
    for (double& m : marginal) m /= (hi - lo);
    double mean_kl = 0.0;
    for (int i = lo; i < hi; ++i) {
      double kl = 0.0;
      for (int j = 0; j < k; ++j) {
        double p = probs[static_cast<size_t>(i) * k + j];
        if (p > 0.0) kl += p * std::log(p / std::max(marginal[j], 1e-300));
      }
      mean_kl += kl;
    }
    scores.push_back(std::exp(mean_kl / (hi - lo)));
  }
  InceptionScore is;
  for (double s : scores) is.mean += s;
  is.mean /= scores.size();
  double var = 0.0;
  for (double s : scores) var += (s - is.mean) * (s - is.mean);
  is.std = scores.size() > 1 ? std::sqrt(var / scores.size()) : 0.0;
  return is;
}

namespace {

PerClassPR pr_from_confusion(const std::vector<int>& pred, const std::vector<int>& label, int n_classes) {
  if (pred.size() != label.size()) throw std::invalid_argument("precision/recall: size mismatch");
  std::vector<int> tp(n_classes, 0), pred_count(n_classes, 0), label_count(n_classes, 0);
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= n_classes || label[i] < 0 || label[i] >= n_classes)
      throw std::invalid_argument("precision/recall: class index out of range");
    pred_count[pred[i]]++;
    label_count[label[i]]++;
    if (pred[i] == label[i]) tp[pred[i]]++;
  }
  PerClassPR pr;
  pr.samples = static_cast<int>(pred.size());
  pr.precision.assign(n_classes, std::nan(""));
  pr.recall.assign(n_classes, std::nan(""));
  double psum = 0.0, rsum = 0.0;
  for (int k = 0; k < n_classes; ++k) {
    // A class absent from both predictions and labels is undefined and is
    // left out of the macro means.
    if (pred_count[k] > 0) {
      pr.precision[k] = static_cast<double>(tp[k]) / pred_count[k];
      psum += pr.precision[k];
      pr.defined_precision_classes++;
    } else if (label_count[k] > 0) {
      pr.precision[k] = 0.0;
      pr.defined_precision_classes++;
    }
    if (label_count[k] > 0) {
      pr.recall[k] = static_cast<double>(tp[k]) / label_count[k];
      rsum += pr.recall[k];
      pr.defined_recall_classes++;
    } else if (pred_count[k] > 0) {
      pr.recall[k] = 0.0;
      pr.defined_recall_classes++;
    }
  }
  pr.macro_precision = pr.defined_precision_classes ? psum / pr.defined_precision_classes : 0.0;
  pr.macro_recall = pr.defined_recall_classes ? rsum / pr.defined_recall_classes : 0.0;
  return pr;
}

}  // namespace

PerClassPR conditional_precision_recall(const std::vector<int>& predicted, const std::vector<int>& intended,
                                        int n_classes) {
  return pr_from_confusion(predicted, intended, n_classes);
}

PerClassPR matching_pseudo_precision(const std::vector<int>& preds_a, const std::vector<int>& preds_b,
                                     int n_classes) {
  return pr_from_confusion(preds_a, preds_b, n_classes);
}

namespace {
void pr_rows(std::ostringstream& os, const std::string& metric, const std::string& modality, const PerClassPR& pr) {
  os << metric << "_macro_precision," << modality << ",," << pr.macro_precision << "\n";
  os << metric << "_macro_recall," << modality << ",," << pr.macro_recall << "\n";
  for (size_t k = 0; k < pr.precision.size(); ++k) {
    if (!std::isnan(pr.precision[k]))
      os << metric << "_precision," << modality << "," << k << "," << pr.precision[k] << "\n";
    if (!std::isnan(pr.recall[k])) os << metric << "_recall," << modality << "," << k << "," << pr.recall[k] << "\n";
  }
}
}  // namespace

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "metric,modality,class,value\n";
  os << "fid,a,," << fid_a << "\n";
  os << "fid,b,," << fid_b << "\n";
  os << "is_mean,a,," << is_a.mean << "\n";
  os << "is_std,a,," << is_a.std << "\n";
  os << "is_mean,b,," << is_b.mean << "\n";
  os << "is_std,b,," << is_b.std << "\n";
  if (!conditional.precision.empty()) pr_rows(os, "conditional", "joint", conditional);
  if (!matching.precision.empty()) pr_rows(os, "matching", "joint", matching);
  os << "sample_count,,," << sample_count << "\n";
  return os.str();
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << "metric report (" << mode << ", " << sample_count << " samples, config " << config_digest << ")\n";
  os << "  FID      modality A: " << fid_a << "   modality B: " << fid_b << "\n";
  os << "  IS       modality A: " << is_a.mean << " +/- " << is_a.std << "   modality B: " << is_b.mean << " +/- "
     << is_b.std << "\n";
  if (!conditional.precision.empty())
    os << "  conditional macro P/R: " << conditional.macro_precision << " / " << conditional.macro_recall << "\n";
  if (!matching.precision.empty())
    os << "  matching    macro P/R: " << matching.macro_precision << " / " << matching.macro_recall << "\n";
  return os.str();
}

}  // namespace jdiff
