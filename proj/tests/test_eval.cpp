#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "jdiff/data.hpp"
#include "jdiff/eval.hpp"

using namespace jdiff;
using jdiff::testing::random_tensor;

TEST_CASE("gaussian fit: unbiased covariance, sample-count floor enforced") {
  Tensor x = Tensor::from_vector({3, 2}, {0, 0, 2, 2, 4, 4});
  GaussianFit g = fit_gaussian(x);
  CHECK(g.mean[0] == doctest::Approx(2.0));
  CHECK(g.cov[0] == doctest::Approx(4.0));  // (n-1) normalizer
  CHECK(g.cov[1] == doctest::Approx(4.0));
  Tensor too_few = Tensor::from_vector({2, 2}, {0, 0, 1, 1});
  CHECK_THROWS(fit_gaussian(too_few));
}

TEST_CASE("fid closed forms: zero, mean shift, and the 1-D formula") {
  Rng rng(1, 0);
  Tensor x = random_tensor({40, 3}, rng);
  GaussianFit g = fit_gaussian(x);
  CHECK(fid(g, g) < 1e-8);

  GaussianFit shifted = g;
  double d2 = 0;
  for (int i = 0; i < 3; ++i) {
    shifted.mean[i] += (i + 1) * 0.5;
    d2 += (i + 1) * 0.5 * (i + 1) * 0.5;
  }
  CHECK(fid(g, shifted) == doctest::Approx(d2).epsilon(1e-8));

  GaussianFit a, b;
  a.dim = b.dim = 1;
  a.mean = {1.0};
  a.cov = {2.0};
  b.mean = {-1.0};
  b.cov = {0.5};
  // (mu1-mu2)^2 + s1 + s2 - 2 sqrt(s1 s2)
  CHECK(fid(a, b) == doctest::Approx(4.0 + 2.5 - 2.0 * std::sqrt(1.0)).epsilon(1e-10));

  GaussianFit ident = a;
  ident.cov = {1.0};
  GaussianFit ident2 = ident;
  ident2.mean = {1.0 + 3.0};
  CHECK(fid(ident, ident2) == doctest::Approx(9.0).epsilon(1e-8));
}

TEST_CASE("inception score attains its bounds") {
  int n = 40, k = 4;
  // every sample predicted with the same (marginal) distribution -> IS = 1
  std::vector<double> flat(n * k, 1.0 / k);
  InceptionScore lo = inception_score(flat, n, k, 4);
  CHECK(lo.mean == doctest::Approx(1.0).epsilon(1e-10));

  // confident one-hot predictions, classes balanced within splits -> IS = K
  std::vector<double> hot(n * k, 0.0);
  for (int i = 0; i < n; ++i) hot[i * k + i % k] = 1.0;
  InceptionScore hi = inception_score(hot, n, k, 5);
  CHECK(hi.mean == doctest::Approx((double)k).epsilon(1e-10));

  std::vector<double> bad(n * k, 0.3);  // rows do not sum to one
  CHECK_THROWS(inception_score(bad, n, k, 4));
}

TEST_CASE("uniform random predictions give chance-level macro precision") {
  Rng rng(2, 0);
  int n = 100000, k = 10;
  std::vector<int> pred(n), intent(n);
  for (int i = 0; i < n; ++i) {
    pred[i] = (int)rng.uniform_int(0, k - 1);
    intent[i] = (int)rng.uniform_int(0, k - 1);
  }
  PerClassPR pr = conditional_precision_recall(pred, intent, k);
  CHECK(std::abs(pr.macro_precision - 0.1) < 0.01);
  CHECK(std::abs(pr.macro_recall - 0.1) < 0.01);
}

TEST_CASE("precision/recall: perfect predictions, absent classes excluded") {
  std::vector<int> intent = {0, 0, 1, 1, 2};
  PerClassPR perfect = conditional_precision_recall(intent, intent, 4);
  CHECK(perfect.macro_precision == doctest::Approx(1.0));
  CHECK(perfect.macro_recall == doctest::Approx(1.0));
  // class 3 never appears: excluded from the macro mean
  CHECK(perfect.defined_precision_classes == 3);

  std::vector<int> pred = {0, 1, 1, 1, 2};
  PerClassPR pr = conditional_precision_recall(pred, intent, 3);
  CHECK(pr.precision[0] == doctest::Approx(1.0));
  CHECK(pr.recall[0] == doctest::Approx(0.5));
  CHECK(pr.precision[1] == doctest::Approx(2.0 / 3.0));
  CHECK(pr.recall[1] == doctest::Approx(1.0));
}

TEST_CASE("matching pseudo-precision is symmetric agreement") {
  std::vector<int> a = {0, 0, 1, 1, 2, 2};
  std::vector<int> b = {0, 1, 1, 1, 2, 2};
  PerClassPR pr = matching_pseudo_precision(a, b, 3);
  // all-agree case
  PerClassPR all = matching_pseudo_precision(a, a, 3);
  CHECK(all.macro_precision == doctest::Approx(1.0));
  CHECK(pr.macro_precision < 1.0);
  CHECK(pr.samples == 6);
}

TEST_CASE("classifier: untrained is chance-level, trained separates the synthetic corpus") {
  Rng rng(3, 0);
  SynthPaired sp = synth_paired(4, 30, 16, rng);
  // modality A as [-1,1] tensor
  int n = sp.a.n;
  Tensor images = Tensor::zeros({n, 1, 16, 16});
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = sp.a.labels[i];
    for (int j = 0; j < 256; ++j) images.values()[i * 256 + j] = u8_to_unit(sp.a.image(i)[j]);
  }

  ClassifierTrainConfig cc;
  cc.epochs = 6;
  Rng trng(4, 0);
  TrainedClassifier tc = train_classifier(images, labels, 4, cc, trng);
  CHECK(tc.holdout_accuracy >= 0.9);

  std::vector<int> preds = classify(tc.classifier, images);
  int correct = 0;
  for (int i = 0; i < n; ++i) correct += (preds[i] == labels[i]);
  CHECK((double)correct / n >= 0.95);

  ClassifierOutput out = classifier_forward(tc.classifier, images);
  CHECK(out.features.shape() == Shape{n, tc.classifier.feature_dim()});
  CHECK(out.logits.shape() == Shape{n, 4});

  // single-class dataset rejected
  std::vector<int> ones(n, 1);
  Rng trng2(5, 0);
  CHECK_THROWS(train_classifier(images, ones, 4, cc, trng2));
}

TEST_CASE("classifier checkpoints round trip bit exactly") {
  std::string dir = jdiff::testing::scratch_dir("clf");
  Rng rng(6, 0);
  SynthPaired sp = synth_paired(2, 10, 8, rng);
  Tensor images = Tensor::zeros({sp.a.n, 1, 8, 8});
  std::vector<int> labels(sp.a.n);
  for (int i = 0; i < sp.a.n; ++i) {
    labels[i] = sp.a.labels[i];
    for (int j = 0; j < 64; ++j) images.values()[i * 64 + j] = u8_to_unit(sp.a.image(i)[j]);
  }
  ClassifierTrainConfig cc;
  cc.epochs = 2;
  Rng trng(7, 0);
  TrainedClassifier tc = train_classifier(images, labels, 2, cc, trng);
  tc.classifier.save(dir + "/clf.jdck");
  FeatureClassifier back = FeatureClassifier::load(dir + "/clf.jdck");
  CHECK(back.n_classes == 2);
  ClassifierOutput a = classifier_forward(tc.classifier, images);
  ClassifierOutput b = classifier_forward(back, images);
  for (int64_t i = 0; i < a.logits.size(); ++i) CHECK(a.logits.values()[i] == b.logits.values()[i]);
}

TEST_CASE("metric report schema: every family exactly once") {
  MetricReport r;
  r.mode = "joint";
  r.sample_count = 10;
  r.fid_a = 1.5;
  r.fid_b = 2.5;
  r.is_a = {1.2, 0.1};
  r.is_b = {1.3, 0.2};
  r.matching.macro_precision = 0.75;
  r.matching.macro_recall = 0.7;
  r.matching.precision = {0.8, 0.7};
  r.matching.recall = {0.7, 0.7};
  r.matching.samples = 10;
  std::string csv = r.to_csv();
  CHECK(csv.rfind("metric,modality,class,value", 0) == 0);
  auto count = [&](const std::string& needle) {
    size_t pos = 0, c = 0;
    while ((pos = csv.find(needle, pos)) != std::string::npos) {
      ++c;
      pos += needle.size();
    }
    return c;
  };
  CHECK(count("\nfid,a,") == 1);
  CHECK(count("\nfid,b,") == 1);
  CHECK(count("\nis_mean,a,") == 1);
  CHECK(count("\nis_mean,b,") == 1);
  CHECK(count("matching_macro_precision") == 1);
  std::string txt = r.to_text();
  CHECK(txt.find("joint") != std::string::npos);
}
