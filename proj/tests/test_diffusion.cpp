#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "jdiff/data.hpp"
#include "jdiff/diffusion.hpp"
#include "jdiff/schedule.hpp"

using namespace jdiff;
using jdiff::testing::random_tensor;

namespace {

DenoiserConfig tiny_config(int channels) {
  DenoiserConfig cfg;
  cfg.in_channels = channels;
  cfg.base_width = 8;
  cfg.channel_mult = {1, 2};
  cfg.res_blocks = 1;
  cfg.time_embed_dim = 8;
  return cfg;
}

// Minimal two-modality dataset (one channel each) from explicit samples.
PackedDataset tiny_dataset(int n, int side, Rng& rng) {
  PackedDataset ds;
  ds.layout.height = side;
  ds.layout.width = side;
  ds.layout.modalities = {{"a", 0, 1, side, side}, {"b", 1, 2, side, side}};
  ds.data = random_tensor({n, 2, side, side}, rng, 0.5);
  for (double& v : ds.data.values()) v = std::clamp(v, -1.0, 1.0);
  ds.labels.assign(n, 0);
  ds.src_a.assign(n, 0);
  ds.src_b.assign(n, 0);
  return ds;
}

}  // namespace

TEST_CASE("schedule: products match direct computation, endpoints inclusive") {
  NoiseSchedule s = linear_schedule(10, 1e-4, 0.02);
  CHECK(s.beta(1) == doctest::Approx(1e-4).epsilon(1e-14));
  CHECK(s.beta(10) == doctest::Approx(0.02).epsilon(1e-14));
  double prod = 1.0;
  for (int t = 1; t <= 10; ++t) {
    prod *= 1.0 - s.beta(t);
    CHECK(s.alpha(t) == doctest::Approx(1.0 - s.beta(t)).epsilon(1e-15));
    CHECK(s.alpha_bar(t) == doctest::Approx(prod).epsilon(1e-10));
  }
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(linear_schedule(1, 0.5, 0.9).beta(1) == doctest::Approx(0.5));
}

TEST_CASE("schedule: full-length linear schedule nearly destroys the signal") {
  NoiseSchedule s = linear_schedule(1000, 1e-4, 0.02);
  CHECK(s.alpha_bar(1000) == doctest::Approx(4.036e-5).epsilon(0.01));
}

TEST_CASE("one-step reverse inversion recovers x0 exactly") {
  // with T=1 and abar_1 = 1 - beta_1, substituting the true noise into the
  // reverse update cancels it out
  NoiseSchedule s = schedule_from_betas({0.37});
  Rng rng(1, 0);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    double x0 = rng.normal(), eps = rng.normal();
    double x1 = std::sqrt(s.alpha_bar(1)) * x0 + std::sqrt(1 - s.alpha_bar(1)) * eps;
    double rec = (x1 - s.beta(1) / std::sqrt(1 - s.alpha_bar(1)) * eps) / std::sqrt(1 - s.beta(1));
    worst = std::max(worst, std::abs(rec - x0));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("forward_step from zero has variance beta_t") {
  NoiseSchedule s = linear_schedule(10, 0.01, 0.3);
  Rng rng(2, 0);
  int n = 100000;
  Tensor zero = Tensor::zeros({1, 1, 1, 1});
  double s2 = 0;
  for (int i = 0; i < n; ++i) {
    Tensor x = forward_step(zero, 7, s, rng);
    s2 += x.values()[0] * x.values()[0];
  }
  CHECK(s2 / n == doctest::Approx(s.beta(7)).epsilon(1e-2));
}

TEST_CASE("iterated forward process matches closed-form q_sample in distribution") {
  NoiseSchedule s = linear_schedule(20, 0.01, 0.25);
  Rng rng(3, 0);
  const int chains = 10000;
  Tensor x0 = Tensor::full({1, 1, 2, 2}, 0.8);
  for (int t : {1, 7, 20}) {
    double im = 0, iv = 0, cm = 0, cv = 0;
    int64_t cnt = 0;
    for (int i = 0; i < chains; ++i) {
      Tensor x = x0;
      for (int u = 1; u <= t; ++u) x = forward_step(x, u, s, rng);
      Tensor eps = Tensor::from_vector({1, 1, 2, 2}, {rng.normal(), rng.normal(), rng.normal(), rng.normal()});
      Tensor q = q_sample(x0, t, s, eps);
      for (int j = 0; j < 4; ++j) {
        im += x.values()[j];
        iv += x.values()[j] * x.values()[j];
        cm += q.values()[j];
        cv += q.values()[j] * q.values()[j];
        ++cnt;
      }
    }
    im /= cnt;
    iv = iv / cnt - im * im;
    cm /= cnt;
    cv = cv / cnt - cm * cm;
    CHECK(std::abs(im - cm) < 2e-2);
    CHECK(std::abs(iv - cv) < 2e-2);
    // and both agree with the analytic moments
    CHECK(std::abs(im - std::sqrt(s.alpha_bar(t)) * 0.8) < 2e-2);
    CHECK(std::abs(iv - (1 - s.alpha_bar(t))) < 2e-2);
  }
}

TEST_CASE("channel mask: partitions validated, conditioning derived from layout") {
  PackedLayout layout;
  layout.height = layout.width = 8;
  layout.modalities = {{"a", 0, 3, 8, 8}, {"b", 3, 4, 8, 8}};
  ChannelMask m = ChannelMask::conditioning_on(layout, "b");
  CHECK(m.generation == std::vector<int>{0, 1, 2});
  CHECK(m.guiding == std::vector<int>{3});
  m.validate(4, true);
  ChannelMask bad{{0, 1}, {1, 2, 3}};
  CHECK_THROWS(bad.validate(4, true));
  ChannelMask uncond = ChannelMask::unconditional(4);
  CHECK(uncond.guiding.empty());
  uncond.validate(4, false);
}

TEST_CASE("untrained model: initial loss is about 1.0") {
  Rng rng(4, 0);
  PackedDataset ds = tiny_dataset(64, 8, rng);
  TrainingState st = TrainingState::create(tiny_config(2), linear_schedule(50, 1e-4, 0.02), OptimizerState{}, 99);
  st.optimizer.lr = 0.0;  // keep the model untrained across batches
  double sum = 0;
  int batches = 0;
  while (batches < 100) {
    LossStats ls = train_epoch(st, ds, 4, [&](int64_t, int64_t, double loss, double) {
      if (batches < 100) {
        sum += loss;
        ++batches;
      }
    });
    (void)ls;
  }
  double mean = sum / 100;
  CHECK(mean > 0.9);
  CHECK(mean < 1.1);
}

TEST_CASE("two-sample overfit: the loss trend drops") {
  // per-step losses are stochastic (fresh t and eps each step), so compare
  // window means at the start and end of a 200-step run
  Rng rng(5, 0);
  PackedDataset ds = tiny_dataset(2, 8, rng);
  OptimizerState opt;
  opt.lr = 1e-2;
  opt.warmup_steps = 10;
  TrainingState st = TrainingState::create(tiny_config(2), linear_schedule(10, 1e-4, 0.02), opt, 7);
  // fixed probe batch: same x_t, t, and eps before and after training
  Rng probe_rng(77, 0);
  Tensor eps = random_tensor({2, 2, 8, 8}, probe_rng);
  Tensor x_t = q_sample(ds.data, 5, st.schedule, eps);
  auto probe_loss = [&] {
    NoGradGuard ng;
    return mse(predict_noise(st.model, x_t, {5, 5}), eps).value();
  };
  double before = probe_loss();
  while (st.global_step < 500) train_epoch(st, ds, 2);
  double after = probe_loss();
  CHECK(before > 0.5);
  CHECK(after < 0.5 * before);
}

TEST_CASE("training is deterministic and checkpoint restore resumes bit-exactly") {
  Rng rng(6, 0);
  PackedDataset ds = tiny_dataset(8, 8, rng);
  auto make = [&] {
    OptimizerState opt;
    opt.lr = 1e-3;
    opt.warmup_steps = 5;
    return TrainingState::create(tiny_config(2), linear_schedule(10, 1e-4, 0.02), opt, 31);
  };
  std::string dir = jdiff::testing::scratch_dir("ckpt");

  // uninterrupted: 4 epochs
  TrainingState a = make();
  std::vector<double> losses_a;
  for (int e = 0; e < 4; ++e)
    train_epoch(a, ds, 4, [&](int64_t, int64_t, double loss, double) { losses_a.push_back(loss); });

  // interrupted at epoch 2, saved, restored
  TrainingState b = make();
  std::vector<double> losses_b;
  auto log_b = [&](int64_t, int64_t, double loss, double) { losses_b.push_back(loss); };
  for (int e = 0; e < 2; ++e) train_epoch(b, ds, 4, log_b);
  b.save(dir + "/mid.jdck");
  TrainingState c = TrainingState::restore(dir + "/mid.jdck");
  for (int e = 0; e < 2; ++e) train_epoch(c, ds, 4, log_b);

  REQUIRE(losses_a.size() == losses_b.size());
  for (size_t i = 0; i < losses_a.size(); ++i) CHECK(losses_a[i] == losses_b[i]);
  for (auto it = a.model.params.begin(); it != a.model.params.end(); ++it) {
    const Tensor& resumed = c.model.params.at(it->first);
    for (int64_t i = 0; i < it->second.size(); ++i) CHECK(it->second.values()[i] == resumed.values()[i]);
  }
}

TEST_CASE("samplers are bit-reproducible and respect channel discipline") {
  Rng rng(7, 0);
  TrainingState st = TrainingState::create(tiny_config(2), linear_schedule(5, 1e-4, 0.02), OptimizerState{}, 3);
  ChannelMask mask{{0}, {1}};
  Tensor cond = random_tensor({3, 1, 8, 8}, rng, 0.3);

  for (auto mode : {0, 1, 2}) {
    auto call = [&](Rng& r, const SampleObserver& obs) {
      if (mode == 0) return sample_guided_random(st.model, st.schedule, mask, cond, r, obs);
      if (mode == 1) return sample_guided_predicted(st.model, st.schedule, mask, cond, r, obs);
      return sample_guided_constant(st.model, st.schedule, mask, cond, r, obs);
    };
    Rng r1(55, 0), r2(55, 0);
    Tensor x = call(r1, nullptr), y = call(r2, nullptr);
    REQUIRE(x.shape() == Shape{3, 1, 8, 8});
    for (int64_t i = 0; i < x.size(); ++i) CHECK(x.values()[i] == y.values()[i]);
  }

  Rng ru1(56, 0), ru2(56, 0);
  Tensor u1 = sample_unconditional(st.model, st.schedule, {2, 2, 8, 8}, ru1);
  Tensor u2 = sample_unconditional(st.model, st.schedule, {2, 2, 8, 8}, ru2);
  for (int64_t i = 0; i < u1.size(); ++i) CHECK(u1.values()[i] == u2.values()[i]);

  // constant guidance pins the guiding channel to the clean condition at
  // every observed step
  Rng rc(57, 0);
  int checked = 0;
  sample_guided_constant(st.model, st.schedule, mask, cond, rc, [&](int t, const Tensor& z) {
    (void)t;
    for (int n = 0; n < 3; ++n)
      for (int i = 0; i < 64; ++i) CHECK(z.values()[(n * 2 + 1) * 64 + i] == cond.values()[n * 64 + i]);
    ++checked;
  });
  CHECK(checked == 5);

  // with a zero denoiser, the generated channel is independent of the
  // condition (no leakage from guiding into generation channels)
  Tensor cond2 = random_tensor({3, 1, 8, 8}, rng, 0.3);
  Rng ra(58, 0), rb(58, 0);
  Tensor ga = sample_guided_constant(st.model, st.schedule, mask, cond, ra);
  Tensor gb = sample_guided_constant(st.model, st.schedule, mask, cond2, rb);
  for (int64_t i = 0; i < ga.size(); ++i) CHECK(ga.values()[i] == gb.values()[i]);
}

TEST_CASE("random-noise guidance reproduces the precomputed forward chain in distribution") {
  // Appendix-style check: the guiding channel at step t must be distributed
  // as sqrt(abar_t) c' + sqrt(1-abar_t) N(0,1)
  Rng rng(8, 0);
  NoiseSchedule s = linear_schedule(5, 0.05, 0.3);
  TrainingState st = TrainingState::create(tiny_config(2), s, OptimizerState{}, 3);
  ChannelMask mask{{0}, {1}};
  const int n = 400;
  Tensor cond = Tensor::full({n, 1, 8, 8}, 0.6);
  std::map<int, std::pair<double, double>> moments;  // t -> (mean, var)
  Rng r(59, 0);
  sample_guided_random(st.model, st.schedule, mask, cond, r, [&](int t, const Tensor& z) {
    double m = 0, v = 0;
    int64_t cnt = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 64; ++j) {
        double x = z.values()[(i * 2 + 1) * 64 + j];
        m += x;
        v += x * x;
        ++cnt;
      }
    m /= cnt;
    moments[t] = {m, v / cnt - m * m};
  });
  for (int t = 1; t <= 5; ++t) {
    auto [m, v] = moments.at(t);
    CHECK(std::abs(m - std::sqrt(s.alpha_bar(t)) * 0.6) < 2e-2);
    CHECK(std::abs(v - (1 - s.alpha_bar(t))) < 2e-2);
  }
}

TEST_CASE("guided samplers validate mask and condition shapes") {
  Rng rng(9, 0);
  TrainingState st = TrainingState::create(tiny_config(2), linear_schedule(5, 1e-4, 0.02), OptimizerState{}, 3);
  ChannelMask mask{{0}, {1}};
  Tensor bad = random_tensor({2, 2, 8, 8}, rng);  // two guiding channels supplied, mask has one
  Rng r(60, 0);
  CHECK_THROWS(sample_guided_random(st.model, st.schedule, mask, bad, r));
}
