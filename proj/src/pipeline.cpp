#include "jdiff/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "jdiff/container.hpp"
#include "jdiff/data.hpp"
#include "jdiff/diffusion.hpp"
#include "jdiff/image_io.hpp"
#include "jdiff/manifest.hpp"
#include "jdiff/ops.hpp"

namespace fs = std::filesystem;

namespace jdiff {

namespace {

constexpr const char* kCodeVersion = "jdiff 0.1.0";

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunManifest start_manifest(const char* command, const RunConfig& config) {
  RunManifest m;
  m.command = command;
  m.config_digest = config.digest();
  m.config_echo = config.canonical();
  m.code_version = kCodeVersion;
  return m;
}

// Two-modality layout for the configured data source.
PackedLayout make_layout(const RunConfig& config, const ImageSet& a, const ImageSet& b) {
  PackedLayout layout;
  int h = config.source == "synthetic" ? config.resolution : config.target_h;
  int w = config.source == "synthetic" ? config.resolution : config.target_w;
  layout.height = h;
  layout.width = w;
  std::string name_a = config.source == "synthetic" ? "bars" : "color";
  std::string name_b = config.source == "synthetic" ? "discs" : "gray";
  layout.modalities.push_back({name_a, 0, a.c, a.h, a.w});
  layout.modalities.push_back({name_b, a.c, a.c + b.c, b.h, b.w});
  layout.validate();
  return layout;
}

PackedDataset require_dataset(const RunPaths& paths) {
  if (!fs::exists(paths.dataset()))
    throw InputError("packed dataset cache '" + paths.dataset() + "' not found; run pack first");
  return load_packed(paths.dataset());
}

// [-1,1] channel plane -> u8 row-major pixels.
std::vector<uint8_t> plane_to_u8(const std::vector<double>& v, size_t offset, int hw) {
  std::vector<uint8_t> out((size_t)hw);
  for (int i = 0; i < hw; ++i) out[i] = unit_to_u8(v[offset + i]);
  return out;
}

// Write one modality of a sample batch as a PGM (1 channel) or PPM (3
// channel) grid, row-major by sample index.
void write_modality_grid(const std::string& path, const Tensor& batch, const ModalityDesc& m, int h, int w) {
  int n = batch.shape()[0], c = batch.shape()[1];
  int hw = h * w;
  const auto& v = batch.values();
  auto plane_offset = [&](int i, int ch) { return ((size_t)i * c + ch) * hw; };
  if (m.channels() == 1) {
    std::vector<std::vector<uint8_t>> imgs;
    imgs.reserve(n);
    for (int i = 0; i < n; ++i) imgs.push_back(plane_to_u8(v, plane_offset(i, m.channel_begin), hw));
    write_pgm_grid(path, imgs, h, w, 8);
    return;
  }
  if (m.channels() != 3)
    throw std::invalid_argument("grid export supports 1- or 3-channel modalities, '" + m.name + "' has " +
                                std::to_string(m.channels()));
  int cols = 8, rows = (n + cols - 1) / cols;
  int gw = cols * w + (cols - 1), gh = rows * h + (rows - 1);
  std::vector<uint8_t> rgb((size_t)3 * gw * gh, 0);
  for (int i = 0; i < n; ++i) {
    int r = i / cols, col = i % cols;
    int y0 = r * (h + 1), x0 = col * (w + 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < 3; ++ch)
          rgb[3 * ((size_t)(y0 + y) * gw + x0 + x) + ch] =
              unit_to_u8(v[plane_offset(i, m.channel_begin + ch) + y * w + x]);
  }
  write_ppm(path, rgb, gh, gw);
}

// Scatter generated + guiding channels back into full layout order.
Tensor assemble_full(const Tensor& generated, const Tensor& condition, const ChannelMask& mask) {
  int n = generated.shape()[0], h = generated.shape()[2], w = generated.shape()[3];
  int c = mask.total(), hw = h * w;
  Tensor full = Tensor::zeros({n, c, h, w});
  auto& fv = full.values();
  auto copy_in = [&](const Tensor& src, const std::vector<int>& chans) {
    const auto& sv = src.values();
    int sc = src.shape()[1];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < (int)chans.size(); ++j)
        std::copy_n(sv.begin() + ((size_t)i * sc + j) * hw, hw, fv.begin() + ((size_t)i * c + chans[j]) * hw);
  };
  copy_in(generated, mask.generation);
  copy_in(condition, mask.guiding);
  return full;
}

// Stack single-sample [1,c,H,W] slices into [N,c,H,W].
Tensor gather_modality(const PackedDataset& ds, const std::vector<int>& indices, int modality) {
  const auto& m = ds.layout.modalities[modality];
  int c = m.channels(), h = ds.layout.height, w = ds.layout.width;
  int n = (int)indices.size();
  Tensor out = Tensor::zeros({n, c, h, w});
  auto& ov = out.values();
  int total_c = ds.layout.total_channels();
  const auto& dv = ds.data.values();
  size_t plane = (size_t)h * w;
  for (int i = 0; i < n; ++i)
    std::copy_n(dv.begin() + ((size_t)indices[i] * total_c + m.channel_begin) * plane, (size_t)c * plane,
                ov.begin() + (size_t)i * c * plane);
  return out;
}

Tensor modality_slice(const Tensor& full, const ModalityDesc& m) {
  return slice_channels(full, m.channel_begin, m.channel_end);
}

}  // namespace

std::string resolve_outdir(const RunConfig& config) {
  const char* root = std::getenv("JDIFF_OUT_ROOT");
  if (root && *root && !config.outdir.empty() && config.outdir.front() != '/')
    return std::string(root) + "/" + config.outdir;
  return config.outdir;
}

RunPaths run_paths(const RunConfig& config) { return RunPaths{resolve_outdir(config)}; }

std::string RunPaths::checkpoint_epoch(int64_t epoch) const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%05lld.jdck", (long long)epoch);
  return checkpoint_dir() + "/" + std::string(buf);
}

std::string cmd_pack(const RunConfig& config) {
  auto t0 = std::chrono::steady_clock::now();
  RunPaths paths = run_paths(config);
  fs::create_directories(paths.root);

  ImageSet a, b;
  int quota = 0;
  if (config.source == "synthetic") {
    Rng synth_rng = Rng(config.seed, 10);
    SynthPaired sp = synth_paired(config.n_classes, config.per_class, config.resolution, synth_rng);
    a = std::move(sp.a);
    b = std::move(sp.b);
    quota = config.per_class;
  } else {
    try {
      a = load_cifar_binary(config.cifar_batches);
      b = load_idx(config.idx_images, config.idx_labels);
    } catch (const std::runtime_error& e) {
      throw InputError(e.what());
    }
    quota = config.quota;
  }

  PackedLayout layout = make_layout(config, a, b);
  Rng pair_rng = Rng(config.seed, 11);
  PairingPlan plan;
  try {
    plan = build_pairing(a, b, quota, pair_rng);
  } catch (const std::runtime_error& e) {
    throw InputError(e.what());
  }
  PackedDataset ds = pack_dataset(a, b, plan, layout, resample_method(config.resample));
  save_packed(ds, paths.dataset());

  std::string digest = sha256_file(paths.dataset());
  RunManifest m = start_manifest("pack", config);
  m.dataset_digest = digest;
  m.add_file(paths.dataset());
  m.metrics["samples"] = ds.size();
  m.timings_sec["pack"] = seconds_since(t0);
  m.write(paths.manifest("pack"));
  return digest;
}

void cmd_train(const RunConfig& config, const std::string& resume) {
  auto t0 = std::chrono::steady_clock::now();
  RunPaths paths = run_paths(config);
  PackedDataset ds = require_dataset(paths);
  fs::create_directories(paths.checkpoint_dir());

  TrainingState state;
  if (resume.empty()) {
    state = TrainingState::create(config.denoiser_config(ds.layout.total_channels()),
                                  linear_schedule(config.timesteps, config.beta_start, config.beta_end),
                                  config.optimizer_state(), config.seed);
  } else {
    if (!fs::exists(resume)) throw InputError("resume checkpoint '" + resume + "' not found");
    state = TrainingState::restore(resume);
  }

  std::ofstream loss_csv(paths.loss_csv(), resume.empty() ? std::ios::trunc : std::ios::app);
  if (!loss_csv) throw std::runtime_error("cannot open '" + paths.loss_csv() + "'");
  if (resume.empty()) loss_csv << "step,epoch,loss,lr\n";
  loss_csv.precision(17);

  RunManifest m = start_manifest("train", config);
  m.dataset_digest = sha256_file(paths.dataset());
  double final_mean = 0.0;
  try {
    while (state.epoch < config.epochs) {
      LossStats stats = train_epoch(state, ds, config.batch_size,
                                    [&](int64_t step, int64_t epoch, double loss, double lr) {
                                      loss_csv << step << "," << epoch << "," << loss << "," << lr << "\n";
                                    });
      final_mean = stats.mean;
      if (state.epoch % config.checkpoint_every == 0 || state.epoch == config.epochs) {
        state.save(paths.checkpoint_epoch(state.epoch));
        state.save(paths.checkpoint());
      }
    }
    if (!fs::exists(paths.checkpoint_epoch(state.epoch))) {
      state.save(paths.checkpoint_epoch(state.epoch));
      state.save(paths.checkpoint());
    }
  } catch (const std::exception& e) {
    loss_csv.flush();
    m.status = "failed";
    m.notes["error"] = e.what();
    m.timings_sec["train"] = seconds_since(t0);
    m.write(paths.manifest("train"));
    throw;
  }
  loss_csv.close();

  m.add_file(paths.checkpoint());
  m.add_file(paths.loss_csv());
  m.metrics["final_epoch_mean_loss"] = final_mean;
  m.metrics["epochs"] = (double)state.epoch;
  m.metrics["steps"] = (double)state.global_step;
  m.timings_sec["train"] = seconds_since(t0);
  m.write(paths.manifest("train"));
}

std::string cmd_sample(const RunConfig& config, const std::string& checkpoint) {
  auto t0 = std::chrono::steady_clock::now();
  RunPaths paths = run_paths(config);
  PackedDataset ds = require_dataset(paths);
  std::string ckpt = checkpoint.empty() ? paths.checkpoint() : checkpoint;
  if (!fs::exists(ckpt)) throw InputError("checkpoint '" + ckpt + "' not found; run train first");
  TrainingState state = TrainingState::restore(ckpt);

  const PackedLayout& layout = ds.layout;
  int C = layout.total_channels(), H = layout.height, W = layout.width;
  int count = config.sample_count;
  bool guided = config.mode != "joint";

  ChannelMask mask = ChannelMask::unconditional(C);
  int cond_modality = -1;
  std::vector<int> cond_indices;
  if (guided) {
    if (config.condition_modality.empty())
      throw InputError("sample mode '" + config.mode + "' requires sample.condition_modality");
    cond_modality = layout.modality_index(config.condition_modality);
    mask = ChannelMask::conditioning_on(layout, config.condition_modality);
    std::vector<int> pool;
    if (config.fixed_condition_index >= 0) {
      if (config.fixed_condition_index >= ds.size())
        throw InputError("sample.fixed_condition_index " + std::to_string(config.fixed_condition_index) +
                         " out of range for dataset of " + std::to_string(ds.size()));
      pool.push_back(config.fixed_condition_index);
    } else {
      for (int i = 0; i < ds.size(); ++i)
        if (config.condition_class < 0 || ds.labels[i] == config.condition_class) pool.push_back(i);
      if (pool.empty())
        throw InputError("no dataset samples with class " + std::to_string(config.condition_class) +
                         " to condition on");
    }
    for (int i = 0; i < count; ++i) cond_indices.push_back(pool[i % pool.size()]);
  }

  NoGradGuard ng;
  Rng base(config.seed, 20);
  Tensor all = Tensor::zeros({count, C, H, W});
  std::vector<int64_t> intended(count, -1);
  int chunk = std::max(1, config.sample_chunk);
  for (int begin = 0, chunk_index = 0; begin < count; begin += chunk, ++chunk_index) {
    int n = std::min(chunk, count - begin);
    Rng rng = base.derive((uint64_t)chunk_index);
    Tensor full;
    if (!guided) {
      full = sample_unconditional(state.model, state.schedule, {n, C, H, W}, rng);
    } else {
      std::vector<int> idx(cond_indices.begin() + begin, cond_indices.begin() + begin + n);
      Tensor condition = gather_modality(ds, idx, cond_modality);
      Tensor gen;
      if (config.mode == "random")
        gen = sample_guided_random(state.model, state.schedule, mask, condition, rng);
      else if (config.mode == "predicted")
        gen = sample_guided_predicted(state.model, state.schedule, mask, condition, rng);
      else
        gen = sample_guided_constant(state.model, state.schedule, mask, condition, rng);
      full = assemble_full(gen, condition, mask);
      for (int i = 0; i < n; ++i) intended[begin + i] = ds.labels[idx[i]];
    }
    std::copy(full.values().begin(), full.values().end(),
              all.values().begin() + (size_t)begin * C * H * W);
  }

  Container dump;
  dump.put_string("layout", layout.to_json());
  dump.put_string("mode", config.mode);
  dump.put_string("config_digest", config.digest());
  dump.put_string("condition_modality", guided ? config.condition_modality : "");
  dump.put_tensor("images", all);
  {
    std::vector<uint8_t> lbl_bytes(count * 8);
    std::memcpy(lbl_bytes.data(), intended.data(), lbl_bytes.size());
    dump.put_bytes("intended_labels", lbl_bytes);
  }
  dump.save(paths.samples(config.mode));

  fs::create_directories(paths.grid_dir());
  RunManifest m = start_manifest("sample", config);
  m.dataset_digest = sha256_file(paths.dataset());
  m.add_file(paths.samples(config.mode));
  for (const auto& mod : layout.modalities) {
    std::string ext = mod.channels() == 3 ? ".ppm" : ".pgm";
    std::string grid = paths.grid_dir() + "/" + config.mode + "_" + mod.name + ext;
    write_modality_grid(grid, all, mod, H, W);
    m.add_file(grid);
  }
  m.notes["checkpoint"] = ckpt;
  m.metrics["samples"] = count;
  m.timings_sec["sample"] = seconds_since(t0);
  m.write(paths.manifest("sample_" + config.mode));
  return paths.samples(config.mode);
}

namespace {

// Intended labels back out of the dump's raw byte record.
std::vector<int64_t> read_labels(const Container& dump, int n) {
  const auto& bytes = dump.get_bytes("intended_labels");
  if ((int64_t)bytes.size() != (int64_t)n * 8)
    throw std::runtime_error("sample dump: intended_labels has wrong length");
  std::vector<int64_t> out(n);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

FeatureClassifier load_or_train_classifier(const RunConfig& config, const RunPaths& paths, const PackedDataset& ds,
                                           int modality, RunManifest& m) {
  const auto& mod = ds.layout.modalities[modality];
  std::string path = paths.classifier(mod.name);
  if (fs::exists(path)) return FeatureClassifier::load(path);
  std::vector<int> all(ds.size());
  for (int i = 0; i < ds.size(); ++i) all[i] = i;
  Tensor images = gather_modality(ds, all, modality);
  ClassifierTrainConfig cc;
  cc.epochs = config.classifier_epochs;
  Rng rng = Rng(config.seed, 30).derive((uint64_t)modality);
  int n_classes = 0;
  for (int l : ds.labels) n_classes = std::max(n_classes, l + 1);
  TrainedClassifier tc = train_classifier(images, ds.labels, n_classes, cc, rng);
  tc.classifier.save(path);
  m.metrics["classifier_" + mod.name + "_holdout_accuracy"] = tc.holdout_accuracy;
  return tc.classifier;
}

}  // namespace

MetricReport cmd_eval(const RunConfig& config) {
  auto t0 = std::chrono::steady_clock::now();
  RunPaths paths = run_paths(config);
  PackedDataset ds = require_dataset(paths);
  std::string dump_path = paths.samples(config.mode);
  if (!fs::exists(dump_path)) throw InputError("sample dump '" + dump_path + "' not found; run sample first");
  Container dump = Container::load(dump_path);
  PackedLayout layout = PackedLayout::from_json(dump.get_string("layout"));
  if (layout.total_channels() != ds.layout.total_channels() || layout.height != ds.layout.height ||
      layout.width != ds.layout.width)
    throw InputError("sample dump layout does not match the packed dataset cache");
  Tensor generated = dump.get_tensor("images");
  int n = generated.shape()[0];
  std::vector<int64_t> intended = read_labels(dump, n);
  std::string cond_modality = dump.get_string("condition_modality");

  RunManifest m = start_manifest("eval", config);
  m.dataset_digest = sha256_file(paths.dataset());

  int n_classes = 0;
  for (int l : ds.labels) n_classes = std::max(n_classes, l + 1);

  MetricReport report;
  report.mode = dump.get_string("mode");
  report.config_digest = dump.get_string("config_digest");
  report.sample_count = n;

  std::vector<int> all_idx(ds.size());
  for (int i = 0; i < ds.size(); ++i) all_idx[i] = i;
  std::vector<std::vector<int>> preds(2);
  for (int mi = 0; mi < 2; ++mi) {
    const auto& mod = layout.modalities[mi];
    // Classifier training needs gradients; only the metric math below is
    // inference-only.
    FeatureClassifier clf = load_or_train_classifier(config, paths, ds, mi, m);
    NoGradGuard ng;
    Tensor real = gather_modality(ds, all_idx, mi);
    Tensor fake = modality_slice(generated, mod);
    ClassifierOutput real_out = classifier_forward(clf, real);
    ClassifierOutput fake_out = classifier_forward(clf, fake);
    double f = fid(fit_gaussian(real_out.features), fit_gaussian(fake_out.features));
    std::vector<double> probs = softmax_rows(fake_out.logits);
    InceptionScore is = inception_score(probs, n, clf.n_classes, config.is_splits);
    const auto& logits = fake_out.logits.values();
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) {
      int best = 0;
      for (int k = 1; k < clf.n_classes; ++k)
        if (logits[(size_t)i * clf.n_classes + k] > logits[(size_t)i * clf.n_classes + best]) best = k;
      p[i] = best;
    }
    preds[mi] = std::move(p);
    if (mi == 0) {
      report.fid_a = f;
      report.is_a = is;
    } else {
      report.fid_b = f;
      report.is_b = is;
    }
  }

  report.matching = matching_pseudo_precision(preds[0], preds[1], n_classes);
  if (!cond_modality.empty()) {
    int cond_mi = layout.modality_index(cond_modality);
    int gen_mi = 1 - cond_mi;
    std::vector<int> intent(n);
    for (int i = 0; i < n; ++i) intent[i] = (int)intended[i];
    report.conditional = conditional_precision_recall(preds[gen_mi], intent, n_classes);
  }

  std::ofstream csv(paths.metrics_csv(config.mode));
  csv << report.to_csv();
  csv.close();
  std::ofstream txt(paths.metrics_txt(config.mode));
  txt << report.to_text();
  txt.close();

  m.add_file(paths.metrics_csv(config.mode));
  m.add_file(paths.metrics_txt(config.mode));
  m.metrics["fid_" + layout.modalities[0].name] = report.fid_a;
  m.metrics["fid_" + layout.modalities[1].name] = report.fid_b;
  m.metrics["is_" + layout.modalities[0].name] = report.is_a.mean;
  m.metrics["is_" + layout.modalities[1].name] = report.is_b.mean;
  m.metrics["matching_macro_precision"] = report.matching.macro_precision;
  if (!cond_modality.empty()) m.metrics["conditional_macro_precision"] = report.conditional.macro_precision;
  m.timings_sec["eval"] = seconds_since(t0);
  m.write(paths.manifest("eval_" + config.mode));
  return report;
}

std::string inspect_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open '" + path + "'");
  char magic[4] = {};
  is.read(magic, 4);
  is.close();
  std::ostringstream os;
  if (std::string(magic, 4) == "JDCK") {
    Container c = Container::load(path);
    os << path << ": container with " << c.records().size() << " records\n";
    for (const auto& [name, rec] : c.records()) {
      os << "  " << name << "  dtype=" << (int)rec.dtype << "  shape=[";
      for (size_t i = 0; i < rec.extents.size(); ++i) os << (i ? "," : "") << rec.extents[i];
      os << "]  bytes=" << rec.bytes.size() << "\n";
    }
    return os.str();
  }
  if (magic[0] == '{') {
    RunManifest m = RunManifest::read(path);
    os << path << ": " << m.command << " manifest, status=" << m.status << "\n";
    os << "  config_digest=" << m.config_digest << "\n";
    if (!m.dataset_digest.empty()) os << "  dataset_digest=" << m.dataset_digest << "\n";
    for (const auto& [f, d] : m.file_digests) os << "  file " << f << " sha256=" << d << "\n";
    for (const auto& [k, v] : m.metrics) os << "  metric " << k << "=" << v << "\n";
    for (const auto& [k, v] : m.timings_sec) os << "  timing " << k << "=" << v << "s\n";
    std::vector<std::string> bad = m.verify();
    os << (bad.empty() ? "  digest verification: ok\n" : "  digest verification: MISMATCH\n");
    for (const auto& f : bad) os << "    changed: " << f << "\n";
    return os.str();
  }
  throw InputError("'" + path + "' is neither a container nor a manifest");
}

}  // namespace jdiff
