#include "jdiff/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "jdiff/container.hpp"
#include "json.hpp"

namespace jdiff {

int ImageSet::n_classes() const {
  int mx = -1;
  for (uint8_t l : labels) mx = std::max(mx, static_cast<int>(l));
  return mx + 1;
}

namespace {

uint32_t read_be32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  auto size = is.tellg();
  is.seekg(0);
  std::vector<uint8_t> buf(static_cast<size_t>(size));
  is.read(reinterpret_cast<char*>(buf.data()), size);
  if (!is) throw std::runtime_error("read failed for '" + path + "'");
  return buf;
}

}  // namespace

ImageSet load_idx(const std::string& images_path, const std::string& labels_path) {
  std::vector<uint8_t> ib = read_file(images_path);
  if (ib.size() < 16) throw std::runtime_error("IDX image file '" + images_path + "' too short for header");
  uint32_t magic = read_be32(ib.data());
  if (magic != 0x00000803)
    throw std::runtime_error("IDX image file '" + images_path + "' has magic " + std::to_string(magic) +
                             ", expected 2051");
  uint32_t count = read_be32(ib.data() + 4);
  uint32_t rows = read_be32(ib.data() + 8);
  uint32_t cols = read_be32(ib.data() + 12);
  size_t expected = 16 + static_cast<size_t>(count) * rows * cols;
  if (ib.size() != expected)
    throw std::runtime_error("IDX image file '" + images_path + "': expected " + std::to_string(expected) +
                             " bytes, got " + std::to_string(ib.size()));

  std::vector<uint8_t> lb = read_file(labels_path);
  if (lb.size() < 8) throw std::runtime_error("IDX label file '" + labels_path + "' too short for header");
  uint32_t lmagic = read_be32(lb.data());
  if (lmagic != 0x00000801)
    throw std::runtime_error("IDX label file '" + labels_path + "' has magic " + std::to_string(lmagic) +
                             ", expected 2049");
  uint32_t lcount = read_be32(lb.data() + 4);
  if (lb.size() != 8 + static_cast<size_t>(lcount))
    throw std::runtime_error("IDX label file '" + labels_path + "': expected " + std::to_string(8 + lcount) +
                             " bytes, got " + std::to_string(lb.size()));
  if (lcount != count)
    throw std::runtime_error("IDX pairing error: " + std::to_string(count) + " images vs " + std::to_string(lcount) +
                             " labels");

  ImageSet set;
  set.n = static_cast<int>(count);
  set.c = 1;
  set.h = static_cast<int>(rows);
  set.w = static_cast<int>(cols);
  set.pixels.assign(ib.begin() + 16, ib.end());
  set.labels.assign(lb.begin() + 8, lb.end());
  return set;
}

ImageSet load_cifar_binary(const std::string& path) { return load_cifar_binary(std::vector<std::string>{path}); }

ImageSet load_cifar_binary(const std::vector<std::string>& paths) {
  constexpr size_t kRecord = 3073;
  ImageSet set;
  set.c = 3;
  set.h = 32;
  set.w = 32;
  for (const std::string& path : paths) {
    std::vector<uint8_t> buf = read_file(path);
    if (buf.empty() || buf.size() % kRecord != 0)
      throw std::runtime_error("CIFAR file '" + path + "': length " + std::to_string(buf.size()) +
                               " is not a multiple of 3073");
    size_t records = buf.size() / kRecord;
    for (size_t r = 0; r < records; ++r) {
      uint8_t label = buf[r * kRecord];
      if (label > 9)
        throw std::runtime_error("CIFAR file '" + path + "': record " + std::to_string(r) +
                                 " has invalid label " + std::to_string(label));
      set.labels.push_back(label);
      set.pixels.insert(set.pixels.end(), buf.begin() + static_cast<long>(r * kRecord + 1),
                        buf.begin() + static_cast<long>((r + 1) * kRecord));
    }
    set.n += static_cast<int>(records);
  }
  return set;
}

ImageF to_float(const ImageSet& set, int index) {
  ImageF img;
  img.c = set.c;
  img.h = set.h;
  img.w = set.w;
  const uint8_t* p = set.image(index);
  img.v.assign(p, p + static_cast<size_t>(set.c) * set.h * set.w);
  return img;
}

Resample resample_method(const std::string& name) {
  if (name == "nearest") return Resample::Nearest;
  if (name == "bilinear") return Resample::Bilinear;
  throw std::invalid_argument("unknown resample method '" + name + "'");
}

ImageF resample(const ImageF& img, int target_h, int target_w, Resample method) {
  if (target_h < 1 || target_w < 1) throw std::invalid_argument("resample: target dimensions must be positive");
  if (target_h == img.h && target_w == img.w) return img;
  ImageF out;
  out.c = img.c;
  out.h = target_h;
  out.w = target_w;
  out.v.resize(static_cast<size_t>(img.c) * target_h * target_w);
  for (int c = 0; c < img.c; ++c) {
    const double* src = img.v.data() + static_cast<size_t>(c) * img.h * img.w;
    double* dst = out.v.data() + static_cast<size_t>(c) * target_h * target_w;
    for (int y = 0; y < target_h; ++y)
      for (int x = 0; x < target_w; ++x) {
        double v;
        if (method == Resample::Nearest) {
          int sy = std::min(img.h - 1, y * img.h / target_h);
          int sx = std::min(img.w - 1, x * img.w / target_w);
          v = src[static_cast<size_t>(sy) * img.w + sx];
        } else {
          // Corner-aligned bilinear: linear ramps stay linear.
          double fy = target_h > 1 ? static_cast<double>(y) * (img.h - 1) / (target_h - 1) : 0.0;
          double fx = target_w > 1 ? static_cast<double>(x) * (img.w - 1) / (target_w - 1) : 0.0;
          int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
          int y1 = std::min(img.h - 1, y0 + 1), x1 = std::min(img.w - 1, x0 + 1);
          double wy = fy - y0, wx = fx - x0;
          double top = src[static_cast<size_t>(y0) * img.w + x0] * (1 - wx) + src[static_cast<size_t>(y0) * img.w + x1] * wx;
          double bot = src[static_cast<size_t>(y1) * img.w + x0] * (1 - wx) + src[static_cast<size_t>(y1) * img.w + x1] * wx;
          v = top * (1 - wy) + bot * wy;
        }
        dst[static_cast<size_t>(y) * target_w + x] = v;
      }
  }
  return out;
}

int PackedLayout::total_channels() const {
  int c = 0;
  for (const auto& m : modalities) c = std::max(c, m.channel_end);
  return c;
}

const ModalityDesc& PackedLayout::modality(const std::string& name) const {
  for (const auto& m : modalities)
    if (m.name == name) return m;
  throw std::out_of_range("layout has no modality '" + name + "'");
}

int PackedLayout::modality_index(const std::string& name) const {
  for (size_t i = 0; i < modalities.size(); ++i)
    if (modalities[i].name == name) return static_cast<int>(i);
  throw std::out_of_range("layout has no modality '" + name + "'");
}

void PackedLayout::validate() const {
  if (modalities.empty() || height < 1 || width < 1) throw std::invalid_argument("layout: empty or degenerate");
  std::vector<int> cover(total_channels(), 0);
  for (const auto& m : modalities) {
    if (m.channel_begin < 0 || m.channel_end <= m.channel_begin)
      throw std::invalid_argument("layout: modality '" + m.name + "' has an invalid channel range");
    for (int c = m.channel_begin; c < m.channel_end; ++c) cover[c]++;
  }
  for (size_t c = 0; c < cover.size(); ++c)
    if (cover[c] != 1)
      throw std::invalid_argument("layout: channel " + std::to_string(c) + " covered " + std::to_string(cover[c]) +
                                  " times; modalities must partition the channel range");
}

std::string PackedLayout::to_json() const {
  nlohmann::json j;
  j["height"] = height;
  j["width"] = width;
  j["modalities"] = nlohmann::json::array();
  for (const auto& m : modalities)
    j["modalities"].push_back({{"name", m.name},
                               {"channel_begin", m.channel_begin},
                               {"channel_end", m.channel_end},
                               {"native_h", m.native_h},
                               {"native_w", m.native_w}});
  return j.dump();
}

PackedLayout PackedLayout::from_json(const std::string& json) {
  nlohmann::json j = nlohmann::json::parse(json);
  PackedLayout layout;
  layout.height = j.at("height");
  layout.width = j.at("width");
  for (const auto& jm : j.at("modalities"))
    layout.modalities.push_back({jm.at("name"), jm.at("channel_begin"), jm.at("channel_end"), jm.at("native_h"),
                                 jm.at("native_w")});
  layout.validate();
  return layout;
}

PairingPlan build_pairing(const ImageSet& a, const ImageSet& b, int quota, Rng& rng) {
  if (quota < 1) throw std::invalid_argument("build_pairing: quota must be >= 1");
  int n_classes = std::max(a.n_classes(), b.n_classes());
  std::vector<std::vector<int>> by_class_a(n_classes), by_class_b(n_classes);
  for (int i = 0; i < a.n; ++i) by_class_a[a.labels[i]].push_back(i);
  for (int i = 0; i < b.n; ++i) by_class_b[b.labels[i]].push_back(i);

  PairingPlan plan;
  plan.n_classes = n_classes;
  plan.quota = quota;
  plan.pairs.resize(n_classes);
  for (int k = 0; k < n_classes; ++k) {
    auto& ia = by_class_a[k];
    auto& ib = by_class_b[k];
    if (ia.empty() || ib.empty())
      throw std::runtime_error("build_pairing: class " + std::to_string(k) + " is absent from " +
                               (ia.empty() ? "set A" : "set B"));
    // Fisher-Yates over the A side, then exhaust without replacement.
    for (size_t i = ia.size() - 1; i > 0; --i)
      std::swap(ia[i], ia[rng.uniform_int(0, static_cast<int64_t>(i))]);
    plan.pairs[k].reserve(quota);
    for (int q = 0; q < quota; ++q) {
      int pick_a = q < static_cast<int>(ia.size()) ? ia[q] : ia[rng.uniform_int(0, static_cast<int64_t>(ia.size()) - 1)];
      int pick_b = ib[rng.uniform_int(0, static_cast<int64_t>(ib.size()) - 1)];
      plan.pairs[k].emplace_back(pick_a, pick_b);
    }
  }
  return plan;
}

double u8_to_unit(uint8_t v) { return 2.0 * v / 255.0 - 1.0; }

uint8_t unit_to_u8(double x) {
  double v = (x + 1.0) * 255.0 / 2.0;
  v = std::min(255.0, std::max(0.0, v));
  return static_cast<uint8_t>(std::lround(v));
}

namespace {

// Places one resampled modality image into the packed buffer's channel range.
void place(std::vector<double>& dst, const ImageF& img, const ModalityDesc& m, const PackedLayout& layout) {
  if (img.c != m.channels() || img.h != layout.height || img.w != layout.width)
    throw std::invalid_argument("pack: image " + std::to_string(img.c) + "x" + std::to_string(img.h) + "x" +
                                std::to_string(img.w) + " does not fit modality '" + m.name + "' of layout " +
                                std::to_string(m.channels()) + "x" + std::to_string(layout.height) + "x" +
                                std::to_string(layout.width));
  int hw = layout.height * layout.width;
  for (int c = 0; c < img.c; ++c)
    for (int i = 0; i < hw; ++i)
      dst[static_cast<size_t>(m.channel_begin + c) * hw + i] = 2.0 * img.v[static_cast<size_t>(c) * hw + i] / 255.0 - 1.0;
}

}  // namespace

PackedSample pack_pair(const ImageF& a, const ImageF& b, const PackedLayout& layout, int label) {
  layout.validate();
  if (layout.modalities.size() != 2) throw std::invalid_argument("pack_pair: layout must list exactly two modalities");
  std::vector<double> buf(static_cast<size_t>(layout.total_channels()) * layout.height * layout.width);
  place(buf, a, layout.modalities[0], layout);
  place(buf, b, layout.modalities[1], layout);
  PackedSample s;
  s.image = Tensor::from_vector({layout.total_channels(), layout.height, layout.width}, std::move(buf));
  s.label = label;
  return s;
}

PackedDataset pack_dataset(const ImageSet& a, const ImageSet& b, const PairingPlan& plan,
                           const PackedLayout& layout, Resample method) {
  layout.validate();
  int c = layout.total_channels(), h = layout.height, w = layout.width;
  int n = plan.total();
  PackedDataset ds;
  ds.layout = layout;
  ds.labels.reserve(n);
  std::vector<double> all(static_cast<size_t>(n) * c * h * w);
  int out = 0;
  for (int k = 0; k < plan.n_classes; ++k)
    for (const auto& [ia, ib] : plan.pairs[k]) {
      if (a.labels[ia] != b.labels[ib] || a.labels[ia] != k)
        throw std::runtime_error("pack_dataset: pairing label mismatch in class " + std::to_string(k));
      ImageF fa = resample(to_float(a, ia), h, w, method);
      ImageF fb = resample(to_float(b, ib), h, w, method);
      std::vector<double> buf(static_cast<size_t>(c) * h * w);
      place(buf, fa, layout.modalities[0], layout);
      place(buf, fb, layout.modalities[1], layout);
      std::copy(buf.begin(), buf.end(), all.begin() + static_cast<size_t>(out) * c * h * w);
      ds.labels.push_back(k);
      ds.src_a.push_back(ia);
      ds.src_b.push_back(ib);
      ++out;
    }
  ds.data = Tensor::from_vector({n, c, h, w}, std::move(all));
  return ds;
}

Tensor PackedDataset::sample(int i) const {
  const Shape& s = data.shape();
  int chw = s[1] * s[2] * s[3];
  std::vector<double> v(data.values().begin() + static_cast<size_t>(i) * chw,
                        data.values().begin() + static_cast<size_t>(i + 1) * chw);
  return Tensor::from_vector({1, s[1], s[2], s[3]}, std::move(v));
}

Tensor PackedDataset::modality_channels(int i, int modality) const {
  const ModalityDesc& m = layout.modalities.at(modality);
  const Shape& s = data.shape();
  int hw = s[2] * s[3];
  std::vector<double> v;
  v.reserve(static_cast<size_t>(m.channels()) * hw);
  const double* base = data.values().data() + (static_cast<size_t>(i) * s[1] + m.channel_begin) * hw;
  v.insert(v.end(), base, base + static_cast<size_t>(m.channels()) * hw);
  return Tensor::from_vector({1, m.channels(), s[2], s[3]}, std::move(v));
}

std::vector<ImageF> unpack(const PackedDataset& ds, int index) {
  std::vector<ImageF> out;
  int hw = ds.layout.height * ds.layout.width;
  for (const auto& m : ds.layout.modalities) {
    ImageF img;
    img.c = m.channels();
    img.h = ds.layout.height;
    img.w = ds.layout.width;
    img.v.resize(static_cast<size_t>(img.c) * hw);
    const double* base =
        ds.data.values().data() + (static_cast<size_t>(index) * ds.layout.total_channels() + m.channel_begin) * hw;
    for (size_t i = 0; i < img.v.size(); ++i) img.v[i] = (base[i] + 1.0) * 255.0 / 2.0;
    out.push_back(std::move(img));
  }
  return out;
}

SynthPaired synth_paired(int n_classes, int per_class, int resolution, Rng& rng) {
  if (n_classes < 2 || n_classes > 16) throw std::invalid_argument("synth_paired: n_classes must be in [2,16]");
  if (resolution < 8) throw std::invalid_argument("synth_paired: resolution must be >= 8 to render glyphs");
  int r = resolution;
  SynthPaired sp;
  for (ImageSet* set : {&sp.a, &sp.b}) {
    set->n = n_classes * per_class;
    set->c = 1;
    set->h = r;
    set->w = r;
    set->pixels.resize(static_cast<size_t>(set->n) * r * r);
    set->labels.resize(set->n);
  }
  double cx0 = (r - 1) / 2.0;
  int idx = 0;
  for (int k = 0; k < n_classes; ++k)
    for (int s = 0; s < per_class; ++s, ++idx) {
      sp.a.labels[idx] = static_cast<uint8_t>(k);
      sp.b.labels[idx] = static_cast<uint8_t>(k);
      // Modality A: bar with class-specific orientation.
      double theta = M_PI * k / n_classes;
      double jx = rng.uniform() * 2.0 - 1.0, jy = rng.uniform() * 2.0 - 1.0;
      double bright = 210.0 + rng.uniform() * 45.0;
      double thick = r / 10.0 + 0.5, half_len = 0.42 * r;
      uint8_t* pa = sp.a.pixels.data() + static_cast<size_t>(idx) * r * r;
      double ct = std::cos(theta), st = std::sin(theta);
      for (int y = 0; y < r; ++y)
        for (int x = 0; x < r; ++x) {
          double dx = x - cx0 - jx, dy = y - cx0 - jy;
          double across = std::abs(dx * st - dy * ct);
          double along = std::abs(dx * ct + dy * st);
          pa[y * r + x] = (across <= thick && along <= half_len) ? static_cast<uint8_t>(bright) : 0;
        }
      // Modality B: filled disc with class-specific radius.
      double radius = r * (0.10 + 0.32 * k / std::max(1, n_classes - 1)) + 0.75;
      double jx2 = rng.uniform() * 2.0 - 1.0, jy2 = rng.uniform() * 2.0 - 1.0;
      double bright2 = 210.0 + rng.uniform() * 45.0;
      uint8_t* pb = sp.b.pixels.data() + static_cast<size_t>(idx) * r * r;
      for (int y = 0; y < r; ++y)
        for (int x = 0; x < r; ++x) {
          double dx = x - cx0 - jx2, dy = y - cx0 - jy2;
          pb[y * r + x] = (dx * dx + dy * dy <= radius * radius) ? static_cast<uint8_t>(bright2) : 0;
        }
    }
  return sp;
}

void save_packed(const PackedDataset& ds, const std::string& path) {
  Container c;
  c.put_tensor("data", ds.data);
  c.put_bytes("labels", std::vector<uint8_t>(ds.labels.begin(), ds.labels.end()));
  std::vector<double> src;
  for (size_t i = 0; i < ds.src_a.size(); ++i) {
    src.push_back(ds.src_a[i]);
    src.push_back(ds.src_b[i]);
  }
  c.put_doubles("sources", src);
  c.put_string("layout", ds.layout.to_json());
  c.save(path);
}

PackedDataset load_packed(const std::string& path) {
  Container c = Container::load(path);
  PackedDataset ds;
  ds.layout = PackedLayout::from_json(c.get_string("layout"));
  ds.data = c.get_tensor("data");
  for (uint8_t l : c.get_bytes("labels")) ds.labels.push_back(l);
  std::vector<double> src = c.get_doubles("sources");
  for (size_t i = 0; i + 1 < src.size(); i += 2) {
    ds.src_a.push_back(static_cast<int>(src[i]));
    ds.src_b.push_back(static_cast<int>(src[i + 1]));
  }
  return ds;
}

}  // namespace jdiff
