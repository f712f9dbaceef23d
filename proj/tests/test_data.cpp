#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "jdiff/data.hpp"

using namespace jdiff;

namespace {

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), (std::streamsize)bytes.size());
}

void push_be32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(x >> 24);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back(x & 0xff);
}

// Minimal IDX pair: n images of h x w with the given labels.
void write_idx(const std::string& img_path, const std::string& lbl_path, int n, int h, int w,
               const std::vector<uint8_t>& labels, uint8_t fill) {
  std::vector<uint8_t> img;
  push_be32(img, 0x803);
  push_be32(img, n);
  push_be32(img, h);
  push_be32(img, w);
  for (int i = 0; i < n * h * w; ++i) img.push_back((uint8_t)(fill + i % 7));
  write_bytes(img_path, img);
  std::vector<uint8_t> lbl;
  push_be32(lbl, 0x801);
  push_be32(lbl, n);
  lbl.insert(lbl.end(), labels.begin(), labels.end());
  write_bytes(lbl_path, lbl);
}

}  // namespace

TEST_CASE("idx loader: round trip, wrong magic names the file, truncation rejected") {
  std::string dir = jdiff::testing::scratch_dir("idx");
  write_idx(dir + "/img", dir + "/lbl", 3, 4, 5, {0, 2, 1}, 10);
  ImageSet s = load_idx(dir + "/img", dir + "/lbl");
  CHECK(s.n == 3);
  CHECK(s.c == 1);
  CHECK(s.h == 4);
  CHECK(s.w == 5);
  CHECK(s.labels == std::vector<uint8_t>{0, 2, 1});
  CHECK(s.image(1)[0] == (uint8_t)(10 + 20 % 7));

  std::vector<uint8_t> bad;
  push_be32(bad, 0x999);
  push_be32(bad, 1);
  push_be32(bad, 4);
  push_be32(bad, 4);
  bad.resize(16 + 16, 0);
  write_bytes(dir + "/badmagic", bad);
  try {
    load_idx(dir + "/badmagic", dir + "/lbl");
    FAIL("expected throw");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("badmagic") != std::string::npos);
  }

  std::vector<uint8_t> trunc;
  push_be32(trunc, 0x803);
  push_be32(trunc, 10);
  push_be32(trunc, 4);
  push_be32(trunc, 4);
  trunc.resize(16 + 8, 0);  // far fewer pixels than the header promises
  write_bytes(dir + "/trunc", trunc);
  CHECK_THROWS(load_idx(dir + "/trunc", dir + "/lbl"));
}

TEST_CASE("cifar loader: one 3073-byte record, bad label rejected with index") {
  std::string dir = jdiff::testing::scratch_dir("cifar");
  std::vector<uint8_t> rec(3073, 7);
  rec[0] = 4;  // label
  write_bytes(dir + "/one.bin", rec);
  ImageSet s = load_cifar_binary(dir + "/one.bin");
  CHECK(s.n == 1);
  CHECK(s.c == 3);
  CHECK(s.h == 32);
  CHECK(s.w == 32);
  CHECK(s.labels[0] == 4);

  std::vector<uint8_t> two(2 * 3073, 0);
  two[3073] = 11;  // second record's label out of range
  write_bytes(dir + "/bad.bin", two);
  try {
    load_cifar_binary(dir + "/bad.bin");
    FAIL("expected throw");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
  }

  write_bytes(dir + "/short.bin", std::vector<uint8_t>(3072, 0));
  CHECK_THROWS(load_cifar_binary(dir + "/short.bin"));
}

TEST_CASE("resample: identity, nearest index rule, bilinear preserves linear ramps") {
  ImageF img;
  img.c = 1;
  img.h = img.w = 4;
  img.v.resize(16);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.v[y * 4 + x] = 10.0 * x;  // horizontal ramp

  for (Resample m : {Resample::Nearest, Resample::Bilinear}) {
    ImageF same = resample(img, 4, 4, m);
    for (int i = 0; i < 16; ++i) CHECK(same.v[i] == doctest::Approx(img.v[i]).epsilon(1e-12));
  }

  ImageF half = resample(img, 2, 2, Resample::Nearest);
  // nearest: src index floor(dst * 4 / 2) = {0, 2}
  CHECK(half.v[0] == 0.0);
  CHECK(half.v[1] == 20.0);

  ImageF big = resample(img, 4, 7, Resample::Bilinear);
  // corner alignment keeps a linear ramp linear: value = 30 * x / 6
  for (int x = 0; x < 7; ++x) CHECK(big.v[x] == doctest::Approx(30.0 * x / 6.0).epsilon(1e-9));
}

TEST_CASE("u8 affine map round-trips all 256 values") {
  for (int v = 0; v < 256; ++v) {
    double u = u8_to_unit((uint8_t)v);
    CHECK(u >= -1.0);
    CHECK(u <= 1.0);
    CHECK(unit_to_u8(u) == v);
  }
  CHECK(unit_to_u8(-5.0) == 0);  // out-of-range clamps
  CHECK(unit_to_u8(5.0) == 255);
}

TEST_CASE("pairing: quota honored, labels match, missing class rejected") {
  Rng rng(1, 0);
  SynthPaired sp = synth_paired(3, 10, 8, rng);
  Rng pr(2, 0);
  PairingPlan plan = build_pairing(sp.a, sp.b, 25, pr);
  CHECK(plan.n_classes == 3);
  CHECK(plan.total() == 75);
  for (int k = 0; k < 3; ++k) {
    CHECK((int)plan.pairs[k].size() == 25);
    std::set<int> seen_a;
    for (auto [ia, ib] : plan.pairs[k]) {
      CHECK(sp.a.labels[ia] == k);
      CHECK(sp.b.labels[ib] == k);
      seen_a.insert(ia);
    }
    // A side drawn without replacement until exhausted: all 10 distinct
    // sources appear within a quota of 25
    CHECK((int)seen_a.size() == 10);
  }

  ImageSet missing = sp.b;
  for (auto& l : missing.labels)
    if (l == 2) l = 0;  // class 2 vanishes on the B side
  Rng pr2(3, 0);
  CHECK_THROWS(build_pairing(sp.a, missing, 5, pr2));
}

TEST_CASE("pack: layout round trip recovers resampled sources exactly") {
  Rng rng(4, 0);
  SynthPaired sp = synth_paired(2, 6, 8, rng);
  PackedLayout layout;
  layout.height = layout.width = 8;
  layout.modalities = {{"bars", 0, 1, 8, 8}, {"discs", 1, 2, 8, 8}};
  Rng pr(5, 0);
  PairingPlan plan = build_pairing(sp.a, sp.b, 6, pr);
  PackedDataset ds = pack_dataset(sp.a, sp.b, plan, layout, Resample::Nearest);
  CHECK(ds.size() == 12);
  CHECK(ds.data.shape() == Shape{12, 2, 8, 8});
  for (double v : ds.data.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  // unpack returns the u8 sources (already at target resolution here)
  for (int i : {0, 5, 11}) {
    std::vector<ImageF> back = unpack(ds, i);
    REQUIRE(back.size() == 2);
    const uint8_t* src_a = sp.a.image(ds.src_a[i]);
    const uint8_t* src_b = sp.b.image(ds.src_b[i]);
    for (int j = 0; j < 64; ++j) {
      CHECK(back[0].v[j] == doctest::Approx((double)src_a[j]).epsilon(1e-12));
      CHECK(back[1].v[j] == doctest::Approx((double)src_b[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("layout json round trip and partition validation") {
  PackedLayout layout;
  layout.height = 16;
  layout.width = 16;
  layout.modalities = {{"color", 0, 3, 32, 32}, {"gray", 3, 4, 28, 28}};
  PackedLayout back = PackedLayout::from_json(layout.to_json());
  CHECK(back.height == 16);
  CHECK(back.total_channels() == 4);
  CHECK(back.modality("gray").channel_begin == 3);
  CHECK(back.modality_index("color") == 0);
  CHECK_THROWS(back.modality("missing"));

  PackedLayout overlap = layout;
  overlap.modalities[1].channel_begin = 2;
  CHECK_THROWS(overlap.validate());
  PackedLayout gap = layout;
  gap.modalities[1].channel_begin = 4;
  gap.modalities[1].channel_end = 5;
  CHECK_THROWS(gap.validate());
}

TEST_CASE("synthetic corpus: deterministic, jittered, bounds enforced") {
  Rng r1(6, 0), r2(6, 0);
  SynthPaired a = synth_paired(4, 8, 16, r1);
  SynthPaired b = synth_paired(4, 8, 16, r2);
  CHECK(a.a.pixels == b.a.pixels);
  CHECK(a.b.pixels == b.b.pixels);
  CHECK(a.a.n == 32);
  CHECK(a.a.labels == a.b.labels);
  // jitter: two same-class samples are not byte-identical
  bool differ = false;
  for (int j = 0; j < 256; ++j) differ |= (a.a.image(0)[j] != a.a.image(1)[j]);
  CHECK(differ);

  Rng r3(7, 0);
  CHECK_THROWS(synth_paired(1, 8, 16, r3));
  CHECK_THROWS(synth_paired(17, 8, 16, r3));
  CHECK_THROWS(synth_paired(4, 8, 7, r3));
}

TEST_CASE("packed dataset cache round trip is bit exact") {
  std::string dir = jdiff::testing::scratch_dir("packed");
  Rng rng(8, 0);
  SynthPaired sp = synth_paired(2, 5, 8, rng);
  PackedLayout layout;
  layout.height = layout.width = 8;
  layout.modalities = {{"bars", 0, 1, 8, 8}, {"discs", 1, 2, 8, 8}};
  Rng pr(9, 0);
  PackedDataset ds = pack_dataset(sp.a, sp.b, build_pairing(sp.a, sp.b, 5, pr), layout, Resample::Nearest);
  save_packed(ds, dir + "/ds.jdck");
  PackedDataset back = load_packed(dir + "/ds.jdck");
  CHECK(back.layout.to_json() == ds.layout.to_json());
  CHECK(back.labels == ds.labels);
  CHECK(back.src_a == ds.src_a);
  REQUIRE(back.data.size() == ds.data.size());
  for (int64_t i = 0; i < ds.data.size(); ++i) CHECK(back.data.values()[i] == ds.data.values()[i]);
}
