#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "gfrnet/data.hpp"
#include "gfrnet/pnm.hpp"

using namespace gfrnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("gfrnet_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool tensors_equal(const TensorF& a, const TensorF& b) {
  if (!(a.shape() == b.shape())) return false;
  return a.data() == b.data();
}

bool samples_equal(const Sample& a, const Sample& b) {
  if (!tensors_equal(a.aif, b.aif) || !tensors_equal(a.depth, b.depth) ||
      !tensors_equal(a.gt, b.gt) || a.slices.size() != b.slices.size())
    return false;
  for (std::size_t j = 0; j < a.slices.size(); ++j)
    if (!tensors_equal(a.slices[j], b.slices[j])) return false;
  return true;
}

std::pair<double, double> mask_centroid(const TensorF& mask) {
  double tot = 0, mr = 0, mc = 0;
  for (int r = 0; r < mask.shape().h; ++r)
    for (int c = 0; c < mask.shape().w; ++c) {
      double v = mask.at(0, 0, r, c);
      tot += v;
      mr += v * r;
      mc += v * c;
    }
  return {mr / tot, mc / tot};
}

}  // namespace

TEST_CASE("pnm roundtrips are bit-exact for 8-bit data") {
  auto dir = temp_dir("pnm");
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> byte(0, 255);

  TensorF gray({1, 1, 7, 5});
  for (auto& v : gray.data()) v = byte(rng) / 255.0f;
  save_pnm(gray, (dir / "g.pgm").string());
  CHECK(tensors_equal(load_pnm((dir / "g.pgm").string()), gray));

  TensorF rgb({1, 3, 4, 6});
  for (auto& v : rgb.data()) v = byte(rng) / 255.0f;
  save_pnm(rgb, (dir / "c.ppm").string());
  CHECK(tensors_equal(load_pnm((dir / "c.ppm").string()), rgb));
}

TEST_CASE("pnm header fixture") {
  auto dir = temp_dir("pnmhdr");
  {
    std::ofstream f(dir / "fix.pgm", std::ios::binary);
    f << "P5 2 2 255\n";
    const unsigned char px[4] = {0, 85, 170, 255};
    f.write(reinterpret_cast<const char*>(px), 4);
  }
  TensorF img = load_pnm((dir / "fix.pgm").string());
  CHECK(img.shape() == Shape{1, 1, 2, 2});
  CHECK(img.at(0, 0, 0, 0) == doctest::Approx(0.0f));
  CHECK(img.at(0, 0, 0, 1) == doctest::Approx(85.0f / 255.0f));
  CHECK(img.at(0, 0, 1, 1) == doctest::Approx(1.0f));
}

TEST_CASE("pnm rejects malformed input with byte offsets") {
  auto dir = temp_dir("pnmbad");
  auto write = [&](const std::string& name, const std::string& bytes) {
    std::ofstream f(dir / name, std::ios::binary);
    f << bytes;
    return (dir / name).string();
  };
  CHECK_THROWS_AS(load_pnm(write("magic.pgm", "P3 2 2 255\n0000")), DataError);
  CHECK_THROWS_AS(load_pnm(write("maxval.pgm", std::string("P5 2 2 65535\n") +
                                                   std::string(8, 'x'))),
                  DataError);
  CHECK_THROWS_AS(load_pnm(write("trunc.pgm", "P5 4 4 255\nab")), DataError);
  try {
    load_pnm(write("trunc2.pgm", "P5 4 4 255\nab"));
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
  CHECK_THROWS_AS(load_pnm((dir / "nope.pgm").string()), DataError);
}

TEST_CASE("synthesis is deterministic in seed and index") {
  SynthSpec spec;
  spec.resolution = 32;
  spec.slices = 4;
  spec.seed = 7;
  Sample a = synthesize_sample(spec, 3);
  Sample b = synthesize_sample(spec, 3);
  CHECK(samples_equal(a, b));

  Sample c = synthesize_sample(spec, 4);
  CHECK(!samples_equal(a, c));
}

TEST_CASE("degenerate layouts and bad specs are rejected") {
  SynthSpec spec;
  spec.shape_count = 0;
  CHECK_THROWS_AS(synthesize_sample(spec, 0), DataError);

  SynthSpec bad_r;
  bad_r.r_max = 0;
  CHECK_THROWS_AS(bad_r.validate(), ConfigError);

  SynthSpec bad_d;
  bad_d.slices = 2;
  bad_d.focal_depths = {0.5f, 0.5f};
  CHECK_THROWS_AS(bad_d.validate(), ConfigError);
}

TEST_CASE("in-focus pixels reproduce the sharp image exactly") {
  SynthSpec spec;
  spec.resolution = 32;
  spec.slices = 2;
  spec.focal_depths = {0.0f, 1.0f};
  spec.seed = 11;
  Sample s = synthesize_sample(spec, 0);
  // Background sits exactly at the far plane, so the far-focused slice is
  // blur-free there.
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c)
      if (s.depth.at(0, 0, r, c) == 0.0f)
        for (int ch = 0; ch < 3; ++ch)
          CHECK(s.slices[0].at(0, ch, r, c) == s.aif.at(0, ch, r, c));
}

TEST_CASE("the best-focused slice is closest to the sharp image on the object") {
  SynthSpec spec;
  spec.resolution = 48;
  spec.slices = 8;
  spec.r_max = 5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    spec.seed = seed;
    Sample s = synthesize_sample(spec, 0);
    float d_obj = 0.0f;
    for (float v : s.depth.data()) d_obj = std::max(d_obj, v);

    const auto focal = spec.depths();
    std::size_t nearest = 0;
    for (std::size_t j = 1; j < focal.size(); ++j)
      if (std::abs(focal[j] - d_obj) < std::abs(focal[nearest] - d_obj)) nearest = j;

    std::vector<double> err(focal.size(), 0.0);
    double area = 0.0;
    for (int r = 0; r < 48; ++r)
      for (int c = 0; c < 48; ++c)
        if (s.gt.at(0, 0, r, c) > 0.5f) {
          area += 1.0;
          for (std::size_t j = 0; j < focal.size(); ++j)
            for (int ch = 0; ch < 3; ++ch)
              err[j] += std::abs(s.slices[j].at(0, ch, r, c) - s.aif.at(0, ch, r, c));
        }
    REQUIRE(area > 0.0);
    for (std::size_t j = 0; j < err.size(); ++j) CHECK(err[nearest] <= err[j] + 1e-9);
  }
}

TEST_CASE("forced flip is an involution and augmentation keeps gt binary") {
  SynthSpec spec;
  spec.resolution = 32;
  spec.slices = 3;
  spec.seed = 5;
  Sample s = synthesize_sample(spec, 0);

  AugmentDraw flip;
  flip.flip = true;
  CHECK(samples_equal(augment_with(augment_with(s, flip), flip), s));

  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    Sample a = augment(s, rng);
    CHECK(a.aif.shape() == s.aif.shape());
    CHECK(a.slices.size() == s.slices.size());
    bool any_fg = false;
    for (float v : a.gt.data()) {
      CHECK((v == 0.0f || v == 1.0f));
      any_fg |= v == 1.0f;
    }
    CHECK(any_fg);
  }
}

TEST_CASE("all components receive the same geometric transform") {
  SynthSpec spec;
  spec.resolution = 48;
  spec.slices = 2;
  spec.shape_count = 1;  // single object: gt equals the object mask
  spec.seed = 13;
  Sample s = synthesize_sample(spec, 0);

  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    AugmentDraw d = draw_augment(rng);
    Sample a = augment_with(s, d);
    // The depth map's salient plateau must move exactly with the gt mask.
    TensorF depth_mask(a.depth.shape());
    float d_obj = 0.0f;
    for (float v : a.depth.data()) d_obj = std::max(d_obj, v);
    for (std::size_t i = 0; i < depth_mask.size(); ++i)
      depth_mask.data()[i] = a.depth.data()[i] > 0.6f * d_obj ? 1.0f : 0.0f;
    auto [gr, gc] = mask_centroid(a.gt);
    auto [dr, dc] = mask_centroid(depth_mask);
    CHECK(std::abs(gr - dr) <= 1.0);
    CHECK(std::abs(gc - dc) <= 1.0);
  }
}

TEST_CASE("dataset iteration is deterministic and sized correctly") {
  SynthSpec spec;
  spec.resolution = 32;
  spec.slices = 3;
  spec.count = 4;
  Dataset ds = Dataset::synthetic(spec);
  CHECK(ds.size() == 4);
  CHECK(samples_equal(ds.get(2), ds.get(2)));
  CHECK_THROWS_AS(ds.get(4), DataError);

  auto o1 = ds.epoch_order(42), o2 = ds.epoch_order(42), o3 = ds.epoch_order(43);
  CHECK(o1 == o2);
  CHECK(o1 != o3);
}

TEST_CASE("on-disk roundtrip and missing-component diagnostics") {
  SynthSpec spec;
  spec.resolution = 32;
  spec.slices = 12;
  spec.seed = 21;
  Sample s = synthesize_sample(spec, 0);
  auto dir = temp_dir("dataset");
  save_sample(s, dir.string());

  Dataset ds = Dataset::from_dir(dir.string(), 12);
  CHECK(ds.size() == 1);
  Sample loaded = ds.get(0);
  CHECK(loaded.id == s.id);
  CHECK(loaded.gt.data() == s.gt.data());
  // Images pass through 8-bit quantization once, so a second cycle is exact.
  save_sample(loaded, dir.string());
  CHECK(samples_equal(ds.get(0), loaded));

  fs::remove(dir / s.id / "slice_07.ppm");
  try {
    ds.get(0);
    FAIL("expected a missing-file error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("slice_07") != std::string::npos);
  }

  CHECK_THROWS_AS(Dataset::from_dir((dir / "absent").string(), 12), DataError);
}
