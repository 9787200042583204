#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "gfrnet/data.hpp"
#include "gfrnet/pnm.hpp"

namespace fs = std::filesystem;

namespace gfrnet {

std::vector<float> SynthSpec::depths() const {
  if (!focal_depths.empty()) return focal_depths;
  std::vector<float> d(slices);
  for (int j = 0; j < slices; ++j) d[j] = slices == 1 ? 0.5f : float(j) / float(slices - 1);
  return d;
}

void SynthSpec::validate() const {
  if (resolution < 16) throw ConfigError("synth: resolution must be at least 16");
  if (slices < 1) throw ConfigError("synth: need at least one focal slice");
  if (r_max < 1) throw ConfigError("synth: r_max must be at least 1");
  if (shape_count < 1) throw DataError("synth: degenerate layout with zero objects");
  if (count < 1) throw ConfigError("synth: sample count must be positive");
  if (!(0.0f < min_size && min_size <= max_size && max_size <= 0.9f))
    throw ConfigError("synth: object size range must satisfy 0 < min <= max <= 0.9");
  auto d = depths();
  if (int(d.size()) != slices) throw ConfigError("synth: focal depth count != slice count");
  for (std::size_t j = 1; j < d.size(); ++j)
    if (d[j] <= d[j - 1]) throw ConfigError("synth: focal depths must be strictly increasing");
}

namespace {

// Per-channel summed-area table for O(1) box sums during defocus rendering.
struct Sat {
  int h, w;
  std::vector<double> acc;  // (h+1) x (w+1)

  Sat(const TensorF& img, int channel) : h(img.shape().h), w(img.shape().w) {
    acc.assign(std::size_t(h + 1) * (w + 1), 0.0);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        acc[std::size_t(r + 1) * (w + 1) + c + 1] =
            acc[std::size_t(r) * (w + 1) + c + 1] + acc[std::size_t(r + 1) * (w + 1) + c] -
            acc[std::size_t(r) * (w + 1) + c] + img.at(0, channel, r, c);
  }

  double box_mean(int r, int c, int radius) const {
    const int r0 = std::max(0, r - radius), r1 = std::min(h - 1, r + radius);
    const int c0 = std::max(0, c - radius), c1 = std::min(w - 1, c + radius);
    const double sum = acc[std::size_t(r1 + 1) * (w + 1) + c1 + 1] -
                       acc[std::size_t(r0) * (w + 1) + c1 + 1] -
                       acc[std::size_t(r1 + 1) * (w + 1) + c0] +
                       acc[std::size_t(r0) * (w + 1) + c0];
    return sum / (double(r1 - r0 + 1) * double(c1 - c0 + 1));
  }
};

struct Shape2d {
  bool circle;
  float cr, cc, size;  // center and radius / half-extent, in pixels
  float depth;
  float color[3];

  bool contains(int r, int c) const {
    if (circle) {
      const float dr = r - cr, dc = c - cc;
      return dr * dr + dc * dc <= size * size;
    }
    return std::abs(r - cr) <= size && std::abs(c - cc) <= size;
  }
};

TensorF nearest_resize(const TensorF& src, int out_h, int out_w) {
  const Shape s = src.shape();
  TensorF out({s.n, s.c, out_h, out_w});
  for (int n = 0; n < s.n; ++n)
    for (int ch = 0; ch < s.c; ++ch)
      for (int r = 0; r < out_h; ++r)
        for (int c = 0; c < out_w; ++c) {
          int sr = std::min(s.h - 1, int(std::floor((r + 0.5f) * s.h / out_h)));
          int sc = std::min(s.w - 1, int(std::floor((c + 0.5f) * s.w / out_w)));
          out.at(n, ch, r, c) = src.at(n, ch, sr, sc);
        }
  return out;
}

TensorF crop(const TensorF& src, int r0, int c0, int ch_, int cw) {
  const Shape s = src.shape();
  TensorF out({s.n, s.c, ch_, cw});
  for (int n = 0; n < s.n; ++n)
    for (int ch = 0; ch < s.c; ++ch)
      for (int r = 0; r < ch_; ++r)
        for (int c = 0; c < cw; ++c) out.at(n, ch, r, c) = src.at(n, ch, r0 + r, c0 + c);
  return out;
}

TensorF flip_h(const TensorF& src) {
  const Shape s = src.shape();
  TensorF out(s);
  for (int n = 0; n < s.n; ++n)
    for (int ch = 0; ch < s.c; ++ch)
      for (int r = 0; r < s.h; ++r)
        for (int c = 0; c < s.w; ++c) out.at(n, ch, r, c) = src.at(n, ch, r, s.w - 1 - c);
  return out;
}

// Counter-clockwise quarter turns; square images only.
TensorF rotate(const TensorF& src, int quarters) {
  quarters = ((quarters % 4) + 4) % 4;
  if (quarters == 0) return src;
  const Shape s = src.shape();
  TensorF out(s);
  for (int n = 0; n < s.n; ++n)
    for (int ch = 0; ch < s.c; ++ch)
      for (int r = 0; r < s.h; ++r)
        for (int c = 0; c < s.w; ++c) {
          int sr = r, sc = c;
          if (quarters == 1) {
            sr = c;
            sc = s.w - 1 - r;
          } else if (quarters == 2) {
            sr = s.h - 1 - r;
            sc = s.w - 1 - c;
          } else {
            sr = s.h - 1 - c;
            sc = r;
          }
          out.at(n, ch, r, c) = src.at(n, ch, sr, sc);
        }
  return out;
}

TensorF binarize(const TensorF& t) {
  TensorF out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out.data()[i] = t.data()[i] > 0.5f ? 1.0f : 0.0f;
  return out;
}

TensorF transform_one(const TensorF& t, const AugmentDraw& d, bool nearest) {
  TensorF cur = t;
  if (d.flip) cur = flip_h(cur);
  const int h = cur.shape().h, w = cur.shape().w;
  const int ch_ = std::max(1, int(std::lround(d.scale * h)));
  const int cw = std::max(1, int(std::lround(d.scale * w)));
  if (ch_ != h || cw != w) {
    const int r0 = int(std::lround(d.off_r * (h - ch_)));
    const int c0 = int(std::lround(d.off_c * (w - cw)));
    cur = crop(cur, r0, c0, ch_, cw);
    cur = nearest ? nearest_resize(cur, h, w) : resize_bilinear(cur, h, w);
  }
  return rotate(cur, d.rot_quarters);
}

std::string two_digits(int v) {
  std::string s = std::to_string(v);
  return s.size() < 2 ? "0" + s : s;
}

}  // namespace

Sample synthesize_sample(const SynthSpec& spec, int index) {
  spec.validate();
  Rng rng(spec.seed * 0x9E3779B97F4A7C15ull + std::uint64_t(index) + 1);
  const int res = spec.resolution;

  // Smooth two-wave background texture per channel; background sits at the
  // far plane (depth 0).
  Sample s;
  s.id = "synth_" + std::to_string(index);
  s.aif = TensorF({1, 3, res, res});
  s.depth = TensorF::zeros({1, 1, res, res});
  s.gt = TensorF::zeros({1, 1, res, res});
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  for (int ch = 0; ch < 3; ++ch) {
    const float fr = 1.0f + 3.0f * unit(rng), fc = 1.0f + 3.0f * unit(rng);
    const float phase = 6.2831853f * unit(rng);
    const float base = 0.35f + 0.3f * unit(rng);
    for (int r = 0; r < res; ++r)
      for (int c = 0; c < res; ++c)
        s.aif.at(0, ch, r, c) =
            std::clamp(base + 0.25f * std::sin(6.2831853f * (fr * r + fc * c) / res + phase),
                       0.0f, 1.0f);
  }

  // Objects at distinct quantized depths; high-contrast colors so defocus is
  // visible. Drawn far to near so nearer objects occlude.
  std::vector<int> depth_slots(18);
  std::iota(depth_slots.begin(), depth_slots.end(), 2);  // slots 2..19 -> 0.1..0.95
  std::shuffle(depth_slots.begin(), depth_slots.end(), rng);
  std::vector<Shape2d> shapes(std::size_t(spec.shape_count));
  for (int k = 0; k < spec.shape_count; ++k) {
    Shape2d& sh = shapes[std::size_t(k)];
    sh.circle = unit(rng) < 0.5f;
    sh.cr = (0.2f + 0.6f * unit(rng)) * res;
    sh.cc = (0.2f + 0.6f * unit(rng)) * res;
    sh.size = (spec.min_size + (spec.max_size - spec.min_size) * unit(rng)) * res * 0.5f;
    sh.depth = 0.05f * depth_slots[std::size_t(k)];
    for (float& col : sh.color) col = unit(rng) < 0.5f ? 0.3f * unit(rng) : 1.0f - 0.3f * unit(rng);
  }
  std::sort(shapes.begin(), shapes.end(),
            [](const Shape2d& a, const Shape2d& b) { return a.depth < b.depth; });
  for (const Shape2d& sh : shapes)
    for (int r = 0; r < res; ++r)
      for (int c = 0; c < res; ++c)
        if (sh.contains(r, c)) {
          for (int ch = 0; ch < 3; ++ch) s.aif.at(0, ch, r, c) = sh.color[ch];
          s.depth.at(0, 0, r, c) = sh.depth;
        }

  // Ground truth: the nearest-depth object, i.e. pixels that ended up at the
  // maximal depth.
  const float near_depth = shapes.back().depth;
  for (int r = 0; r < res; ++r)
    for (int c = 0; c < res; ++c)
      s.gt.at(0, 0, r, c) = s.depth.at(0, 0, r, c) == near_depth ? 1.0f : 0.0f;

  // Focal slices: per-pixel box blur whose radius grows with focal distance.
  const std::vector<float> focal = spec.depths();
  const Sat sats[3] = {Sat(s.aif, 0), Sat(s.aif, 1), Sat(s.aif, 2)};
  s.slices.reserve(focal.size());
  for (float d : focal) {
    TensorF slice({1, 3, res, res});
    for (int r = 0; r < res; ++r)
      for (int c = 0; c < res; ++c) {
        const int radius =
            int(std::lround(double(spec.r_max) * std::abs(s.depth.at(0, 0, r, c) - d)));
        for (int ch = 0; ch < 3; ++ch)
          slice.at(0, ch, r, c) = radius == 0 ? s.aif.at(0, ch, r, c)
                                              : float(sats[ch].box_mean(r, c, radius));
      }
    s.slices.push_back(std::move(slice));
  }
  return s;
}

AugmentDraw draw_augment(Rng& rng) {
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  AugmentDraw d;
  d.flip = unit(rng) < 0.5f;
  d.scale = 0.8f + 0.2f * unit(rng);
  d.off_r = unit(rng);
  d.off_c = unit(rng);
  d.rot_quarters = unit(rng) < 0.5f ? 0 : 1 + int(std::min(2.0f, 3.0f * unit(rng)));
  return d;
}

Sample augment_with(const Sample& sample, const AugmentDraw& draw) {
  Sample out;
  out.id = sample.id;
  out.aif = transform_one(sample.aif, draw, false);
  out.depth = transform_one(sample.depth, draw, false);
  out.gt = binarize(transform_one(sample.gt, draw, true));
  out.slices.reserve(sample.slices.size());
  for (const TensorF& sl : sample.slices) out.slices.push_back(transform_one(sl, draw, false));
  return out;
}

Sample augment(const Sample& sample, Rng& rng) { return augment_with(sample, draw_augment(rng)); }

void save_sample(const Sample& sample, const std::string& root) {
  const fs::path dir = fs::path(root) / sample.id;
  fs::create_directories(dir);
  save_pnm(sample.aif, (dir / "aif.ppm").string());
  save_pnm(sample.depth, (dir / "depth.pgm").string());
  save_pnm(sample.gt, (dir / "gt.pgm").string());
  for (std::size_t j = 0; j < sample.slices.size(); ++j)
    save_pnm(sample.slices[j], (dir / ("slice_" + two_digits(int(j)) + ".ppm")).string());
}

Sample load_sample(const std::string& root, const std::string& id, int slices) {
  const fs::path dir = fs::path(root) / id;
  auto component = [&](const std::string& name) {
    const fs::path p = dir / name;
    if (!fs::exists(p)) throw DataError(id + ": missing " + name);
    return load_pnm(p.string());
  };
  Sample s;
  s.id = id;
  s.aif = component("aif.ppm");
  s.depth = component("depth.pgm");
  s.gt = binarize(component("gt.pgm"));
  for (int j = 0; j < slices; ++j)
    s.slices.push_back(component("slice_" + two_digits(j) + ".ppm"));
  return s;
}

Dataset Dataset::synthetic(const SynthSpec& spec) {
  spec.validate();
  Dataset d;
  d.spec_ = spec;
  d.slices_ = spec.slices;
  return d;
}

Dataset Dataset::from_dir(const std::string& root, int slices) {
  Dataset d;
  d.root_ = root;
  d.slices_ = slices;
  if (!fs::is_directory(root)) throw DataError(root + ": not a directory");
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) d.ids_.push_back(entry.path().filename().string());
  std::sort(d.ids_.begin(), d.ids_.end());
  if (d.ids_.empty()) throw DataError(root + ": no samples found");
  return d;
}

Sample Dataset::get(std::size_t index) const {
  if (index >= size()) throw DataError("dataset: index out of range");
  if (spec_) return synthesize_sample(*spec_, int(index));
  return load_sample(root_, ids_[index], slices_);
}

std::vector<std::size_t> Dataset::epoch_order(std::uint64_t seed) const {
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace gfrnet
