#include "fscn/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace fscn {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void AugmentConfig::validate() const {
  for (double p : {flip_p, contrast_p, color_p}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("flip_p, contrast_p and color_p must lie in [0, 1]");
  }
  if (!(rot_lo_deg <= rot_hi_deg)) throw std::invalid_argument("rot_lo_deg must not exceed rot_hi_deg");
  if (crop_h <= 0 || crop_w <= 0) throw std::invalid_argument("crop_h and crop_w must be positive");
}

AugmentConfig AugmentConfig::disabled(int crop_h, int crop_w) {
  AugmentConfig cfg;
  cfg.flip_p = cfg.contrast_p = cfg.color_p = 0.0;
  cfg.rot_lo_deg = cfg.rot_hi_deg = 0.0;
  cfg.crop_h = crop_h;
  cfg.crop_w = crop_w;
  return cfg;
}

namespace {

struct Layer {
  int y0, y1, x0, x1;
  double depth_left, depth_right;
  std::array<double, 3> albedo;
};

std::array<double, 3> random_albedo(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.25, 1.0);
  std::array<double, 3> a{u(rng), u(rng), u(rng)};
  const double peak = std::max({a[0], a[1], a[2]});
  for (double& v : a) v /= peak;
  return a;
}

DepthSample render_scene(std::mt19937_64& rng, int h, int w, double max_depth_m,
                         const SynthOptions& options, std::string id) {
  const double near = 0.08 * max_depth_m;
  const double far = 0.9 * max_depth_m;
  const double log_span = std::log(far / near);
  // Brightness falls from 1 at the near plane to 0.2 at the far plane.
  auto shade = [&](double d) { return 1.0 - 0.8 * std::log(d / near) / log_span; };

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> depth(static_cast<std::size_t>(h) * w);
  std::vector<std::array<double, 3>> albedo(depth.size());

  const auto background = random_albedo(rng);
  if (options.constant_depth) {
    const double d = near + unit(rng) * (far - near);
    std::fill(depth.begin(), depth.end(), d);
    std::fill(albedo.begin(), albedo.end(), background);
  } else {
    // Ground-like backdrop: far at the top row, near at the bottom.
    const auto floor_albedo = random_albedo(rng);
    for (int y = 0; y < h; ++y) {
      const double t = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
      const double d = far * std::pow(near / far, t);
      for (int x = 0; x < w; ++x) {
        depth[y * w + x] = d;
        albedo[y * w + x] = y < h / 3 ? background : floor_albedo;
      }
    }
    std::uniform_int_distribution<int> count(2, 5);
    std::vector<Layer> layers(count(rng));
    for (auto& layer : layers) {
      const int lh = std::max(2, static_cast<int>(h * (0.15 + 0.4 * unit(rng))));
      const int lw = std::max(2, static_cast<int>(w * (0.1 + 0.35 * unit(rng))));
      layer.y0 = static_cast<int>(unit(rng) * (h - lh));
      layer.x0 = static_cast<int>(unit(rng) * (w - lw));
      layer.y1 = layer.y0 + lh;
      layer.x1 = layer.x0 + lw;
      layer.depth_left = near + unit(rng) * (far - near) * 0.8;
      const bool slanted = unit(rng) < 0.4;
      layer.depth_right = slanted ? std::clamp(layer.depth_left * (0.7 + 0.6 * unit(rng)), near, far)
                                  : layer.depth_left;
      layer.albedo = random_albedo(rng);
    }
    // Painter's order: farthest first.
    std::sort(layers.begin(), layers.end(), [](const Layer& a, const Layer& b) {
      return a.depth_left + a.depth_right > b.depth_left + b.depth_right;
    });
    for (const auto& layer : layers) {
      for (int y = layer.y0; y < layer.y1; ++y) {
        for (int x = layer.x0; x < layer.x1; ++x) {
          const double t = layer.x1 - layer.x0 > 1
                               ? static_cast<double>(x - layer.x0) / (layer.x1 - layer.x0 - 1)
                               : 0.0;
          depth[y * w + x] = layer.depth_left + t * (layer.depth_right - layer.depth_left);
          albedo[y * w + x] = layer.albedo;
        }
      }
    }
  }

  DepthSample sample;
  sample.id = std::move(id);
  sample.rgb = Tensor<float>(Shape{1, 3, h, w});
  sample.depth = Tensor<float>(Shape{1, 1, h, w});
  const std::size_t plane = depth.size();
  for (std::size_t i = 0; i < plane; ++i) {
    const double s = shade(depth[i]);
    for (int c = 0; c < 3; ++c) {
      sample.rgb.data()[c * plane + i] = static_cast<float>(std::clamp(albedo[i][c] * s, 0.0, 1.0));
    }
    sample.depth.data()[i] = static_cast<float>(depth[i]);
  }
  for (std::size_t i = 0; i < plane; ++i) {
    if (unit(rng) < options.invalid_fraction) sample.depth.data()[i] = 0.0f;
  }
  return sample;
}

}  // namespace

std::vector<DepthSample> generate_synthetic(std::uint64_t seed, int n, int h, int w,
                                            double max_depth_m, const SynthOptions& options) {
  if (h <= 0 || w <= 0 || h % 32 != 0 || w % 32 != 0) {
    throw DataError("generate_synthetic: height and width must be positive multiples of 32");
  }
  if (!(max_depth_m > 0.0)) throw DataError("generate_synthetic: max depth must be positive");
  std::vector<DepthSample> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%05d", i);
    samples.push_back(render_scene(rng, h, w, max_depth_m, options, id));
  }
  return samples;
}

Tensor<float> from_rgb8(const Rgb8Image& image) {
  Tensor<float> rgb(Shape{1, 3, image.height, image.width});
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      rgb.data()[c * plane + i] = static_cast<float>(image.pixels[i * 3 + c]) / 255.0f;
    }
  }
  return rgb;
}

Tensor<float> from_depth16(const Gray16Image& image) {
  Tensor<float> depth(Shape{1, 1, image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    depth.data()[i] = static_cast<float>(image.pixels[i] / kDepthPngScale);
  }
  return depth;
}

Rgb8Image to_rgb8(const Tensor<float>& rgb) {
  const Shape& s = rgb.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("to_rgb8: expected (1,3,h,w), got " + s.str());
  Rgb8Image image{s.h, s.w, std::vector<std::uint8_t>(s.plane() * 3)};
  for (std::size_t i = 0; i < s.plane(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(rgb.data()[c * s.plane() + i], 0.0f, 1.0f);
      image.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  return image;
}

Gray16Image to_depth16(const Tensor<float>& depth) {
  const Shape& s = depth.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("to_depth16: expected (1,1,h,w), got " + s.str());
  Gray16Image image{s.h, s.w, std::vector<std::uint16_t>(s.plane())};
  for (std::size_t i = 0; i < s.plane(); ++i) {
    const double raw = std::round(static_cast<double>(depth.data()[i]) * kDepthPngScale);
    image.pixels[i] = static_cast<std::uint16_t>(std::clamp(raw, 0.0, 65535.0));
  }
  return image;
}

DepthSample load_sample(const std::filesystem::path& rgb_path,
                        const std::filesystem::path& depth_path) {
  DepthSample sample;
  try {
    sample.rgb = from_rgb8(read_png_rgb8(rgb_path));
    sample.depth = from_depth16(read_png_gray16(depth_path));
  } catch (const ImageIoError& e) {
    throw DataError(e.what());
  }
  if (sample.rgb.shape().h != sample.depth.shape().h ||
      sample.rgb.shape().w != sample.depth.shape().w) {
    throw DataError("dimension mismatch between '" + rgb_path.string() + "' " +
                    sample.rgb.shape().str() + " and '" + depth_path.string() + "' " +
                    sample.depth.shape().str());
  }
  sample.id = rgb_path.stem().string();
  return sample;
}

namespace {

void rotate(DepthSample& s, double degrees) {
  const int h = s.height();
  const int w = s.width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  const double cy = (h - 1) / 2.0;
  const double cx = (w - 1) / 2.0;
  Tensor<float> rgb(s.rgb.shape());
  Tensor<float> depth(s.depth.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Inverse mapping: sample the source at the point rotated by -theta.
      const double dx = x - cx;
      const double dy = y - cy;
      const double sx = cs * dx + sn * dy + cx;
      const double sy = -sn * dx + cs * dy + cy;
      const std::size_t o = static_cast<std::size_t>(y) * w + x;

      const long nx = std::lround(sx);
      const long ny = std::lround(sy);
      depth.data()[o] = (nx >= 0 && nx < w && ny >= 0 && ny < h)
                            ? s.depth.data()[static_cast<std::size_t>(ny) * w + nx]
                            : 0.0f;

      const double csx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
      const double csy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
      const int x0 = static_cast<int>(std::floor(csx));
      const int y0 = static_cast<int>(std::floor(csy));
      const int x1 = std::min(x0 + 1, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const double fx = csx - x0;
      const double fy = csy - y0;
      for (int c = 0; c < 3; ++c) {
        const float* src = s.rgb.ptr() + c * plane;
        const double top = src[y0 * w + x0] + fx * (src[y0 * w + x1] - src[y0 * w + x0]);
        const double bottom = src[y1 * w + x0] + fx * (src[y1 * w + x1] - src[y1 * w + x0]);
        rgb.data()[c * plane + o] = static_cast<float>(std::clamp(top + fy * (bottom - top), 0.0, 1.0));
      }
    }
  }
  s.rgb = rgb;
  s.depth = depth;
}

void flip_horizontal(Tensor<float>& t) {
  const Shape& s = t.shape();
  for (int p = 0; p < s.n * s.c; ++p) {
    for (int y = 0; y < s.h; ++y) {
      float* row = t.ptr() + p * s.plane() + static_cast<std::size_t>(y) * s.w;
      std::reverse(row, row + s.w);
    }
  }
}

Tensor<float> crop(const Tensor<float>& t, int y0, int x0, int ch, int cw) {
  const Shape& s = t.shape();
  Tensor<float> out(Shape{s.n, s.c, ch, cw});
  for (int p = 0; p < s.n * s.c; ++p) {
    for (int y = 0; y < ch; ++y) {
      const float* src = t.ptr() + p * s.plane() + static_cast<std::size_t>(y0 + y) * s.w + x0;
      std::copy(src, src + cw, out.ptr() + p * out.shape().plane() + static_cast<std::size_t>(y) * cw);
    }
  }
  return out;
}

}  // namespace

DepthSample augment(const DepthSample& sample, const AugmentConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  if (cfg.crop_h > sample.height() || cfg.crop_w > sample.width()) {
    throw DataError("augment: crop " + std::to_string(cfg.crop_h) + "x" + std::to_string(cfg.crop_w) +
                    " larger than image " + std::to_string(sample.height()) + "x" +
                    std::to_string(sample.width()));
  }
  // Every draw is taken unconditionally so the stream position does not
  // depend on which effects fire.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> gain(0.9, 1.1);
  const double theta = cfg.rot_lo_deg + unit(rng) * (cfg.rot_hi_deg - cfg.rot_lo_deg);
  const bool flip = unit(rng) < cfg.flip_p;
  const bool contrast = unit(rng) < cfg.contrast_p;
  const double contrast_gain = gain(rng);
  const bool color = unit(rng) < cfg.color_p;
  const std::array<double, 3> color_gain{gain(rng), gain(rng), gain(rng)};
  std::uniform_int_distribution<int> oy(0, sample.height() - cfg.crop_h);
  std::uniform_int_distribution<int> ox(0, sample.width() - cfg.crop_w);
  const int y0 = oy(rng);
  const int x0 = ox(rng);

  DepthSample out{sample.rgb.clone(), sample.depth.clone(), sample.id};
  if (theta != 0.0) rotate(out, theta);
  if (flip) {
    flip_horizontal(out.rgb);
    flip_horizontal(out.depth);
  }
  if (contrast) {
    double mean = 0.0;
    for (float v : out.rgb.data()) mean += v;
    mean /= static_cast<double>(out.rgb.numel());
    for (float& v : out.rgb.data()) {
      v = static_cast<float>(std::clamp(mean + contrast_gain * (v - mean), 0.0, 1.0));
    }
  }
  if (color) {
    const std::size_t plane = out.rgb.shape().plane();
    for (int c = 0; c < 3; ++c) {
      float* channel = out.rgb.ptr() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        channel[i] = static_cast<float>(std::clamp(channel[i] * color_gain[c], 0.0, 1.0));
      }
    }
  }
  if (cfg.crop_h != sample.height() || cfg.crop_w != sample.width()) {
    out.rgb = crop(out.rgb, y0, x0, cfg.crop_h, cfg.crop_w);
    out.depth = crop(out.depth, y0, x0, cfg.crop_h, cfg.crop_w);
  }
  return out;
}

DepthSample center_crop(const DepthSample& sample, int h, int w) {
  if (h > sample.height() || w > sample.width()) {
    throw DataError("center_crop: " + std::to_string(h) + "x" + std::to_string(w) +
                    " larger than image " + std::to_string(sample.height()) + "x" +
                    std::to_string(sample.width()));
  }
  if (h == sample.height() && w == sample.width()) return sample;
  const int y0 = (sample.height() - h) / 2;
  const int x0 = (sample.width() - w) / 2;
  return DepthSample{crop(sample.rgb, y0, x0, h, w), crop(sample.depth, y0, x0, h, w), sample.id};
}

Batch make_batch(std::span<const DepthSample> samples, double cap_m) {
  if (samples.empty()) throw DataError("make_batch: no samples");
  const int h = samples.front().height();
  const int w = samples.front().width();
  const int n = static_cast<int>(samples.size());
  Batch batch;
  batch.rgb = Tensor<float>(Shape{n, 3, h, w});
  batch.depth = Tensor<float>(Shape{n, 1, h, w});
  batch.mask.shape = batch.depth.shape();
  batch.mask.cap_m = cap_m;
  batch.mask.valid.reserve(batch.depth.numel());
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    const DepthSample& s = samples[i];
    if (s.height() != h || s.width() != w) {
      throw DataError("make_batch: sample '" + s.id + "' is " + std::to_string(s.height()) + "x" +
                      std::to_string(s.width()) + ", expected " + std::to_string(h) + "x" +
                      std::to_string(w));
    }
    std::copy(s.rgb.data().begin(), s.rgb.data().end(), batch.rgb.ptr() + i * 3 * plane);
    std::copy(s.depth.data().begin(), s.depth.data().end(), batch.depth.ptr() + i * plane);
    const ValidMask m = valid_mask(s.depth, cap_m);
    batch.mask.valid.insert(batch.mask.valid.end(), m.valid.begin(), m.valid.end());
    batch.mask.count += m.count;
    batch.valid_per_sample.push_back(m.count);
  }
  return batch;
}

SplitList parse_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file '" + path.string() + "'");
  SplitList list;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::vector<std::string> parts;
    for (std::string t; tokens >> t;) parts.push_back(t);
    if (parts.empty()) continue;
    if (parts.size() != 2) {
      throw DataError(path.string() + ":" + std::to_string(number) +
                      ": expected '<rgb_path> <depth_path>', found " + std::to_string(parts.size()) +
                      " token(s)");
    }
    list.push_back({parts[0], parts[1]});
  }
  return list;
}

std::vector<DepthSample> load_split(const SplitList& split, const std::filesystem::path& root) {
  std::vector<DepthSample> samples;
  samples.reserve(split.size());
  for (const auto& entry : split) {
    const auto rgb = entry.rgb.is_absolute() ? entry.rgb : root / entry.rgb;
    const auto depth = entry.depth.is_absolute() ? entry.depth : root / entry.depth;
    samples.push_back(load_sample(rgb, depth));
  }
  return samples;
}

void write_dataset(const std::filesystem::path& root, std::span<const DepthSample> train,
                   std::span<const DepthSample> test) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "rgb");
  fs::create_directories(root / "depth");
  fs::create_directories(root / "splits");
  auto emit = [&](std::span<const DepthSample> samples, const std::string& split) {
    std::ofstream list(root / "splits" / (split + ".txt"));
    if (!list) throw DataError("cannot write split file under '" + root.string() + "'");
    list << "# " << split << " split: <rgb_path> <depth_path>, relative to the dataset root\n";
    for (const auto& s : samples) {
      const std::string name = split + "_" + s.id + ".png";
      write_png(root / "rgb" / name, to_rgb8(s.rgb));
      write_png(root / "depth" / name, to_depth16(s.depth));
      list << "rgb/" << name << " depth/" << name << '\n';
    }
  };
  emit(train, "train");
  emit(test, "test");
}

}  // namespace fscn
