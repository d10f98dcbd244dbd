#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fscn/image_io.hpp"
#include "fscn/loss.hpp"
#include "fscn/tensor.hpp"

namespace fscn {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// RGB in [0,1] as (1,3,h,w) and metric depth as (1,1,h,w); depth 0 marks
/// an invalid pixel.
struct DepthSample {
  Tensor<float> rgb;
  Tensor<float> depth;
  std::string id;

  int height() const { return rgb.shape().h; }
  int width() const { return rgb.shape().w; }
};

struct AugmentConfig {
  double flip_p = 0.5;
  double contrast_p = 0.5;
  double color_p = 0.5;
  double rot_lo_deg = -1.0;
  double rot_hi_deg = 1.0;
  int crop_h = 64;
  int crop_w = 128;

  void validate() const;
  /// Every effect off; crop_h/crop_w still apply.
  static AugmentConfig disabled(int crop_h, int crop_w);
  bool operator==(const AugmentConfig&) const = default;
};

struct SynthOptions {
  bool constant_depth = false;
  double invalid_fraction = 0.02;
};

/// Procedural layered scenes whose shading darkens with depth.
/// Deterministic per (seed, index); h and w must be multiples of 32.
std::vector<DepthSample> generate_synthetic(std::uint64_t seed, int n, int h, int w,
                                            double max_depth_m, const SynthOptions& options = {});

inline constexpr double kDepthPngScale = 256.0;

/// 8-bit RGB png plus 16-bit depth png (raw / 256 metres, 0 = invalid).
DepthSample load_sample(const std::filesystem::path& rgb_path,
                        const std::filesystem::path& depth_path);

/// rotate -> flip -> contrast -> colour -> crop. Geometry is shared between
/// rgb and depth; photometric changes touch rgb only.
DepthSample augment(const DepthSample& sample, const AugmentConfig& cfg, std::mt19937_64& rng);

/// Central h x w window; returns the sample itself when the size already matches.
DepthSample center_crop(const DepthSample& sample, int h, int w);

struct Batch {
  Tensor<float> rgb;    // (n,3,h,w)
  Tensor<float> depth;  // (n,1,h,w)
  ValidMask mask;
  std::vector<std::size_t> valid_per_sample;
};

Batch make_batch(std::span<const DepthSample> samples, double cap_m);

struct SplitEntry {
  std::filesystem::path rgb;
  std::filesystem::path depth;
};
using SplitList = std::vector<SplitEntry>;

/// One "<rgb_path> <depth_path>" per line; blank lines and '#' comments skipped.
SplitList parse_split(const std::filesystem::path& path);

/// Loads every entry, resolving relative paths against root.
std::vector<DepthSample> load_split(const SplitList& split, const std::filesystem::path& root);

Rgb8Image to_rgb8(const Tensor<float>& rgb);
/// Depth in metres to 16-bit png units (round(d * 256), saturating).
Gray16Image to_depth16(const Tensor<float>& depth);
Tensor<float> from_rgb8(const Rgb8Image& image);
Tensor<float> from_depth16(const Gray16Image& image);

/// Writes <root>/rgb, <root>/depth and <root>/splits/{train,test}.txt.
void write_dataset(const std::filesystem::path& root, std::span<const DepthSample> train,
                   std::span<const DepthSample> test);

/// SplitMix64 finaliser; derives independent stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace fscn
