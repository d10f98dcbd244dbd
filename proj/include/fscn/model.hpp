#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fscn/tensor.hpp"

namespace fscn {

enum class SkipMode { kNoSkip, kSameSkip, kFullSkip };

std::string to_string(SkipMode mode);
SkipMode skip_mode_from_string(const std::string& text);

/// Raised by build_model for an unusable configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kLevels = 6;       // E0..E5
inline constexpr int kAcmLevels = 4;    // D1..D4
inline constexpr int kSkipSources = 4;  // E1..E4

struct ModelConfig {
  SkipMode skip_mode = SkipMode::kFullSkip;
  int base_channels = 16;
  std::array<int, kLevels> channel_schedule{16, 24, 32, 48, 64, 96};
  bool use_concat_weights = true;
  bool use_se = true;
  int se_reduction = 16;
  double max_depth_m = 80.0;
  int input_h = 64;
  int input_w = 128;

  /// Throws ConfigError naming the first offending field.
  void validate() const;
  /// Encoder levels routed into decoder level `level` (1..4).
  std::vector<int> skip_sources(int level) const;

  bool operator==(const ModelConfig&) const = default;
};

enum class ParamKind { kWeight, kBias, kAlpha };

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T> tensor;
  ParamKind kind;
};

template <typename T>
struct ConvParams {
  Tensor<T> weight;  // (cout, cin, k, k)
  Tensor<T> bias;    // (cout, 1, 1, 1)
  int stride = 1;
  int pad = 0;
};

template <typename T>
struct SeParams {
  ConvParams<T> reduce;  // 1x1, c -> hidden
  ConvParams<T> expand;  // 1x1, hidden -> c
};

/// Concatenation weights, optional squeeze-excitation and fuse conv for one
/// decoder level.
template <typename T>
struct AcmState {
  int level = 0;
  std::vector<int> sources;       // encoder levels feeding this decoder level
  std::vector<Tensor<T>> alphas;  // one per source; empty without concat weights
  std::optional<SeParams<T>> se;
  ConvParams<T> fuse;  // 3x3, concat width -> channels of D_level
};

template <typename T>
struct EncoderStage {
  ConvParams<T> down;    // 3x3 stride 2
  ConvParams<T> refine;  // 3x3 stride 1
};

template <typename T>
struct FscnModel {
  ModelConfig config;
  ConvParams<T> stem;
  std::array<EncoderStage<T>, 5> stages;
  std::array<AcmState<T>, kAcmLevels> acm;  // acm[j - 1] serves D_j
  /// upscale[j] produces D_j from the level above (E5 for j = 4, F_{j+1} otherwise).
  std::array<ConvParams<T>, 5> upscale;
  ConvParams<T> head;

  /// All learnable tensors in declaration order.
  std::vector<ParamRef<T>> parameters() const;
};

template <typename T>
FscnModel<T> build_model(const ModelConfig& config, std::uint64_t seed);

/// Encoder features E0..E5.
template <typename T>
std::array<Tensor<T>, kLevels> encoder_forward(Graph<T>& g, const FscnModel<T>& model,
                                                const Tensor<T>& x);

template <typename T>
Tensor<T> se_forward(Graph<T>& g, const SeParams<T>& se, const Tensor<T>& x);

/// Concatenation input D'_j: alpha-weighted skips followed by d.
template <typename T>
Tensor<T> acm_concat(Graph<T>& g, const AcmState<T>& state, std::span<const Tensor<T>> skips,
                     const Tensor<T>& d);

/// F_j = relu(conv3x3(se(D'_j))); skips must already match d spatially.
template <typename T>
Tensor<T> acm_forward(Graph<T>& g, const AcmState<T>& state, std::span<const Tensor<T>> skips,
                      const Tensor<T>& d);

/// Bilinear x2 followed by conv3x3 and relu.
template <typename T>
Tensor<T> upscale_forward(Graph<T>& g, const ConvParams<T>& conv, const Tensor<T>& x);

/// Depth in metres, shape (n,1,H,W), strictly inside (0, max_depth_m).
template <typename T>
Tensor<T> fscn_forward(Graph<T>& g, const FscnModel<T>& model, const Tensor<T>& x);

template <typename T>
std::size_t param_count(const FscnModel<T>& model);

/// Learnable scalars in the squeeze-excitation blocks.
template <typename T>
std::size_t se_param_count(const FscnModel<T>& model);

/// Copies parameter values between models of identical architecture.
template <typename To, typename From>
void copy_parameters(const FscnModel<From>& from, FscnModel<To>& to);

}  // namespace fscn
