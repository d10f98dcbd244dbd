#include "fscn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fscn/ops.hpp"

namespace fscn {

std::string to_string(SkipMode mode) {
  switch (mode) {
    case SkipMode::kNoSkip:
      return "no-skip";
    case SkipMode::kSameSkip:
      return "same-skip";
    case SkipMode::kFullSkip:
      return "full-skip";
  }
  return "unknown";
}

SkipMode skip_mode_from_string(const std::string& text) {
  if (text == "no-skip") return SkipMode::kNoSkip;
  if (text == "same-skip") return SkipMode::kSameSkip;
  if (text == "full-skip") return SkipMode::kFullSkip;
  throw ConfigError("skip_mode: unknown value '" + text +
                    "' (expected no-skip, same-skip or full-skip)");
}

void ModelConfig::validate() const {
  for (int i = 0; i < kLevels; ++i) {
    if (channel_schedule[i] <= 0) {
      throw ConfigError("channel_schedule[" + std::to_string(i) + "] must be positive");
    }
  }
  if (base_channels != channel_schedule[0]) {
    throw ConfigError("base_channels must equal channel_schedule[0]");
  }
  if (se_reduction < 1) throw ConfigError("se_reduction must be >= 1");
  if (!(max_depth_m > 0.0) || !std::isfinite(max_depth_m)) {
    throw ConfigError("max_depth_m must be a positive finite number");
  }
  if (input_h <= 0 || input_h % 32 != 0) throw ConfigError("input_h must be a positive multiple of 32");
  if (input_w <= 0 || input_w % 32 != 0) throw ConfigError("input_w must be a positive multiple of 32");
}

std::vector<int> ModelConfig::skip_sources(int level) const {
  switch (skip_mode) {
    case SkipMode::kNoSkip:
      return {};
    case SkipMode::kSameSkip:
      return {level};
    case SkipMode::kFullSkip:
      return {1, 2, 3, 4};
  }
  return {};
}

template <typename T>
std::vector<ParamRef<T>> FscnModel<T>::parameters() const {
  std::vector<ParamRef<T>> out;
  auto conv = [&out](const std::string& name, const ConvParams<T>& c) {
    out.push_back({name + ".weight", c.weight, ParamKind::kWeight});
    out.push_back({name + ".bias", c.bias, ParamKind::kBias});
  };
  conv("stem", stem);
  for (int s = 0; s < 5; ++s) {
    const std::string prefix = "encoder" + std::to_string(s + 1);
    conv(prefix + ".down", stages[s].down);
    conv(prefix + ".refine", stages[s].refine);
  }
  for (int j = kAcmLevels; j >= 1; --j) {
    const AcmState<T>& a = acm[j - 1];
    const std::string prefix = "acm" + std::to_string(j);
    for (std::size_t k = 0; k < a.alphas.size(); ++k) {
      out.push_back({prefix + ".alpha" + std::to_string(a.sources[k]), a.alphas[k], ParamKind::kAlpha});
    }
    if (a.se) {
      conv(prefix + ".se.reduce", a.se->reduce);
      conv(prefix + ".se.expand", a.se->expand);
    }
    conv(prefix + ".fuse", a.fuse);
  }
  for (int j = 4; j >= 0; --j) conv("upscale" + std::to_string(j), upscale[j]);
  conv("head", head);
  return out;
}

namespace {

template <typename T>
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  // Xavier-uniform weight, zero bias.
  ConvParams<T> conv(int cin, int cout, int k, int stride) {
    ConvParams<T> c;
    c.weight = Tensor<T>(Shape{cout, cin, k, k}, true);
    c.bias = Tensor<T>(Shape{cout, 1, 1, 1}, true);
    c.stride = stride;
    c.pad = k / 2;
    const double fan_in = static_cast<double>(cin) * k * k;
    const double fan_out = static_cast<double>(cout) * k * k;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (T& v : c.weight.data()) v = static_cast<T>(dist(rng_));
    return c;
  }

  Tensor<T> alpha() {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    return Tensor<T>::scalar(static_cast<T>(dist(rng_)), true);
  }

 private:
  std::mt19937_64 rng_;
};

int se_hidden(int channels, int reduction) { return std::max(4, channels / reduction); }

}  // namespace

template <typename T>
FscnModel<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const auto& ch = config.channel_schedule;
  Initializer<T> init(seed);
  FscnModel<T> m;
  m.config = config;
  m.stem = init.conv(3, ch[0], 3, 1);
  for (int s = 0; s < 5; ++s) {
    m.stages[s].down = init.conv(ch[s], ch[s + 1], 3, 2);
    m.stages[s].refine = init.conv(ch[s + 1], ch[s + 1], 3, 1);
  }
  for (int j = kAcmLevels; j >= 1; --j) {
    AcmState<T>& a = m.acm[j - 1];
    a.level = j;
    a.sources = config.skip_sources(j);
    int width = ch[j];
    for (int src : a.sources) {
      width += ch[src];
      if (config.use_concat_weights) a.alphas.push_back(init.alpha());
    }
    if (config.use_se) {
      const int hidden = se_hidden(width, config.se_reduction);
      a.se = SeParams<T>{init.conv(width, hidden, 1, 1), init.conv(hidden, width, 1, 1)};
    }
    a.fuse = init.conv(width, ch[j], 3, 1);
  }
  m.upscale[4] = init.conv(ch[5], ch[4], 3, 1);
  for (int j = 3; j >= 0; --j) m.upscale[j] = init.conv(ch[j + 1], ch[j], 3, 1);
  m.head = init.conv(ch[0], 1, 1, 1);
  return m;
}

template <typename T>
std::array<Tensor<T>, kLevels> encoder_forward(Graph<T>& g, const FscnModel<T>& model,
                                                const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.c != 3 || s.h != model.config.input_h || s.w != model.config.input_w) {
    throw ShapeError("model input " + s.str() + " does not match configured (n,3," +
                     std::to_string(model.config.input_h) + "," +
                     std::to_string(model.config.input_w) + ")");
  }
  auto apply = [&g](const ConvParams<T>& c, const Tensor<T>& in) {
    return relu(g, conv2d(g, in, c.weight, c.bias, c.stride, c.pad));
  };
  std::array<Tensor<T>, kLevels> features;
  features[0] = apply(model.stem, x);
  for (int k = 1; k < kLevels; ++k) {
    const auto& stage = model.stages[k - 1];
    features[k] = apply(stage.refine, apply(stage.down, features[k - 1]));
  }
  return features;
}

template <typename T>
Tensor<T> se_forward(Graph<T>& g, const SeParams<T>& se, const Tensor<T>& x) {
  Tensor<T> squeezed = global_avg_pool(g, x);
  Tensor<T> hidden = relu(g, conv2d(g, squeezed, se.reduce.weight, se.reduce.bias, 1, 0));
  Tensor<T> gates = sigmoid(g, conv2d(g, hidden, se.expand.weight, se.expand.bias, 1, 0));
  return scale_channels(g, x, gates);
}

template <typename T>
Tensor<T> acm_concat(Graph<T>& g, const AcmState<T>& state, std::span<const Tensor<T>> skips,
                     const Tensor<T>& d) {
  if (skips.size() != state.sources.size()) {
    throw ShapeError("acm: expected " + std::to_string(state.sources.size()) + " skips, got " +
                     std::to_string(skips.size()));
  }
  const Shape& ds = d.shape();
  std::vector<Tensor<T>> parts;
  parts.reserve(skips.size() + 1);
  for (std::size_t k = 0; k < skips.size(); ++k) {
    const Shape& ss = skips[k].shape();
    if (ss.n != ds.n || ss.h != ds.h || ss.w != ds.w) {
      throw ShapeError("acm: skip " + ss.str() + " does not match decoder feature " + ds.str());
    }
    parts.push_back(state.alphas.empty() ? skips[k] : scalar_mul(g, skips[k], state.alphas[k]));
  }
  parts.push_back(d);
  return concat_channels<T>(g, parts);
}

template <typename T>
Tensor<T> acm_forward(Graph<T>& g, const AcmState<T>& state, std::span<const Tensor<T>> skips,
                      const Tensor<T>& d) {
  Tensor<T> fused = acm_concat(g, state, skips, d);
  if (state.se) fused = se_forward(g, *state.se, fused);
  return relu(g, conv2d(g, fused, state.fuse.weight, state.fuse.bias, 1, state.fuse.pad));
}

template <typename T>
Tensor<T> upscale_forward(Graph<T>& g, const ConvParams<T>& conv, const Tensor<T>& x) {
  const Shape& s = x.shape();
  Tensor<T> up = resample(g, x, 2 * s.h, 2 * s.w);
  return relu(g, conv2d(g, up, conv.weight, conv.bias, 1, conv.pad));
}

template <typename T>
Tensor<T> fscn_forward(Graph<T>& g, const FscnModel<T>& model, const Tensor<T>& x) {
  const auto features = encoder_forward(g, model, x);
  Tensor<T> d = upscale_forward(g, model.upscale[4], features[5]);
  for (int j = kAcmLevels; j >= 1; --j) {
    const AcmState<T>& state = model.acm[j - 1];
    std::vector<Tensor<T>> skips;
    for (int src : state.sources) {
      skips.push_back(resample(g, features[src], d.shape().h, d.shape().w));
    }
    Tensor<T> f = acm_forward<T>(g, state, skips, d);
    d = upscale_forward(g, model.upscale[j - 1], f);
  }
  Tensor<T> logits = conv2d(g, d, model.head.weight, model.head.bias, 1, 0);
  return scale(g, sigmoid(g, logits), static_cast<T>(model.config.max_depth_m));
}

template <typename T>
std::size_t param_count(const FscnModel<T>& model) {
  std::size_t total = 0;
  for (const auto& p : model.parameters()) total += p.tensor.numel();
  return total;
}

template <typename T>
std::size_t se_param_count(const FscnModel<T>& model) {
  std::size_t total = 0;
  for (const auto& a : model.acm) {
    if (!a.se) continue;
    for (const auto* c : {&a.se->reduce, &a.se->expand}) {
      total += c->weight.numel() + c->bias.numel();
    }
  }
  return total;
}

template <typename To, typename From>
void copy_parameters(const FscnModel<From>& from, FscnModel<To>& to) {
  auto src = from.parameters();
  auto dst = to.parameters();
  if (src.size() != dst.size()) throw ShapeError("copy_parameters: architecture mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].tensor.shape() != dst[i].tensor.shape()) {
      throw ShapeError("copy_parameters: shape mismatch at " + src[i].name);
    }
    auto in = src[i].tensor.data();
    auto out = dst[i].tensor.data();
    std::transform(in.begin(), in.end(), out.begin(), [](From v) { return static_cast<To>(v); });
  }
}

#define FSCN_INSTANTIATE_MODEL(T)                                                                 \
  template struct FscnModel<T>;                                                                   \
  template FscnModel<T> build_model<T>(const ModelConfig&, std::uint64_t);                        \
  template std::array<Tensor<T>, kLevels> encoder_forward(Graph<T>&, const FscnModel<T>&,         \
                                                          const Tensor<T>&);                      \
  template Tensor<T> se_forward(Graph<T>&, const SeParams<T>&, const Tensor<T>&);                 \
  template Tensor<T> acm_concat(Graph<T>&, const AcmState<T>&, std::span<const Tensor<T>>,        \
                                const Tensor<T>&);                                                \
  template Tensor<T> acm_forward(Graph<T>&, const AcmState<T>&, std::span<const Tensor<T>>,       \
                                 const Tensor<T>&);                                               \
  template Tensor<T> upscale_forward(Graph<T>&, const ConvParams<T>&, const Tensor<T>&);          \
  template Tensor<T> fscn_forward(Graph<T>&, const FscnModel<T>&, const Tensor<T>&);              \
  template std::size_t param_count(const FscnModel<T>&);                                          \
  template std::size_t se_param_count(const FscnModel<T>&);

FSCN_INSTANTIATE_MODEL(float)
FSCN_INSTANTIATE_MODEL(double)

template void copy_parameters<float, double>(const FscnModel<double>&, FscnModel<float>&);
template void copy_parameters<double, float>(const FscnModel<float>&, FscnModel<double>&);
template void copy_parameters<float, float>(const FscnModel<float>&, FscnModel<float>&);
template void copy_parameters<double, double>(const FscnModel<double>&, FscnModel<double>&);

}  // namespace fscn
