#pragma once

#include <span>
#include <vector>

#include "fscn/tensor.hpp"

namespace fscn {

enum class Activation { kRelu, kSigmoid };

/// 2-D cross-correlation with zero padding.
///
/// weight is (cout, cin, k, k) with odd k; bias is (cout,1,1,1) or
/// undefined. Output extent is floor((h + 2*pad - k) / stride) + 1.
template <typename T>
Tensor<T> conv2d(Graph<T>& g, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int pad);

template <typename T>
Tensor<T> activation(Graph<T>& g, const Tensor<T>& input, Activation kind);

template <typename T>
Tensor<T> relu(Graph<T>& g, const Tensor<T>& input) {
  return activation(g, input, Activation::kRelu);
}

template <typename T>
Tensor<T> sigmoid(Graph<T>& g, const Tensor<T>& input) {
  return activation(g, input, Activation::kSigmoid);
}

/// Stacks parts along the channel axis in argument order.
template <typename T>
Tensor<T> concat_channels(Graph<T>& g, std::span<const Tensor<T>> parts);

/// Channels [begin, begin + count) of input.
template <typename T>
Tensor<T> slice_channels(Graph<T>& g, const Tensor<T>& input, int begin, int count);

/// Spatial resize. Growing uses bilinear interpolation with half-pixel
/// centres and edge clamping; shrinking requires integer factors and
/// averages each factor window. Mixed grow/shrink is rejected.
template <typename T>
Tensor<T> resample(Graph<T>& g, const Tensor<T>& input, int target_h, int target_w);

template <typename T>
Tensor<T> global_avg_pool(Graph<T>& g, const Tensor<T>& input);

/// out[n,c,y,x] = input[n,c,y,x] * gates[n,c].
template <typename T>
Tensor<T> scale_channels(Graph<T>& g, const Tensor<T>& input, const Tensor<T>& gates);

/// Multiplies every element by a learnable scalar tensor of shape (1,1,1,1).
template <typename T>
Tensor<T> scalar_mul(Graph<T>& g, const Tensor<T>& input, const Tensor<T>& a);

/// Multiplies every element by a fixed constant.
template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& input, T factor);

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product of equally shaped tensors.
template <typename T>
Tensor<T> mul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

/// Sum of all elements as a (1,1,1,1) tensor.
template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& input);

}  // namespace fscn
