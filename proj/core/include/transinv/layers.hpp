#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "transinv/tensor.hpp"

namespace transinv::nn {

// Square-kernel 2-D convolution (cross-correlation) with zero padding.
template <typename T>
struct ConvLayer {
  Tensor<T> kernels;  // [out_channels, in_channels, K, K]
  Tensor<T> bias;     // [out_channels]
  int stride = 1;
  int padding = 0;      // leading (top/left)
  int padding_end = 0;  // trailing (bottom/right)

  std::size_t out_channels() const { return kernels.dim(0); }
  std::size_t in_channels() const { return kernels.dim(1); }
  std::size_t kernel_size() const { return kernels.dim(2); }
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernels;
  Tensor<T> bias;
};

// Zero-initialised layer with the given geometry.
template <typename T>
ConvLayer<T> make_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                       int stride = 1, int padding = 0, int padding_end = -1);

// [N,C,H,W] -> [N,outC,H',W'], H' = floor((H - K + pad_begin + pad_end)/stride) + 1.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvLayer<T>& layer);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                             const ConvLayer<T>& layer);

struct MaxPoolLayer {
  int kernel = 2;
  int stride = 2;
};

// Flat index into the input tensor of the element that won each window.
struct PoolIndices {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::size_t> winners;
};

template <typename T>
struct PoolResult {
  Tensor<T> output;
  PoolIndices indices;
};

// Ties go to the first element in row-major window order. Output size uses
// floor division, so a trailing odd row/column is never read.
template <typename T>
PoolResult<T> maxpool2d_forward(const Tensor<T>& input, const MaxPoolLayer& layer = {});

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& grad_out, const PoolIndices& indices,
                             const Shape& input_shape);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input);

template <typename T>
struct DenseLayer {
  Tensor<T> weights;  // [out_features, in_features]
  Tensor<T> bias;     // [out_features]

  std::size_t out_features() const { return weights.dim(0); }
  std::size_t in_features() const { return weights.dim(1); }
};

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
DenseLayer<T> make_dense(std::size_t in_features, std::size_t out_features);

// [N,in] -> [N,out]
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const DenseLayer<T>& layer);

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                             const DenseLayer<T>& layer);

template <typename T>
struct LossResult {
  double loss = 0.0;     // mean over the batch
  Tensor<T> grad;        // d(sum of losses)/d logits / normalizer
  std::size_t correct = 0;  // argmax(logits) == label, lowest index on ties
};

// Softmax cross-entropy with max subtraction. The gradient is
// (softmax - onehot) / normalizer; normalizer 0 means the batch size.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels,
                                    std::size_t normalizer = 0);

// Zero-mean Gaussian with variance 2 / fan_in.
template <typename T>
Tensor<T> he_init(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng);

// Index of the largest element; ties resolve to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> values);

// Probabilities of one logit row, computed in double with the max shifted out.
template <typename T>
std::vector<double> softmax(std::span<const T> logits);

}  // namespace transinv::nn
