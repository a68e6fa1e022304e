#include "transinv/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "transinv/archspec.hpp"

namespace transinv::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t out_channels, kernel, out_height, out_width;
  int stride, pad;

  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t out_pixels() const { return out_height * out_width; }
};

template <typename T>
ConvGeometry conv_geometry(const Shape& input, const ConvLayer<T>& layer) {
  if (layer.kernels.rank() != 4 || layer.kernels.dim(2) != layer.kernels.dim(3)) {
    throw ShapeError("conv kernels must be [out,in,K,K], got " + shape_string(layer.kernels.shape()));
  }
  require_shape(layer.bias.shape(), {layer.out_channels()}, "conv bias");
  if (input.size() != 4) throw ShapeError("conv input must be [N,C,H,W], got " + shape_string(input));
  if (input[1] != layer.in_channels()) {
    throw ShapeError("conv input channels (dimension 1) is " + std::to_string(input[1]) +
                     ", layer expects " + std::to_string(layer.in_channels()));
  }
  if (layer.stride <= 0 || layer.padding < 0 || layer.padding_end < 0) {
    throw ShapeError("conv stride must be positive and padding non-negative");
  }
  ConvGeometry g{};
  g.batch = input[0];
  g.channels = input[1];
  g.height = input[2];
  g.width = input[3];
  g.out_channels = layer.out_channels();
  g.kernel = layer.kernel_size();
  g.stride = layer.stride;
  g.pad = layer.padding;
  const int k = static_cast<int>(g.kernel);
  const int oh = arch::conv_output_size(static_cast<int>(g.height), k, g.stride, layer.padding, layer.padding_end);
  const int ow = arch::conv_output_size(static_cast<int>(g.width), k, g.stride, layer.padding, layer.padding_end);
  if (oh <= 0) throw ShapeError("conv input height (dimension 2) " + std::to_string(g.height) + " too small for kernel " + std::to_string(k));
  if (ow <= 0) throw ShapeError("conv input width (dimension 3) " + std::to_string(g.width) + " too small for kernel " + std::to_string(k));
  g.out_height = static_cast<std::size_t>(oh);
  g.out_width = static_cast<std::size_t>(ow);
  return g;
}

// col[(c*K + ki)*K + kj, oh*W' + ow] = padded input at (c, oh*s + ki, ow*s + kj)
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const auto H = static_cast<long>(g.height);
  const auto W = static_cast<long>(g.width);
  const std::size_t pixels = g.out_pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * pixels;
        for (std::size_t oh = 0; oh < g.out_height; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride + static_cast<long>(ki) - g.pad;
          T* dst = row + oh * g.out_width;
          if (ih < 0 || ih >= H) {
            std::fill(dst, dst + g.out_width, T{0});
            continue;
          }
          const T* src = plane + ih * W;
          for (std::size_t ow = 0; ow < g.out_width; ++ow) {
            const long iw = static_cast<long>(ow) * g.stride + static_cast<long>(kj) - g.pad;
            dst[ow] = (iw >= 0 && iw < W) ? src[iw] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* image) {
  const auto H = static_cast<long>(g.height);
  const auto W = static_cast<long>(g.width);
  const std::size_t pixels = g.out_pixels();
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * pixels;
        for (std::size_t oh = 0; oh < g.out_height; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride + static_cast<long>(ki) - g.pad;
          if (ih < 0 || ih >= H) continue;
          const T* src = row + oh * g.out_width;
          T* dst = plane + ih * W;
          for (std::size_t ow = 0; ow < g.out_width; ++ow) {
            const long iw = static_cast<long>(ow) * g.stride + static_cast<long>(kj) - g.pad;
            if (iw >= 0 && iw < W) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
ConvLayer<T> make_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                       int stride, int padding, int padding_end) {
  ConvLayer<T> layer;
  layer.kernels = Tensor<T>({out_channels, in_channels, kernel, kernel});
  layer.bias = Tensor<T>({out_channels});
  layer.stride = stride;
  layer.padding = padding;
  layer.padding_end = padding_end < 0 ? padding : padding_end;
  return layer;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvLayer<T>& layer) {
  const auto g = conv_geometry(input.shape(), layer);
  Tensor<T> output({g.batch, g.out_channels, g.out_height, g.out_width});
  std::vector<T> col(g.patch() * g.out_pixels());
  ConstMatMap<T> weights(layer.kernels.raw(), g.out_channels, g.patch());
  ConstVecMap<T> bias(layer.bias.raw(), g.out_channels);
  const std::size_t in_stride = g.channels * g.height * g.width;
  const std::size_t out_stride = g.out_channels * g.out_pixels();
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(input.raw() + n * in_stride, g, col.data());
    ConstMatMap<T> cols(col.data(), g.patch(), g.out_pixels());
    MatMap<T> out(output.raw() + n * out_stride, g.out_channels, g.out_pixels());
    out.noalias() = weights * cols;
    out.colwise() += bias;
  }
  return output;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                             const ConvLayer<T>& layer) {
  const auto g = conv_geometry(cached_input.shape(), layer);
  require_shape(grad_out.shape(), {g.batch, g.out_channels, g.out_height, g.out_width}, "conv grad_out");

  ConvGrads<T> grads{Tensor<T>(cached_input.shape()), Tensor<T>(layer.kernels.shape()),
                     Tensor<T>(layer.bias.shape())};
  std::vector<T> col(g.patch() * g.out_pixels());
  std::vector<T> grad_col(col.size());
  ConstMatMap<T> weights(layer.kernels.raw(), g.out_channels, g.patch());
  MatMap<T> grad_weights(grads.kernels.raw(), g.out_channels, g.patch());
  const std::size_t in_stride = g.channels * g.height * g.width;
  const std::size_t out_stride = g.out_channels * g.out_pixels();
  for (std::size_t n = 0; n < g.batch; ++n) {
    ConstMatMap<T> gout(grad_out.raw() + n * out_stride, g.out_channels, g.out_pixels());
    im2col(cached_input.raw() + n * in_stride, g, col.data());
    ConstMatMap<T> cols(col.data(), g.patch(), g.out_pixels());
    grad_weights.noalias() += gout * cols.transpose();
    // Fixed summation order, independent of buffer alignment.
    const T* row = grad_out.raw() + n * out_stride;
    for (std::size_t c = 0; c < g.out_channels; ++c, row += g.out_pixels()) {
      T s = 0;
      for (std::size_t p = 0; p < g.out_pixels(); ++p) s += row[p];
      grads.bias.raw()[c] += s;
    }
    MatMap<T> gcols(grad_col.data(), g.patch(), g.out_pixels());
    gcols.noalias() = weights.transpose() * gout;
    col2im_add(grad_col.data(), g, grads.input.raw() + n * in_stride);
  }
  return grads;
}

template <typename T>
PoolResult<T> maxpool2d_forward(const Tensor<T>& input, const MaxPoolLayer& layer) {
  if (input.rank() != 4) throw ShapeError("max-pool input must be [N,C,H,W], got " + shape_string(input.shape()));
  if (layer.kernel <= 0 || layer.stride <= 0) throw ShapeError("max-pool kernel and stride must be positive");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int oh = arch::pool_output_size(static_cast<int>(H), layer.kernel, layer.stride);
  const int ow = arch::pool_output_size(static_cast<int>(W), layer.kernel, layer.stride);
  if (oh <= 0) throw ShapeError("max-pool input height (dimension 2) " + std::to_string(H) + " smaller than the window");
  if (ow <= 0) throw ShapeError("max-pool input width (dimension 3) " + std::to_string(W) + " smaller than the window");
  const std::size_t Ho = static_cast<std::size_t>(oh), Wo = static_cast<std::size_t>(ow);
  const auto k = static_cast<std::size_t>(layer.kernel);
  const auto s = static_cast<std::size_t>(layer.stride);

  PoolResult<T> result{Tensor<T>({N, C, Ho, Wo}), PoolIndices{input.shape(), {N, C, Ho, Wo}, {}}};
  result.indices.winners.resize(result.output.size());
  std::size_t out = 0;
  for (std::size_t plane = 0; plane < N * C; ++plane) {
    const std::size_t base = plane * H * W;
    for (std::size_t i = 0; i < Ho; ++i) {
      for (std::size_t j = 0; j < Wo; ++j, ++out) {
        std::size_t best = base + (i * s) * W + j * s;
        for (std::size_t di = 0; di < k; ++di) {
          for (std::size_t dj = 0; dj < k; ++dj) {
            const std::size_t idx = base + (i * s + di) * W + (j * s + dj);
            if (input[idx] > input[best]) best = idx;
          }
        }
        result.output[out] = input[best];
        result.indices.winners[out] = best;
      }
    }
  }
  return result;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& grad_out, const PoolIndices& indices,
                             const Shape& input_shape) {
  require_shape(input_shape, indices.input_shape, "max-pool indices input shape");
  require_shape(grad_out.shape(), indices.output_shape, "max-pool grad_out");
  if (indices.winners.size() != grad_out.size()) {
    throw ShapeError("max-pool indices hold " + std::to_string(indices.winners.size()) +
                     " entries for " + std::to_string(grad_out.size()) + " outputs");
  }
  Tensor<T> grad_input(input_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const auto w = indices.winners[i];
    if (w >= grad_input.size()) throw ShapeError("max-pool index " + std::to_string(w) + " out of range");
    grad_input[w] += grad_out[i];
  }
  return grad_input;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out = input;
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input) {
  require_shape(grad_out.shape(), cached_input.shape(), "relu grad_out");
  Tensor<T> grad = grad_out;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(cached_input[i] > T{0})) grad[i] = T{0};
  }
  return grad;
}

template <typename T>
DenseLayer<T> make_dense(std::size_t in_features, std::size_t out_features) {
  return DenseLayer<T>{Tensor<T>({out_features, in_features}), Tensor<T>({out_features})};
}

template <typename T>
static void check_dense(const Tensor<T>& input, const DenseLayer<T>& layer) {
  if (layer.weights.rank() != 2) throw ShapeError("dense weights must be [out,in], got " + shape_string(layer.weights.shape()));
  require_shape(layer.bias.shape(), {layer.out_features()}, "dense bias");
  if (input.rank() != 2) throw ShapeError("dense input must be [N,in], got " + shape_string(input.shape()));
  if (input.dim(1) != layer.in_features()) {
    throw ShapeError("dense input features (dimension 1) is " + std::to_string(input.dim(1)) +
                     ", layer expects " + std::to_string(layer.in_features()));
  }
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const DenseLayer<T>& layer) {
  check_dense(input, layer);
  const std::size_t N = input.dim(0);
  Tensor<T> output({N, layer.out_features()});
  ConstMatMap<T> x(input.raw(), N, layer.in_features());
  ConstMatMap<T> w(layer.weights.raw(), layer.out_features(), layer.in_features());
  MatMap<T> y(output.raw(), N, layer.out_features());
  y.noalias() = x * w.transpose();
  y.rowwise() += ConstVecMap<T>(layer.bias.raw(), layer.out_features()).transpose();
  return output;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                             const DenseLayer<T>& layer) {
  check_dense(cached_input, layer);
  const std::size_t N = cached_input.dim(0);
  require_shape(grad_out.shape(), {N, layer.out_features()}, "dense grad_out");
  DenseGrads<T> grads{Tensor<T>(cached_input.shape()), Tensor<T>(layer.weights.shape()),
                      Tensor<T>(layer.bias.shape())};
  ConstMatMap<T> gy(grad_out.raw(), N, layer.out_features());
  ConstMatMap<T> x(cached_input.raw(), N, layer.in_features());
  ConstMatMap<T> w(layer.weights.raw(), layer.out_features(), layer.in_features());
  MatMap<T>(grads.input.raw(), N, layer.in_features()).noalias() = gy * w;
  MatMap<T>(grads.weights.raw(), layer.out_features(), layer.in_features()).noalias() = gy.transpose() * x;
  T* grad_bias = grads.bias.raw();
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = grad_out.raw() + n * layer.out_features();
    for (std::size_t o = 0; o < layer.out_features(); ++o) grad_bias[o] += row[o];
  }
  return grads;
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

template <typename T>
std::vector<double> softmax(std::span<const T> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double top = static_cast<double>(*std::max_element(logits.begin(), logits.end()));
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) sum += p[c] = std::exp(static_cast<double>(logits[c]) - top);
  for (auto& v : p) v /= sum;
  return p;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels,
                                    std::size_t normalizer) {
  if (logits.rank() != 2) throw ShapeError("logits must be [N,classes], got " + shape_string(logits.shape()));
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  if (labels.size() != N) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for a batch of " + std::to_string(N));
  }
  const double norm = normalizer == 0 ? static_cast<double>(N) : static_cast<double>(normalizer);
  LossResult<T> result{0.0, Tensor<T>(logits.shape()), 0};
  std::vector<double> probs(C);
  double total = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= C) {
      throw Error("label " + std::to_string(label) + " out of range [0," + std::to_string(C) + ")");
    }
    const auto row = logits.data().subspan(n * C, C);
    const double top = static_cast<double>(*std::max_element(row.begin(), row.end()));
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      probs[c] = std::exp(static_cast<double>(row[c]) - top);
      sum += probs[c];
    }
    total += -(static_cast<double>(row[static_cast<std::size_t>(label)]) - top - std::log(sum));
    for (std::size_t c = 0; c < C; ++c) {
      const double onehot = c == static_cast<std::size_t>(label) ? 1.0 : 0.0;
      result.grad[n * C + c] = static_cast<T>((probs[c] / sum - onehot) / norm);
    }
    if (argmax(row) == static_cast<std::size_t>(label)) ++result.correct;
  }
  result.loss = N == 0 ? 0.0 : total / static_cast<double>(N);
  return result;
}

template <typename T>
Tensor<T> he_init(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
  if (fan_in == 0) throw Error("he_init: fan_in must be positive");
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<T> out(shape);
  for (auto& v : out.data()) v = static_cast<T>(dist(rng));
  return out;
}

#define TRANSINV_INSTANTIATE(T)                                                                       \
  template ConvLayer<T> make_conv<T>(std::size_t, std::size_t, std::size_t, int, int, int);          \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const ConvLayer<T>&);                       \
  template ConvGrads<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const ConvLayer<T>&); \
  template PoolResult<T> maxpool2d_forward<T>(const Tensor<T>&, const MaxPoolLayer&);               \
  template Tensor<T> maxpool2d_backward<T>(const Tensor<T>&, const PoolIndices&, const Shape&);     \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                      \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template DenseLayer<T> make_dense<T>(std::size_t, std::size_t);                                    \
  template Tensor<T> dense_forward<T>(const Tensor<T>&, const DenseLayer<T>&);                       \
  template DenseGrads<T> dense_backward<T>(const Tensor<T>&, const Tensor<T>&, const DenseLayer<T>&); \
  template LossResult<T> softmax_cross_entropy<T>(const Tensor<T>&, std::span<const int>, std::size_t); \
  template Tensor<T> he_init<T>(const Shape&, std::size_t, std::mt19937_64&);                        \
  template std::size_t argmax<T>(std::span<const T>);                                              \
  template std::vector<double> softmax<T>(std::span<const T>);

TRANSINV_INSTANTIATE(float)
TRANSINV_INSTANTIATE(double)

#undef TRANSINV_INSTANTIATE

}  // namespace transinv::nn
