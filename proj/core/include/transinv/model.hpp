#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "transinv/archspec.hpp"
#include "transinv/layers.hpp"

namespace transinv::nn {

// Probe points. conv_final is the Max-Pool3 output flattened channel-major;
// fc_out is the pre-softmax output of the last dense layer and fc_softmax its
// softmax.
enum class Tap { conv_final, fc_out, fc_softmax };

std::string_view tap_name(Tap tap);
Tap parse_tap(std::string_view name);

template <typename T>
struct ForwardCache {
  std::array<Tensor<T>, 3> conv_input;
  std::array<Tensor<T>, 3> conv_output;  // pre-activation
  std::array<PoolIndices, 3> pool;
  std::array<Shape, 3> pool_input_shape;
  Tensor<T> flat;           // [N, flattened_features]
  Tensor<T> hidden_output;  // pre-activation
  Tensor<T> hidden_activated;
  Tensor<T> logits;
};

template <typename T>
struct TapOutputs {
  Tensor<T> conv_final;  // [N, D]
  Tensor<T> logits;      // [N, output_units]
};

// conv -> ReLU -> max-pool, three times, then dense -> ReLU -> dense.
template <typename T>
class Model {
 public:
  // Zero parameters.
  explicit Model(arch::ArchSpec spec);

  // He-normal weights (variance 2 / fan_in), zero biases, drawn from one
  // mt19937_64 stream in parameter declaration order.
  static Model he_initialized(arch::ArchSpec spec, std::uint64_t seed);

  const arch::ArchSpec& spec() const noexcept { return spec_; }
  std::size_t tap_dimension(Tap tap) const;

  // Parameter tensors in declaration order: conv{1,2,3}.{kernels,bias},
  // hidden.{weights,bias}, output.{weights,bias}.
  std::vector<Tensor<T>*> parameters();
  std::vector<const Tensor<T>*> parameters() const;
  std::size_t parameter_count() const;

  const ConvLayer<T>& conv(std::size_t i) const { return convs_.at(i); }
  ConvLayer<T>& conv(std::size_t i) { return convs_.at(i); }
  const DenseLayer<T>& hidden() const { return hidden_; }
  DenseLayer<T>& hidden() { return hidden_; }
  const DenseLayer<T>& output() const { return output_; }
  DenseLayer<T>& output() { return output_; }

  // Logits for an [N,C,H,W] batch. Fills `cache` for backward() when given.
  Tensor<T> forward(const Tensor<T>& batch, ForwardCache<T>* cache = nullptr) const;

  // Both probe vectors from a single pass.
  TapOutputs<T> forward_taps(const Tensor<T>& batch) const;

  // (tap vectors [N, D], logits [N, output_units]) for conv_final or fc_out.
  TapOutputs<T> forward_with_tap(const Tensor<T>& batch, Tap tap) const;

  // Gradients for every parameter, in parameters() order.
  std::vector<Tensor<T>> backward(const ForwardCache<T>& cache, const Tensor<T>& grad_logits) const;

  template <typename U>
  Model<U> cast() const {
    Model<U> out(spec_);
    auto dst = out.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
    return out;
  }

  friend bool operator==(const Model& a, const Model& b) {
    if (!(a.spec_ == b.spec_)) return false;
    auto pa = a.parameters();
    auto pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      if (!(*pa[i] == *pb[i])) return false;
    }
    return true;
  }

 private:
  void check_input(const Tensor<T>& batch) const;

  arch::ArchSpec spec_;
  std::array<ConvLayer<T>, 3> convs_;
  DenseLayer<T> hidden_;
  DenseLayer<T> output_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace transinv::nn
