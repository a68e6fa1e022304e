#include "transinv/model.hpp"

#include <random>

namespace transinv::nn {

std::string_view tap_name(Tap tap) {
  switch (tap) {
    case Tap::conv_final: return "conv_final";
    case Tap::fc_out: return "fc_out";
    case Tap::fc_softmax: return "fc_softmax";
  }
  return "?";
}

Tap parse_tap(std::string_view name) {
  if (name == "conv_final") return Tap::conv_final;
  if (name == "fc_out") return Tap::fc_out;
  if (name == "fc_softmax") return Tap::fc_softmax;
  throw Error("unknown tap '" + std::string(name) + "' (expected conv_final, fc_out or fc_softmax)");
}

template <typename T>
Model<T>::Model(arch::ArchSpec spec) : spec_(std::move(spec)) {
  arch::validate(spec_);
  auto in_channels = static_cast<std::size_t>(spec_.input.channels);
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const auto& b = spec_.conv_blocks[i];
    convs_[i] = make_conv<T>(in_channels, static_cast<std::size_t>(b.channels),
                             static_cast<std::size_t>(b.kernel), b.stride, b.padding, b.padding_end);
    in_channels = static_cast<std::size_t>(b.channels);
  }
  const auto features = static_cast<std::size_t>(arch::flattened_features(spec_));
  hidden_ = make_dense<T>(features, static_cast<std::size_t>(spec_.hidden_units));
  output_ = make_dense<T>(static_cast<std::size_t>(spec_.hidden_units),
                          static_cast<std::size_t>(spec_.output_units));
}

template <typename T>
Model<T> Model<T>::he_initialized(arch::ArchSpec spec, std::uint64_t seed) {
  Model model(std::move(spec));
  std::mt19937_64 rng(seed);
  for (auto& conv : model.convs_) {
    const auto fan_in = conv.in_channels() * conv.kernel_size() * conv.kernel_size();
    conv.kernels = he_init<T>(conv.kernels.shape(), fan_in, rng);
  }
  model.hidden_.weights = he_init<T>(model.hidden_.weights.shape(), model.hidden_.in_features(), rng);
  model.output_.weights = he_init<T>(model.output_.weights.shape(), model.output_.in_features(), rng);
  return model;
}

template <typename T>
std::size_t Model<T>::tap_dimension(Tap tap) const {
  return tap == Tap::conv_final ? hidden_.in_features() : output_.out_features();
}

template <typename T>
std::vector<Tensor<T>*> Model<T>::parameters() {
  std::vector<Tensor<T>*> out;
  for (auto& conv : convs_) {
    out.push_back(&conv.kernels);
    out.push_back(&conv.bias);
  }
  for (auto* dense : {&hidden_, &output_}) {
    out.push_back(&dense->weights);
    out.push_back(&dense->bias);
  }
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> Model<T>::parameters() const {
  auto mutable_view = const_cast<Model*>(this)->parameters();
  return {mutable_view.begin(), mutable_view.end()};
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

template <typename T>
void Model<T>::check_input(const Tensor<T>& batch) const {
  if (batch.rank() != 4) {
    throw ShapeError("model input must be [N,C,H,W], got " + shape_string(batch.shape()));
  }
  require_shape({batch.dim(1), batch.dim(2), batch.dim(3)},
                {static_cast<std::size_t>(spec_.input.channels), static_cast<std::size_t>(spec_.input.height),
                 static_cast<std::size_t>(spec_.input.width)},
                "model input (per-sample)");
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& batch, ForwardCache<T>* cache) const {
  check_input(batch);
  const std::size_t N = batch.dim(0);
  Tensor<T> x = batch;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    Tensor<T> pre = conv2d_forward(x, convs_[i]);
    Tensor<T> activated = relu(pre);
    auto pooled = maxpool2d_forward(activated);
    if (cache) {
      cache->conv_input[i] = std::move(x);
      cache->conv_output[i] = std::move(pre);
      cache->pool_input_shape[i] = activated.shape();
      cache->pool[i] = std::move(pooled.indices);
    }
    x = std::move(pooled.output);
  }
  Tensor<T> flat = x.reshaped({N, hidden_.in_features()});
  Tensor<T> hidden_pre = dense_forward(flat, hidden_);
  Tensor<T> hidden_act = relu(hidden_pre);
  Tensor<T> logits = dense_forward(hidden_act, output_);
  if (cache) {
    cache->flat = std::move(flat);
    cache->hidden_output = std::move(hidden_pre);
    cache->hidden_activated = std::move(hidden_act);
    cache->logits = logits;
  }
  return logits;
}

template <typename T>
TapOutputs<T> Model<T>::forward_taps(const Tensor<T>& batch) const {
  check_input(batch);
  const std::size_t N = batch.dim(0);
  Tensor<T> x = batch;
  for (const auto& conv : convs_) x = maxpool2d_forward(relu(conv2d_forward(x, conv))).output;
  TapOutputs<T> out;
  out.conv_final = x.reshaped({N, hidden_.in_features()});
  out.logits = dense_forward(relu(dense_forward(out.conv_final, hidden_)), output_);
  return out;
}

template <typename T>
TapOutputs<T> Model<T>::forward_with_tap(const Tensor<T>& batch, Tap tap) const {
  if (tap != Tap::conv_final && tap != Tap::fc_out) {
    throw Error("forward_with_tap: " + std::string(tap_name(tap)) + " is derived from the logits, not a stored tap");
  }
  return forward_taps(batch);
}

template <typename T>
std::vector<Tensor<T>> Model<T>::backward(const ForwardCache<T>& cache, const Tensor<T>& grad_logits) const {
  require_shape(grad_logits.shape(), cache.logits.shape(), "grad_logits");
  std::vector<Tensor<T>> grads(10);

  auto out_grads = dense_backward(grad_logits, cache.hidden_activated, output_);
  grads[8] = std::move(out_grads.weights);
  grads[9] = std::move(out_grads.bias);
  auto hidden_grads = dense_backward(relu_backward(out_grads.input, cache.hidden_output), cache.flat, hidden_);
  grads[6] = std::move(hidden_grads.weights);
  grads[7] = std::move(hidden_grads.bias);

  const auto& last_pool = cache.pool[2].output_shape;
  Tensor<T> g = hidden_grads.input.reshaped(last_pool);
  for (std::size_t i = convs_.size(); i-- > 0;) {
    g = maxpool2d_backward(g, cache.pool[i], cache.pool_input_shape[i]);
    g = relu_backward(g, cache.conv_output[i]);
    auto conv_grads = conv2d_backward(g, cache.conv_input[i], convs_[i]);
    grads[2 * i] = std::move(conv_grads.kernels);
    grads[2 * i + 1] = std::move(conv_grads.bias);
    g = std::move(conv_grads.input);
  }
  return grads;
}

template class Model<float>;
template class Model<double>;

}  // namespace transinv::nn
