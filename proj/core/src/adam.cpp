#include "transinv/adam.hpp"

#include <cmath>

namespace transinv::nn {

template <typename T>
AdamState<T> make_adam_state(std::span<const Tensor<T>* const> params) {
  AdamState<T> state;
  for (const auto* p : params) {
    state.first_moment.emplace_back(p->shape());
    state.second_moment.emplace_back(p->shape());
  }
  return state;
}

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads,
               AdamState<T>& state, double learning_rate) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty() && state.second_moment.empty()) {
    std::vector<const Tensor<T>*> view(params.begin(), params.end());
    auto fresh = make_adam_state<T>(view);
    state.first_moment = std::move(fresh.first_moment);
    state.second_moment = std::move(fresh.second_moment);
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam: state holds moments for a different parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto what = "adam parameter " + std::to_string(i);
    require_shape(grads[i]->shape(), params[i]->shape(), what + " gradient");
    require_shape(state.first_moment[i].shape(), params[i]->shape(), what + " first moment");
    require_shape(state.second_moment[i].shape(), params[i]->shape(), what + " second moment");
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T one = T{1};
  const T step = static_cast<T>(learning_rate / correction1);
  const T inv_c2 = static_cast<T>(1.0 / correction2);
  const T eps = static_cast<T>(state.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->raw();
    const T* g = grads[i]->raw();
    T* m = state.first_moment[i].raw();
    T* v = state.second_moment[i].raw();
    const std::size_t n = params[i]->size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (one - b1) * g[j];
      v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
      p[j] -= step * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
    }
  }
}

template AdamState<float> make_adam_state<float>(std::span<const Tensor<float>* const>);
template AdamState<double> make_adam_state<double>(std::span<const Tensor<double>* const>);
template void adam_step<float>(std::span<Tensor<float>* const>, std::span<const Tensor<float>* const>,
                               AdamState<float>&, double);
template void adam_step<double>(std::span<Tensor<double>* const>, std::span<const Tensor<double>* const>,
                                AdamState<double>&, double);

}  // namespace transinv::nn
