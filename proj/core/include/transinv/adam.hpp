#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "transinv/tensor.hpp"

namespace transinv::nn {

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Zero moments shaped like `params`.
template <typename T>
AdamState<T> make_adam_state(std::span<const Tensor<T>* const> params);

// One bias-corrected Adam update in place; step_count grows by one.
// Moments are created on the first call if the state is empty.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads,
               AdamState<T>& state, double learning_rate);

}  // namespace transinv::nn
