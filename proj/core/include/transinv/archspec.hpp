#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "transinv/errors.hpp"

namespace transinv::arch {

// One convolution followed by the implicit 2x2/2 max-pool. `padding` is the
// leading (top/left) zero border and `padding_end` the trailing (bottom/right)
// one; they differ only for even kernels padded to preserve the input size.
struct ConvBlock {
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  int padding_end = 0;
  int channels = 0;

  friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

struct InputShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  friend bool operator==(const InputShape&, const InputShape&) = default;
};

inline constexpr int kConvBlockCount = 3;
inline constexpr int kPoolKernel = 2;
inline constexpr int kPoolStride = 2;

struct ArchSpec {
  std::string name;
  InputShape input;
  std::vector<ConvBlock> conv_blocks;
  int hidden_units = 500;
  int output_units = 10;

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

struct ShapeStep {
  std::string layer;
  int height = 0;
  int width = 0;
  int channels = 0;

  friend bool operator==(const ShapeStep&, const ShapeStep&) = default;
};

using ShapeTrace = std::vector<ShapeStep>;

// floor((in - kernel + pad_begin + pad_end) / stride) + 1; may be <= 0 for
// inputs smaller than the kernel.
constexpr int conv_output_size(int in, int kernel, int stride, int pad_begin, int pad_end) {
  const int span = in - kernel + pad_begin + pad_end;
  if (span < 0) return 0;
  return span / stride + 1;
}

// Floor division: an odd trailing row/column is discarded.
constexpr int pool_output_size(int in, int kernel = kPoolKernel, int stride = kPoolStride) {
  if (in < kernel) return 0;
  return (in - kernel) / stride + 1;
}

// Throws ArchError (with a JSON path) on any invariant violation, including
// a non-positive intermediate feature map.
void validate(const ArchSpec& spec);

ArchSpec parse_arch(std::string_view json_text);
std::string serialize_arch(const ArchSpec& spec);

// Layer-by-layer sizes: CNN1, Max-Pool1, ..., Max-Pool3, FC, Out.
ShapeTrace infer_shapes(const ArchSpec& spec);

// Length of the flattened post-pool-3 activation fed to the hidden layer.
int flattened_features(const ArchSpec& spec);

// Channel count keeping kernel^2 x channels ("effective nodes") comparable:
// round(k_ref^2 * c_ref / k_new^2), ties away from zero.
int match_channels(int k_ref, int c_ref, int k_new);

// Architectures of the four published tables; kernel in {3, 4, 5}.
// Tables 1 and 3 take a 1x40x40 input (MNIST), Tables 2 and 4 a 3x44x44 one.
ArchSpec preset(int table, int kernel);

// "table<N>:k<K>", e.g. "table1:k5".
ArchSpec preset_by_name(std::string_view name);
bool is_preset_name(std::string_view name);

// Every conv channel count multiplied by `factor`, rounded half away from
// zero (minimum 1).
ArchSpec scale_width(const ArchSpec& spec, double factor);

}  // namespace transinv::arch
