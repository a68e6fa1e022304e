#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "transinv/tensor.hpp"

namespace transinv::data {

// image is [C,H,W] with values in [0,1] (bytes divided by 255).
struct Sample {
  nn::Tensor<float> image;
  int label = 0;
};

enum class DatasetId { mnist, cifar10 };

std::string_view dataset_name(DatasetId id);
DatasetId parse_dataset(std::string_view name);

class DatasetError : public Error {
 public:
  enum class Code { io, bad_magic, truncated, count_mismatch, bad_length, bad_label, insufficient_samples };

  DatasetError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

struct FileChecksum {
  std::string file;
  std::uint32_t crc32 = 0;
};

struct Provenance {
  DatasetId dataset = DatasetId::mnist;
  std::vector<FileChecksum> checksums;
  std::uint64_t split_seed = 0;
};

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
  Provenance provenance;
};

// IDX pair (images magic 0x00000803, labels 0x00000801). 1x28x28 samples.
std::vector<Sample> load_mnist(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path);

// CIFAR-10 binary batches: 3073-byte records (label, R plane, G plane, B plane).
std::vector<Sample> load_cifar10(std::span<const std::filesystem::path> batch_paths);

// Shuffles raw_train with `seed`, takes the last `val_size` samples of the
// permutation as validation and the rest as training; raw_test passes through.
DatasetSplit make_splits(std::vector<Sample> raw_train, std::vector<Sample> raw_test,
                         std::size_t val_size, std::uint64_t seed);

nn::Tensor<float> pad_image(const nn::Tensor<float>& image, int border);
Sample pad_border(const Sample& sample, int border = 6);

// Content moves by +dx columns and +dy rows; vacated pixels are zero and
// pixels pushed past the edge are dropped.
nn::Tensor<float> translate_image(const nn::Tensor<float>& image, int dx, int dy);
Sample translate(const Sample& sample, int dx, int dy);

// Standard on-disk layout under a data directory:
//   mnist/{train-images,train-labels,t10k-images,t10k-labels}
//     (the "-idx3-ubyte"/"-idx1-ubyte" suffixed names are accepted too)
//   cifar10/data_batch_{1..5}.bin, cifar10/test_batch.bin
struct DataFiles {
  std::vector<std::filesystem::path> train;  // MNIST: {images, labels}
  std::vector<std::filesystem::path> test;
};

DataFiles locate_files(const std::filesystem::path& data_dir, DatasetId id);

struct LoadOptions {
  int border = 6;
  std::size_t val_size = 5000;
  std::uint64_t split_seed = 0;
  // Keep only the first N training samples after the split (0 = all).
  std::size_t train_limit = 0;
};

// Loads, splits and pads; provenance carries the CRC32 of every file read.
DatasetSplit load_dataset(const std::filesystem::path& data_dir, DatasetId id, const LoadOptions& options = {});

// Padded test split only.
std::vector<Sample> load_test_set(const std::filesystem::path& data_dir, DatasetId id, int border = 6);

}  // namespace transinv::data
