#include "transinv/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "transinv/checksum.hpp"

namespace transinv::data {
namespace {

using Code = DatasetError::Code;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(Code::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t big_endian_u32(const std::vector<unsigned char>& bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::string hex(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

nn::Tensor<float> scale_bytes(const unsigned char* bytes, nn::Shape shape) {
  nn::Tensor<float> image(std::move(shape));
  for (std::size_t i = 0; i < image.size(); ++i) image[i] = static_cast<float>(bytes[i]) / 255.0f;
  return image;
}

}  // namespace

std::string_view dataset_name(DatasetId id) { return id == DatasetId::mnist ? "mnist" : "cifar10"; }

DatasetId parse_dataset(std::string_view name) {
  if (name == "mnist") return DatasetId::mnist;
  if (name == "cifar10") return DatasetId::cifar10;
  throw Error("unknown dataset '" + std::string(name) + "' (expected mnist or cifar10)");
}

std::vector<Sample> load_mnist(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  if (images.size() < 4) throw DatasetError(Code::truncated, images_path.string() + ": header truncated");
  if (labels.size() < 4) throw DatasetError(Code::truncated, labels_path.string() + ": header truncated");
  if (const auto magic = big_endian_u32(images, 0); magic != 0x00000803) {
    throw DatasetError(Code::bad_magic, images_path.string() + ": image magic " + hex(magic) + ", expected 0x00000803");
  }
  if (const auto magic = big_endian_u32(labels, 0); magic != 0x00000801) {
    throw DatasetError(Code::bad_magic, labels_path.string() + ": label magic " + hex(magic) + ", expected 0x00000801");
  }
  if (images.size() < 16) throw DatasetError(Code::truncated, images_path.string() + ": header truncated");
  if (labels.size() < 8) throw DatasetError(Code::truncated, labels_path.string() + ": header truncated");
  const std::size_t count = big_endian_u32(images, 4);
  const std::size_t rows = big_endian_u32(images, 8);
  const std::size_t cols = big_endian_u32(images, 12);
  const std::size_t label_count = big_endian_u32(labels, 4);
  if (count != label_count) {
    throw DatasetError(Code::count_mismatch, "image file holds " + std::to_string(count) +
                                                 " samples but label file holds " + std::to_string(label_count));
  }
  const std::size_t pixels = rows * cols;
  if (images.size() < 16 + count * pixels) {
    throw DatasetError(Code::truncated, images_path.string() + ": payload truncated (" +
                                            std::to_string(images.size() - 16) + " of " +
                                            std::to_string(count * pixels) + " bytes)");
  }
  if (labels.size() < 8 + count) {
    throw DatasetError(Code::truncated, labels_path.string() + ": payload truncated");
  }

  std::vector<Sample> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = labels[8 + i];
    if (label > 9) {
      throw DatasetError(Code::bad_label, labels_path.string() + ": label " + std::to_string(label) +
                                              " at index " + std::to_string(i));
    }
    samples.push_back({scale_bytes(images.data() + 16 + i * pixels, {1, rows, cols}), label});
  }
  return samples;
}

std::vector<Sample> load_cifar10(std::span<const std::filesystem::path> batch_paths) {
  constexpr std::size_t kRecord = 3073;
  std::vector<Sample> samples;
  for (const auto& path : batch_paths) {
    const auto bytes = read_file(path);
    if (bytes.size() % kRecord != 0) {
      throw DatasetError(Code::bad_length, path.string() + ": length " + std::to_string(bytes.size()) +
                                               " is not a multiple of 3073");
    }
    for (std::size_t off = 0; off < bytes.size(); off += kRecord) {
      const int label = bytes[off];
      if (label > 9) {
        throw DatasetError(Code::bad_label, path.string() + ": label " + std::to_string(label) +
                                                " in record " + std::to_string(off / kRecord));
      }
      samples.push_back({scale_bytes(bytes.data() + off + 1, {3, 32, 32}), label});
    }
  }
  return samples;
}

DatasetSplit make_splits(std::vector<Sample> raw_train, std::vector<Sample> raw_test,
                         std::size_t val_size, std::uint64_t seed) {
  if (raw_train.size() <= val_size) {
    throw DatasetError(Code::insufficient_samples, "need more than " + std::to_string(val_size) +
                                                       " training samples, got " + std::to_string(raw_train.size()));
  }
  std::vector<std::size_t> order(raw_train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  DatasetSplit split;
  const std::size_t train_count = raw_train.size() - val_size;
  split.train.reserve(train_count);
  split.validation.reserve(val_size);
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < train_count ? split.train : split.validation;
    dst.push_back(std::move(raw_train[order[i]]));
  }
  split.test = std::move(raw_test);
  split.provenance.split_seed = seed;
  return split;
}

nn::Tensor<float> pad_image(const nn::Tensor<float>& image, int border) {
  if (image.rank() != 3) throw ShapeError("image must be [C,H,W], got " + nn::shape_string(image.shape()));
  if (border < 0) throw Error("border must be non-negative");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const auto b = static_cast<std::size_t>(border);
  const std::size_t Hp = H + 2 * b, Wp = W + 2 * b;
  nn::Tensor<float> out({C, Hp, Wp});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      const float* src = image.raw() + (c * H + y) * W;
      std::copy(src, src + W, out.raw() + (c * Hp + y + b) * Wp + b);
    }
  }
  return out;
}

Sample pad_border(const Sample& sample, int border) { return {pad_image(sample.image, border), sample.label}; }

nn::Tensor<float> translate_image(const nn::Tensor<float>& image, int dx, int dy) {
  if (image.rank() != 3) throw ShapeError("image must be [C,H,W], got " + nn::shape_string(image.shape()));
  const auto C = static_cast<long>(image.dim(0));
  const auto H = static_cast<long>(image.dim(1));
  const auto W = static_cast<long>(image.dim(2));
  nn::Tensor<float> out(image.shape());
  const long x_begin = std::max(0L, static_cast<long>(dx));
  const long x_end = std::min(W, W + dx);
  if (x_begin >= x_end) return out;
  for (long c = 0; c < C; ++c) {
    for (long y = 0; y < H; ++y) {
      const long src_y = y - dy;
      if (src_y < 0 || src_y >= H) continue;
      const float* src = image.raw() + (c * H + src_y) * W;
      float* dst = out.raw() + (c * H + y) * W;
      for (long x = x_begin; x < x_end; ++x) dst[x] = src[x - dx];
    }
  }
  return out;
}

Sample translate(const Sample& sample, int dx, int dy) { return {translate_image(sample.image, dx, dy), sample.label}; }

DataFiles locate_files(const std::filesystem::path& data_dir, DatasetId id) {
  namespace fs = std::filesystem;
  DataFiles files;
  auto require = [](const fs::path& p) {
    if (!fs::exists(p)) throw DatasetError(Code::io, "missing data file " + p.string());
    return p;
  };
  if (id == DatasetId::mnist) {
    const auto dir = data_dir / "mnist";
    auto pick = [&](const std::string& base, const char* suffix) {
      const auto plain = dir / base;
      if (fs::exists(plain)) return plain;
      return require(dir / (base + suffix));
    };
    files.train = {pick("train-images", "-idx3-ubyte"), pick("train-labels", "-idx1-ubyte")};
    files.test = {pick("t10k-images", "-idx3-ubyte"), pick("t10k-labels", "-idx1-ubyte")};
  } else {
    const auto dir = data_dir / "cifar10";
    for (int i = 1; i <= 5; ++i) files.train.push_back(require(dir / ("data_batch_" + std::to_string(i) + ".bin")));
    files.test = {require(dir / "test_batch.bin")};
  }
  return files;
}

namespace {

std::vector<Sample> load_files(DatasetId id, const std::vector<std::filesystem::path>& paths) {
  return id == DatasetId::mnist ? load_mnist(paths.at(0), paths.at(1)) : load_cifar10(paths);
}

void pad_all(std::vector<Sample>& samples, int border) {
  if (border == 0) return;
  for (auto& s : samples) s.image = pad_image(s.image, border);
}

}  // namespace

DatasetSplit load_dataset(const std::filesystem::path& data_dir, DatasetId id, const LoadOptions& options) {
  const auto files = locate_files(data_dir, id);
  auto split = make_splits(load_files(id, files.train), load_files(id, files.test), options.val_size,
                           options.split_seed);
  if (options.train_limit > 0 && split.train.size() > options.train_limit) split.train.resize(options.train_limit);
  pad_all(split.train, options.border);
  pad_all(split.validation, options.border);
  pad_all(split.test, options.border);
  split.provenance.dataset = id;
  for (const auto& group : {files.train, files.test}) {
    for (const auto& p : group) split.provenance.checksums.push_back({p.filename().string(), file_crc32(p)});
  }
  return split;
}

std::vector<Sample> load_test_set(const std::filesystem::path& data_dir, DatasetId id, int border) {
  auto samples = load_files(id, locate_files(data_dir, id).test);
  pad_all(samples, border);
  return samples;
}

}  // namespace transinv::data
