#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "transinv/model.hpp"

namespace transinv::nn {

// Layout (all integers little-endian):
//   "TINV" | u16 version | u32 json_length | ArchSpec JSON (UTF-8)
//   | parameter tensors as f32 in declaration order | u32 CRC32
// The CRC covers every byte before it.
inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  enum class Code { io, bad_magic, bad_version, truncated, bad_checksum, bad_arch, arch_mismatch };

  CheckpointError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

std::vector<std::byte> encode_checkpoint(const Model<float>& model);

// `expected` (optional) must equal the stored architecture.
Model<float> decode_checkpoint(std::span<const std::byte> bytes, const arch::ArchSpec* expected = nullptr);

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path, const arch::ArchSpec* expected = nullptr);

}  // namespace transinv::nn
