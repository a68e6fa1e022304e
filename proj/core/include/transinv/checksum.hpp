#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

namespace transinv {

std::uint32_t crc32(std::span<const std::byte> bytes);
std::uint32_t crc32(std::span<const unsigned char> bytes);
std::uint32_t file_crc32(const std::filesystem::path& path);

}  // namespace transinv
