#include "transinv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "transinv/checksum.hpp"

namespace transinv::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'T', 'I', 'N', 'V'};

template <typename U>
void put(std::vector<std::byte>& out, U value) {
  const auto* p = reinterpret_cast<const std::byte*>(&value);
  out.insert(out.end(), p, p + sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    U value;
    std::memcpy(&value, take(sizeof(U), what).data(), sizeof(U));
    return value;
  }

  std::span<const std::byte> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Code::truncated,
                            std::string("checkpoint truncated while reading ") + what);
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t position() const { return pos_; }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::byte> encode_checkpoint(const Model<float>& model) {
  std::vector<std::byte> out;
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put<std::uint16_t>(out, kCheckpointVersion);
  const auto arch_json = arch::serialize_arch(model.spec());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(arch_json.size()));
  for (char c : arch_json) out.push_back(static_cast<std::byte>(c));
  for (const auto* p : model.parameters()) {
    const auto* raw = reinterpret_cast<const std::byte*>(p->raw());
    out.insert(out.end(), raw, raw + p->size() * sizeof(float));
  }
  put<std::uint32_t>(out, crc32(std::span<const std::byte>(out)));
  return out;
}

Model<float> decode_checkpoint(std::span<const std::byte> bytes, const arch::ArchSpec* expected) {
  Reader reader(bytes);
  const auto magic = reader.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Code::bad_magic, "not a checkpoint: bad magic bytes");
  }
  const auto version = reader.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Code::bad_version,
                          "unsupported checkpoint version " + std::to_string(version));
  }
  const auto json_length = reader.get<std::uint32_t>("architecture length");
  const auto json_bytes = reader.take(json_length, "architecture");
  arch::ArchSpec spec;
  try {
    spec = arch::parse_arch(std::string_view(reinterpret_cast<const char*>(json_bytes.data()), json_bytes.size()));
  } catch (const ArchError& e) {
    throw CheckpointError(CheckpointError::Code::bad_arch, std::string("checkpoint architecture: ") + e.what());
  }
  if (expected && !(*expected == spec)) {
    throw CheckpointError(CheckpointError::Code::arch_mismatch,
                          "checkpoint architecture '" + spec.name + "' does not match expected '" +
                              expected->name + "'");
  }

  Model<float> model(spec);
  for (auto* p : model.parameters()) {
    const auto raw = reader.take(p->size() * sizeof(float), "parameters");
    std::memcpy(p->raw(), raw.data(), raw.size());
  }
  const std::size_t payload_end = reader.position();
  const auto stored = reader.get<std::uint32_t>("checksum");
  if (reader.position() != bytes.size()) {
    throw CheckpointError(CheckpointError::Code::truncated, "checkpoint has trailing bytes");
  }
  if (stored != crc32(bytes.first(payload_end))) {
    throw CheckpointError(CheckpointError::Code::bad_checksum, "checkpoint CRC32 mismatch");
  }
  return model;
}

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Code::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Code::io, "write failed for " + path.string());
}

Model<float> load_checkpoint(const std::filesystem::path& path, const arch::ArchSpec* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Code::io, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::as_bytes(std::span(raw)), expected);
}

}  // namespace transinv::nn
