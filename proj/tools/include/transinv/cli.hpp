#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "transinv/errors.hpp"

namespace transinv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Bad arguments that only show up after parsing (unknown preset, channel out
// of range, ...). Maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Runs one command line (without the program name). Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Appends one run record to <out_dir>/manifest.json. Artifact paths are
// stored relative to out_dir along with their CRC32 and byte size.
struct RunRecord {
  std::vector<std::string> argv;
  std::string config_json;
  std::vector<std::pair<std::string, std::uint32_t>> dataset_checksums;
  std::vector<std::uint64_t> seeds;
  std::vector<std::filesystem::path> artifacts;
  double wall_seconds = 0.0;
};
void append_manifest(const std::filesystem::path& out_dir, const RunRecord& record);

// Recomputes every artifact digest listed in <out_dir>/manifest.json and
// returns the paths whose file is missing or whose CRC32 differs.
std::vector<std::string> verify_manifest(const std::filesystem::path& out_dir);

}  // namespace transinv::cli
