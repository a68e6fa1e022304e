#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "transinv/checksum.hpp"
#include "transinv/cli.hpp"

namespace transinv::cli {
namespace {

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::filesystem::path manifest_path(const std::filesystem::path& out_dir) { return out_dir / "manifest.json"; }

nlohmann::json load_manifest(const std::filesystem::path& out_dir) {
  const auto path = manifest_path(out_dir);
  if (!std::filesystem::exists(path)) return {{"tool", "transinv"}, {"runs", nlohmann::json::array()}};
  std::ifstream in(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("runs") || !j["runs"].is_array()) {
    throw Error(path.string() + ": not a run manifest");
  }
  return j;
}

}  // namespace

void append_manifest(const std::filesystem::path& out_dir, const RunRecord& record) {
  auto manifest = load_manifest(out_dir);

  std::string command;
  for (const auto& a : record.argv) command += (command.empty() ? "" : " ") + a;
  nlohmann::json datasets = nlohmann::json::array();
  for (const auto& [name, crc] : record.dataset_checksums) datasets.push_back({{"file", name}, {"crc32", hex32(crc)}});
  nlohmann::json artifacts = nlohmann::json::array();
  for (const auto& path : record.artifacts) {
    artifacts.push_back({
        {"path", std::filesystem::relative(path, out_dir).generic_string()},
        {"crc32", hex32(file_crc32(path))},
        {"bytes", std::filesystem::file_size(path)},
    });
  }
  const auto config = nlohmann::json::parse(record.config_json);
  const auto canonical = config.dump();

  manifest["version"] = TRANSINV_VERSION;
  manifest["runs"].push_back({
      {"command", command},
      {"argv", record.argv},
      {"config", config},
      {"config_crc32", hex32(crc32(std::span(reinterpret_cast<const unsigned char*>(canonical.data()), canonical.size())))},
      {"datasets", std::move(datasets)},
      {"seeds", record.seeds},
      {"artifacts", std::move(artifacts)},
      {"wall_seconds", record.wall_seconds},
      {"tool_version", TRANSINV_VERSION},
  });
  std::ofstream out(manifest_path(out_dir), std::ios::trunc);
  if (!out) throw Error("cannot write " + manifest_path(out_dir).string());
  out << manifest.dump(2) << '\n';
}

std::vector<std::string> verify_manifest(const std::filesystem::path& out_dir) {
  const auto manifest = load_manifest(out_dir);
  // A later run may rewrite a file; its newest record is the one that counts.
  std::map<std::string, std::string> latest;
  for (const auto& run : manifest["runs"]) {
    for (const auto& a : run.at("artifacts")) latest[a.at("path").get<std::string>()] = a.at("crc32").get<std::string>();
  }
  std::vector<std::string> bad;
  for (const auto& [rel, crc] : latest) {
    const auto path = out_dir / rel;
    if (!std::filesystem::exists(path) || hex32(file_crc32(path)) != crc) bad.push_back(rel);
  }
  return bad;
}

}  // namespace transinv::cli
