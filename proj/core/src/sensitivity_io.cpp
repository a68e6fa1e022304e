#include "transinv/sensitivity_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace transinv::sens {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

double parse_double(const std::string& text, const std::filesystem::path& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(path.string() + ":" + std::to_string(line) + ": bad number '" + text + "'");
  }
}

}  // namespace

void write_map(const SensitivityMap& map, const std::filesystem::path& stem) {
  auto csv_path = stem;
  csv_path += ".csv";
  auto csv = open_out(csv_path);
  csv << "dx,dy,value\n";
  const int m = map.max_shift();
  for (int dy = -m; dy <= m; ++dy) {
    for (int dx = -m; dx <= m; ++dx) csv << dx << ',' << dy << ',' << format_double(map.at(dx, dy)) << '\n';
  }

  nlohmann::json meta = {
      {"class", map.class_id},
      {"tap", std::string(nn::tap_name(map.tap))},
      {"metric", std::string(metric_name(map.metric))},
      {"vector_dim", map.vector_dim},
      {"sample_count", map.sample_count},
      {"degenerate_count", map.degenerate_count},
      {"max_shift", m},
      {"seed", map.seed ? nlohmann::json(*map.seed) : nlohmann::json(nullptr)},
  };
  auto json_path = stem;
  json_path += ".json";
  open_out(json_path) << meta.dump(2) << '\n';
}

SensitivityMap read_map(const std::filesystem::path& csv_path) {
  auto json_path = csv_path;
  json_path.replace_extension(".json");
  std::ifstream meta_in(json_path);
  if (!meta_in) throw Error("missing map metadata " + json_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(json_path.string() + ": " + e.what());
  }

  SensitivityMap map;
  try {
    map = SensitivityMap(meta.at("max_shift").get<int>(), parse_metric(meta.at("metric").get<std::string>()),
                         nn::parse_tap(meta.at("tap").get<std::string>()), meta.at("class").get<int>());
    map.vector_dim = meta.at("vector_dim").get<std::size_t>();
    map.sample_count = meta.at("sample_count").get<std::size_t>();
    map.degenerate_count = meta.value("degenerate_count", std::size_t{0});
    if (meta.contains("seed") && !meta["seed"].is_null()) map.seed = meta["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(json_path.string() + ": " + e.what());
  }

  std::ifstream in(csv_path);
  if (!in) throw Error("cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(in, line) || line != "dx,dy,value") throw Error(csv_path.string() + ": expected header dx,dy,value");
  std::vector<bool> seen(map.cell_count(), false);
  std::size_t line_no = 1, rows = 0;
  const int m = map.max_shift();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 3) throw Error(csv_path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    const double dxf = parse_double(fields[0], csv_path, line_no);
    const double dyf = parse_double(fields[1], csv_path, line_no);
    const int dx = static_cast<int>(dxf), dy = static_cast<int>(dyf);
    if (dx != dxf || dy != dyf || std::abs(dx) > m || std::abs(dy) > m) {
      throw Error(csv_path.string() + ":" + std::to_string(line_no) + ": shift outside the declared grid");
    }
    const auto idx = static_cast<std::size_t>(dy + m) * map.side() + static_cast<std::size_t>(dx + m);
    if (seen[idx]) throw Error(csv_path.string() + ":" + std::to_string(line_no) + ": duplicate cell");
    seen[idx] = true;
    map.at(dx, dy) = parse_double(fields[2], csv_path, line_no);
    ++rows;
  }
  if (rows != map.cell_count()) {
    throw Error(csv_path.string() + ": " + std::to_string(rows) + " rows, expected " + std::to_string(map.cell_count()));
  }
  return map;
}

void write_pgm(std::span<const double> values, int width, int height, const std::filesystem::path& path,
               double vmin, double vmax) {
  if (width <= 0 || height <= 0 || values.size() != static_cast<std::size_t>(width) * height) {
    throw ShapeError("pgm: " + std::to_string(values.size()) + " values for " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
  auto out = open_out(path);
  out << "P2\n" << width << ' ' << height << "\n255\n";
  const double range = vmax - vmin;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double v = values[static_cast<std::size_t>(y) * width + x];
      int level = 128;
      if (range > 0.0) level = static_cast<int>(std::lround(std::clamp((v - vmin) / range, 0.0, 1.0) * 255.0));
      out << level << (x + 1 == width ? '\n' : ' ');
    }
  }
}

void write_pgm(const SensitivityMap& map, const std::filesystem::path& path) {
  const auto values = map.values();
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  write_pgm(values, map.side(), map.side(), path, *lo, *hi);
}

void write_profile_csv(const RadialProfile& profile, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "radius,mean,count\n";
  for (std::size_t i = 0; i < profile.radii.size(); ++i) {
    out << profile.radii[i] << ',' << format_double(profile.values[i]) << ',' << profile.counts[i] << '\n';
  }
}

RadialProfile read_profile_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "radius,mean,count") throw Error(path.string() + ": expected header radius,mean,count");
  RadialProfile profile;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 3) throw Error(path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    profile.radii.push_back(static_cast<int>(parse_double(fields[0], path, line_no)));
    profile.values.push_back(parse_double(fields[1], path, line_no));
    profile.counts.push_back(static_cast<std::size_t>(parse_double(fields[2], path, line_no)));
  }
  return profile;
}

}  // namespace transinv::sens
