#include "transinv/archspec.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <nlohmann/json.hpp>

namespace transinv::arch {
namespace {

using nlohmann::json;

std::string block_path(std::size_t i) { return "$.conv_blocks[" + std::to_string(i) + "]"; }

int require_int(const json& doc, const std::string& path) {
  if (!doc.is_number_integer()) throw ArchError(path, "expected an integer");
  const auto value = doc.get<long long>();
  if (value < std::numeric_limits<int>::min() || value > std::numeric_limits<int>::max()) {
    throw ArchError(path, "integer out of range");
  }
  return static_cast<int>(value);
}

void reject_unknown(const json& object, std::initializer_list<std::string_view> known,
                    const std::string& path) {
  for (const auto& [key, value] : object.items()) {
    bool found = false;
    for (auto k : known) found = found || key == k;
    if (!found) throw ArchError(path + "." + key, "unknown field");
  }
}

const json& require_field(const json& object, const char* key, const std::string& path) {
  auto it = object.find(key);
  if (it == object.end()) throw ArchError(path + "." + key, "missing field");
  return *it;
}

ConvBlock parse_block(const json& doc, const std::string& path) {
  if (!doc.is_object()) throw ArchError(path, "expected an object");
  reject_unknown(doc, {"kernel", "stride", "padding", "padding_end", "channels"}, path);
  ConvBlock block;
  block.kernel = require_int(require_field(doc, "kernel", path), path + ".kernel");
  block.stride = require_int(require_field(doc, "stride", path), path + ".stride");
  block.padding = require_int(require_field(doc, "padding", path), path + ".padding");
  block.padding_end = block.padding;
  if (auto it = doc.find("padding_end"); it != doc.end()) {
    block.padding_end = require_int(*it, path + ".padding_end");
  }
  block.channels = require_int(require_field(doc, "channels", path), path + ".channels");
  return block;
}

}  // namespace

void validate(const ArchSpec& spec) {
  const std::array<int, 3> input{spec.input.channels, spec.input.height, spec.input.width};
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (input[i] <= 0) throw ArchError("$.input[" + std::to_string(i) + "]", "must be positive");
  }
  if (spec.conv_blocks.size() != kConvBlockCount) {
    throw ArchError("$.conv_blocks", "expected exactly 3 conv blocks, got " +
                                         std::to_string(spec.conv_blocks.size()));
  }
  for (std::size_t i = 0; i < spec.conv_blocks.size(); ++i) {
    const auto& b = spec.conv_blocks[i];
    const auto path = block_path(i);
    if (b.kernel <= 0) throw ArchError(path + ".kernel", "must be positive");
    if (b.stride <= 0) throw ArchError(path + ".stride", "must be positive");
    if (b.padding < 0) throw ArchError(path + ".padding", "must be non-negative");
    if (b.padding_end < 0) throw ArchError(path + ".padding_end", "must be non-negative");
    if (b.channels <= 0) throw ArchError(path + ".channels", "must be positive");
  }
  if (spec.hidden_units <= 0) throw ArchError("$.hidden_units", "must be positive");
  if (spec.output_units <= 0) throw ArchError("$.output_units", "must be positive");

  int h = spec.input.height;
  int w = spec.input.width;
  for (std::size_t i = 0; i < spec.conv_blocks.size(); ++i) {
    const auto& b = spec.conv_blocks[i];
    h = conv_output_size(h, b.kernel, b.stride, b.padding, b.padding_end);
    w = conv_output_size(w, b.kernel, b.stride, b.padding, b.padding_end);
    if (h <= 0 || w <= 0) {
      throw ArchError(block_path(i), "CNN" + std::to_string(i + 1) + " output is empty");
    }
    h = pool_output_size(h);
    w = pool_output_size(w);
    if (h <= 0 || w <= 0) {
      throw ArchError(block_path(i), "Max-Pool" + std::to_string(i + 1) + " output is empty");
    }
  }
}

ArchSpec parse_arch(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ArchError("$", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ArchError("$", "expected an object");
  reject_unknown(doc, {"name", "input", "conv_blocks", "hidden_units", "output_units"}, "$");

  ArchSpec spec;
  const auto& name = require_field(doc, "name", "$");
  if (!name.is_string()) throw ArchError("$.name", "expected a string");
  spec.name = name.get<std::string>();

  const auto& input = require_field(doc, "input", "$");
  if (!input.is_array() || input.size() != 3) {
    throw ArchError("$.input", "expected [channels, height, width]");
  }
  spec.input.channels = require_int(input[0], "$.input[0]");
  spec.input.height = require_int(input[1], "$.input[1]");
  spec.input.width = require_int(input[2], "$.input[2]");

  const auto& blocks = require_field(doc, "conv_blocks", "$");
  if (!blocks.is_array()) throw ArchError("$.conv_blocks", "expected an array");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    spec.conv_blocks.push_back(parse_block(blocks[i], block_path(i)));
  }
  spec.hidden_units = require_int(require_field(doc, "hidden_units", "$"), "$.hidden_units");
  spec.output_units = require_int(require_field(doc, "output_units", "$"), "$.output_units");

  validate(spec);
  return spec;
}

std::string serialize_arch(const ArchSpec& spec) {
  json blocks = json::array();
  for (const auto& b : spec.conv_blocks) {
    json block = {{"kernel", b.kernel}, {"stride", b.stride}, {"padding", b.padding}};
    if (b.padding_end != b.padding) block["padding_end"] = b.padding_end;
    block["channels"] = b.channels;
    blocks.push_back(std::move(block));
  }
  json doc = {
      {"name", spec.name},
      {"input", {spec.input.channels, spec.input.height, spec.input.width}},
      {"conv_blocks", std::move(blocks)},
      {"hidden_units", spec.hidden_units},
      {"output_units", spec.output_units},
  };
  return doc.dump();
}

ShapeTrace infer_shapes(const ArchSpec& spec) {
  validate(spec);
  ShapeTrace trace;
  int h = spec.input.height;
  int w = spec.input.width;
  for (std::size_t i = 0; i < spec.conv_blocks.size(); ++i) {
    const auto& b = spec.conv_blocks[i];
    const auto index = std::to_string(i + 1);
    h = conv_output_size(h, b.kernel, b.stride, b.padding, b.padding_end);
    w = conv_output_size(w, b.kernel, b.stride, b.padding, b.padding_end);
    trace.push_back({"CNN" + index, h, w, b.channels});
    h = pool_output_size(h);
    w = pool_output_size(w);
    trace.push_back({"Max-Pool" + index, h, w, b.channels});
  }
  trace.push_back({"FC", 1, 1, spec.hidden_units});
  trace.push_back({"Out", 1, 1, spec.output_units});
  return trace;
}

int flattened_features(const ArchSpec& spec) {
  const auto trace = infer_shapes(spec);
  const auto& last_pool = trace[2 * kConvBlockCount - 1];
  return last_pool.height * last_pool.width * last_pool.channels;
}

int match_channels(int k_ref, int c_ref, int k_new) {
  const double effective = static_cast<double>(k_ref) * k_ref * c_ref;
  return static_cast<int>(std::round(effective / (static_cast<double>(k_new) * k_new)));
}

ArchSpec preset(int table, int kernel) {
  if (table < 1 || table > 4) throw ArchError("$", "unknown table " + std::to_string(table));
  if (kernel < 3 || kernel > 5) {
    throw ArchError("$", "table " + std::to_string(table) + " has no kernel-" +
                             std::to_string(kernel) + " network");
  }
  const bool mnist = table == 1 || table == 3;
  const bool padded = table == 1 || table == 2;

  ArchSpec spec;
  spec.name = "table" + std::to_string(table) + ":k" + std::to_string(kernel);
  spec.input = mnist ? InputShape{1, 40, 40} : InputShape{3, 44, 44};

  std::array<int, 3> channels{};
  if (padded) {
    channels = mnist ? std::array{10, 20, 30} : std::array{50, 100, 150};
  } else if (mnist) {
    channels = kernel == 5 ? std::array{10, 20, 30}
             : kernel == 4 ? std::array{16, 31, 47}
                           : std::array{28, 56, 83};
  } else {
    // 416 rather than round(3750 / 9) = 417: the published table's value.
    channels = kernel == 5 ? std::array{50, 100, 150}
             : kernel == 4 ? std::array{78, 156, 234}
                           : std::array{139, 278, 416};
  }

  // Size-preserving ("same") padding; even kernels put the extra row/column
  // at the trailing edge.
  int pad_begin = 0;
  int pad_end = 0;
  if (padded) {
    pad_begin = (kernel - 1) / 2;
    pad_end = kernel - 1 - pad_begin;
  }
  for (int c : channels) spec.conv_blocks.push_back({kernel, 1, pad_begin, pad_end, c});
  validate(spec);
  return spec;
}

bool is_preset_name(std::string_view name) {
  if (name.size() != 9 || name.substr(0, 5) != "table" || name.substr(6, 2) != ":k") return false;
  const char t = name[5];
  const char k = name[8];
  return t >= '1' && t <= '4' && k >= '3' && k <= '5';
}

ArchSpec preset_by_name(std::string_view name) {
  if (!is_preset_name(name)) {
    throw ArchError("$", "unknown preset '" + std::string(name) + "' (expected tableN:kK)");
  }
  return preset(name[5] - '0', name[8] - '0');
}

ArchSpec scale_width(const ArchSpec& spec, double factor) {
  ArchSpec scaled = spec;
  for (auto& b : scaled.conv_blocks) {
    b.channels = std::max(1, static_cast<int>(std::round(b.channels * factor)));
  }
  validate(scaled);
  return scaled;
}

}  // namespace transinv::arch
