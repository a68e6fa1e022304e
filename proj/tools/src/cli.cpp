#include "transinv/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>

#include "transinv/archspec.hpp"
#include "transinv/checkpoint.hpp"
#include "transinv/checksum.hpp"
#include "transinv/datasets.hpp"
#include "transinv/sensitivity_io.hpp"
#include "transinv/training.hpp"

namespace transinv::cli {
namespace fs = std::filesystem;
namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

struct Global {
  std::string data_dir;
  std::string out_dir = ".";
  unsigned threads = 1;
  std::vector<std::uint64_t> seeds;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> argv;
};

struct TrainArgs {
  std::string arch;
  std::string dataset;
  std::vector<double> lrs;
  int max_epochs = 50;
  int batch_size = 128;
  double target = 0.99;
  int extra_epochs = 0;
  int edge_extensions = 3;
  bool no_require_target = false;
  std::size_t train_limit = 0;
  std::size_t val_size = 5000;
  std::uint64_t split_seed = 0;
  bool progress = false;
};

struct ProbeArgs {
  std::string checkpoint;
  std::string dataset;
  std::vector<std::string> taps{"fc_out"};
  std::vector<std::string> metrics{"cosine"};
  int max_shift = 10;
  std::vector<int> classes;
  std::size_t sample_limit = 0;
};

struct FeatureArgs {
  std::string checkpoint;
  std::string dataset;
  std::size_t index = 0;
  std::string shift = "4,0";
  std::string channels = "0,1,2";
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path data_dir(const Global& g) {
  if (g.data_dir.empty()) throw UsageError("no dataset directory: pass --data-dir or set TRANSINV_DATA_DIR");
  return g.data_dir;
}

fs::path out_dir(const Global& g) {
  fs::create_directories(g.out_dir);
  return g.out_dir;
}

std::vector<std::uint64_t> seed_list(const Global& g) {
  if (g.seed && !g.seeds.empty()) throw UsageError("pass either --seed or --seeds, not both");
  if (g.seed) return {*g.seed};
  if (!g.seeds.empty()) return g.seeds;
  return {1, 2, 3};
}

arch::ArchSpec resolve_arch(const std::string& arg) {
  if (arch::is_preset_name(arg)) return arch::preset_by_name(arg);
  if (!fs::is_regular_file(arg)) throw UsageError("'" + arg + "' is neither a preset (tableN:kK) nor an architecture file");
  std::ifstream in(arg);
  std::stringstream text;
  text << in.rdbuf();
  try {
    return arch::parse_arch(text.str());
  } catch (const ArchError& e) {
    throw UsageError(arg + ": " + e.what());
  }
}

void require_input(const arch::ArchSpec& spec, data::DatasetId id) {
  const arch::InputShape expected = id == data::DatasetId::mnist ? arch::InputShape{1, 40, 40} : arch::InputShape{3, 44, 44};
  if (spec.input != expected) {
    throw UsageError("architecture '" + spec.name + "' expects " + std::to_string(spec.input.channels) + "x" +
                     std::to_string(spec.input.height) + "x" + std::to_string(spec.input.width) + " input but " +
                     std::string(data::dataset_name(id)) + " provides " + std::to_string(expected.channels) + "x" +
                     std::to_string(expected.height) + "x" + std::to_string(expected.width));
  }
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      values.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": '" + item + "' is not an integer");
    }
  }
  return values;
}

std::optional<std::uint64_t> seed_from_filename(const fs::path& path) {
  static const std::regex pattern(R"(model_seed(\d+))");
  std::smatch m;
  const auto stem = path.stem().string();
  if (std::regex_search(stem, m, pattern)) return std::stoull(m[1].str());
  return std::nullopt;
}

std::vector<std::pair<std::string, std::uint32_t>> checksums(const data::Provenance& p) {
  std::vector<std::pair<std::string, std::uint32_t>> out;
  for (const auto& c : p.checksums) out.emplace_back(c.file, c.crc32);
  return out;
}

std::vector<std::pair<std::string, std::uint32_t>> test_checksums(const fs::path& dir, data::DatasetId id) {
  std::vector<std::pair<std::string, std::uint32_t>> out;
  for (const auto& p : data::locate_files(dir, id).test) out.emplace_back(p.filename().string(), file_crc32(p));
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

int cmd_train(const Global& g, const TrainArgs& a, std::ostream& out) {
  const auto t0 = Clock::now();
  const auto spec = resolve_arch(a.arch);
  const auto id = data::parse_dataset(a.dataset);
  require_input(spec, id);

  train::TrainConfig config;
  config.arch = spec;
  config.batch_size = a.batch_size;
  if (!a.lrs.empty()) config.initial_lrs = a.lrs;
  config.seeds = seed_list(g);
  config.max_epochs = a.max_epochs;
  config.train_acc_target = a.target;
  config.extra_epochs = a.extra_epochs;
  config.max_edge_extensions = a.edge_extensions;
  config.require_target = !a.no_require_target;
  config.threads = g.threads;
  config.progress = a.progress;

  data::LoadOptions load;
  load.val_size = a.val_size;
  load.split_seed = a.split_seed;
  load.train_limit = a.train_limit;
  const auto split = data::load_dataset(data_dir(g), id, load);
  const auto dir = out_dir(g);

  auto result = train::lr_sweep(config, split);
  std::vector<fs::path> artifacts;
  for (auto& s : result.seeds) {
    if (!s.best_model) {
      out << "seed " << s.seed << ": every run failed\n";
      continue;
    }
    s.best_report->test_acc = train::evaluate(*s.best_model, split.test, g.threads);
    const auto path = dir / ("model_seed" + std::to_string(s.seed) + ".tinv");
    nn::save_checkpoint(*s.best_model, path);
    artifacts.push_back(path);
    out << "seed " << s.seed << " lr=" << *s.chosen_lr << " epoch=" << s.best_report->selected_epoch
        << " train_acc=" << s.best_report->train_acc << " val_acc=" << s.best_report->val_acc
        << " test_acc=" << *s.best_report->test_acc << " -> " << path.string() << '\n';
  }
  const auto report = dir / "sweep_report.json";
  write_text(report, train::sweep_to_json(result, config) + "\n");
  artifacts.push_back(report);

  const json cfg = {
      {"command", "train"},
      {"arch", json::parse(arch::serialize_arch(spec))},
      {"dataset", a.dataset},
      {"lrs", config.initial_lrs},
      {"max_epochs", a.max_epochs},
      {"batch_size", a.batch_size},
      {"train_acc_target", a.target},
      {"extra_epochs", a.extra_epochs},
      {"edge_extensions", a.edge_extensions},
      {"require_target", config.require_target},
      {"train_limit", a.train_limit},
      {"val_size", a.val_size},
      {"split_seed", a.split_seed},
  };
  append_manifest(dir, {g.argv, cfg.dump(), checksums(split.provenance), config.seeds, artifacts, seconds_since(t0)});
  return kExitOk;
}

struct Combo {
  nn::Tap tap;
  sens::Metric metric;
};

int cmd_probe(const Global& g, const ProbeArgs& a, std::ostream& out) {
  const auto t0 = Clock::now();
  std::vector<Combo> combos;
  const bool other_tap = std::ranges::any_of(a.taps, [](const std::string& t) { return t != "fc_out"; });
  const bool wants_accuracy = std::ranges::find(a.metrics, "accuracy") != a.metrics.end();
  if (other_tap && wants_accuracy) {
    throw UsageError("the accuracy metric is defined only at the classifier output (--tap fc_out)");
  }
  for (const auto& t : a.taps) {
    for (const auto& m : a.metrics) {
      const Combo c{nn::parse_tap(t), sens::parse_metric(m)};
      const bool seen = std::ranges::any_of(combos, [&](const Combo& x) { return x.tap == c.tap && x.metric == c.metric; });
      if (!seen) combos.push_back(c);
    }
  }
  std::vector<int> classes = a.classes;
  if (classes.empty()) {
    for (int k = 0; k < 10; ++k) classes.push_back(k);
  }
  for (int k : classes) {
    if (k < 0 || k > 9) throw UsageError("class " + std::to_string(k) + " outside 0..9");
  }

  const auto id = data::parse_dataset(a.dataset);
  const auto model = nn::load_checkpoint(a.checkpoint);
  require_input(model.spec(), id);
  const auto test = data::load_test_set(data_dir(g), id);
  const auto seed = g.seed ? g.seed : seed_from_filename(a.checkpoint);
  const auto dir = out_dir(g);

  sens::MapOptions options;
  options.max_shift = a.max_shift;
  options.threads = g.threads;
  options.sample_limit = a.sample_limit;
  const auto probe = sens::model_probe(model);

  std::vector<fs::path> artifacts;
  for (int k : classes) {
    const auto subset = sens::class_subset(test, k, a.sample_limit);
    if (subset.empty()) throw Error("class " + std::to_string(k) + " has no test samples");
    const auto maps = sens::probe_class(probe, subset, options);
    for (const auto& c : combos) {
      auto map = maps.get(c.tap, c.metric);
      map.seed = seed;
      auto target = dir;
      if (combos.size() > 1) {
        target /= std::string(nn::tap_name(c.tap)) + "_" + std::string(sens::metric_name(c.metric));
        fs::create_directories(target);
      }
      const auto stem = target / ("map_class" + std::to_string(k));
      sens::write_map(map, stem);
      sens::write_pgm(map, fs::path(stem).concat(".pgm"));
      for (const char* ext : {".csv", ".json", ".pgm"}) artifacts.push_back(fs::path(stem).concat(ext));
    }
    out << "class " << k << ": " << subset.size() << " samples\n";
  }

  json combo_list = json::array();
  for (const auto& c : combos) combo_list.push_back({{"tap", nn::tap_name(c.tap)}, {"metric", sens::metric_name(c.metric)}});
  const json cfg = {
      {"command", "probe"},
      {"checkpoint", a.checkpoint},
      {"checkpoint_crc32", file_crc32(a.checkpoint)},
      {"dataset", a.dataset},
      {"maps", std::move(combo_list)},
      {"max_shift", a.max_shift},
      {"classes", classes},
      {"sample_limit", a.sample_limit},
  };
  std::vector<std::uint64_t> seeds;
  if (seed) seeds.push_back(*seed);
  append_manifest(dir, {g.argv, cfg.dump(), test_checksums(data_dir(g), id), seeds, artifacts, seconds_since(t0)});
  return kExitOk;
}

// Maps of one directory, ordered by class.
std::vector<sens::SensitivityMap> read_map_dir(const fs::path& dir) {
  static const std::regex pattern(R"(map_class(\d+)\.csv)");
  if (!fs::is_directory(dir)) throw Error(dir.string() + " is not a directory");
  std::vector<sens::SensitivityMap> maps;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (std::regex_match(name, pattern)) maps.push_back(sens::read_map(entry.path()));
  }
  if (maps.empty()) throw Error("no map_class<k>.csv files in " + dir.string());
  std::ranges::sort(maps, {}, &sens::SensitivityMap::class_id);
  for (std::size_t i = 1; i < maps.size(); ++i) {
    if (maps[i].class_id == maps[i - 1].class_id) {
      throw Error(dir.string() + ": two maps for class " + std::to_string(maps[i].class_id));
    }
  }
  return maps;
}

std::string describe(const sens::SensitivityMap& m) {
  return std::string(nn::tap_name(m.tap)) + "/" + std::string(sens::metric_name(m.metric)) +
         " max_shift=" + std::to_string(m.max_shift());
}

void require_same_classes(const std::vector<std::vector<sens::SensitivityMap>>& dirs,
                          const std::vector<std::string>& names) {
  for (std::size_t d = 1; d < dirs.size(); ++d) {
    const bool same = std::ranges::equal(dirs[d], dirs[0], {}, &sens::SensitivityMap::class_id,
                                         &sens::SensitivityMap::class_id);
    if (!same) throw Error(names[d] + " and " + names[0] + " cover different classes");
  }
}

int cmd_radial(const Global& g, const std::vector<std::string>& dirs, std::ostream& out) {
  const auto t0 = Clock::now();
  std::vector<std::vector<sens::SensitivityMap>> all;
  for (const auto& d : dirs) all.push_back(read_map_dir(d));
  const auto& ref = all[0][0];
  for (std::size_t d = 0; d < all.size(); ++d) {
    for (const auto& m : all[d]) {
      if (m.tap != ref.tap || m.metric != ref.metric || m.max_shift() != ref.max_shift()) {
        throw Error("mixed maps: " + describe(m) + " (class " + std::to_string(m.class_id) + " in " + dirs[d] +
                    ") vs " + describe(ref));
      }
    }
  }
  require_same_classes(all, dirs);

  const auto dir = out_dir(g);
  std::vector<fs::path> artifacts;
  std::vector<sens::RadialProfile> dir_means;
  std::vector<std::vector<sens::RadialProfile>> per_class(all[0].size());
  for (const auto& maps : all) {
    std::vector<sens::RadialProfile> profiles;
    for (std::size_t c = 0; c < maps.size(); ++c) {
      profiles.push_back(sens::radial_profile(maps[c]));
      per_class[c].push_back(profiles.back());
    }
    dir_means.push_back(sens::average_profiles(profiles));
  }
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const auto path = dir / ("radial_class" + std::to_string(all[0][c].class_id) + ".csv");
    sens::write_profile_csv(sens::average_profiles(per_class[c]), path);
    artifacts.push_back(path);
  }
  const auto mean_path = dir / "radial_mean.csv";
  const auto mean = sens::average_profiles(dir_means);
  sens::write_profile_csv(mean, mean_path);
  artifacts.push_back(mean_path);
  for (std::size_t i = 0; i < mean.radii.size(); ++i) out << "r=" << mean.radii[i] << ' ' << mean.values[i] << '\n';

  std::vector<std::uint64_t> seeds;
  for (const auto& maps : all) {
    if (maps[0].seed) seeds.push_back(*maps[0].seed);
  }
  const json cfg = {{"command", "radial"}, {"dirs", dirs}, {"tap", nn::tap_name(ref.tap)},
                    {"metric", sens::metric_name(ref.metric)}, {"max_shift", ref.max_shift()}};
  append_manifest(dir, {g.argv, cfg.dump(), {}, seeds, artifacts, seconds_since(t0)});
  return kExitOk;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

int cmd_correlate(const Global& g, const std::vector<std::string>& dirs, std::ostream& out) {
  const auto t0 = Clock::now();
  std::vector<std::vector<sens::SensitivityMap>> all;
  for (const auto& d : dirs) all.push_back(read_map_dir(d));
  for (std::size_t d = 0; d < all.size(); ++d) {
    for (const auto& m : all[d]) {
      if (m.max_shift() != all[0][0].max_shift()) {
        throw Error("shift grids differ: " + dirs[d] + " has max_shift " + std::to_string(m.max_shift()) + ", " +
                    dirs[0] + " has " + std::to_string(all[0][0].max_shift()));
      }
    }
  }
  require_same_classes(all, dirs);

  json pairs = json::array();
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      json classes = json::array();
      double sum = 0.0;
      std::size_t defined = 0;
      for (std::size_t c = 0; c < all[i].size(); ++c) {
        const auto r = sens::correlate_maps(all[i][c], all[j][c]);
        classes.push_back({{"class", all[i][c].class_id}, {"r", optional_json(r)}, {"defined", r.has_value()}});
        if (r) {
          sum += *r;
          ++defined;
        }
      }
      const std::optional<double> mean = defined ? std::optional(sum / static_cast<double>(defined)) : std::nullopt;
      auto side = [&](std::size_t d) {
        return json{{"dir", dirs[d]}, {"tap", nn::tap_name(all[d][0].tap)}, {"metric", sens::metric_name(all[d][0].metric)}};
      };
      pairs.push_back({{"a", side(i)},
                       {"b", side(j)},
                       {"classes", std::move(classes)},
                       {"mean", optional_json(mean)},
                       {"defined", defined},
                       {"undefined", all[i].size() - defined}});
      out << dirs[i] << " vs " << dirs[j] << ": mean r = ";
      if (mean) {
        out << *mean;
      } else {
        out << "undefined";
      }
      out << " (" << defined << " of " << all[i].size() << " classes defined)\n";
    }
  }
  const auto dir = out_dir(g);
  const auto path = dir / "correlation.json";
  write_text(path, json{{"pairs", pairs}}.dump(2) + "\n");
  append_manifest(dir, {g.argv, json{{"command", "correlate"}, {"dirs", dirs}}.dump(), {}, {}, {path}, seconds_since(t0)});
  return kExitOk;
}

int cmd_featuremaps(const Global& g, const FeatureArgs& a, std::ostream& out) {
  const auto t0 = Clock::now();
  const auto shift = parse_int_list(a.shift, "--shift");
  if (shift.size() != 2) throw UsageError("--shift expects dx,dy");
  const auto channels = parse_int_list(a.channels, "--channels");

  const auto id = data::parse_dataset(a.dataset);
  const auto model = nn::load_checkpoint(a.checkpoint);
  require_input(model.spec(), id);
  const int channel_count = model.spec().conv_blocks.back().channels;
  for (int c : channels) {
    if (c < 0 || c >= channel_count) {
      throw UsageError("channel " + std::to_string(c) + " outside 0.." + std::to_string(channel_count - 1));
    }
  }
  const auto test = data::load_test_set(data_dir(g), id);
  if (a.index >= test.size()) {
    throw UsageError("sample index " + std::to_string(a.index) + " outside the " + std::to_string(test.size()) +
                     "-sample test set");
  }

  const auto& image = test[a.index].image;
  const std::array<nn::Tensor<float>, 2> inputs{image, data::translate_image(image, shift[0], shift[1])};
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  nn::Tensor<float> batch({2, C, H, W});
  for (std::size_t n = 0; n < 2; ++n) std::ranges::copy(inputs[n].data(), batch.raw() + n * image.size());
  const auto taps = model.forward_taps(batch);
  const auto trace = arch::infer_shapes(model.spec());
  const auto pool3 = std::ranges::find(trace, std::string("Max-Pool3"), &arch::ShapeStep::layer);
  const int h = pool3->height, w = pool3->width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  const auto dir = out_dir(g);
  std::vector<fs::path> artifacts;
  const std::array<const char*, 2> condition{"normal", "shifted"};
  for (std::size_t n = 0; n < 2; ++n) {
    std::vector<double> gray(H * W, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < H * W; ++i) gray[i] += inputs[n][c * H * W + i] / static_cast<double>(C);
    }
    const auto path = dir / (std::string("input_") + condition[n] + ".pgm");
    sens::write_pgm(gray, static_cast<int>(W), static_cast<int>(H), path, 0.0, 1.0);
    artifacts.push_back(path);
  }
  for (int c : channels) {
    std::array<std::vector<double>, 2> planes;
    for (std::size_t n = 0; n < 2; ++n) {
      const float* src = taps.conv_final.raw() + n * taps.conv_final.dim(1) + static_cast<std::size_t>(c) * plane;
      planes[n].assign(src, src + plane);
    }
    // Shared scale so the two conditions are directly comparable.
    double lo = planes[0][0], hi = planes[0][0];
    for (const auto& p : planes) {
      const auto [mn, mx] = std::ranges::minmax(p);
      lo = std::min(lo, mn);
      hi = std::max(hi, mx);
    }
    for (std::size_t n = 0; n < 2; ++n) {
      const auto path = dir / ("ch" + std::to_string(c) + "_" + condition[n] + ".pgm");
      sens::write_pgm(planes[n], w, h, path, lo, hi);
      artifacts.push_back(path);
    }
  }
  out << "wrote " << artifacts.size() << " images to " << dir.string() << '\n';

  const json cfg = {{"command", "featuremaps"}, {"checkpoint", a.checkpoint}, {"dataset", a.dataset},
                    {"index", a.index}, {"shift", shift}, {"channels", channels}};
  append_manifest(dir, {g.argv, cfg.dump(), test_checksums(data_dir(g), id), {}, artifacts, seconds_since(t0)});
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Translation-sensitivity experiments on small CNNs", "transinv"};
  app.set_version_flag("--version", TRANSINV_VERSION);
  app.require_subcommand(1);

  Global g;
  g.argv = args;
  g.argv.insert(g.argv.begin(), "transinv");
  app.add_option("--data-dir", g.data_dir, "Dataset root holding mnist/ and cifar10/")->envname("TRANSINV_DATA_DIR");
  app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (results do not depend on it)")
      ->check(CLI::Range(1u, 1024u))
      ->capture_default_str();
  app.add_option("--seeds", g.seeds, "Comma-separated training seeds (default 1,2,3)")->delimiter(',');
  app.add_option("--seed", g.seed, "Single seed; for probe, the seed recorded in map metadata");

  const std::vector<std::string> datasets{"mnist", "cifar10"};

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Learning-rate sweep and one checkpoint per seed");
  train->fallthrough();
  train->add_option("--arch", ta.arch, "Preset tableN:kK or architecture JSON file")->required();
  train->add_option("--dataset", ta.dataset)->required()->check(CLI::IsMember(datasets));
  train->add_option("--lrs", ta.lrs, "Initial learning rates (default 0.0005,0.001,0.002,0.005)")->delimiter(',');
  train->add_option("--max-epochs", ta.max_epochs)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--batch-size", ta.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--target", ta.target, "Training-accuracy target")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  train->add_option("--extra-epochs", ta.extra_epochs, "Epochs to continue after the target is met")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--edge-extensions", ta.edge_extensions, "Maximum learning-rate extensions per edge")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train->add_flag("--no-require-target", ta.no_require_target, "Keep runs that never reach the target");
  train->add_option("--train-limit", ta.train_limit, "Use only the first N training samples (0 = all)");
  train->add_option("--val-size", ta.val_size)->capture_default_str();
  train->add_option("--split-seed", ta.split_seed)->capture_default_str();
  train->add_flag("--progress", ta.progress, "Per-epoch progress on stderr");

  ProbeArgs pa;
  const std::vector<std::string> tap_names{"conv_final", "fc_out", "fc_softmax"};
  const std::vector<std::string> metric_names{"cosine", "euclidean", "accuracy"};
  auto* probe = app.add_subcommand("probe", "Per-class translation-sensitivity maps");
  probe->fallthrough();
  probe->add_option("--checkpoint", pa.checkpoint)->required()->check(CLI::ExistingFile);
  probe->add_option("--dataset", pa.dataset)->required()->check(CLI::IsMember(datasets));
  probe->add_option("--tap", pa.taps, "conv_final, fc_out (logits) and/or fc_softmax")
      ->delimiter(',')
      ->check(CLI::IsMember(tap_names));
  probe->add_option("--metric", pa.metrics, "cosine, euclidean and/or accuracy")
      ->delimiter(',')
      ->check(CLI::IsMember(metric_names));
  probe->add_option("--max-shift", pa.max_shift)->check(CLI::Range(0, 64))->capture_default_str();
  probe->add_option("--classes", pa.classes, "Classes to map (default 0..9)")->delimiter(',');
  probe->add_option("--sample-limit", pa.sample_limit, "At most N samples per class (0 = all)");

  std::vector<std::string> radial_dirs;
  auto* radial = app.add_subcommand("radial", "Radial profiles of a directory of maps (several: seed average)");
  radial->fallthrough();
  radial->add_option("dirs", radial_dirs)->required();

  std::vector<std::string> correlate_dirs;
  auto* correlate = app.add_subcommand("correlate", "Per-class Pearson correlation between map directories");
  correlate->fallthrough();
  correlate->add_option("dirs", correlate_dirs)->required()->expected(2, 3);

  FeatureArgs fa;
  auto* features = app.add_subcommand("featuremaps", "Final conv feature maps for a normal and a shifted sample");
  features->fallthrough();
  features->add_option("--checkpoint", fa.checkpoint)->required()->check(CLI::ExistingFile);
  features->add_option("--dataset", fa.dataset)->required()->check(CLI::IsMember(datasets));
  features->add_option("--index", fa.index, "Test-set sample index")->capture_default_str();
  features->add_option("--shift", fa.shift, "dx,dy (use --shift=-4,0 for negative values)")->capture_default_str();
  features->add_option("--channels", fa.channels, "Comma-separated channels; empty for none")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(g, ta, out);
    if (*probe) return cmd_probe(g, pa, out);
    if (*radial) return cmd_radial(g, radial_dirs, out);
    if (*correlate) return cmd_correlate(g, correlate_dirs, out);
    return cmd_featuremaps(g, fa, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace transinv::cli
