#include <gtest/gtest.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "test_support.hpp"
#include "transinv/checkpoint.hpp"
#include "transinv/cli.hpp"
#include "transinv/sensitivity_io.hpp"

using namespace transinv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_files(const fs::path& dir, const std::string& suffix) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename().string().ends_with(suffix)) ++n;
  }
  return n;
}

std::size_t line_count(const fs::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

std::string bytes_of(const fs::path& path) { return transinv::testing::read_text(path); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new transinv::testing::TempDir();
    transinv::testing::write_synthetic_mnist(root_->path(), 220, 60, 3);
    const auto r = run({"train", "--arch", "table1:k5", "--dataset", "mnist", "--seeds", "1", "--lrs", "0.002",
                        "--max-epochs", "1", "--no-require-target", "--val-size", "20", "--data-dir", data(),
                        "--out-dir", (root_->path() / "model").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete root_;
    root_ = nullptr;
  }

  static std::string data() { return root_->path().string(); }
  static std::string checkpoint() { return (root_->path() / "model" / "model_seed1.tinv").string(); }

  transinv::testing::TempDir out_;
  std::string out(const std::string& sub) const { return (out_.path() / sub).string(); }

  static transinv::testing::TempDir* root_;
};

transinv::testing::TempDir* Cli::root_ = nullptr;

}  // namespace

TEST_F(Cli, TrainWritesOneCheckpointPerSeed) {
  const auto r = run({"train", "--arch", "table1:k5", "--dataset", "mnist", "--lrs", "0.002", "--max-epochs", "1",
                      "--no-require-target", "--val-size", "20", "--train-limit", "64", "--data-dir", data(),
                      "--out-dir", out("t")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (int s = 1; s <= 3; ++s) EXPECT_TRUE(fs::exists(out("t") + "/model_seed" + std::to_string(s) + ".tinv"));
  EXPECT_EQ(count_files(out("t"), ".tinv"), 3u);
  const auto report = nlohmann::json::parse(bytes_of(out("t") + "/sweep_report.json"));
  EXPECT_EQ(report["seeds"].size(), 3u);
  EXPECT_FALSE(report["seeds"][0]["best"]["test_acc"].is_null());
}

TEST_F(Cli, SingleSeedSmokeMode) {
  EXPECT_EQ(count_files(fs::path(checkpoint()).parent_path(), ".tinv"), 1u);
}

TEST_F(Cli, UnknownPresetIsUsageError) {
  const auto r = run({"train", "--arch", "table9:k5", "--dataset", "mnist", "--data-dir", data()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("table9:k5"), std::string::npos);
}

TEST_F(Cli, ArchFileAccepted) {
  const auto path = out_.path() / "arch.json";
  std::ofstream(path) << arch::serialize_arch(arch::scale_width(arch::preset(1, 5), 0.2));
  const auto r = run({"train", "--arch", path.string(), "--dataset", "mnist", "--seeds", "2", "--lrs", "0.002",
                      "--max-epochs", "1", "--no-require-target", "--val-size", "20", "--train-limit", "32",
                      "--data-dir", data(), "--out-dir", out("a")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nn::load_checkpoint(out("a") + "/model_seed2.tinv").spec().conv_blocks[2].channels, 6);
}

TEST_F(Cli, DatasetMismatchIsUsageError) {
  const auto r = run({"train", "--arch", "table2:k5", "--dataset", "mnist", "--data-dir", data()});
  EXPECT_EQ(r.code, cli::kExitUsage);
}

TEST_F(Cli, BadFlagsAreUsageErrors) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"train", "--dataset", "mnist"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"train", "--arch", "table1:k5", "--dataset", "svhn"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"probe", "--checkpoint", checkpoint(), "--dataset", "mnist", "--tap", "fc7"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST_F(Cli, MissingDataIsRuntimeFailure) {
  const auto r = run({"train", "--arch", "table2:k5", "--dataset", "cifar10", "--data-dir", data(), "--out-dir",
                      out("x")});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find("missing data file"), std::string::npos);
}

TEST_F(Cli, ProbeWritesTenFullMaps) {
  const auto r = run({"probe", "--checkpoint", checkpoint(), "--dataset", "mnist", "--sample-limit", "1",
                      "--data-dir", data(), "--out-dir", out("p")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_files(out("p"), ".csv"), 10u);
  EXPECT_EQ(count_files(out("p"), ".pgm"), 10u);
  for (int k = 0; k < 10; ++k) {
    EXPECT_EQ(line_count(out("p") + "/map_class" + std::to_string(k) + ".csv"), 442u);
    const auto map = sens::read_map(out("p") + "/map_class" + std::to_string(k) + ".csv");
    EXPECT_EQ(map.at(0, 0), 1.0);
    EXPECT_EQ(map.seed, std::optional<std::uint64_t>(1));
  }
  EXPECT_TRUE(cli::verify_manifest(out("p")).empty());
}

TEST_F(Cli, ProbeMaxShiftOne) {
  const auto r = run({"probe", "--checkpoint", checkpoint(), "--dataset", "mnist", "--max-shift", "1",
                      "--sample-limit", "1", "--classes", "2", "--data-dir", data(), "--out-dir", out("p1")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(out("p1") + "/map_class2.csv"), 10u);
}

TEST_F(Cli, ProbeSeveralMapsGoToSubdirectories) {
  const auto r = run({"probe", "--checkpoint", checkpoint(), "--dataset", "mnist", "--tap", "conv_final,fc_out",
                      "--metric", "cosine,euclidean", "--max-shift", "2", "--sample-limit", "1", "--data-dir", data(),
                      "--out-dir", out("pm")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* sub : {"conv_final_cosine", "conv_final_euclidean", "fc_out_cosine", "fc_out_euclidean"}) {
    EXPECT_EQ(count_files(out("pm") + "/" + sub, ".csv"), 10u) << sub;
  }
}

TEST_F(Cli, ProbeSoftmaxTap) {
  const auto r = run({"probe", "--checkpoint", checkpoint(), "--dataset", "mnist", "--tap", "fc_softmax",
                      "--max-shift", "2", "--sample-limit", "1", "--classes", "7", "--data-dir", data(), "--out-dir",
                      out("ps")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto map = sens::read_map(out("ps") + "/map_class7.csv");
  EXPECT_EQ(map.tap, nn::Tap::fc_softmax);
  EXPECT_EQ(map.at(0, 0), 1.0);
  for (double v : map.values()) EXPECT_GE(v, 0.0);
  EXPECT_EQ(run({"probe", "--checkpoint", checkpoint(), "--dataset", "mnist", "--metric", "accuracy", "--tap",
                 "fc_softmax", "--data-dir", data(), "--out-dir", out("ps2")})
                .code,
            cli::kExitUsage);
}

TEST_F(Cli, AccuracyAtConvTapRejected) {
  const auto r = run({"probe", "--checkpoint", checkpoint(), "--dataset", "mnist", "--metric", "accuracy", "--tap",
                      "conv_final", "--data-dir", data(), "--out-dir", out("bad")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_FALSE(fs::exists(out("bad") + "/map_class0.csv"));
}

namespace {

void write_constant_maps(const fs::path& dir, double value, int max_shift, sens::Metric metric = sens::Metric::cosine,
                         std::uint64_t seed = 1) {
  fs::create_directories(dir);
  for (int k = 0; k < 10; ++k) {
    sens::SensitivityMap map(max_shift, metric, sens::Tap::fc_out, k);
    for (auto& v : map.values()) v = value;
    map.seed = seed;
    sens::write_map(map, dir / ("map_class" + std::to_string(k)));
  }
}

}  // namespace

TEST_F(Cli, RadialWritesElevenProfiles) {
  write_constant_maps(out("m"), 0.75, 10);
  const auto r = run({"radial", out("m"), "--out-dir", out("r")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_files(out("r"), ".csv"), 11u);
  for (double v : sens::read_profile_csv(out("r") + "/radial_mean.csv").values) EXPECT_EQ(v, 0.75);
  for (double v : sens::read_profile_csv(out("r") + "/radial_class3.csv").values) EXPECT_EQ(v, 0.75);
}

TEST_F(Cli, RadialAveragesSeedDirectories) {
  write_constant_maps(out("s1"), 0.2, 10, sens::Metric::cosine, 1);
  write_constant_maps(out("s2"), 0.4, 10, sens::Metric::cosine, 2);
  write_constant_maps(out("s3"), 0.9, 10, sens::Metric::cosine, 3);
  const auto r = run({"radial", out("s1"), out("s2"), out("s3"), "--out-dir", out("r3")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (double v : sens::read_profile_csv(out("r3") + "/radial_mean.csv").values) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST_F(Cli, RadialRejectsMixedMetadata) {
  write_constant_maps(out("c"), 0.5, 10);
  write_constant_maps(out("e"), 0.5, 10, sens::Metric::euclidean);
  EXPECT_EQ(run({"radial", out("c"), out("e"), "--out-dir", out("rx")}).code, cli::kExitFailure);
  fs::copy_file(out("e") + "/map_class0.csv", out("c") + "/map_class0.csv", fs::copy_options::overwrite_existing);
  fs::copy_file(out("e") + "/map_class0.json", out("c") + "/map_class0.json", fs::copy_options::overwrite_existing);
  EXPECT_EQ(run({"radial", out("c"), "--out-dir", out("ry")}).code, cli::kExitFailure);
}

TEST_F(Cli, CorrelateDirectoryWithItself) {
  ASSERT_EQ(run({"probe", "--checkpoint", checkpoint(), "--dataset", "mnist", "--max-shift", "3", "--sample-limit",
                 "2", "--data-dir", data(), "--out-dir", out("cm")})
                .code,
            0);
  const auto r = run({"correlate", out("cm"), out("cm"), "--out-dir", out("cr")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(bytes_of(out("cr") + "/correlation.json"));
  ASSERT_EQ(j["pairs"].size(), 1u);
  for (const auto& c : j["pairs"][0]["classes"]) {
    ASSERT_TRUE(c["defined"].get<bool>());
    EXPECT_NEAR(c["r"].get<double>(), 1.0, 1e-12);
  }
}

TEST_F(Cli, CorrelateFlagsUndefinedEntries) {
  write_constant_maps(out("k1"), 0.5, 2);
  write_constant_maps(out("k2"), 0.5, 2);
  const auto r = run({"correlate", out("k1"), out("k2"), "--out-dir", out("kr")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(bytes_of(out("kr") + "/correlation.json"));
  EXPECT_TRUE(j["pairs"][0]["mean"].is_null());
  EXPECT_EQ(j["pairs"][0]["undefined"].get<int>(), 10);
  EXPECT_TRUE(j["pairs"][0]["classes"][0]["r"].is_null());
}

TEST_F(Cli, CorrelateRejectsGridMismatch) {
  write_constant_maps(out("g1"), 0.5, 2);
  write_constant_maps(out("g2"), 0.5, 3);
  EXPECT_EQ(run({"correlate", out("g1"), out("g2"), "--out-dir", out("gr")}).code, cli::kExitFailure);
  EXPECT_EQ(run({"correlate", out("g1"), "--out-dir", out("gr")}).code, cli::kExitUsage);
}

TEST_F(Cli, FeatureMapsForThreeChannels) {
  const auto r = run({"featuremaps", "--checkpoint", checkpoint(), "--dataset", "mnist", "--channels", "0,1,2",
                      "--shift", "4,0", "--data-dir", data(), "--out-dir", out("f")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_files(out("f"), ".pgm"), 8u);
}

TEST_F(Cli, FeatureMapsWithoutShiftAreIdentical) {
  const auto r = run({"featuremaps", "--checkpoint", checkpoint(), "--dataset", "mnist", "--channels", "0,5",
                      "--shift", "0,0", "--data-dir", data(), "--out-dir", out("f0")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const std::string stem : {"input", "ch0", "ch5"}) {
    EXPECT_EQ(bytes_of(out("f0") + "/" + stem + "_normal.pgm"), bytes_of(out("f0") + "/" + stem + "_shifted.pgm"));
  }
}

TEST_F(Cli, FeatureMapsChannelListMayBeEmpty) {
  const auto r = run({"featuremaps", "--checkpoint", checkpoint(), "--dataset", "mnist", "--channels", "",
                      "--shift=-3,2", "--data-dir", data(), "--out-dir", out("fe")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_files(out("fe"), ".pgm"), 2u);
}

TEST_F(Cli, FeatureMapsChannelOutOfRange) {
  const auto r = run({"featuremaps", "--checkpoint", checkpoint(), "--dataset", "mnist", "--channels", "30",
                      "--data-dir", data(), "--out-dir", out("fr")});
  EXPECT_EQ(r.code, cli::kExitUsage);
}

TEST_F(Cli, TrainIsBitIdenticalAcrossThreadCounts) {
  std::vector<std::string> base{"train", "--arch", "table1:k5", "--dataset", "mnist", "--seeds", "4", "--lrs",
                                "0.002", "--max-epochs", "1", "--no-require-target", "--val-size", "20",
                                "--train-limit", "80", "--data-dir", data()};
  auto a = base, b = base;
  a.insert(a.end(), {"--threads", "1", "--out-dir", out("d1")});
  b.insert(b.end(), {"--threads", "3", "--out-dir", out("d3")});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  EXPECT_TRUE(bytes_of(out("d1") + "/model_seed4.tinv") == bytes_of(out("d3") + "/model_seed4.tinv"));
}

TEST_F(Cli, ManifestListsEveryOutput) {
  ASSERT_EQ(run({"featuremaps", "--checkpoint", checkpoint(), "--dataset", "mnist", "--data-dir", data(),
                 "--out-dir", out("mf")})
                .code,
            0);
  const auto j = nlohmann::json::parse(bytes_of(out("mf") + "/manifest.json"));
  ASSERT_EQ(j["runs"].size(), 1u);
  const auto& run0 = j["runs"][0];
  std::set<std::string> listed;
  for (const auto& a : run0["artifacts"]) listed.insert(a["path"].get<std::string>());
  for (const auto& e : fs::directory_iterator(out("mf"))) {
    const auto name = e.path().filename().string();
    if (name != "manifest.json") {
      EXPECT_TRUE(listed.contains(name)) << name;
    }
  }
  EXPECT_EQ(run0["command"].get<std::string>().substr(0, 20), "transinv featuremaps");
  EXPECT_FALSE(run0["datasets"].empty());
  EXPECT_TRUE(cli::verify_manifest(out("mf")).empty());
  std::ofstream(out("mf") + "/input_normal.pgm", std::ios::app) << "tamper";
  EXPECT_EQ(cli::verify_manifest(out("mf")), std::vector<std::string>{"input_normal.pgm"});
}

TEST_F(Cli, DataDirFromEnvironment) {
  ::setenv("TRANSINV_DATA_DIR", data().c_str(), 1);
  const auto r = run({"featuremaps", "--checkpoint", checkpoint(), "--dataset", "mnist", "--out-dir", out("env")});
  ::unsetenv("TRANSINV_DATA_DIR");
  EXPECT_EQ(r.code, 0) << r.err;
}
