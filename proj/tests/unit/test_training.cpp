#include <gtest/gtest.h>

#include <map>
#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "transinv/checkpoint.hpp"
#include "transinv/training.hpp"

using namespace transinv;
using namespace transinv::train;

namespace {

arch::ArchSpec small_mnist_arch() {
  arch::ArchSpec spec;
  spec.name = "small";
  spec.input = {1, 40, 40};
  spec.conv_blocks = {{5, 1, 2, 2, 4}, {5, 1, 2, 2, 4}, {3, 1, 1, 1, 4}};
  spec.hidden_units = 32;
  return spec;
}

const data::DatasetSplit& synthetic_split() {
  static const data::DatasetSplit split = [] {
    transinv::testing::TempDir dir;
    transinv::testing::write_synthetic_mnist(dir.path(), 300, 100, 5);
    data::LoadOptions options;
    options.val_size = 60;
    return data::load_dataset(dir.path(), data::DatasetId::mnist, options);
  }();
  return split;
}

TrainConfig small_config() {
  TrainConfig config;
  config.arch = small_mnist_arch();
  config.batch_size = 32;
  config.max_epochs = 2;
  config.require_target = false;
  return config;
}

// Runs the protocol against a table of validation accuracies; lrs missing
// from the table fail.
SweepTrace protocol(const std::map<double, double>& table, std::vector<double> initial, int max_ext = 3) {
  TrainConfig config;
  config.initial_lrs = std::move(initial);
  config.max_edge_extensions = max_ext;
  return run_sweep_protocol(config, [&](double lr) {
    for (const auto& [k, v] : table) {
      if (std::abs(k - lr) < 1e-12) return RunOutcome{false, v};
    }
    return RunOutcome{true, 0.0};
  });
}

}  // namespace

TEST(SweepProtocol, InteriorWinnerNeedsNoExtension) {
  const auto t = protocol({{0.0005, 0.9}, {0.001, 0.95}, {0.002, 0.93}, {0.005, 0.8}}, {0.0005, 0.001, 0.002, 0.005});
  EXPECT_EQ(t.lrs.size(), 4u);
  ASSERT_TRUE(t.winner);
  EXPECT_DOUBLE_EQ(t.lrs[*t.winner], 0.001);
  EXPECT_EQ(t.low_extensions + t.high_extensions, 0);
}

TEST(SweepProtocol, HighEdgeWinnerExtendsWhileItKeepsWinning) {
  const auto t = protocol({{0.001, 0.90}, {0.002, 0.91}, {0.003, 0.92}, {0.004, 0.93}, {0.005, 0.925}},
                          {0.001, 0.002});
  EXPECT_EQ(t.lrs, (std::vector<double>{0.001, 0.002, 0.003, 0.004, 0.005}));
  EXPECT_EQ(t.high_extensions, 3);
  ASSERT_TRUE(t.winner);
  EXPECT_DOUBLE_EQ(t.lrs[*t.winner], 0.004);
}

TEST(SweepProtocol, ExtensionsAreCapped) {
  const auto t = protocol({{0.001, 0.1}, {0.002, 0.2}, {0.003, 0.3}, {0.004, 0.4}, {0.005, 0.5}, {0.006, 0.6}},
                          {0.001, 0.002}, 2);
  EXPECT_EQ(t.high_extensions, 2);
  EXPECT_DOUBLE_EQ(t.lrs.back(), 0.004);
}

TEST(SweepProtocol, LowEdgeExtensionIsFloored) {
  const auto t = protocol({{0.0001, 0.97}, {0.0005, 0.96}, {0.001, 0.95}, {0.002, 0.9}}, {0.0005, 0.001, 0.002});
  // 0.0005 - 0.001 < 0, so the next rate tried is the floor.
  ASSERT_EQ(t.lrs.size(), 4u);
  EXPECT_DOUBLE_EQ(t.lrs[3], 0.0001);
  EXPECT_EQ(t.low_extensions, 1);
  EXPECT_DOUBLE_EQ(t.lrs[*t.winner], 0.0001);
}

TEST(SweepProtocol, TieGoesToLowerRate) {
  const auto t = protocol({{0.0005, 0.9}, {0.001, 0.95}, {0.002, 0.95}, {0.005, 0.8}}, {0.0005, 0.001, 0.002, 0.005});
  EXPECT_DOUBLE_EQ(t.lrs[*t.winner], 0.001);
}

TEST(SweepProtocol, FailedRunsNeverWin) {
  const auto t = protocol({{0.001, 0.5}, {0.002, 0.6}}, {0.001, 0.002, 0.005});
  EXPECT_DOUBLE_EQ(t.lrs[*t.winner], 0.002);
  EXPECT_EQ(t.high_extensions, 0);
  const auto none = protocol({}, {0.001, 0.002});
  EXPECT_FALSE(none.winner);
}

TEST(SweepProtocol, SingleRateIsNotExtended) {
  const auto t = protocol({{0.001, 0.9}, {0.002, 0.95}}, {0.001});
  EXPECT_EQ(t.lrs, (std::vector<double>{0.001}));
}

TEST(SweepProtocol, RejectsBadRates) {
  EXPECT_THROW(protocol({}, {}), Error);
  EXPECT_THROW(protocol({}, {0.001, -1.0}), Error);
}

TEST(TrainOne, ZeroLearningRateLeavesParameters) {
  const auto result = train_one(small_config(), 0.0, 3, synthetic_split());
  EXPECT_TRUE(result.model == nn::Model<float>::he_initialized(small_mnist_arch(), 3));
}

TEST(TrainOne, SameInputsBitIdenticalCheckpoints) {
  const auto a = train_one(small_config(), 0.002, 4, synthetic_split());
  const auto b = train_one(small_config(), 0.002, 4, synthetic_split());
  EXPECT_EQ(nn::encode_checkpoint(a.model), nn::encode_checkpoint(b.model));
}

TEST(TrainOne, ThreadCountDoesNotChangeResult) {
  auto config = small_config();
  config.threads = 1;
  const auto a = train_one(config, 0.002, 5, synthetic_split());
  config.threads = 3;
  const auto b = train_one(config, 0.002, 5, synthetic_split());
  EXPECT_EQ(nn::encode_checkpoint(a.model), nn::encode_checkpoint(b.model));
  EXPECT_EQ(a.report.val_acc, b.report.val_acc);
}

TEST(TrainOne, LearnsSyntheticDigits) {
  auto config = small_config();
  config.max_epochs = 6;
  const auto r = train_one(config, 0.002, 6, synthetic_split());
  EXPECT_FALSE(r.report.failed);
  EXPECT_GT(evaluate(r.model, synthetic_split().test), 0.8);
}

TEST(TrainOne, SnapshotQualifiesOnTarget) {
  auto config = small_config();
  config.require_target = true;
  config.train_acc_target = 0.5;
  config.max_epochs = 10;
  const auto r = train_one(config, 0.002, 7, synthetic_split());
  ASSERT_FALSE(r.report.failed) << r.report.failure;
  EXPECT_GE(r.report.train_acc, 0.5);
  EXPECT_EQ(r.report.stopping_epoch, r.report.selected_epoch);
  EXPECT_EQ(r.report.epochs.size(), static_cast<std::size_t>(r.report.stopping_epoch));
}

TEST(TrainOne, UnreachableTargetFails) {
  auto config = small_config();
  config.require_target = true;
  config.train_acc_target = 1.0;
  config.max_epochs = 1;
  const auto r = train_one(config, 0.0, 8, synthetic_split());
  EXPECT_TRUE(r.report.failed);
  EXPECT_EQ(r.report.failure_epoch, 1);
}

TEST(TrainOne, DivergenceIsReported) {
  const auto r = train_one(small_config(), 1e38, 9, synthetic_split());
  EXPECT_TRUE(r.report.failed);
  EXPECT_NE(r.report.failure.find("diverged"), std::string::npos);
}

TEST(LrSweep, ReportsEverySeed) {
  auto config = small_config();
  config.max_epochs = 1;
  config.initial_lrs = {0.001, 0.002};
  config.max_edge_extensions = 0;
  config.seeds = {1, 2};
  const auto result = lr_sweep(config, synthetic_split());
  ASSERT_EQ(result.seeds.size(), 2u);
  for (const auto& s : result.seeds) {
    EXPECT_EQ(s.runs.size(), 2u);
    ASSERT_TRUE(s.best_model);
    ASSERT_TRUE(s.chosen_lr);
  }
  const auto j = nlohmann::json::parse(sweep_to_json(result, config));
  EXPECT_EQ(j["seeds"].size(), 2u);
  EXPECT_EQ(j["seeds"][0]["runs"].size(), 2u);
}

TEST(LrSweep, AllFailedThrows) {
  auto config = small_config();
  config.max_epochs = 1;
  config.initial_lrs = {1e30};
  config.seeds = {1};
  EXPECT_THROW(lr_sweep(config, synthetic_split()), Error);
}

namespace {

// Ten input channels; class k lights channel k. With 1x1 identity kernels,
// identity dense layers and zero biases the logits are the one-hot label.
std::pair<nn::Model<float>, std::vector<data::Sample>> one_hot_oracle() {
  arch::ArchSpec spec;
  spec.name = "oracle";
  spec.input = {10, 8, 8};
  spec.conv_blocks = {{1, 1, 0, 0, 10}, {1, 1, 0, 0, 10}, {1, 1, 0, 0, 10}};
  spec.hidden_units = 10;
  nn::Model<float> model(spec);
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t c = 0; c < 10; ++c) model.conv(b).kernels.at({c, c, 0, 0}) = 1.0f;
  }
  for (std::size_t c = 0; c < 10; ++c) {
    model.hidden().weights.at({c, c}) = 1.0f;
    model.output().weights.at({c, c}) = 1.0f;
  }
  std::vector<data::Sample> samples;
  for (int i = 0; i < 50; ++i) {
    nn::Tensor<float> img({10, 8, 8});
    for (std::size_t p = 0; p < 64; ++p) img[static_cast<std::size_t>(i % 10) * 64 + p] = 1.0f;
    samples.push_back({std::move(img), i % 10});
  }
  return {std::move(model), std::move(samples)};
}

}  // namespace

TEST(Evaluate, OneHotModelIsPerfect) {
  const auto [model, samples] = one_hot_oracle();
  EXPECT_EQ(evaluate(model, samples), 1.0);
  const auto predictions = predict(model, samples);
  for (std::size_t i = 0; i < samples.size(); ++i) EXPECT_EQ(predictions[i], samples[i].label);
}

TEST(Evaluate, ConstantLogitsPickClassZero) {
  auto [model, samples] = one_hot_oracle();
  nn::Model<float> zero(model.spec());
  EXPECT_DOUBLE_EQ(evaluate(zero, samples), 0.1);
}

TEST(Evaluate, EmptyInputRejected) {
  const auto [model, samples] = one_hot_oracle();
  EXPECT_THROW(evaluate(model, std::span<const data::Sample>{}), Error);
}

TEST(RealData, FreshModelIsAtChance) {
  const auto root = transinv::testing::data_dir();
  if (root.empty() || !std::filesystem::exists(root / "mnist")) GTEST_SKIP() << "TRANSINV_DATA_DIR not set";
  const auto test = data::load_test_set(root, data::DatasetId::mnist);
  const auto model = nn::Model<float>::he_initialized(arch::preset(1, 5), 1);
  EXPECT_NEAR(evaluate(model, test), 0.1, 0.05);
}
