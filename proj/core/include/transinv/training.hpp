#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transinv/archspec.hpp"
#include "transinv/datasets.hpp"
#include "transinv/model.hpp"

namespace transinv::train {

// Samples per gradient chunk. Each chunk's gradient is computed
// independently and chunks are summed in index order, so results do not
// depend on how many worker threads share the chunks.
inline constexpr std::size_t kChunkSize = 16;

struct TrainConfig {
  arch::ArchSpec arch;
  int batch_size = 128;
  std::vector<double> initial_lrs{0.0005, 0.001, 0.002, 0.005};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int max_epochs = 50;
  double train_acc_target = 0.99;
  double edge_step = 0.001;
  double edge_floor = 0.0001;
  int max_edge_extensions = 3;
  // Keep training this many epochs after the target is first met, choosing
  // the best-validation snapshot among qualifying epochs.
  int extra_epochs = 0;
  // When false a run never fails for missing the target; the snapshot is
  // the best-validation epoch overall.
  bool require_target = true;
  unsigned threads = 1;
  bool progress = false;  // "epoch=<n> train_acc=<x> val_acc=<y>" to stderr
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;  // running accuracy over the epoch's batches
  double val_acc = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double lr = 0.0;
  std::uint64_t seed = 0;
  int stopping_epoch = 0;
  int selected_epoch = 0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  std::optional<double> test_acc;
  double wall_seconds = 0.0;
  bool failed = false;
  int failure_epoch = 0;
  std::string failure;
};

struct TrainResult {
  nn::Model<float> model;
  TrainReport report;
};

// One seeded run: He init from `seed`, per-epoch shuffle from `seed`, Adam.
TrainResult train_one(const TrainConfig& config, double lr, std::uint64_t seed, const data::DatasetSplit& data);

// Fraction of samples whose argmax logit (lowest index on ties) equals the label.
double evaluate(const nn::Model<float>& model, std::span<const data::Sample> samples, unsigned threads = 1);

// Per-sample predicted class.
std::vector<int> predict(const nn::Model<float>& model, std::span<const data::Sample> samples, unsigned threads = 1);

struct RunOutcome {
  bool failed = false;
  double val_acc = 0.0;
};

struct SweepTrace {
  std::vector<double> lrs;  // in execution order
  std::vector<RunOutcome> outcomes;
  std::optional<std::size_t> winner;  // index into lrs
  int low_extensions = 0;
  int high_extensions = 0;
};

// The learning-rate protocol for a single seed, independent of training:
// run every initial lr; while the best validation accuracy sits at the
// lowest or highest lr tried, try one edge_step further out (floored at
// edge_floor, capped at max_edge_extensions per edge), stopping as soon as
// the new lr does not become the winner. Ties go to the lower lr. A single
// initial lr is run as is, without extension.
SweepTrace run_sweep_protocol(const TrainConfig& config, const std::function<RunOutcome(double)>& run);

struct SeedSweep {
  std::uint64_t seed = 0;
  std::vector<TrainReport> runs;
  std::optional<double> chosen_lr;
  std::optional<nn::Model<float>> best_model;
  std::optional<TrainReport> best_report;
};

struct SweepResult {
  std::vector<SeedSweep> seeds;
};

// Sweep for every configured seed. Throws Error when every run of every
// seed failed.
SweepResult lr_sweep(const TrainConfig& config, const data::DatasetSplit& data);

std::string report_to_json(const TrainReport& report);
std::string sweep_to_json(const SweepResult& result, const TrainConfig& config);

}  // namespace transinv::train
