#include "transinv/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "transinv/adam.hpp"
#include "transinv/parallel.hpp"

namespace transinv::train {
namespace {

using nn::Tensor;

// Stream constant separating the shuffle RNG from the initialisation RNG.
constexpr std::uint64_t kShuffleStream = 0x9e3779b97f4a7c15ULL;

Tensor<float> gather(std::span<const data::Sample> samples, std::span<const std::size_t> index) {
  const auto& shape = samples[index[0]].image.shape();
  const std::size_t per = samples[index[0]].image.size();
  Tensor<float> batch({index.size(), shape[0], shape[1], shape[2]});
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& img = samples[index[i]].image;
    if (img.size() != per) throw ShapeError("samples in a batch have different image shapes");
    std::copy(img.raw(), img.raw() + per, batch.raw() + i * per);
  }
  return batch;
}

struct ChunkResult {
  std::vector<Tensor<float>> grads;
  double loss_sum = 0.0;
  std::size_t correct = 0;
};

double round_lr(double lr) { return std::round(lr * 1e9) / 1e9; }

// Ranking used for every "best run" decision: higher validation accuracy,
// then lower learning rate.
bool better(const RunOutcome& a, double lr_a, const RunOutcome& b, double lr_b) {
  if (a.val_acc != b.val_acc) return a.val_acc > b.val_acc;
  return lr_a < lr_b;
}

}  // namespace

std::vector<int> predict(const nn::Model<float>& model, std::span<const data::Sample> samples, unsigned threads) {
  constexpr std::size_t kEvalChunk = 128;
  std::vector<int> out(samples.size());
  const std::size_t chunks = (samples.size() + kEvalChunk - 1) / kEvalChunk;
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * kEvalChunk;
    const std::size_t end = std::min(samples.size(), begin + kEvalChunk);
    std::vector<std::size_t> index(end - begin);
    std::iota(index.begin(), index.end(), begin);
    const auto logits = model.forward(gather(samples, index));
    const std::size_t classes = logits.dim(1);
    for (std::size_t i = 0; i < index.size(); ++i) {
      out[begin + i] = static_cast<int>(nn::argmax(logits.data().subspan(i * classes, classes)));
    }
  });
  return out;
}

double evaluate(const nn::Model<float>& model, std::span<const data::Sample> samples, unsigned threads) {
  if (samples.empty()) throw Error("evaluate: empty sample list");
  const auto predicted = predict(model, samples, threads);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) correct += predicted[i] == samples[i].label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

TrainResult train_one(const TrainConfig& config, double lr, std::uint64_t seed, const data::DatasetSplit& data) {
  if (data.train.empty() || data.validation.empty()) throw Error("train_one: training and validation splits must be non-empty");
  if (config.batch_size <= 0) throw Error("train_one: batch_size must be positive");
  const auto start = std::chrono::steady_clock::now();

  auto model = nn::Model<float>::he_initialized(config.arch, seed);
  auto params = model.parameters();
  std::vector<const Tensor<float>*> const_params(params.begin(), params.end());
  auto adam = nn::make_adam_state<float>(const_params);

  TrainReport report;
  report.lr = lr;
  report.seed = seed;
  std::optional<nn::Model<float>> snapshot;
  std::optional<int> target_epoch;

  std::mt19937_64 shuffle_rng(seed ^ kShuffleStream);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    bool diverged = false;

    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t size = std::min(batch_size, order.size() - begin);
      const std::size_t chunks = (size + kChunkSize - 1) / kChunkSize;
      std::vector<ChunkResult> results(chunks);
      parallel_for(chunks, config.threads, [&](std::size_t c) {
        const std::size_t lo = begin + c * kChunkSize;
        const std::size_t hi = std::min(begin + size, lo + kChunkSize);
        const std::span<const std::size_t> index(order.data() + lo, hi - lo);
        std::vector<int> labels;
        labels.reserve(index.size());
        for (auto i : index) labels.push_back(data.train[i].label);
        nn::ForwardCache<float> cache;
        const auto logits = model.forward(gather(data.train, index), &cache);
        auto loss = nn::softmax_cross_entropy(logits, labels, size);
        results[c].grads = model.backward(cache, loss.grad);
        results[c].loss_sum = loss.loss * static_cast<double>(index.size());
        results[c].correct = loss.correct;
      });

      auto& total = results[0].grads;
      for (std::size_t c = 1; c < chunks; ++c) {
        for (std::size_t p = 0; p < total.size(); ++p) {
          float* dst = total[p].raw();
          const float* src = results[c].grads[p].raw();
          for (std::size_t j = 0; j < total[p].size(); ++j) dst[j] += src[j];
        }
      }
      double batch_loss = 0.0;
      for (const auto& r : results) {
        batch_loss += r.loss_sum;
        correct += r.correct;
      }
      if (!std::isfinite(batch_loss)) {
        diverged = true;
        break;
      }
      loss_sum += batch_loss;
      std::vector<const Tensor<float>*> grads;
      for (const auto& g : total) grads.push_back(&g);
      nn::adam_step<float>(params, grads, adam, lr);
    }

    if (diverged) {
      report.failed = true;
      report.failure_epoch = epoch;
      report.failure = "loss diverged (non-finite) in epoch " + std::to_string(epoch);
      report.stopping_epoch = epoch;
      break;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    stats.val_acc = evaluate(model, data.validation, config.threads);
    report.epochs.push_back(stats);
    report.stopping_epoch = epoch;
    if (config.progress) {
      std::fprintf(stderr, "epoch=%d train_acc=%.6f val_acc=%.6f\n", epoch, stats.train_acc, stats.val_acc);
    }

    const bool qualifies = stats.train_acc >= config.train_acc_target;
    if ((qualifies || !config.require_target) && (!snapshot || stats.val_acc > report.val_acc)) {
      snapshot = model;
      report.selected_epoch = epoch;
      report.train_acc = stats.train_acc;
      report.val_acc = stats.val_acc;
    }
    if (qualifies) {
      if (!target_epoch) target_epoch = epoch;
      if (epoch - *target_epoch >= config.extra_epochs) break;
    }
  }

  if (!report.failed && !snapshot) {
    report.failed = true;
    report.failure_epoch = report.stopping_epoch;
    report.failure = "train accuracy target not reached in " + std::to_string(config.max_epochs) + " epochs";
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {snapshot ? std::move(*snapshot) : std::move(model), std::move(report)};
}

SweepTrace run_sweep_protocol(const TrainConfig& config, const std::function<RunOutcome(double)>& run) {
  std::vector<double> initial;
  for (double lr : config.initial_lrs) {
    if (!(lr > 0.0)) throw Error("learning rates must be positive");
    initial.push_back(round_lr(lr));
  }
  std::sort(initial.begin(), initial.end());
  initial.erase(std::unique(initial.begin(), initial.end()), initial.end());
  if (initial.empty()) throw Error("learning-rate sweep needs at least one rate");

  SweepTrace trace;
  auto execute = [&](double lr) {
    trace.lrs.push_back(lr);
    trace.outcomes.push_back(run(lr));
  };
  auto best = [&]() -> std::optional<std::size_t> {
    std::optional<std::size_t> w;
    for (std::size_t i = 0; i < trace.lrs.size(); ++i) {
      if (trace.outcomes[i].failed) continue;
      if (!w || better(trace.outcomes[i], trace.lrs[i], trace.outcomes[*w], trace.lrs[*w])) w = i;
    }
    return w;
  };

  for (double lr : initial) execute(lr);
  trace.winner = best();
  // A single rate is a fixed-rate run: there is no range whose edge to extend.
  while (trace.winner && initial.size() > 1) {
    const auto [lo, hi] = std::minmax_element(trace.lrs.begin(), trace.lrs.end());
    const double winning_lr = trace.lrs[*trace.winner];
    double candidate = 0.0;
    bool high = false;
    if (winning_lr == *hi && trace.high_extensions < config.max_edge_extensions) {
      candidate = round_lr(*hi + config.edge_step);
      high = true;
    } else if (winning_lr == *lo && trace.low_extensions < config.max_edge_extensions) {
      candidate = round_lr(*lo - config.edge_step);
      if (candidate <= 0.0) candidate = config.edge_floor;
      if (candidate >= *lo) break;
    } else {
      break;
    }
    execute(candidate);
    ++(high ? trace.high_extensions : trace.low_extensions);
    const auto next = best();
    const bool extension_won = next && *next == trace.lrs.size() - 1;
    trace.winner = next;
    if (!extension_won) break;
  }
  return trace;
}

SweepResult lr_sweep(const TrainConfig& config, const data::DatasetSplit& data) {
  SweepResult result;
  bool any_success = false;
  for (auto seed : config.seeds) {
    SeedSweep sweep;
    sweep.seed = seed;
    std::optional<RunOutcome> best_outcome;
    auto trace = run_sweep_protocol(config, [&](double lr) {
      auto run = train_one(config, lr, seed, data);
      RunOutcome outcome{run.report.failed, run.report.val_acc};
      if (!outcome.failed && (!best_outcome || better(outcome, lr, *best_outcome, sweep.best_report->lr))) {
        best_outcome = outcome;
        sweep.best_model = std::move(run.model);
        sweep.best_report = run.report;
      }
      sweep.runs.push_back(std::move(run.report));
      return outcome;
    });
    if (trace.winner) {
      sweep.chosen_lr = trace.lrs[*trace.winner];
      any_success = true;
    }
    result.seeds.push_back(std::move(sweep));
  }
  if (!any_success) throw Error("learning-rate sweep failed: every run diverged or missed the train-accuracy target");
  return result;
}

namespace {

nlohmann::json report_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"train_acc", e.train_acc}, {"val_acc", e.val_acc}});
  }
  nlohmann::json j = {
      {"lr", r.lr},
      {"seed", r.seed},
      {"epochs", std::move(epochs)},
      {"stopping_epoch", r.stopping_epoch},
      {"selected_epoch", r.selected_epoch},
      {"train_acc", r.train_acc},
      {"val_acc", r.val_acc},
      {"test_acc", r.test_acc ? nlohmann::json(*r.test_acc) : nlohmann::json(nullptr)},
      {"wall_seconds", r.wall_seconds},
      {"failed", r.failed},
  };
  if (r.failed) {
    j["failure_epoch"] = r.failure_epoch;
    j["failure"] = r.failure;
  }
  return j;
}

}  // namespace

std::string report_to_json(const TrainReport& report) { return report_json(report).dump(2); }

std::string sweep_to_json(const SweepResult& result, const TrainConfig& config) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : result.seeds) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : s.runs) runs.push_back(report_json(r));
    seeds.push_back({
        {"seed", s.seed},
        {"chosen_lr", s.chosen_lr ? nlohmann::json(*s.chosen_lr) : nlohmann::json(nullptr)},
        {"best", s.best_report ? report_json(*s.best_report) : nlohmann::json(nullptr)},
        {"runs", std::move(runs)},
    });
  }
  nlohmann::json j = {
      {"arch", nlohmann::json::parse(arch::serialize_arch(config.arch))},
      {"batch_size", config.batch_size},
      {"initial_lrs", config.initial_lrs},
      {"max_epochs", config.max_epochs},
      {"train_acc_target", config.train_acc_target},
      {"edge_step", config.edge_step},
      {"seeds", std::move(seeds)},
  };
  return j.dump(2);
}

}  // namespace transinv::train
