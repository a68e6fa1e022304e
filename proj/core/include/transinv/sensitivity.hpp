#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "transinv/datasets.hpp"
#include "transinv/model.hpp"

namespace transinv::sens {

using nn::Tap;

enum class Metric { cosine, euclidean, accuracy };

std::string_view metric_name(Metric metric);
Metric parse_metric(std::string_view name);

// dot(a,b) / (|a| |b|), clamped to [-1, 1]. Bitwise-equal inputs give exactly
// 1. Zero-norm inputs: 1 if both are zero, 0 if only one is.
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

double euclidean_distance(std::span<const float> a, std::span<const float> b);
double euclidean_distance(std::span<const double> a, std::span<const double> b);

// Pearson product-moment correlation. Throws UndefinedResult when either
// series has zero variance, ShapeError on unequal or too-short input.
double pearson(std::span<const double> x, std::span<const double> y);

// Square grid of values over shifts (dx, dy) in [-max_shift, max_shift]^2.
class SensitivityMap {
 public:
  SensitivityMap() = default;
  SensitivityMap(int max_shift, Metric metric, Tap tap, int class_id);

  int max_shift() const noexcept { return max_shift_; }
  int side() const noexcept { return 2 * max_shift_ + 1; }
  std::size_t cell_count() const noexcept { return values_.size(); }

  double at(int dx, int dy) const;
  double& at(int dx, int dy);

  // Row-major by dy, then dx (image orientation).
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  Metric metric = Metric::cosine;
  Tap tap = Tap::fc_out;
  int class_id = 0;
  std::size_t sample_count = 0;
  std::size_t vector_dim = 0;
  std::size_t degenerate_count = 0;  // zero-norm tap vectors seen (cosine only)
  std::optional<std::uint64_t> seed;

 private:
  std::size_t index(int dx, int dy) const;

  int max_shift_ = 0;
  std::vector<double> values_;
};

// What the measurement sees of a network: a batch [N,C,H,W] goes in and both
// probe vectors come out. Model<float> adapts to this; tests substitute
// hand-built probes.
using Probe = std::function<nn::TapOutputs<float>(const nn::Tensor<float>&)>;

Probe model_probe(const nn::Model<float>& model);

struct MapOptions {
  int max_shift = 10;
  unsigned threads = 1;
  // Use at most this many samples (0 = all).
  std::size_t sample_limit = 0;
};

// Mean over samples of metric(base vector, translated vector) at every
// shift. Samples must share one label.
SensitivityMap sensitivity_map(const Probe& probe, std::span<const data::Sample> class_samples, Tap tap,
                               Metric metric, const MapOptions& options = {});
SensitivityMap sensitivity_map(const nn::Model<float>& model, std::span<const data::Sample> class_samples,
                               Tap tap, Metric metric, const MapOptions& options = {});

// Fraction of samples classified correctly (argmax of fc_out) at every shift.
SensitivityMap accuracy_map(const Probe& probe, std::span<const data::Sample> class_samples,
                            const MapOptions& options = {});
SensitivityMap accuracy_map(const nn::Model<float>& model, std::span<const data::Sample> class_samples,
                            const MapOptions& options = {});

// Every (tap, metric) map plus the accuracy map from one set of forward passes.
struct ClassMaps {
  SensitivityMap cosine_conv;
  SensitivityMap euclidean_conv;
  SensitivityMap cosine_fc;
  SensitivityMap euclidean_fc;
  SensitivityMap cosine_softmax;
  SensitivityMap euclidean_softmax;
  SensitivityMap accuracy;

  const SensitivityMap& get(Tap tap, Metric metric) const;
};

ClassMaps probe_class(const Probe& probe, std::span<const data::Sample> class_samples,
                      const MapOptions& options = {});

// Samples of one class in their original order.
std::vector<data::Sample> class_subset(std::span<const data::Sample> samples, int class_id, std::size_t limit = 0);

struct RadialProfile {
  std::vector<int> radii;
  std::vector<double> values;
  std::vector<std::size_t> counts;
};

// Bin r = round(sqrt(dx^2 + dy^2)); bins run 0..round(max_shift * sqrt(2)).
RadialProfile radial_profile(const SensitivityMap& map);

// Pointwise mean; every profile must share the same radius axis.
RadialProfile average_profiles(std::span<const RadialProfile> profiles);

// Negated Euclidean map, so that larger means more similar.
std::vector<double> similarity_values(const SensitivityMap& map);

struct ClassCorrelation {
  int class_id = 0;
  std::optional<double> cosine_vs_accuracy;
  std::optional<double> euclidean_vs_accuracy;  // negated distance
  std::optional<double> cosine_vs_euclidean;    // negated distance
};

struct CorrelationTable {
  std::vector<ClassCorrelation> classes;
  // Means over classes where the coefficient is defined.
  std::optional<double> mean_cosine_vs_accuracy;
  std::optional<double> mean_euclidean_vs_accuracy;
  std::optional<double> mean_cosine_vs_euclidean;
};

// Pearson of a pair of maps over their flattened cells; nullopt when the
// coefficient is undefined (zero variance).
std::optional<double> correlate_maps(const SensitivityMap& a, const SensitivityMap& b);

ClassCorrelation compare_class(int class_id, const SensitivityMap& cosine, const SensitivityMap& euclidean,
                               const SensitivityMap& accuracy);

void fill_means(CorrelationTable& table);

// Per-class maps for classes 0..9 at `tap`, then the three correlations.
CorrelationTable metric_comparison(const Probe& probe, std::span<const data::Sample> samples, Tap tap = Tap::fc_out,
                                   const MapOptions& options = {});

}  // namespace transinv::sens
