#include "transinv/sensitivity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

#include "transinv/parallel.hpp"

namespace transinv::sens {
namespace {

template <typename T>
void require_same_dim(std::span<const T> a, std::span<const T> b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": cannot compare vectors of dimension " + std::to_string(a.size()) +
                     " and " + std::to_string(b.size()));
  }
}

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b, bool* degenerate) {
  require_same_dim(a, b, "cosine_similarity");
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    aa += x * x;
    bb += y * y;
  }
  if (aa == 0.0 || bb == 0.0) {
    if (degenerate) *degenerate = true;
    return (aa == 0.0 && bb == 0.0) ? 1.0 : 0.0;
  }
  if (std::equal(a.begin(), a.end(), b.begin())) return 1.0;
  return std::clamp(dot / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

template <typename T>
double euclidean_impl(std::span<const T> a, std::span<const T> b) {
  require_same_dim(a, b, "euclidean_distance");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return std::sqrt(sum);
}

int label_of(std::span<const data::Sample> samples) {
  if (samples.empty()) throw Error("sensitivity map needs at least one sample");
  const int label = samples[0].label;
  for (const auto& s : samples) {
    if (s.label != label) {
      throw Error("sensitivity map samples must share one label (saw " + std::to_string(label) + " and " +
                  std::to_string(s.label) + ")");
    }
  }
  return label;
}

// Per-cell values for one sample, in map cell order.
struct SampleCells {
  std::vector<double> cosine_conv, euclidean_conv, cosine_fc, euclidean_fc, cosine_soft, euclidean_soft, correct;
  std::size_t degenerate_conv = 0, degenerate_fc = 0;
  std::size_t dim_conv = 0, dim_fc = 0;
};

SampleCells measure_sample(const Probe& probe, const data::Sample& sample, int max_shift) {
  const int side = 2 * max_shift + 1;
  const std::size_t cells = static_cast<std::size_t>(side) * side;
  const std::size_t center = cells / 2;
  const auto& shape = sample.image.shape();
  const std::size_t per = sample.image.size();
  // Rows of the shift grid per forward batch.
  const int rows_per_batch = std::max(1, 128 / side);

  nn::Tensor<float> conv_vectors, fc_vectors;
  std::size_t dim_conv = 0, dim_fc = 0;
  for (int row0 = 0; row0 < side; row0 += rows_per_batch) {
    const int rows = std::min(rows_per_batch, side - row0);
    const std::size_t n = static_cast<std::size_t>(rows) * side;
    nn::Tensor<float> batch({n, shape[0], shape[1], shape[2]});
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < side; ++c) {
        const auto shifted = data::translate_image(sample.image, c - max_shift, row0 + r - max_shift);
        std::copy(shifted.raw(), shifted.raw() + per, batch.raw() + (static_cast<std::size_t>(r) * side + c) * per);
      }
    }
    const auto out = probe(batch);
    if (out.conv_final.rank() != 2 || out.logits.rank() != 2 || out.conv_final.dim(0) != n || out.logits.dim(0) != n) {
      throw ShapeError("probe must return [N,D] tap vectors for a batch of " + std::to_string(n));
    }
    if (row0 == 0) {
      dim_conv = out.conv_final.dim(1);
      dim_fc = out.logits.dim(1);
      conv_vectors = nn::Tensor<float>({cells, dim_conv});
      fc_vectors = nn::Tensor<float>({cells, dim_fc});
    }
    const std::size_t offset = static_cast<std::size_t>(row0) * side;
    std::copy(out.conv_final.raw(), out.conv_final.raw() + out.conv_final.size(), conv_vectors.raw() + offset * dim_conv);
    std::copy(out.logits.raw(), out.logits.raw() + out.logits.size(), fc_vectors.raw() + offset * dim_fc);
  }

  SampleCells result;
  result.dim_conv = dim_conv;
  result.dim_fc = dim_fc;
  for (auto* v : {&result.cosine_conv, &result.euclidean_conv, &result.cosine_fc, &result.euclidean_fc,
                  &result.cosine_soft, &result.euclidean_soft, &result.correct}) {
    v->resize(cells);
  }
  const auto conv = std::as_const(conv_vectors).data();
  const auto fc = std::as_const(fc_vectors).data();
  const auto base_conv = conv.subspan(center * dim_conv, dim_conv);
  const auto base_fc = fc.subspan(center * dim_fc, dim_fc);
  const auto base_soft = nn::softmax(base_fc);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const auto vc = conv.subspan(cell * dim_conv, dim_conv);
    const auto vf = fc.subspan(cell * dim_fc, dim_fc);
    bool degenerate = false;
    result.cosine_conv[cell] = cosine_impl(base_conv, vc, &degenerate);
    if (degenerate) ++result.degenerate_conv;
    degenerate = false;
    result.cosine_fc[cell] = cosine_impl(base_fc, vf, &degenerate);
    if (degenerate) ++result.degenerate_fc;
    result.euclidean_conv[cell] = euclidean_impl(base_conv, vc);
    result.euclidean_fc[cell] = euclidean_impl(base_fc, vf);
    const auto soft = nn::softmax(vf);
    result.cosine_soft[cell] = cosine_impl(std::span<const double>(base_soft), std::span<const double>(soft), nullptr);
    result.euclidean_soft[cell] = euclidean_impl(std::span<const double>(base_soft), std::span<const double>(soft));
    result.correct[cell] = nn::argmax(vf) == static_cast<std::size_t>(sample.label) ? 1.0 : 0.0;
  }
  return result;
}

}  // namespace

std::string_view metric_name(Metric metric) {
  switch (metric) {
    case Metric::cosine: return "cosine";
    case Metric::euclidean: return "euclidean";
    case Metric::accuracy: return "accuracy";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  if (name == "cosine") return Metric::cosine;
  if (name == "euclidean") return Metric::euclidean;
  if (name == "accuracy") return Metric::accuracy;
  throw Error("unknown metric '" + std::string(name) + "' (expected cosine, euclidean or accuracy)");
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b, nullptr); }
double cosine_similarity(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b, nullptr); }
double euclidean_distance(std::span<const float> a, std::span<const float> b) { return euclidean_impl(a, b); }
double euclidean_distance(std::span<const double> a, std::span<const double> b) { return euclidean_impl(a, b); }

double pearson(std::span<const double> x, std::span<const double> y) {
  require_same_dim(x, y, "pearson");
  if (x.size() < 2) throw ShapeError("pearson needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedResult("pearson correlation undefined: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

SensitivityMap::SensitivityMap(int max_shift, Metric metric_, Tap tap_, int class_id_)
    : metric(metric_), tap(tap_), class_id(class_id_), max_shift_(max_shift) {
  if (max_shift < 0) throw Error("max_shift must be non-negative");
  values_.assign(static_cast<std::size_t>(side()) * side(), 0.0);
}

std::size_t SensitivityMap::index(int dx, int dy) const {
  if (dx < -max_shift_ || dx > max_shift_ || dy < -max_shift_ || dy > max_shift_) {
    throw Error("shift (" + std::to_string(dx) + "," + std::to_string(dy) + ") outside the map");
  }
  return static_cast<std::size_t>(dy + max_shift_) * side() + static_cast<std::size_t>(dx + max_shift_);
}

double SensitivityMap::at(int dx, int dy) const { return values_[index(dx, dy)]; }
double& SensitivityMap::at(int dx, int dy) { return values_[index(dx, dy)]; }

Probe model_probe(const nn::Model<float>& model) {
  return [&model](const nn::Tensor<float>& batch) { return model.forward_taps(batch); };
}

const SensitivityMap& ClassMaps::get(Tap tap, Metric metric) const {
  switch (metric) {
    case Metric::cosine:
      return tap == Tap::conv_final ? cosine_conv : tap == Tap::fc_out ? cosine_fc : cosine_softmax;
    case Metric::euclidean:
      return tap == Tap::conv_final ? euclidean_conv : tap == Tap::fc_out ? euclidean_fc : euclidean_softmax;
    case Metric::accuracy:
      if (tap != Tap::fc_out) throw Error("accuracy maps are only defined at the classifier output (fc_out)");
      return accuracy;
  }
  throw Error("unknown metric");
}

ClassMaps probe_class(const Probe& probe, std::span<const data::Sample> class_samples, const MapOptions& options) {
  const int label = label_of(class_samples);
  if (options.max_shift < 0) throw Error("max_shift must be non-negative");
  if (options.sample_limit > 0 && class_samples.size() > options.sample_limit) {
    class_samples = class_samples.first(options.sample_limit);
  }
  const int m = options.max_shift;
  ClassMaps maps{SensitivityMap(m, Metric::cosine, Tap::conv_final, label),
                 SensitivityMap(m, Metric::euclidean, Tap::conv_final, label),
                 SensitivityMap(m, Metric::cosine, Tap::fc_out, label),
                 SensitivityMap(m, Metric::euclidean, Tap::fc_out, label),
                 SensitivityMap(m, Metric::cosine, Tap::fc_softmax, label),
                 SensitivityMap(m, Metric::euclidean, Tap::fc_softmax, label),
                 SensitivityMap(m, Metric::accuracy, Tap::fc_out, label)};
  std::array<SensitivityMap*, 7> all{&maps.cosine_conv,    &maps.euclidean_conv,    &maps.cosine_fc, &maps.euclidean_fc,
                                     &maps.cosine_softmax, &maps.euclidean_softmax, &maps.accuracy};

  // Samples are measured in blocks; per-sample cells are reduced in sample
  // order so the sums do not depend on the worker count.
  const std::size_t block = std::max<std::size_t>(1, 8 * std::max(1u, options.threads));
  std::vector<SampleCells> cells;
  for (std::size_t begin = 0; begin < class_samples.size(); begin += block) {
    const std::size_t n = std::min(block, class_samples.size() - begin);
    cells.assign(n, {});
    parallel_for(n, options.threads, [&](std::size_t i) { cells[i] = measure_sample(probe, class_samples[begin + i], m); });
    for (const auto& c : cells) {
      const std::array<const std::vector<double>*, 7> src{&c.cosine_conv, &c.euclidean_conv, &c.cosine_fc,
                                                          &c.euclidean_fc,  &c.cosine_soft,    &c.euclidean_soft,
                                                          &c.correct};
      for (std::size_t k = 0; k < all.size(); ++k) {
        auto dst = all[k]->values();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += (*src[k])[j];
      }
      maps.cosine_conv.degenerate_count += c.degenerate_conv;
      maps.cosine_fc.degenerate_count += c.degenerate_fc;
      maps.cosine_conv.vector_dim = maps.euclidean_conv.vector_dim = c.dim_conv;
      maps.cosine_fc.vector_dim = maps.euclidean_fc.vector_dim = maps.accuracy.vector_dim = c.dim_fc;
      maps.cosine_softmax.vector_dim = maps.euclidean_softmax.vector_dim = c.dim_fc;
    }
  }
  const double count = static_cast<double>(class_samples.size());
  for (auto* map : all) {
    for (auto& v : map->values()) v /= count;
    map->sample_count = class_samples.size();
  }
  return maps;
}

SensitivityMap sensitivity_map(const Probe& probe, std::span<const data::Sample> class_samples, Tap tap,
                               Metric metric, const MapOptions& options) {
  if (metric == Metric::accuracy) throw Error("use accuracy_map for the accuracy baseline");
  return probe_class(probe, class_samples, options).get(tap, metric);
}

SensitivityMap sensitivity_map(const nn::Model<float>& model, std::span<const data::Sample> class_samples, Tap tap,
                               Metric metric, const MapOptions& options) {
  return sensitivity_map(model_probe(model), class_samples, tap, metric, options);
}

SensitivityMap accuracy_map(const Probe& probe, std::span<const data::Sample> class_samples, const MapOptions& options) {
  return probe_class(probe, class_samples, options).accuracy;
}

SensitivityMap accuracy_map(const nn::Model<float>& model, std::span<const data::Sample> class_samples,
                            const MapOptions& options) {
  return accuracy_map(model_probe(model), class_samples, options);
}

std::vector<data::Sample> class_subset(std::span<const data::Sample> samples, int class_id, std::size_t limit) {
  std::vector<data::Sample> out;
  for (const auto& s : samples) {
    if (s.label != class_id) continue;
    out.push_back(s);
    if (limit > 0 && out.size() >= limit) break;
  }
  return out;
}

RadialProfile radial_profile(const SensitivityMap& map) {
  const int m = map.max_shift();
  const int max_bin = static_cast<int>(std::lround(std::sqrt(2.0 * m * m)));
  RadialProfile profile;
  profile.radii.resize(static_cast<std::size_t>(max_bin) + 1);
  profile.values.assign(profile.radii.size(), 0.0);
  profile.counts.assign(profile.radii.size(), 0);
  for (int r = 0; r <= max_bin; ++r) profile.radii[static_cast<std::size_t>(r)] = r;
  for (int dy = -m; dy <= m; ++dy) {
    for (int dx = -m; dx <= m; ++dx) {
      const auto bin = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(dx * dx + dy * dy))));
      profile.values[bin] += map.at(dx, dy);
      profile.counts[bin] += 1;
    }
  }
  for (std::size_t i = 0; i < profile.values.size(); ++i) {
    profile.values[i] = profile.counts[i] ? profile.values[i] / static_cast<double>(profile.counts[i])
                                          : std::numeric_limits<double>::quiet_NaN();
  }
  return profile;
}

RadialProfile average_profiles(std::span<const RadialProfile> profiles) {
  if (profiles.empty()) throw Error("average_profiles: no profiles");
  RadialProfile mean = profiles[0];
  for (std::size_t p = 1; p < profiles.size(); ++p) {
    if (profiles[p].radii != mean.radii) throw ShapeError("average_profiles: radius axes differ");
    for (std::size_t i = 0; i < mean.values.size(); ++i) mean.values[i] += profiles[p].values[i];
  }
  for (auto& v : mean.values) v /= static_cast<double>(profiles.size());
  return mean;
}

std::vector<double> similarity_values(const SensitivityMap& map) {
  std::vector<double> out(map.values().begin(), map.values().end());
  if (map.metric == Metric::euclidean) {
    for (auto& v : out) v = -v;
  }
  return out;
}

std::optional<double> correlate_maps(const SensitivityMap& a, const SensitivityMap& b) {
  if (a.max_shift() != b.max_shift()) {
    throw ShapeError("cannot correlate maps with max_shift " + std::to_string(a.max_shift()) + " and " +
                     std::to_string(b.max_shift()));
  }
  try {
    return pearson(similarity_values(a), similarity_values(b));
  } catch (const UndefinedResult&) {
    return std::nullopt;
  }
}

ClassCorrelation compare_class(int class_id, const SensitivityMap& cosine, const SensitivityMap& euclidean,
                               const SensitivityMap& accuracy) {
  return {class_id, correlate_maps(cosine, accuracy), correlate_maps(euclidean, accuracy),
          correlate_maps(cosine, euclidean)};
}

void fill_means(CorrelationTable& table) {
  auto mean_of = [&](std::optional<double> ClassCorrelation::*field) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : table.classes) {
      if (const auto& v = c.*field) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  table.mean_cosine_vs_accuracy = mean_of(&ClassCorrelation::cosine_vs_accuracy);
  table.mean_euclidean_vs_accuracy = mean_of(&ClassCorrelation::euclidean_vs_accuracy);
  table.mean_cosine_vs_euclidean = mean_of(&ClassCorrelation::cosine_vs_euclidean);
}

CorrelationTable metric_comparison(const Probe& probe, std::span<const data::Sample> samples, Tap tap,
                                   const MapOptions& options) {
  CorrelationTable table;
  for (int k = 0; k < 10; ++k) {
    const auto subset = class_subset(samples, k, options.sample_limit);
    if (subset.empty()) continue;
    const auto maps = probe_class(probe, subset, options);
    table.classes.push_back(compare_class(k, maps.get(tap, Metric::cosine), maps.get(tap, Metric::euclidean), maps.accuracy));
  }
  fill_means(table);
  return table;
}

}  // namespace transinv::sens
