#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "slsnet/tensor.hpp"

namespace slsnet {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Metrics {
  double acc = 0;
  double dsc = 0;
  double jsc = 0;
  double sen = 0;
  double spe = 0;
};

/// Pixel tally of two {0,1} tensors of equal shape. 1 is foreground.
ConfusionCounts confusion(const Tensor& gt, const Tensor& pred);

/// Accuracy, Dice, Jaccard, sensitivity and specificity. Zero denominators
/// resolve to 1 (nothing to find, nothing found).
Metrics compute_metrics(const ConfusionCounts& c);

/// Challenge scoring: per-image Jaccard below 0.65 scores 0.
double thresholded_jsc(double jsc);

inline constexpr double kJscThreshold = 0.65;

struct MetricsRow {
  std::string id;
  Metrics m;
  double jsc_th = 0;
};

class MetricsReport {
 public:
  void add(std::string id, const ConfusionCounts& c);

  const std::vector<MetricsRow>& rows() const { return rows_; }
  /// Column means over images.
  MetricsRow mean() const;
  /// Metrics of the summed confusion counts over all images.
  MetricsRow pooled() const;

  /// `id,acc,dsc,jsc,sen,spe,jsc_th` with a trailing aggregate row labeled MEAN.
  void write_csv(std::ostream& out, bool pooled_aggregate = false) const;
  void write_table(std::ostream& out, bool pooled_aggregate = false) const;

 private:
  std::vector<MetricsRow> rows_;
  ConfusionCounts total_;
};

}  // namespace slsnet
