// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "rails/layer.hpp"
#include "rails/maturation.hpp"
#include "rails/types.hpp"

namespace rails {

/// Advisory outlier score. Never feeds back into a prediction.
struct ThreatReport {
  double raw_score = 0.0;
  double percentile = 0.0;
  bool flagged = false;

  bool operator==(const ThreatReport&) const = default;
};

/// Sorted reference distribution of the threat statistic on clean points.
class Calibration {
 public:
  Calibration() = default;
  explicit Calibration(std::vector<double> scores);

  bool empty() const noexcept { return sorted_.empty(); }
  std::size_t size() const noexcept { return sorted_.size(); }
  const std::vector<double>& scores() const noexcept { return sorted_; }

  /// Mid-rank percentile in [0, 100]: 100 * (#less + #equal / 2) / n.
  double percentile(double raw_score) const;

 private:
  std::vector<double> sorted_;
};

/// Mean over layers of the mean distance to the k nearest training points
/// (any class). `exclude_row` drops one training row from the search.
double threat_statistic(std::span<const Layer> layers, const Query& query, int k,
                        std::optional<std::size_t> exclude_row = std::nullopt);

/// Leave-one-out calibration over the training rows (every `stride`-th
/// row), each scored with itself excluded.
Calibration calibrate_leave_one_out(std::span<const Layer> layers, int k, std::size_t stride = 1);

/// Calibration from clean held-out queries.
Calibration calibrate(std::span<const Layer> layers, std::span<const Query> clean, int k);

/// Throws InvalidConfig when the calibration is empty.
ThreatReport sense(std::span<const Layer> layers, const Query& query, int k,
                   const Calibration& calibration, double threshold = 95.0);

struct Prediction {
  ClassId label = 0;
  std::map<ClassId, std::size_t> vote_counts;
  std::size_t plasma_total = 0;

  bool operator==(const Prediction&) const = default;
};

/// Majority vote over the pooled plasma sets. Ties go to the smallest
/// class id.
Prediction consensus(const PlasmaMemoryOutput& selection);

struct PredictOptions {
  const Calibration* calibration = nullptr;  // sensing runs when set and config.sensing
  bool keep_history = false;
};

struct PredictResult {
  Prediction prediction;
  std::optional<ThreatReport> threat;
  PlasmaMemoryOutput selection;
  /// Per layer, populations of generations 0..G (only with keep_history).
  std::vector<std::vector<Population>> histories;
};

/// sense -> flock -> per-layer maturation -> plasma/memory -> consensus.
/// Each layer's maturation draws from the substream (config.seed,
/// query.id, layer id).
PredictResult predict(std::span<const Layer> layers, const Query& query, const RailsConfig& config,
                      const PredictOptions& options = {});

}  // namespace rails
