// SPDX-License-Identifier: Apache-2.0
#include "rails/decision.hpp"

#include <algorithm>
#include <string>

#include "rails/error.hpp"
#include "rails/flocking.hpp"

namespace rails {

namespace {

// Mean distance from a search-space point to its k nearest training rows.
double mean_knn_distance(const Layer& layer, const Example& search_point, int k,
                         std::optional<std::size_t> exclude_row) {
  const Vector q = layer.map(search_point.values);
  const auto rows = layer.train().all_rows();
  std::vector<std::size_t> kept;
  std::span<const std::size_t> pool = rows;
  if (exclude_row) {
    kept.reserve(rows.size());
    for (std::size_t r : rows) {
      if (r != *exclude_row) kept.push_back(r);
    }
    pool = kept;
  }
  const auto neighbors = layer.index().nearest(q, pool, static_cast<std::size_t>(k));
  if (neighbors.empty()) throw InvalidInput("threat statistic over an empty training set");
  double sum = 0.0;
  for (const auto& n : neighbors) sum += -n.affinity;
  return sum / static_cast<double>(neighbors.size());
}

}  // namespace

Calibration::Calibration(std::vector<double> scores) : sorted_(std::move(scores)) {
  std::sort(sorted_.begin(), sorted_.end());
}

double Calibration::percentile(double raw_score) const {
  if (sorted_.empty()) throw InvalidConfig("sensing needs a nonempty calibration set");
  const auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), raw_score);
  const auto hi = std::upper_bound(lo, sorted_.end(), raw_score);
  const double less = static_cast<double>(lo - sorted_.begin());
  const double equal = static_cast<double>(hi - lo);
  return 100.0 * (less + 0.5 * equal) / static_cast<double>(sorted_.size());
}

double threat_statistic(std::span<const Layer> layers, const Query& query, int k,
                        std::optional<std::size_t> exclude_row) {
  if (layers.empty()) throw InvalidConfig("sensing needs at least one layer");
  if (k < 1) throw InvalidConfig("k must be >= 1");
  double sum = 0.0;
  for (const auto& layer : layers) {
    sum += mean_knn_distance(layer, layer.search_query(query), k, exclude_row);
  }
  return sum / static_cast<double>(layers.size());
}

Calibration calibrate_leave_one_out(std::span<const Layer> layers, int k, std::size_t stride) {
  if (layers.empty()) throw InvalidConfig("sensing needs at least one layer");
  if (k < 1) throw InvalidConfig("k must be >= 1");
  stride = std::max<std::size_t>(stride, 1);
  std::vector<double> scores;
  const std::size_t n = layers.front().train().size();
  for (std::size_t row = 0; row < n; row += stride) {
    double sum = 0.0;
    for (const auto& layer : layers) sum += mean_knn_distance(layer, layer.train()[row], k, row);
    scores.push_back(sum / static_cast<double>(layers.size()));
  }
  return Calibration(std::move(scores));
}

Calibration calibrate(std::span<const Layer> layers, std::span<const Query> clean, int k) {
  std::vector<double> scores;
  scores.reserve(clean.size());
  for (const auto& q : clean) scores.push_back(threat_statistic(layers, q, k));
  return Calibration(std::move(scores));
}

ThreatReport sense(std::span<const Layer> layers, const Query& query, int k,
                   const Calibration& calibration, double threshold) {
  if (calibration.empty()) throw InvalidConfig("sensing needs a nonempty calibration set");
  ThreatReport report;
  report.raw_score = threat_statistic(layers, query, k);
  report.percentile = calibration.percentile(report.raw_score);
  report.flagged = report.percentile > threshold;
  return report;
}

Prediction consensus(const PlasmaMemoryOutput& selection) {
  Prediction p;
  for (const auto& layer : selection.layers) {
    for (const auto& c : layer.plasma) {
      ++p.vote_counts[c.label()];
      ++p.plasma_total;
    }
  }
  if (p.plasma_total == 0) throw InvariantViolation("consensus over empty plasma sets");
  std::size_t best = 0;
  for (const auto& [label, count] : p.vote_counts) {
    // std::map iterates labels in ascending order, so strict > keeps the smallest id on ties.
    if (count > best) {
      best = count;
      p.label = label;
    }
  }
  return p;
}

PredictResult predict(std::span<const Layer> layers, const Query& query, const RailsConfig& config,
                      const PredictOptions& options) {
  if (layers.empty()) throw InvalidConfig("predict needs at least one layer");
  validate(config, layers.front().train().num_classes());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (layers[i].id() == layers[j].id()) {
        throw InvalidConfig("duplicate layer id '" + layers[i].id() + "'");
      }
    }
  }

  PredictResult result;
  if (options.calibration != nullptr && config.sensing) {
    result.threat = sense(layers, query, config.k, *options.calibration, config.sense_threshold);
  }

  const FlockResult flocked = flock(layers, query, config.k);
  for (std::size_t li = 0; li < layers.size(); ++li) {
    MaturationRun run(layers[li], layers[li].search_query(query), config,
                      Rng::substream(config.seed, query.id, layers[li].id()));
    run.run(flocked.layer_entries(li));
    result.selection.layers.push_back(run.extract());
    if (options.keep_history) result.histories.push_back(run.history());
  }
  result.prediction = consensus(result.selection);
  return result;
}

}  // namespace rails
