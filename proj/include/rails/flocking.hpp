// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rails/layer.hpp"
#include "rails/types.hpp"

namespace rails {

/// One flocked neighbor: a training example in the layer's search space.
struct FlockEntry {
  Example example;
  std::size_t row = 0;
  double affinity = 0.0;

  bool operator==(const FlockEntry&) const = default;
};

/// k nearest training examples per (layer, class), each list sorted by
/// descending affinity.
struct FlockResult {
  std::vector<std::vector<std::vector<FlockEntry>>> entries;  // [layer][class][rank]

  const std::vector<FlockEntry>& at(std::size_t layer, ClassId c) const {
    return entries.at(layer).at(static_cast<std::size_t>(c));
  }

  /// The k*C initial B-cells of one layer, classes in ascending order.
  std::vector<FlockEntry> layer_entries(std::size_t layer) const;

  bool operator==(const FlockResult&) const = default;
};

/// Per-class, per-layer kNN by affinity. Ties go to the lower row index.
/// Throws InvalidConfig when `layers` is empty, k < 1, or some class has
/// fewer than k examples.
FlockResult flock(std::span<const Layer> layers, const Query& query, int k);

/// Flocking for a single layer given the query already in search space.
std::vector<std::vector<FlockEntry>> flock_layer(const Layer& layer, const Example& search_query,
                                                 int k);

}  // namespace rails
