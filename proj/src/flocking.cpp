// SPDX-License-Identifier: Apache-2.0
#include "rails/flocking.hpp"

#include <string>

#include "rails/error.hpp"

namespace rails {

std::vector<FlockEntry> FlockResult::layer_entries(std::size_t layer) const {
  std::vector<FlockEntry> out;
  for (const auto& per_class : entries.at(layer)) out.insert(out.end(), per_class.begin(), per_class.end());
  return out;
}

std::vector<std::vector<FlockEntry>> flock_layer(const Layer& layer, const Example& search_query,
                                                 int k) {
  if (k < 1) throw InvalidConfig("k must be >= 1 (got " + std::to_string(k) + ")");
  const auto& train = layer.train();
  const Vector q = layer.map(search_query.values);
  std::vector<std::vector<FlockEntry>> out(static_cast<std::size_t>(train.num_classes()));
  for (ClassId c = 0; c < train.num_classes(); ++c) {
    const auto rows = train.class_rows(c);
    if (rows.size() < static_cast<std::size_t>(k)) {
      throw InvalidConfig("class " + std::to_string(c) + " has " + std::to_string(rows.size()) +
                          " examples in layer '" + layer.id() + "', fewer than k=" +
                          std::to_string(k));
    }
    auto& entries = out[static_cast<std::size_t>(c)];
    for (const auto& n : layer.index().nearest(q, rows, static_cast<std::size_t>(k))) {
      entries.push_back(FlockEntry{train[n.row], n.row, n.affinity});
    }
  }
  return out;
}

FlockResult flock(std::span<const Layer> layers, const Query& query, int k) {
  if (layers.empty()) throw InvalidConfig("flocking needs at least one layer");
  const int classes = layers.front().train().num_classes();
  FlockResult result;
  result.entries.reserve(layers.size());
  for (const auto& layer : layers) {
    if (layer.train().num_classes() != classes) {
      throw InvalidInput("layer '" + layer.id() + "' has " +
                         std::to_string(layer.train().num_classes()) + " classes, expected " +
                         std::to_string(classes));
    }
    result.entries.push_back(flock_layer(layer, layer.search_query(query), k));
  }
  return result;
}

}  // namespace rails
