// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "rails/types.hpp"

namespace rails {

struct Neighbor {
  std::size_t row = 0;
  double affinity = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Exact k-highest-affinity search over precomputed layer features.
///
/// Results are sorted by descending affinity; equal affinities are ordered
/// by ascending row. Any replacement index must return exactly what
/// ExhaustiveIndex returns.
class NeighborIndex {
 public:
  virtual ~NeighborIndex() = default;

  /// Search restricted to `rows`. Returns min(k, rows.size()) entries.
  virtual std::vector<Neighbor> nearest(std::span<const double> feature,
                                        std::span<const std::size_t> rows,
                                        std::size_t k) const = 0;
};

class ExhaustiveIndex final : public NeighborIndex {
 public:
  explicit ExhaustiveIndex(std::shared_ptr<const std::vector<Vector>> features)
      : features_(std::move(features)) {}

  std::vector<Neighbor> nearest(std::span<const double> feature,
                                std::span<const std::size_t> rows,
                                std::size_t k) const override;

 private:
  std::shared_ptr<const std::vector<Vector>> features_;
};

}  // namespace rails
