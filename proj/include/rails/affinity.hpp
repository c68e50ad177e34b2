// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rails/types.hpp"

namespace rails {

/// Maps input vectors into one layer's feature space. Implementations are
/// pure: identical input yields identical output, and the output length is
/// fixed per instance.
class FeatureMapper {
 public:
  virtual ~FeatureMapper() = default;

  virtual const std::string& layer_id() const noexcept = 0;
  virtual std::size_t input_dim() const noexcept = 0;
  virtual std::size_t output_dim() const noexcept = 0;
  virtual Vector map(std::span<const double> input) const = 0;
};

class IdentityMapper final : public FeatureMapper {
 public:
  IdentityMapper(std::string layer_id, std::size_t dim);

  const std::string& layer_id() const noexcept override { return id_; }
  std::size_t input_dim() const noexcept override { return dim_; }
  std::size_t output_dim() const noexcept override { return dim_; }
  Vector map(std::span<const double> input) const override;

 private:
  std::string id_;
  std::size_t dim_;
};

/// Gaussian random projection, entries N(0, 1/out_dim), drawn from a
/// seeded Rng in row-major order.
class RandomProjectionMapper final : public FeatureMapper {
 public:
  RandomProjectionMapper(std::string layer_id, std::size_t in_dim, std::size_t out_dim,
                         std::uint64_t seed);

  const std::string& layer_id() const noexcept override { return id_; }
  std::size_t input_dim() const noexcept override { return in_dim_; }
  std::size_t output_dim() const noexcept override { return out_dim_; }
  Vector map(std::span<const double> input) const override;

  /// Row-major out_dim x in_dim matrix.
  const std::vector<double>& matrix() const noexcept { return matrix_; }

 private:
  std::string id_;
  std::size_t in_dim_;
  std::size_t out_dim_;
  std::vector<double> matrix_;
};

/// Negative Euclidean distance between two feature vectors.
double feature_affinity(std::span<const double> a, std::span<const double> b);

/// A(f; a, b) = -||f(a) - f(b)||_2. Throws InvalidInput when either
/// example's length differs from the mapper's input dimension.
double affinity_score(const FeatureMapper& mapper, const Example& a, const Example& b);

/// Elementwise affinity_score of every member of `set` against `query`.
std::vector<double> batch_affinity(const FeatureMapper& mapper, std::span<const Example> set,
                                   const Example& query);

}  // namespace rails
