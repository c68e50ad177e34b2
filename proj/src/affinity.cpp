// SPDX-License-Identifier: Apache-2.0
#include "rails/affinity.hpp"

#include <cmath>
#include <string>

#include "rails/error.hpp"
#include "rails/rng.hpp"

namespace rails {

namespace {

void check_dim(const FeatureMapper& mapper, std::size_t got) {
  if (got != mapper.input_dim()) {
    throw InvalidInput("dimension mismatch for layer '" + mapper.layer_id() + "': expected d=" +
                       std::to_string(mapper.input_dim()) + ", received d=" +
                       std::to_string(got));
  }
}

}  // namespace

IdentityMapper::IdentityMapper(std::string layer_id, std::size_t dim)
    : id_(std::move(layer_id)), dim_(dim) {}

Vector IdentityMapper::map(std::span<const double> input) const {
  check_dim(*this, input.size());
  return Vector(input.begin(), input.end());
}

RandomProjectionMapper::RandomProjectionMapper(std::string layer_id, std::size_t in_dim,
                                               std::size_t out_dim, std::uint64_t seed)
    : id_(std::move(layer_id)), in_dim_(in_dim), out_dim_(out_dim), matrix_(in_dim * out_dim) {
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(out_dim));
  for (auto& w : matrix_) w = rng.normal() * scale;
}

Vector RandomProjectionMapper::map(std::span<const double> input) const {
  check_dim(*this, input.size());
  Vector out(out_dim_, 0.0);
  for (std::size_t r = 0; r < out_dim_; ++r) {
    const double* row = matrix_.data() + r * in_dim_;
    double acc = 0.0;
    for (std::size_t c = 0; c < in_dim_; ++c) acc += row[c] * input[c];
    out[r] = acc;
  }
  return out;
}

double feature_affinity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidInput("feature length mismatch: " + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return -std::sqrt(sum);
}

double affinity_score(const FeatureMapper& mapper, const Example& a, const Example& b) {
  check_dim(mapper, a.dim());
  check_dim(mapper, b.dim());
  return feature_affinity(mapper.map(a.values), mapper.map(b.values));
}

std::vector<double> batch_affinity(const FeatureMapper& mapper, std::span<const Example> set,
                                   const Example& query) {
  if (set.empty()) throw InvalidInput("batch_affinity needs a nonempty set");
  check_dim(mapper, query.dim());
  const Vector q = mapper.map(query.values);
  std::vector<double> out;
  out.reserve(set.size());
  for (const auto& x : set) {
    check_dim(mapper, x.dim());
    out.push_back(feature_affinity(mapper.map(x.values), q));
  }
  return out;
}

}  // namespace rails
