// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rails {

using Vector = std::vector<double>;
using ClassId = int;

/// A point in [0,1]^d, optionally labeled.
struct Example {
  Vector values;
  std::optional<ClassId> label;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const Example&) const = default;
};

/// Member of a maturation population. The label is inherited from the
/// parents and never recomputed; `lineage` is the index of the flocked
/// neighbor the candidate descends from (through its first parent).
struct Candidate {
  Example example;
  double affinity = 0.0;
  int generation = 0;
  std::size_t lineage = 0;

  ClassId label() const { return *example.label; }
  bool operator==(const Candidate&) const = default;
};

struct Population {
  std::vector<Candidate> members;
  int generation = 0;

  std::size_t size() const noexcept { return members.size(); }
};

enum class LayerKind { Identity, Projection, Embedding };

/// Declarative description of one feature layer in a run configuration.
struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::Identity;
  std::size_t output_dim = 0;  // projection only
  std::uint64_t seed = 0;      // projection only

  bool operator==(const LayerSpec&) const = default;
};

/// Below this temperature selection switches to argmax.
inline constexpr double kGreedyTau = 1e-12;

struct RailsConfig {
  int k = 10;
  int population_size = 200;
  int generations = 10;
  double tau = 0.1;
  bool greedy = false;
  double rho = 0.05;
  double delta_min = 0.0;
  double delta_max = 0.1;
  double plasma_frac = 0.05;
  double memory_frac = 0.25;
  std::uint64_t seed = 0;
  std::vector<LayerSpec> layers{LayerSpec{"identity", LayerKind::Identity, 0, 0}};
  bool sensing = true;
  double sense_threshold = 95.0;

  bool is_greedy() const noexcept { return greedy || tau < kGreedyTau; }
  std::size_t plasma_size() const noexcept;
  std::size_t memory_size() const noexcept;

  bool operator==(const RailsConfig&) const = default;
};

/// Every violation of the config's own invariants. When `num_classes` is
/// known the T mod (k*C) divisibility rule is checked as well.
std::vector<std::string> config_violations(const RailsConfig& config,
                                           std::optional<int> num_classes = std::nullopt);

/// Throws InvalidConfig listing all violations.
void validate(const RailsConfig& config, std::optional<int> num_classes = std::nullopt);

/// ceil(frac * n) with a guard against representation error in frac.
std::size_t ceil_fraction(double frac, std::size_t n) noexcept;

}  // namespace rails
