// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rails/affinity.hpp"
#include "rails/flocking.hpp"
#include "rails/layer.hpp"
#include "rails/rng.hpp"
#include "rails/types.hpp"

namespace rails {

/// Softmax selection weights over one population, with per-class
/// restrictions for mate selection.
///
/// Weights are exp((A_i - max A) / tau). The per-class tables subtract the
/// class maximum instead, which leaves the renormalized distribution
/// unchanged but keeps it defined when the global weights underflow.
/// In greedy mode every draw returns the (first) argmax.
class SelectionWeights {
 public:
  SelectionWeights(const Population& population, double tau, bool greedy);

  std::size_t size() const noexcept { return cumulative_.size(); }

  /// Normalized P over the whole population.
  std::vector<double> probabilities() const;
  /// Normalized P restricted to class c; pairs of (member index, prob).
  std::vector<std::pair<std::size_t, double>> class_probabilities(ClassId c) const;

  std::size_t draw(Rng& rng) const;
  std::size_t draw_in_class(ClassId c, Rng& rng) const;

 private:
  struct ClassTable {
    std::vector<std::size_t> members;
    std::vector<double> cumulative;
    std::size_t argmax = 0;
  };

  bool greedy_;
  std::vector<double> cumulative_;
  std::size_t argmax_ = 0;
  std::map<ClassId, ClassTable> classes_;
};

/// Everything a generation step needs about the (query, layer) pair.
struct MaturationContext {
  const FeatureMapper& mapper;
  Vector query_features;
  const RailsConfig& config;

  double affinity_of(const Example& x) const;
};

/// Generation 0: T/(kC) mutated copies of each flocked neighbor, in flock
/// order. Throws InvalidConfig when T is not a multiple of the entry count.
Population init_population(std::span<const FlockEntry> entries, const MaturationContext& ctx,
                           Rng& rng);

const Candidate& select_parent(const Population& population, double tau, bool greedy, Rng& rng);
const Candidate& select_mate(const Population& population, ClassId label, double tau, bool greedy,
                             Rng& rng);

/// Weight of parent 1 in cross-over: the two-point softmax of the parents'
/// affinities at temperature tau (0, 0.5 or 1 in greedy mode).
double crossover_weight(double affinity1, double affinity2, double tau, bool greedy);

/// Uniform cross-over: each element comes from p1 with probability
/// crossover_weight, else from p2. Parents must share a label.
Example crossover(const Candidate& p1, const Candidate& p2, double tau, bool greedy, Rng& rng);

/// Each element independently, with probability rho, receives noise of
/// magnitude U[delta_min, delta_max] and random sign, then is clipped to
/// [0,1].
Example mutate(Example x, double rho, double delta_min, double delta_max, Rng& rng);

/// T offspring of `previous` (generational replacement).
Population step_generation(const Population& previous, const MaturationContext& ctx, Rng& rng);

struct LayerSelection {
  std::string layer_id;
  std::vector<Candidate> plasma;
  std::vector<Candidate> memory;

  bool operator==(const LayerSelection&) const = default;
};

struct PlasmaMemoryOutput {
  std::vector<LayerSelection> layers;

  bool operator==(const PlasmaMemoryOutput&) const = default;
};

/// Top ceil(plasma_frac*T) and ceil(memory_frac*T) of `final_generation`
/// by descending affinity; ties keep population order.
LayerSelection extract_plasma_memory(const Population& final_generation,
                                     const std::string& layer_id, const RailsConfig& config);

/// One (query, layer) affinity maturation, retaining every generation.
class MaturationRun {
 public:
  MaturationRun(const Layer& layer, Example search_query, const RailsConfig& config, Rng rng);
  MaturationRun(const MaturationRun&) = delete;
  MaturationRun& operator=(const MaturationRun&) = delete;

  void initialize(std::span<const FlockEntry> entries);
  const Population& step();
  /// initialize + G steps.
  void run(std::span<const FlockEntry> entries);

  const std::vector<Population>& history() const noexcept { return populations_; }
  const Population& current() const { return populations_.back(); }
  LayerSelection extract() const;
  const Layer& layer() const noexcept { return layer_; }

 private:
  const Layer& layer_;
  Example query_;
  RailsConfig config_;
  MaturationContext ctx_;
  Rng rng_;
  std::vector<Population> populations_;
};

}  // namespace rails
