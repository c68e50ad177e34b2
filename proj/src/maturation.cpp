// SPDX-License-Identifier: Apache-2.0
#include "rails/maturation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rails/error.hpp"

namespace rails {

namespace {

std::size_t draw_cumulative(const std::vector<double>& cumulative, Rng& rng) {
  const double u = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  const auto idx = static_cast<std::size_t>(it - cumulative.begin());
  return std::min(idx, cumulative.size() - 1);
}

}  // namespace

SelectionWeights::SelectionWeights(const Population& population, double tau, bool greedy)
    : greedy_(greedy) {
  if (population.members.empty()) throw InvalidInput("selection over an empty population");
  if (!(tau > 0.0)) throw InvalidInput("selection temperature must be > 0");
  const auto& m = population.members;

  double best = m.front().affinity;
  for (std::size_t i = 1; i < m.size(); ++i) {
    if (m[i].affinity > best) {
      best = m[i].affinity;
      argmax_ = i;
    }
  }
  cumulative_.reserve(m.size());
  double acc = 0.0;
  for (const auto& c : m) {
    acc += std::exp((c.affinity - best) / tau);
    cumulative_.push_back(acc);
  }

  for (std::size_t i = 0; i < m.size(); ++i) classes_[m[i].label()].members.push_back(i);
  for (auto& [label, table] : classes_) {
    double class_best = m[table.members.front()].affinity;
    table.argmax = table.members.front();
    for (std::size_t i : table.members) {
      if (m[i].affinity > class_best) {
        class_best = m[i].affinity;
        table.argmax = i;
      }
    }
    double class_acc = 0.0;
    table.cumulative.reserve(table.members.size());
    for (std::size_t i : table.members) {
      class_acc += std::exp((m[i].affinity - class_best) / tau);
      table.cumulative.push_back(class_acc);
    }
  }
}

std::vector<double> SelectionWeights::probabilities() const {
  std::vector<double> p(cumulative_.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < cumulative_.size(); ++i) {
    p[i] = (cumulative_[i] - prev) / cumulative_.back();
    prev = cumulative_[i];
  }
  return p;
}

std::vector<std::pair<std::size_t, double>> SelectionWeights::class_probabilities(ClassId c) const {
  std::vector<std::pair<std::size_t, double>> out;
  auto it = classes_.find(c);
  if (it == classes_.end()) return out;
  const auto& t = it->second;
  double prev = 0.0;
  for (std::size_t j = 0; j < t.members.size(); ++j) {
    out.emplace_back(t.members[j], (t.cumulative[j] - prev) / t.cumulative.back());
    prev = t.cumulative[j];
  }
  return out;
}

std::size_t SelectionWeights::draw(Rng& rng) const {
  if (greedy_) return argmax_;
  return draw_cumulative(cumulative_, rng);
}

std::size_t SelectionWeights::draw_in_class(ClassId c, Rng& rng) const {
  auto it = classes_.find(c);
  if (it == classes_.end()) {
    throw InvariantViolation("mate selection for class " + std::to_string(c) +
                             " absent from the population");
  }
  const auto& t = it->second;
  if (greedy_) return t.argmax;
  return t.members[draw_cumulative(t.cumulative, rng)];
}

double MaturationContext::affinity_of(const Example& x) const {
  return feature_affinity(mapper.map(x.values), query_features);
}

Population init_population(std::span<const FlockEntry> entries, const MaturationContext& ctx,
                           Rng& rng) {
  const auto& cfg = ctx.config;
  if (entries.empty()) throw InvalidInput("generation 0 needs flocked neighbors");
  const auto total = static_cast<std::size_t>(cfg.population_size);
  if (total % entries.size() != 0) {
    throw InvalidConfig("population_size " + std::to_string(total) +
                        " is not divisible by k*C = " + std::to_string(entries.size()));
  }
  const std::size_t copies = total / entries.size();
  Population pop;
  pop.generation = 0;
  pop.members.reserve(total);
  for (std::size_t e = 0; e < entries.size(); ++e) {
    if (!entries[e].example.label) throw InvalidInput("flocked neighbor without a label");
    for (std::size_t c = 0; c < copies; ++c) {
      Example x = mutate(entries[e].example, cfg.rho, cfg.delta_min, cfg.delta_max, rng);
      const double a = ctx.affinity_of(x);
      pop.members.push_back(Candidate{std::move(x), a, 0, e});
    }
  }
  return pop;
}

const Candidate& select_parent(const Population& population, double tau, bool greedy, Rng& rng) {
  return population.members[SelectionWeights(population, tau, greedy).draw(rng)];
}

const Candidate& select_mate(const Population& population, ClassId label, double tau, bool greedy,
                             Rng& rng) {
  return population.members[SelectionWeights(population, tau, greedy).draw_in_class(label, rng)];
}

double crossover_weight(double affinity1, double affinity2, double tau, bool greedy) {
  if (greedy) {
    if (affinity1 > affinity2) return 1.0;
    if (affinity1 < affinity2) return 0.0;
    return 0.5;
  }
  return 1.0 / (1.0 + std::exp((affinity2 - affinity1) / tau));
}

Example crossover(const Candidate& p1, const Candidate& p2, double tau, bool greedy, Rng& rng) {
  if (p1.example.label != p2.example.label) {
    throw InvariantViolation("cross-over between different labels");
  }
  if (p1.example.dim() != p2.example.dim()) {
    throw InvariantViolation("cross-over between different dimensions");
  }
  const double w = crossover_weight(p1.affinity, p2.affinity, tau, greedy);
  Example child{Vector(p1.example.dim()), p1.example.label};
  for (std::size_t i = 0; i < child.values.size(); ++i) {
    child.values[i] = rng.bernoulli(w) ? p1.example.values[i] : p2.example.values[i];
  }
  return child;
}

Example mutate(Example x, double rho, double delta_min, double delta_max, Rng& rng) {
  for (double& v : x.values) {
    if (!rng.bernoulli(rho)) continue;
    const double magnitude = rng.uniform(delta_min, delta_max);
    const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
    v = std::clamp(v + sign * magnitude, 0.0, 1.0);
  }
  return x;
}

Population step_generation(const Population& previous, const MaturationContext& ctx, Rng& rng) {
  const auto& cfg = ctx.config;
  const bool greedy = cfg.is_greedy();
  const SelectionWeights weights(previous, cfg.tau, greedy);
  Population next;
  next.generation = previous.generation + 1;
  next.members.reserve(static_cast<std::size_t>(cfg.population_size));
  for (int t = 0; t < cfg.population_size; ++t) {
    const Candidate& p1 = previous.members[weights.draw(rng)];
    const Candidate& p2 = previous.members[weights.draw_in_class(p1.label(), rng)];
    Example child = crossover(p1, p2, cfg.tau, greedy, rng);
    child = mutate(std::move(child), cfg.rho, cfg.delta_min, cfg.delta_max, rng);
    const double a = ctx.affinity_of(child);
    next.members.push_back(Candidate{std::move(child), a, next.generation, p1.lineage});
  }
  return next;
}

LayerSelection extract_plasma_memory(const Population& final_generation,
                                     const std::string& layer_id, const RailsConfig& config) {
  const auto& m = final_generation.members;
  std::vector<std::size_t> order(m.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return m[a].affinity > m[b].affinity; });
  const std::size_t n_plasma = std::min(ceil_fraction(config.plasma_frac, m.size()), m.size());
  const std::size_t n_memory = std::min(ceil_fraction(config.memory_frac, m.size()), m.size());
  LayerSelection out;
  out.layer_id = layer_id;
  for (std::size_t i = 0; i < n_plasma; ++i) out.plasma.push_back(m[order[i]]);
  for (std::size_t i = 0; i < n_memory; ++i) out.memory.push_back(m[order[i]]);
  return out;
}

MaturationRun::MaturationRun(const Layer& layer, Example search_query, const RailsConfig& config,
                             Rng rng)
    : layer_(layer),
      query_(std::move(search_query)),
      config_(config),
      ctx_{layer.mapper(), layer.map(query_.values), config_},
      rng_(std::move(rng)) {}

void MaturationRun::initialize(std::span<const FlockEntry> entries) {
  populations_.clear();
  populations_.push_back(init_population(entries, ctx_, rng_));
}

const Population& MaturationRun::step() {
  if (populations_.empty()) throw InvariantViolation("maturation step before generation 0");
  populations_.push_back(step_generation(populations_.back(), ctx_, rng_));
  return populations_.back();
}

void MaturationRun::run(std::span<const FlockEntry> entries) {
  initialize(entries);
  for (int g = 0; g < config_.generations; ++g) step();
}

LayerSelection MaturationRun::extract() const {
  return extract_plasma_memory(current(), layer_.id(), config_);
}

}  // namespace rails
