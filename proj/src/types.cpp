// SPDX-License-Identifier: Apache-2.0
#include "rails/types.hpp"

#include <cmath>
#include <set>
#include <string>

#include "rails/error.hpp"

namespace rails {

std::size_t ceil_fraction(double frac, std::size_t n) noexcept {
  const double scaled = frac * static_cast<double>(n);
  return static_cast<std::size_t>(std::ceil(scaled - 1e-9));
}

std::size_t RailsConfig::plasma_size() const noexcept {
  return ceil_fraction(plasma_frac, static_cast<std::size_t>(population_size));
}

std::size_t RailsConfig::memory_size() const noexcept {
  return ceil_fraction(memory_frac, static_cast<std::size_t>(population_size));
}

std::vector<std::string> config_violations(const RailsConfig& c, std::optional<int> num_classes) {
  std::vector<std::string> out;
  if (c.k < 1) out.push_back("k must be >= 1 (got " + std::to_string(c.k) + ")");
  if (c.population_size < 1)
    out.push_back("population_size must be >= 1 (got " + std::to_string(c.population_size) + ")");
  if (c.generations < 1)
    out.push_back("generations must be >= 1 (got " + std::to_string(c.generations) + ")");
  if (!(c.tau > 0.0) || !std::isfinite(c.tau))
    out.push_back("tau must be > 0; use greedy=true for argmax selection");
  if (!(c.rho >= 0.0 && c.rho <= 1.0)) out.push_back("rho must lie in [0, 1]");
  if (!(c.delta_min >= 0.0)) out.push_back("delta_min must be >= 0");
  if (!(c.delta_max >= c.delta_min)) out.push_back("delta_max must be >= delta_min");
  if (!(c.plasma_frac > 0.0 && c.plasma_frac <= 1.0)) out.push_back("plasma_frac must lie in (0, 1]");
  if (!(c.memory_frac > 0.0 && c.memory_frac <= 1.0)) out.push_back("memory_frac must lie in (0, 1]");
  if (!(c.plasma_frac <= c.memory_frac)) out.push_back("plasma_frac must be <= memory_frac");
  if (!(c.sense_threshold >= 0.0 && c.sense_threshold <= 100.0))
    out.push_back("sense_threshold must lie in [0, 100]");
  if (c.layers.empty()) out.push_back("layers must be nonempty");
  std::set<std::string> ids;
  for (const auto& layer : c.layers) {
    if (layer.id.empty()) out.push_back("layer id must be nonempty");
    if (!ids.insert(layer.id).second) out.push_back("duplicate layer id '" + layer.id + "'");
    if (layer.kind == LayerKind::Projection && layer.output_dim == 0)
      out.push_back("projection layer '" + layer.id + "' needs output_dim >= 1");
  }
  if (num_classes) {
    if (*num_classes < 1) {
      out.push_back("num_classes must be >= 1");
    } else if (c.k >= 1 && c.population_size >= 1) {
      const long long kc = static_cast<long long>(c.k) * *num_classes;
      if (c.population_size % kc != 0) {
        out.push_back("population_size " + std::to_string(c.population_size) +
                      " is not divisible by k*C = " + std::to_string(kc) + " (remainder " +
                      std::to_string(c.population_size % kc) + ")");
      }
    }
  }
  return out;
}

void validate(const RailsConfig& config, std::optional<int> num_classes) {
  auto violations = config_violations(config, num_classes);
  if (!violations.empty()) throw InvalidConfig(std::move(violations));
}

}  // namespace rails
