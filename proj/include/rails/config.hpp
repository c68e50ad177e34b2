// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "rails/harness.hpp"
#include "rails/types.hpp"

namespace rails {

/// RailsConfig from a JSON object. `seed` is required; every other key
/// falls back to its documented default. Unknown keys, type errors and
/// range violations are all collected into one InvalidConfig.
RailsConfig parse_config(const nlohmann::json& doc, std::optional<int> num_classes = std::nullopt);
RailsConfig load_config(const std::filesystem::path& path,
                        std::optional<int> num_classes = std::nullopt);

nlohmann::json to_json(const RailsConfig& config);

/// FNV-1a 64 over the compact, key-sorted JSON serialization.
std::uint64_t config_hash(const RailsConfig& config);
std::string hash_hex(std::uint64_t hash);

/// A config file may also carry the benchmark's data and attack settings.
struct RunConfig {
  RailsConfig rails;
  std::optional<BlobSpec> blobs;
  std::optional<AttackSpec> attack;
};

RunConfig parse_run_config(const nlohmann::json& doc,
                           std::optional<int> num_classes = std::nullopt);
RunConfig load_run_config(const std::filesystem::path& path,
                          std::optional<int> num_classes = std::nullopt);

nlohmann::json to_json(const BlobSpec& spec);
nlohmann::json to_json(const AttackSpec& spec);

}  // namespace rails
