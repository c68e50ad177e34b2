// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rails/dataset.hpp"
#include "rails/layer.hpp"
#include "rails/maturation.hpp"
#include "rails/types.hpp"

namespace rails {

// Embedding file, little-endian throughout:
//   magic    8 bytes  "RLSEMB01"
//   id_len   u32      byte length of layer_id
//   layer_id id_len bytes UTF-8
//   n        u32      rows
//   dim      u32      columns
//   payload  n*dim    f32, row-major
// The payload must end exactly at end of file and contain only finite
// values.
inline constexpr std::string_view kEmbeddingMagic = "RLSEMB01";

std::vector<std::uint8_t> encode_embeddings(const PrecomputedEmbedding& table);
PrecomputedEmbedding decode_embeddings(std::span<const std::uint8_t> bytes);

void save_embeddings(const PrecomputedEmbedding& table, const std::filesystem::path& path);
PrecomputedEmbedding load_embeddings(const std::filesystem::path& path);

// Dataset CSV: header `label,v0,...,v{d-1}`, 0-based integer labels that
// cover [0, C), values in [0,1]. Values are written as shortest
// round-trip decimals.
std::string format_dataset_csv(const LabeledDataset& data);
LabeledDataset parse_dataset_csv(std::string_view text);

void save_dataset(const LabeledDataset& data, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

// Memory store: a directory holding `memory.bin` and `manifest.json`.
//
// memory.bin = magic "RLSMEM01", then records:
//   len       u32  byte length of the rest of the record
//   query_id  u64
//   id_len    u32, layer_id bytes
//   label     i32
//   gen       i32
//   affinity  f64
//   dim       u32, dim * f64 values
// The manifest records config hash, seed, memory size per group, the
// (query, layer) groups and the record count. Appending under a different
// config hash is refused.
inline constexpr std::string_view kMemoryMagic = "RLSMEM01";

struct MemoryRecord {
  std::uint64_t query_id = 0;
  std::string layer_id;
  ClassId label = 0;
  int generation = 0;
  double affinity = 0.0;
  Vector values;

  bool operator==(const MemoryRecord&) const = default;
};

std::vector<MemoryRecord> decode_memory_records(std::span<const std::uint8_t> bytes);

/// Appends the memory sets of one query's run.
void save_memory(const std::filesystem::path& dir, std::uint64_t query_id,
                 const PlasmaMemoryOutput& output, const RailsConfig& config);

std::vector<MemoryRecord> load_memory(const std::filesystem::path& dir);

/// Bytes of a file; throws MissingInput when it cannot be opened.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Write to a temporary sibling, then rename over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace rails
