// SPDX-License-Identifier: Apache-2.0
#include "rails/store.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <json.hpp>

#include "rails/config.hpp"
#include "rails/error.hpp"
#include "rails/harness.hpp"

namespace rails {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little,
              "the on-disk formats are little-endian; add byte swapping for this target");

class ByteWriter {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  template <typename T>
  void put(T value) {
    bytes(&value, sizeof(T));
  }
  void str(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::size_t offset = 0)
      : data_(data), pos_(offset) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("truncated ") + what + ": need " + std::to_string(n) +
                            " bytes, " + std::to_string(remaining()) + " left",
                        pos_);
    }
  }
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string str(const char* what) {
    const auto len = get<std::uint32_t>(what);
    need(len, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), len);
    pos_ += len;
    return s;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_;
};

void expect_magic(ByteReader& r, std::span<const std::uint8_t> bytes, std::string_view magic) {
  r.need(magic.size(), "magic");
  if (std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
    throw FormatError("bad magic, expected \"" + std::string(magic) + "\"", 0);
  }
  for (std::size_t i = 0; i < magic.size(); ++i) r.get<std::uint8_t>("magic");
}

}  // namespace

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput("cannot open file '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write file '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidInput("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void write_file_atomic(const fs::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---- embeddings -----------------------------------------------------------

std::vector<std::uint8_t> encode_embeddings(const PrecomputedEmbedding& table) {
  ByteWriter w;
  w.bytes(kEmbeddingMagic.data(), kEmbeddingMagic.size());
  w.str(table.layer_id());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(table.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(table.dim()));
  for (float v : table.data()) w.put<float>(v);
  return std::move(w.buffer());
}

PrecomputedEmbedding decode_embeddings(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  expect_magic(r, bytes, kEmbeddingMagic);
  std::string id = r.str("layer_id");
  if (id.empty()) throw FormatError("empty layer_id", kEmbeddingMagic.size());
  const auto n = r.get<std::uint32_t>("row count");
  const std::size_t dim_offset = r.offset();
  const auto dim = r.get<std::uint32_t>("dimension");
  if (dim == 0) throw FormatError("dimension must be >= 1", dim_offset);
  const std::uint64_t expected = static_cast<std::uint64_t>(n) * dim * sizeof(float);
  if (r.remaining() != expected) {
    throw FormatError("size mismatch: header declares " + std::to_string(n) + "x" +
                          std::to_string(dim) + " floats (" + std::to_string(expected) +
                          " payload bytes) but " + std::to_string(r.remaining()) +
                          " bytes follow",
                      r.offset());
  }
  std::vector<float> data(static_cast<std::size_t>(n) * dim);
  for (auto& v : data) {
    const std::size_t at = r.offset();
    v = r.get<float>("payload");
    if (!std::isfinite(v)) throw FormatError("non-finite payload value", at);
  }
  return PrecomputedEmbedding(std::move(id), n, dim, std::move(data));
}

void save_embeddings(const PrecomputedEmbedding& table, const fs::path& path) {
  write_file_atomic(path, encode_embeddings(table));
}

PrecomputedEmbedding load_embeddings(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_embeddings(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

// ---- dataset CSV ----------------------------------------------------------

std::string format_dataset_csv(const LabeledDataset& data) {
  std::string out = "label";
  for (std::size_t i = 0; i < data.dim(); ++i) out += ",v" + std::to_string(i);
  out += '\n';
  for (const auto& x : data.examples()) {
    out += std::to_string(*x.label);
    for (double v : x.values) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

LabeledDataset parse_dataset_csv(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string_view>> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.emplace_back(pos, line);
    pos = end + 1;
  }
  if (lines.empty()) throw FormatError("empty dataset file", 0);

  auto split = [](std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return fields;
  };

  const auto header = split(lines.front().second);
  if (header.size() < 2 || header.front() != "label") {
    throw FormatError("header must be label,v0,...,v{d-1}", 0);
  }
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i] != "v" + std::to_string(i - 1)) {
      throw FormatError("header column " + std::to_string(i) + " must be v" + std::to_string(i - 1), 0);
    }
  }
  const std::size_t d = header.size() - 1;

  std::vector<Example> rows;
  rows.reserve(lines.size() - 1);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto [offset, line] = lines[li];
    const auto fields = split(line);
    if (fields.size() != d + 1) {
      throw FormatError("line " + std::to_string(li + 1) + " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(d + 1),
                        offset);
    }
    ClassId label = 0;
    {
      const auto f = fields[0];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), label);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size() || label < 0) {
        throw FormatError("line " + std::to_string(li + 1) + ": bad label '" + std::string(f) + "'", offset);
      }
    }
    Vector values(d);
    for (std::size_t i = 0; i < d; ++i) {
      const auto f = fields[i + 1];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), values[i]);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size() || f.empty()) {
        throw FormatError("line " + std::to_string(li + 1) + ": bad value '" + std::string(f) + "'", offset);
      }
      if (!(values[i] >= 0.0 && values[i] <= 1.0)) {
        throw FormatError("line " + std::to_string(li + 1) + ": value " + std::string(f) +
                              " outside [0,1]",
                          offset);
      }
    }
    rows.push_back(Example{std::move(values), label});
  }
  try {
    return LabeledDataset(std::move(rows));
  } catch (const InvalidInput& e) {
    throw FormatError(e.what(), 0);
  }
}

void save_dataset(const LabeledDataset& data, const fs::path& path) {
  write_file_atomic(path, format_dataset_csv(data));
}

LabeledDataset load_dataset(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_dataset_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

// ---- memory store ---------------------------------------------------------

namespace {

void encode_record(ByteWriter& w, const MemoryRecord& rec) {
  ByteWriter body;
  body.put<std::uint64_t>(rec.query_id);
  body.str(rec.layer_id);
  body.put<std::int32_t>(rec.label);
  body.put<std::int32_t>(rec.generation);
  body.put<double>(rec.affinity);
  body.put<std::uint32_t>(static_cast<std::uint32_t>(rec.values.size()));
  for (double v : rec.values) body.put<double>(v);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(body.buffer().size()));
  w.bytes(body.buffer().data(), body.buffer().size());
}

const char* kManifestName = "manifest.json";
const char* kMemoryName = "memory.bin";

}  // namespace

std::vector<MemoryRecord> decode_memory_records(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  expect_magic(r, bytes, kMemoryMagic);
  std::vector<MemoryRecord> out;
  while (r.remaining() > 0) {
    const std::size_t record_start = r.offset();
    const auto len = r.get<std::uint32_t>("record length");
    if (len > r.remaining()) {
      throw FormatError("record length " + std::to_string(len) + " exceeds the " +
                            std::to_string(r.remaining()) + " bytes left",
                        record_start);
    }
    ByteReader body(bytes.subspan(0, r.offset() + len), r.offset());
    MemoryRecord rec;
    rec.query_id = body.get<std::uint64_t>("query_id");
    rec.layer_id = body.str("layer_id");
    rec.label = body.get<std::int32_t>("label");
    rec.generation = body.get<std::int32_t>("generation");
    rec.affinity = body.get<double>("affinity");
    const auto dim = body.get<std::uint32_t>("dimension");
    body.need(static_cast<std::size_t>(dim) * sizeof(double), "values");
    rec.values.resize(dim);
    for (double& v : rec.values) {
      const std::size_t at = body.offset();
      v = body.get<double>("values");
      if (!std::isfinite(v)) throw FormatError("non-finite candidate value", at);
    }
    if (body.remaining() != 0) {
      throw FormatError("record length field disagrees with record contents", record_start);
    }
    if (rec.label < 0) throw FormatError("negative label", record_start);
    for (std::uint32_t i = 0; i < len; ++i) r.get<std::uint8_t>("record");
    out.push_back(std::move(rec));
  }
  return out;
}

void save_memory(const fs::path& dir, std::uint64_t query_id, const PlasmaMemoryOutput& output,
                 const RailsConfig& config) {
  const fs::path manifest_path = dir / kManifestName;
  const fs::path memory_path = dir / kMemoryName;
  const std::string hash = hash_hex(config_hash(config));

  nlohmann::json manifest;
  std::vector<std::uint8_t> existing;
  if (fs::exists(manifest_path)) {
    const auto text = read_file(manifest_path);
    try {
      manifest = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(manifest_path.string() + ": " + e.what(), 0);
    }
    if (manifest.value("config_hash", std::string()) != hash) {
      throw Error("E_CONFIG_MISMATCH", "memory store '" + dir.string() + "' was written under config " +
                                           manifest.value("config_hash", std::string("?")) +
                                           ", refusing to append records from config " + hash);
    }
    existing = read_file(memory_path);
    decode_memory_records(existing);
  } else {
    manifest = {{"format", std::string(kMemoryMagic)},
                {"config_hash", hash},
                {"seed", config.seed},
                {"population_size", config.population_size},
                {"memory_per_group", config.memory_size()},
                {"groups", nlohmann::json::array()},
                {"record_count", 0}};
    existing.assign(kMemoryMagic.begin(), kMemoryMagic.end());
  }

  ByteWriter w;
  w.buffer() = std::move(existing);
  std::size_t added = 0;
  for (const auto& layer : output.layers) {
    if (layer.memory.size() != config.memory_size()) {
      throw InvariantViolation("memory set of layer '" + layer.layer_id + "' has " +
                               std::to_string(layer.memory.size()) + " candidates, expected " +
                               std::to_string(config.memory_size()));
    }
    for (const auto& c : layer.memory) {
      encode_record(w, MemoryRecord{query_id, layer.layer_id, c.label(), c.generation, c.affinity,
                                    c.example.values});
    }
    manifest["groups"].push_back(
        {{"query_id", query_id}, {"layer_id", layer.layer_id}, {"count", layer.memory.size()}});
    added += layer.memory.size();
  }
  manifest["record_count"] = manifest["record_count"].get<std::size_t>() + added;

  write_file_atomic(memory_path, w.buffer());
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
}

std::vector<MemoryRecord> load_memory(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestName;
  const fs::path memory_path = dir / kMemoryName;
  const auto text = read_file(manifest_path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what(), 0);
  }
  const auto bytes = read_file(memory_path);
  std::vector<MemoryRecord> records;
  try {
    records = decode_memory_records(bytes);
  } catch (const FormatError& e) {
    throw FormatError(memory_path.string() + ": " + e.what(), e.offset());
  }

  const auto declared = manifest.value("record_count", std::size_t{0});
  if (records.size() != declared) {
    throw FormatError("manifest declares " + std::to_string(declared) + " records, " +
                          memory_path.string() + " holds " + std::to_string(records.size()),
                      0);
  }
  std::size_t cursor = 0;
  for (const auto& g : manifest.value("groups", nlohmann::json::array())) {
    const auto qid = g.at("query_id").get<std::uint64_t>();
    const auto layer = g.at("layer_id").get<std::string>();
    const auto count = g.at("count").get<std::size_t>();
    for (std::size_t i = 0; i < count; ++i, ++cursor) {
      if (cursor >= records.size() || records[cursor].query_id != qid ||
          records[cursor].layer_id != layer) {
        throw FormatError("record " + std::to_string(cursor) + " does not match manifest group (" +
                              std::to_string(qid) + ", " + layer + ")",
                          0);
      }
    }
  }
  if (cursor != records.size()) throw FormatError("records outside any manifest group", 0);
  return records;
}

}  // namespace rails
