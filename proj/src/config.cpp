// SPDX-License-Identifier: Apache-2.0
#include "rails/config.hpp"

#include <cstdio>
#include <set>
#include <string>

#include "rails/error.hpp"
#include "rails/rng.hpp"
#include "rails/store.hpp"

namespace rails {

using nlohmann::json;

namespace {

// Collects type errors instead of throwing on the first one.
class Reader {
 public:
  Reader(const json& obj, std::string where, std::vector<std::string>& errors)
      : obj_(obj), where_(std::move(where)), errors_(errors) {}

  void reject_unknown(const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj_.items()) {
      if (!allowed.contains(key)) errors_.push_back(where_ + "unknown key '" + key + "'");
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }

  void get(const char* key, int& out) {
    if (!obj_.contains(key)) return;
    const auto& v = obj_[key];
    if (!v.is_number_integer()) return type_error(key, "an integer");
    out = v.get<int>();
  }
  void get(const char* key, std::uint64_t& out) {
    if (!obj_.contains(key)) return;
    const auto& v = obj_[key];
    // nlohmann stores literals built from signed C++ ints as signed.
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      return type_error(key, "a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }
  void get(const char* key, std::size_t& out, bool) {
    std::uint64_t tmp = out;
    get(key, tmp);
    out = static_cast<std::size_t>(tmp);
  }
  void get(const char* key, double& out) {
    if (!obj_.contains(key)) return;
    const auto& v = obj_[key];
    if (!v.is_number()) return type_error(key, "a number");
    out = v.get<double>();
  }
  void get(const char* key, bool& out) {
    if (!obj_.contains(key)) return;
    const auto& v = obj_[key];
    if (!v.is_boolean()) return type_error(key, "a boolean");
    out = v.get<bool>();
  }
  void get(const char* key, std::string& out) {
    if (!obj_.contains(key)) return;
    const auto& v = obj_[key];
    if (!v.is_string()) return type_error(key, "a string");
    out = v.get<std::string>();
  }

 private:
  void type_error(const char* key, const char* expected) {
    errors_.push_back(where_ + "'" + key + "' must be " + expected);
  }

  const json& obj_;
  std::string where_;
  std::vector<std::string>& errors_;
};

LayerKind parse_layer_kind(const std::string& name, std::vector<std::string>& errors) {
  if (name == "identity") return LayerKind::Identity;
  if (name == "projection") return LayerKind::Projection;
  if (name == "embedding") return LayerKind::Embedding;
  errors.push_back("unknown layer kind '" + name + "' (expected identity, projection or embedding)");
  return LayerKind::Identity;
}

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Identity: return "identity";
    case LayerKind::Projection: return "projection";
    case LayerKind::Embedding: return "embedding";
  }
  return "identity";
}

RailsConfig parse_rails(const json& doc, std::optional<int> num_classes,
                        std::vector<std::string>& errors) {
  RailsConfig c;
  if (!doc.is_object()) {
    errors.push_back("config must be a JSON object");
    return c;
  }
  Reader r(doc, "", errors);
  r.reject_unknown({"k", "population_size", "generations", "tau", "greedy", "rho", "delta_min",
                    "delta_max", "plasma_frac", "memory_frac", "seed", "layers", "sensing",
                    "sense_threshold", "num_classes"});
  if (!r.has("seed")) errors.push_back("missing required key 'seed'");
  r.get("k", c.k);
  r.get("population_size", c.population_size);
  r.get("generations", c.generations);
  r.get("tau", c.tau);
  r.get("greedy", c.greedy);
  r.get("rho", c.rho);
  r.get("delta_min", c.delta_min);
  r.get("delta_max", c.delta_max);
  r.get("plasma_frac", c.plasma_frac);
  r.get("memory_frac", c.memory_frac);
  r.get("seed", c.seed);
  r.get("sensing", c.sensing);
  r.get("sense_threshold", c.sense_threshold);
  if (!num_classes && doc.contains("num_classes")) {
    int n = 0;
    r.get("num_classes", n);
    num_classes = n;
  }
  if (doc.contains("layers")) {
    const auto& layers = doc["layers"];
    if (!layers.is_array()) {
      errors.push_back("'layers' must be an array");
    } else {
      c.layers.clear();
      for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string where = "layers[" + std::to_string(i) + "]: ";
        if (!l.is_object()) {
          errors.push_back(where + "must be an object");
          continue;
        }
        Reader lr(l, where, errors);
        lr.reject_unknown({"id", "kind", "output_dim", "seed"});
        LayerSpec spec;
        std::string kind = "identity";
        lr.get("id", spec.id);
        lr.get("kind", kind);
        lr.get("output_dim", spec.output_dim, true);
        lr.get("seed", spec.seed);
        spec.kind = parse_layer_kind(kind, errors);
        if (spec.id.empty()) spec.id = kind + std::to_string(i);
        c.layers.push_back(std::move(spec));
      }
    }
  }
  // Fields with type errors kept their defaults, so range checks on the
  // rest are still meaningful.
  auto violations = config_violations(c, num_classes);
  errors.insert(errors.end(), violations.begin(), violations.end());
  return c;
}

json load_json(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

}  // namespace

RailsConfig parse_config(const json& doc, std::optional<int> num_classes) {
  std::vector<std::string> errors;
  RailsConfig c = parse_rails(doc, num_classes, errors);
  if (!errors.empty()) throw InvalidConfig(std::move(errors));
  return c;
}

RailsConfig load_config(const std::filesystem::path& path, std::optional<int> num_classes) {
  return parse_config(load_json(path), num_classes);
}

json to_json(const RailsConfig& c) {
  json layers = json::array();
  for (const auto& l : c.layers) {
    json entry = {{"id", l.id}, {"kind", layer_kind_name(l.kind)}};
    if (l.kind == LayerKind::Projection) {
      entry["output_dim"] = l.output_dim;
      entry["seed"] = l.seed;
    }
    layers.push_back(std::move(entry));
  }
  return json{{"k", c.k},
              {"population_size", c.population_size},
              {"generations", c.generations},
              {"tau", c.tau},
              {"greedy", c.greedy},
              {"rho", c.rho},
              {"delta_min", c.delta_min},
              {"delta_max", c.delta_max},
              {"plasma_frac", c.plasma_frac},
              {"memory_frac", c.memory_frac},
              {"seed", c.seed},
              {"layers", std::move(layers)},
              {"sensing", c.sensing},
              {"sense_threshold", c.sense_threshold}};
}

std::uint64_t config_hash(const RailsConfig& config) { return fnv1a64(to_json(config).dump()); }

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

json to_json(const BlobSpec& spec) {
  return json{{"means", spec.means},     {"sigma", spec.sigma}, {"n_train", spec.n_train},
              {"n_test", spec.n_test},   {"seed", spec.seed}};
}

json to_json(const AttackSpec& spec) {
  return json{{"kind", to_string(spec.kind)},
              {"epsilon", spec.epsilon},
              {"steps", spec.steps},
              {"seed", spec.seed}};
}

RunConfig parse_run_config(const json& doc, std::optional<int> num_classes) {
  std::vector<std::string> errors;
  RunConfig run;
  if (!doc.is_object()) throw InvalidConfig("config must be a JSON object");
  json rails_part = doc;
  rails_part.erase("blobs");
  rails_part.erase("attack");
  run.rails = parse_rails(rails_part, num_classes, errors);

  if (doc.contains("blobs")) {
    const auto& b = doc["blobs"];
    if (!b.is_object()) {
      errors.push_back("'blobs' must be an object");
    } else {
      Reader br(b, "blobs: ", errors);
      br.reject_unknown({"means", "num_classes", "dim", "mean_lo", "mean_hi", "mean_seed", "sigma",
                         "n_train", "n_test", "seed"});
      BlobSpec spec;
      br.get("sigma", spec.sigma);
      br.get("n_train", spec.n_train);
      br.get("n_test", spec.n_test);
      br.get("seed", spec.seed);
      if (b.contains("means")) {
        try {
          spec.means = b["means"].get<std::vector<Vector>>();
        } catch (const json::exception&) {
          errors.push_back("blobs: 'means' must be an array of number arrays");
        }
      } else {
        int classes = 3;
        std::size_t dim = 8;
        double lo = 0.2;
        double hi = 0.8;
        std::uint64_t mean_seed = spec.seed;
        br.get("num_classes", classes);
        br.get("dim", dim, true);
        br.get("mean_lo", lo);
        br.get("mean_hi", hi);
        br.get("mean_seed", mean_seed);
        try {
          spec.means = simplex_means(classes, dim, lo, hi, mean_seed);
        } catch (const InvalidConfig& e) {
          errors.push_back(std::string("blobs: ") + e.what());
        }
      }
      run.blobs = std::move(spec);
    }
  }
  if (doc.contains("attack")) {
    const auto& a = doc["attack"];
    if (!a.is_object()) {
      errors.push_back("'attack' must be an object");
    } else {
      Reader ar(a, "attack: ", errors);
      ar.reject_unknown({"kind", "epsilon", "steps", "seed"});
      AttackSpec spec;
      std::string kind = to_string(spec.kind);
      ar.get("kind", kind);
      ar.get("epsilon", spec.epsilon);
      ar.get("steps", spec.steps);
      ar.get("seed", spec.seed);
      try {
        spec.kind = parse_attack_kind(kind);
      } catch (const InvalidConfig& e) {
        errors.push_back(std::string("attack: ") + e.violations().front());
      }
      if (!(spec.epsilon >= 0.0)) errors.push_back("attack: epsilon must be >= 0");
      if (spec.steps < 0) errors.push_back("attack: steps must be >= 0");
      run.attack = spec;
    }
  }
  if (!errors.empty()) throw InvalidConfig(std::move(errors));
  return run;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<int> num_classes) {
  return parse_run_config(load_json(path), num_classes);
}

}  // namespace rails
