// SPDX-License-Identifier: Apache-2.0
// Command-line driver: make-blobs, attack, predict, sense, curves, evaluate.
#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rails/config.hpp"
#include "rails/decision.hpp"
#include "rails/error.hpp"
#include "rails/harness.hpp"
#include "rails/rng.hpp"
#include "rails/store.hpp"

#ifndef RAILS_VERSION
#define RAILS_VERSION "dev"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace rails {
namespace {

struct Options {
  std::string command;
  std::string config;
  std::string train;
  std::string test;
  std::string out;
  std::vector<std::string> embeddings;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string format = "csv";
  std::size_t limit = 0;
  unsigned threads = 0;
};

const std::string& require(const std::string& value, const char* flag, const Options& opts) {
  if (value.empty()) {
    throw MissingInput(std::string(flag) + " is required for '" + opts.command + "'");
  }
  return value;
}

std::string file_digest(const std::string& path) {
  const auto bytes = read_file(path);
  return hash_hex(fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
}

// Everything a subcommand produced, recorded in the manifest.
class Run {
 public:
  explicit Run(const Options& opts) : opts_(opts), start_(std::chrono::steady_clock::now()) {
    out_ = require(opts.out, "--out", opts);
    fs::create_directories(out_);
  }

  const fs::path& out() const { return out_; }

  void input(const std::string& role, const std::string& path) {
    inputs_[role].push_back({{"path", path}, {"fnv1a64", file_digest(path)}});
  }

  void write(const std::string& name, const std::string& text) {
    write_file_atomic(out_ / name, text);
    outputs_.push_back(name);
  }

  void produced(const std::string& name) { outputs_.push_back(name); }

  void finish(const RailsConfig& config, const json& extra_config = json::object()) {
    json resolved = to_json(config);
    for (const auto& [key, value] : extra_config.items()) resolved[key] = value;
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json manifest = {{"command", opts_.command},
                     {"version", RAILS_VERSION},
                     {"config", resolved},
                     {"config_hash", hash_hex(config_hash(config))},
                     {"seed", config.seed},
                     {"inputs", inputs_},
                     {"outputs", outputs_},
                     {"wall_time", seconds}};
    write_file_atomic(out_ / "manifest.json", manifest.dump(2) + "\n");
  }

 private:
  const Options& opts_;
  fs::path out_;
  std::chrono::steady_clock::time_point start_;
  json inputs_ = json::object();
  std::vector<std::string> outputs_;
};

struct Inputs {
  RunConfig run;
  std::shared_ptr<const LabeledDataset> train;
  std::shared_ptr<const LabeledDataset> test;
  std::map<std::string, std::shared_ptr<const PrecomputedEmbedding>> embeddings;
};

Inputs load_inputs(const Options& opts, Run& run) {
  Inputs in;
  in.train = std::make_shared<const LabeledDataset>(load_dataset(require(opts.train, "--train", opts)));
  in.test = std::make_shared<const LabeledDataset>(load_dataset(require(opts.test, "--test", opts)));
  if (in.test->dim() != in.train->dim()) {
    throw InvalidInput("--test has d=" + std::to_string(in.test->dim()) + " but --train has d=" +
                       std::to_string(in.train->dim()));
  }
  in.run = load_run_config(require(opts.config, "--config", opts), in.train->num_classes());
  if (opts.seed_set) in.run.rails.seed = opts.seed;
  run.input("train", opts.train);
  run.input("test", opts.test);
  run.input("config", opts.config);

  for (const auto& path : opts.embeddings) {
    auto table = std::make_shared<const PrecomputedEmbedding>(load_embeddings(path));
    const auto& id = table->layer_id();
    const bool declared = std::any_of(in.run.rails.layers.begin(), in.run.rails.layers.end(),
                                      [&](const LayerSpec& l) {
                                        return l.id == id && l.kind == LayerKind::Embedding;
                                      });
    if (!declared) {
      throw InvalidConfig("--embeddings " + path + ": layer '" + id +
                          "' is not an embedding layer in the config");
    }
    if (in.embeddings.contains(id)) {
      throw InvalidInput("--embeddings: layer '" + id + "' supplied twice");
    }
    const std::size_t want = in.train->size() + in.test->size();
    if (table->rows() != want) {
      throw InvalidInput("--embeddings " + path + ": " + std::to_string(table->rows()) +
                         " rows, expected train+test = " + std::to_string(want));
    }
    in.embeddings[id] = std::move(table);
    run.input("embeddings", path);
  }
  return in;
}

Query test_query(const Inputs& in, std::size_t i) {
  Query q{i, Example{(*in.test)[i].values, std::nullopt}, {}};
  for (const auto& [id, table] : in.embeddings) q.companions[id] = table->lookup(in.train->size() + i);
  return q;
}

void reject_embedding_layers(const RailsConfig& config, const Options& opts) {
  for (const auto& l : config.layers) {
    if (l.kind == LayerKind::Embedding) {
      throw InvalidConfig("'" + opts.command + "' perturbs raw inputs and cannot use embedding layer '" +
                          l.id + "'");
    }
  }
}

void check_format(const Options& opts) {
  if (opts.format != "csv" && opts.format != "json") {
    throw InvalidInput("--format must be csv or json (got '" + opts.format + "')");
  }
}

// ---- subcommands ------------------------------------------------------------

void cmd_make_blobs(const Options& opts) {
  Run run(opts);
  RunConfig cfg = load_run_config(require(opts.config, "--config", opts));
  run.input("config", opts.config);
  if (!cfg.blobs) throw InvalidConfig("config has no 'blobs' section");
  if (opts.seed_set) {
    cfg.rails.seed = opts.seed;
    cfg.blobs->seed = opts.seed;
  }
  const auto blobs = make_blobs(*cfg.blobs);
  run.write("train.csv", format_dataset_csv(blobs.train));
  run.write("test.csv", format_dataset_csv(blobs.test));
  run.finish(cfg.rails, {{"blobs", to_json(*cfg.blobs)}});
}

AttackSpec resolved_attack(const Inputs& in) {
  if (in.run.attack) return *in.run.attack;
  AttackSpec spec;
  spec.seed = in.run.rails.seed;
  return spec;
}

void cmd_attack(const Options& opts) {
  Run run(opts);
  const Inputs in = load_inputs(opts, run);
  reject_embedding_layers(in.run.rails, opts);
  const AttackSpec spec = resolved_attack(in);
  run.write("adv.csv", format_dataset_csv(attack(*in.test, spec, *in.train)));
  run.finish(in.run.rails, {{"attack", to_json(spec)}});
}

void cmd_evaluate(const Options& opts) {
  check_format(opts);
  Run run(opts);
  const Inputs in = load_inputs(opts, run);
  reject_embedding_layers(in.run.rails, opts);
  const AttackSpec spec = resolved_attack(in);
  const auto adv = attack(*in.test, spec, *in.train);
  const auto report = evaluate(*in.train, *in.test, adv, in.run.rails, spec.epsilon, opts.threads);
  if (opts.format == "csv") {
    std::ostringstream csv;
    write_eval_csv(report, csv);
    run.write("eval.csv", csv.str());
  } else {
    json rows = json::array();
    for (const auto& r : report.rows) {
      rows.push_back({{"method", r.method}, {"split", r.split}, {"accuracy", r.accuracy}});
    }
    const json doc = {{"rows", rows},
                      {"epsilon", report.epsilon},
                      {"seed", report.seed},
                      {"test_size", report.test_size},
                      {"flagged_clean", report.flagged_clean},
                      {"flagged_adv", report.flagged_adv}};
    run.write("eval.json", doc.dump(2) + "\n");
  }
  run.finish(in.run.rails, {{"attack", to_json(spec)}});
}

void cmd_predict(const Options& opts) {
  check_format(opts);
  Run run(opts);
  const Inputs in = load_inputs(opts, run);
  const auto& config = in.run.rails;
  const auto layers = make_layers(config, in.train, in.embeddings);
  std::optional<Calibration> calibration;
  if (config.sensing) calibration = calibrate_leave_one_out(layers, config.k);

  std::vector<PredictResult> results(in.test->size());
  parallel_for(results.size(), opts.threads, [&](std::size_t i) {
    results[i] = predict(layers, test_query(in, i), config,
                         PredictOptions{calibration ? &*calibration : nullptr, false});
  });

  const int classes = in.train->num_classes();
  if (opts.format == "csv") {
    std::string csv = "query_id,label,prediction";
    for (int c = 0; c < classes; ++c) csv += ",votes_" + std::to_string(c);
    csv += ",threat_raw,threat_percentile,flagged\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& p = results[i].prediction;
      csv += std::to_string(i) + "," + std::to_string(*(*in.test)[i].label) + "," +
             std::to_string(p.label);
      for (int c = 0; c < classes; ++c) {
        const auto it = p.vote_counts.find(c);
        csv += "," + std::to_string(it == p.vote_counts.end() ? 0 : it->second);
      }
      if (const auto& t = results[i].threat) {
        csv += "," + format_double(t->raw_score) + "," + format_double(t->percentile) + "," +
               (t->flagged ? "1" : "0") + "\n";
      } else {
        csv += ",,,\n";
      }
    }
    run.write("predictions.csv", csv);
  } else {
    json rows = json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& p = results[i].prediction;
      json votes = json::object();
      for (const auto& [c, n] : p.vote_counts) votes[std::to_string(c)] = n;
      json row = {{"query_id", i},
                  {"label", *(*in.test)[i].label},
                  {"prediction", p.label},
                  {"votes", votes}};
      if (const auto& t = results[i].threat) {
        row["threat"] = {{"raw_score", t->raw_score}, {"percentile", t->percentile}, {"flagged", t->flagged}};
      }
      rows.push_back(row);
    }
    run.write("predictions.json", rows.dump(2) + "\n");
  }

  // The store appends, so build it aside and swap it in whole.
  const fs::path staging = run.out() / "memory.partial";
  const fs::path memory = run.out() / "memory";
  fs::remove_all(staging);
  for (std::size_t i = 0; i < results.size(); ++i) save_memory(staging, i, results[i].selection, config);
  fs::remove_all(memory);
  fs::rename(staging, memory);
  run.produced("memory/memory.bin");
  run.produced("memory/manifest.json");
  run.finish(config);
}

void cmd_sense(const Options& opts) {
  check_format(opts);
  Run run(opts);
  const Inputs in = load_inputs(opts, run);
  const auto& config = in.run.rails;
  const auto layers = make_layers(config, in.train, in.embeddings);
  const auto calibration = calibrate_leave_one_out(layers, config.k);
  std::vector<ThreatReport> reports(in.test->size());
  parallel_for(reports.size(), opts.threads, [&](std::size_t i) {
    reports[i] = sense(layers, test_query(in, i), config.k, calibration, config.sense_threshold);
  });
  if (opts.format == "csv") {
    std::string csv = "query_id,label,raw_score,percentile,flagged\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      csv += std::to_string(i) + "," + std::to_string(*(*in.test)[i].label) + "," +
             format_double(reports[i].raw_score) + "," + format_double(reports[i].percentile) + "," +
             (reports[i].flagged ? "1" : "0") + "\n";
    }
    run.write("threat.csv", csv);
  } else {
    json rows = json::array();
    for (std::size_t i = 0; i < reports.size(); ++i) {
      rows.push_back({{"query_id", i},
                      {"label", *(*in.test)[i].label},
                      {"raw_score", reports[i].raw_score},
                      {"percentile", reports[i].percentile},
                      {"flagged", reports[i].flagged}});
    }
    run.write("threat.json", rows.dump(2) + "\n");
  }
  run.finish(config);
}

void cmd_curves(const Options& opts) {
  Run run(opts);
  const Inputs in = load_inputs(opts, run);
  const auto& config = in.run.rails;
  const auto layers = make_layers(config, in.train, in.embeddings);
  const std::size_t n = opts.limit == 0 ? in.test->size() : std::min(opts.limit, in.test->size());
  std::vector<LearningCurve> curves(n);
  parallel_for(n, opts.threads, [&](std::size_t i) {
    const auto r = predict(layers, test_query(in, i), config, PredictOptions{nullptr, true});
    curves[i] = learning_curve(i, layers, r.histories);
  });
  for (const auto& path : emit_curves(curves, run.out())) run.produced(path.filename().string());
  run.finish(config);
}

void print_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << "\n";
}

}  // namespace
}  // namespace rails

int main(int argc, char** argv) {
  using namespace rails;
  Options opts;
  CLI::App app{"Immune-inspired nearest-neighbor classifier with per-query affinity maturation"};
  app.set_version_flag("--version", RAILS_VERSION);
  app.require_subcommand(1);

  struct Spec {
    const char* name;
    const char* help;
    void (*fn)(const Options&);
  };
  const std::vector<Spec> specs = {
      {"make-blobs", "Write the config's synthetic blob dataset as train.csv/test.csv", cmd_make_blobs},
      {"attack", "Perturb --test under the config's attack and write adv.csv", cmd_attack},
      {"evaluate", "Clean and attacked accuracy of every method", cmd_evaluate},
      {"predict", "Classify --test and persist the memory sets", cmd_predict},
      {"sense", "Advisory threat score of every --test row", cmd_sense},
      {"curves", "Per-generation affinity curves, one CSV per query", cmd_curves},
  };
  std::map<CLI::App*, void (*)(const Options&)> handlers;
  for (const auto& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", opts.config, "Run config (JSON)");
    sub->add_option("--out", opts.out, "Output directory");
    auto* seed = sub->add_option("--seed", opts.seed, "Override the config seed");
    seed->each([&opts](const std::string&) { opts.seed_set = true; });
    sub->add_option("--threads", opts.threads, "Worker threads (0 = all cores)");
    if (std::string(s.name) != "make-blobs") {
      sub->add_option("--train", opts.train, "Training dataset CSV");
      sub->add_option("--test", opts.test, "Test dataset CSV");
      sub->add_option("--embeddings", opts.embeddings, "Embedding file (repeatable, one per layer)");
      sub->add_option("--format", opts.format, "Report format: csv or json");
    }
    if (std::string(s.name) == "curves") {
      sub->add_option("--limit", opts.limit, "Only the first N test queries (0 = all)");
    }
    handlers[sub] = s.fn;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("E_USAGE", e.what());
    return 1;
  }

  try {
    for (const auto& [sub, fn] : handlers) {
      if (sub->parsed()) {
        opts.command = sub->get_name();
        fn(opts);
      }
    }
  } catch (const Error& e) {
    print_error(e.code(), e.what());
    return 1;
  } catch (const InvariantViolation& e) {
    print_error("E_INTERNAL", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    print_error("E_IO", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("E_INTERNAL", e.what());
    return 2;
  }
  return 0;
}
