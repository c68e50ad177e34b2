// SPDX-License-Identifier: Apache-2.0
#include "rails/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "rails/decision.hpp"
#include "rails/error.hpp"
#include "rails/rng.hpp"
#include "rails/store.hpp"

namespace rails {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::vector<Vector> class_centroids(const LabeledDataset& data) {
  std::vector<Vector> out;
  for (ClassId c = 0; c < data.num_classes(); ++c) {
    Vector mean(data.dim(), 0.0);
    const auto rows = data.class_rows(c);
    for (std::size_t r : rows) {
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += data[r].values[i];
    }
    for (double& v : mean) v /= static_cast<double>(rows.size());
    out.push_back(std::move(mean));
  }
  return out;
}

// Nearest other-class distance minus nearest same-class distance; positive
// while 1-NN still classifies x correctly.
double one_nn_margin(std::span<const double> x, ClassId label, const LabeledDataset& reference) {
  double own = INFINITY;
  double other = INFINITY;
  for (const auto& r : reference.examples()) {
    const double d = squared_distance(x, r.values);
    if (*r.label == label) {
      own = std::min(own, d);
    } else {
      other = std::min(other, d);
    }
  }
  return std::sqrt(other) - std::sqrt(own);
}

Example drift_toward_nearest_other_centroid(const Example& x, double eps,
                                            const std::vector<Vector>& centroids) {
  const ClassId label = *x.label;
  ClassId target = -1;
  double best = INFINITY;
  for (ClassId c = 0; c < static_cast<ClassId>(centroids.size()); ++c) {
    if (c == label) continue;
    const double d = squared_distance(x.values, centroids[static_cast<std::size_t>(c)]);
    if (d < best) {
      best = d;
      target = c;
    }
  }
  Example out = x;
  if (target < 0) return out;
  const auto& mu = centroids[static_cast<std::size_t>(target)];
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double diff = mu[i] - x.values[i];
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    out.values[i] = std::clamp(x.values[i] + eps * sign, 0.0, 1.0);
  }
  return out;
}

Example boundary_greedy(const Example& x, double eps, int steps, const LabeledDataset& reference) {
  Example cur = x;
  const ClassId label = *x.label;
  double margin = one_nn_margin(cur.values, label, reference);
  for (int s = 0; s < steps; ++s) {
    std::size_t best_i = 0;
    double best_value = 0.0;
    double best_margin = margin;
    bool found = false;
    for (std::size_t i = 0; i < cur.values.size(); ++i) {
      for (double sign : {-1.0, 1.0}) {
        const double v = std::clamp(x.values[i] + sign * eps, 0.0, 1.0);
        if (v == cur.values[i]) continue;
        const double saved = cur.values[i];
        cur.values[i] = v;
        const double m = one_nn_margin(cur.values, label, reference);
        cur.values[i] = saved;
        if (m < best_margin) {
          best_margin = m;
          best_i = i;
          best_value = v;
          found = true;
        }
      }
    }
    if (!found) break;
    cur.values[best_i] = best_value;
    margin = best_margin;
  }
  return cur;
}

}  // namespace

std::vector<Vector> simplex_means(int num_classes, std::size_t dim, double lo, double hi,
                                  std::uint64_t seed) {
  if (num_classes < 1 || dim == 0 || !(hi > lo)) {
    throw InvalidConfig("simplex needs C >= 1, d >= 1 and hi > lo");
  }
  const auto C = static_cast<std::size_t>(num_classes);
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  Rng rng(seed);
  if (C == 1) return {Vector(dim, center)};
  if (C > dim) {
    std::vector<Vector> means(C, Vector(dim));
    for (auto& m : means) {
      for (double& v : m) v = rng.uniform(lo, hi);
    }
    return means;
  }

  // Orthonormal d x C frame by Gram-Schmidt on Gaussian columns.
  std::vector<Vector> frame;
  while (frame.size() < C) {
    Vector col(dim);
    for (double& v : col) v = rng.normal();
    for (const auto& q : frame) {
      double dot = 0.0;
      for (std::size_t i = 0; i < dim; ++i) dot += col[i] * q[i];
      for (std::size_t i = 0; i < dim; ++i) col[i] -= dot * q[i];
    }
    double norm = std::sqrt(squared_distance(col, Vector(dim, 0.0)));
    if (norm < 1e-9) continue;
    for (double& v : col) v /= norm;
    frame.push_back(std::move(col));
  }

  // Vertex directions e_i - 1/C, rotated into the frame.
  std::vector<Vector> directions(C, Vector(dim, 0.0));
  const double inv = 1.0 / static_cast<double>(C);
  for (std::size_t v = 0; v < C; ++v) {
    for (std::size_t j = 0; j < C; ++j) {
      const double coeff = (v == j ? 1.0 : 0.0) - inv;
      for (std::size_t i = 0; i < dim; ++i) directions[v][i] += coeff * frame[j][i];
    }
  }
  double radius = INFINITY;
  for (const auto& dir : directions) {
    for (double x : dir) {
      if (std::abs(x) > 0.0) radius = std::min(radius, half / std::abs(x));
    }
  }
  std::vector<Vector> means(C, Vector(dim));
  for (std::size_t v = 0; v < C; ++v) {
    for (std::size_t i = 0; i < dim; ++i) {
      means[v][i] = std::clamp(center + radius * directions[v][i], lo, hi);
    }
  }
  return means;
}

BlobSpec canonical_blob_spec() {
  BlobSpec spec;
  spec.means = simplex_means(3, 8, 0.2, 0.8, 20211);
  spec.sigma = 0.08;
  spec.n_train = 300;
  spec.n_test = 100;
  spec.seed = 20211;
  return spec;
}

BlobData make_blobs(const BlobSpec& spec) {
  std::vector<std::string> errors;
  if (spec.means.empty()) errors.push_back("blob spec needs at least one class mean");
  if (!(spec.sigma >= 0.0)) errors.push_back("sigma must be >= 0");
  if (spec.n_train < 1) errors.push_back("n_train must be >= 1");
  if (spec.n_test < 1) errors.push_back("n_test must be >= 1");
  const std::size_t d = spec.means.empty() ? 0 : spec.means.front().size();
  if (!spec.means.empty() && d == 0) errors.push_back("means must have d >= 1");
  for (std::size_t c = 0; c < spec.means.size(); ++c) {
    if (spec.means[c].size() != d) errors.push_back("mean " + std::to_string(c) + " has wrong length");
    for (double v : spec.means[c]) {
      if (!(v >= 0.0 && v <= 1.0)) {
        errors.push_back("mean " + std::to_string(c) + " lies outside [0,1]^d");
        break;
      }
    }
    for (std::size_t o = 0; o < c; ++o) {
      if (spec.means[o] == spec.means[c]) {
        errors.push_back("means " + std::to_string(o) + " and " + std::to_string(c) + " coincide");
      }
    }
  }
  if (!errors.empty()) throw InvalidConfig(std::move(errors));

  Rng rng(spec.seed);
  auto draw = [&](int per_class) {
    std::vector<Example> rows;
    for (std::size_t c = 0; c < spec.means.size(); ++c) {
      for (int n = 0; n < per_class; ++n) {
        Vector x(d);
        for (std::size_t i = 0; i < d; ++i) {
          x[i] = std::clamp(spec.means[c][i] + spec.sigma * rng.normal(), 0.0, 1.0);
        }
        rows.push_back(Example{std::move(x), static_cast<ClassId>(c)});
      }
    }
    return rows;
  };
  auto train = draw(spec.n_train);
  auto test = draw(spec.n_test);
  return BlobData{LabeledDataset(std::move(train)), LabeledDataset(std::move(test))};
}

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::RandomNoise: return "random-noise";
    case AttackKind::CentroidDrift: return "centroid-drift";
    case AttackKind::BoundaryGreedy: return "boundary-greedy";
  }
  return "unknown";
}

AttackKind parse_attack_kind(const std::string& name) {
  if (name == "random-noise") return AttackKind::RandomNoise;
  if (name == "centroid-drift") return AttackKind::CentroidDrift;
  if (name == "boundary-greedy") return AttackKind::BoundaryGreedy;
  throw InvalidConfig("unknown attack kind '" + name +
                      "' (expected random-noise, centroid-drift or boundary-greedy)");
}

LabeledDataset attack(const LabeledDataset& test, const AttackSpec& spec,
                      const LabeledDataset& reference) {
  if (!(spec.epsilon >= 0.0)) throw InvalidConfig("attack epsilon must be >= 0");
  if (spec.kind == AttackKind::BoundaryGreedy && spec.steps < 0) {
    throw InvalidConfig("attack steps must be >= 0");
  }
  if (!test.empty() && test.dim() != reference.dim()) {
    throw InvalidInput("attack: test d=" + std::to_string(test.dim()) + " but reference d=" +
                       std::to_string(reference.dim()));
  }
  std::vector<Example> out;
  out.reserve(test.size());
  switch (spec.kind) {
    case AttackKind::RandomNoise: {
      Rng rng(spec.seed);
      for (const auto& x : test.examples()) {
        Example y = x;
        for (double& v : y.values) v = std::clamp(v + rng.uniform(-spec.epsilon, spec.epsilon), 0.0, 1.0);
        out.push_back(std::move(y));
      }
      break;
    }
    case AttackKind::CentroidDrift: {
      const auto centroids = class_centroids(reference);
      for (const auto& x : test.examples()) {
        out.push_back(drift_toward_nearest_other_centroid(x, spec.epsilon, centroids));
      }
      break;
    }
    case AttackKind::BoundaryGreedy:
      for (const auto& x : test.examples()) {
        out.push_back(boundary_greedy(x, spec.epsilon, spec.steps, reference));
      }
      break;
  }
  return LabeledDataset(std::move(out));
}

ClassId one_nn(const Layer& layer, const Query& query) {
  const Vector q = layer.map(layer.search_query(query).values);
  const auto n = layer.index().nearest(q, layer.train().all_rows(), 1);
  if (n.empty()) throw InvalidInput("1-NN over an empty training set");
  return *layer.train()[n.front().row].label;
}

ClassId knn_majority(std::span<const Layer> layers, const Query& query, int k) {
  if (layers.empty()) throw InvalidConfig("kNN baseline needs at least one layer");
  std::map<ClassId, std::size_t> votes;
  for (const auto& layer : layers) {
    const Vector q = layer.map(layer.search_query(query).values);
    for (const auto& n : layer.index().nearest(q, layer.train().all_rows(), static_cast<std::size_t>(k))) {
      ++votes[*layer.train()[n.row].label];
    }
  }
  ClassId label = 0;
  std::size_t best = 0;
  for (const auto& [c, count] : votes) {
    if (count > best) {
      best = count;
      label = c;
    }
  }
  return label;
}

double EvalReport::accuracy(const std::string& method, const std::string& split) const {
  for (const auto& r : rows) {
    if (r.method == method && r.split == split) return r.accuracy;
  }
  throw InvalidInput("no report row for " + method + "/" + split);
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

EvalReport evaluate(const LabeledDataset& train, const LabeledDataset& test_clean,
                    const LabeledDataset& test_adv, const RailsConfig& config, double epsilon,
                    unsigned threads) {
  if (test_clean.size() != test_adv.size()) {
    throw InvalidInput("clean and attacked test sets differ in size (" +
                       std::to_string(test_clean.size()) + " vs " +
                       std::to_string(test_adv.size()) + ")");
  }
  validate(config, train.num_classes());
  auto shared_train = std::make_shared<const LabeledDataset>(train);
  const auto layers = make_layers(config, shared_train);
  const Calibration calibration = calibrate_leave_one_out(layers, config.k);

  const std::size_t n = test_clean.size();
  struct Outcome {
    ClassId rails = 0;
    ClassId knn = 0;
    ClassId nn = 0;
    bool flagged = false;
  };
  std::vector<Outcome> outcomes(2 * n);
  parallel_for(2 * n, threads, [&](std::size_t i) {
    const bool adv = i >= n;
    const auto& x = adv ? test_adv[i - n] : test_clean[i];
    Query q{static_cast<std::uint64_t>(i), Example{x.values, std::nullopt}, {}};
    const auto result = predict(layers, q, config, PredictOptions{&calibration, false});
    outcomes[i] = Outcome{result.prediction.label, knn_majority(layers, q, config.k),
                          one_nn(layers.front(), q), result.threat && result.threat->flagged};
  });

  EvalReport report;
  report.epsilon = epsilon;
  report.seed = config.seed;
  report.test_size = n;
  auto score = [&](const char* method, bool adv, auto pick) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& truth = adv ? test_adv[i] : test_clean[i];
      if (pick(outcomes[adv ? n + i : i]) == *truth.label) ++correct;
    }
    const double acc = n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
    report.rows.push_back(MethodScore{method, adv ? "adv" : "clean", acc});
  };
  for (bool adv : {false, true}) score(kMethodRails, adv, [](const Outcome& o) { return o.rails; });
  for (bool adv : {false, true}) score(kMethodKnn, adv, [](const Outcome& o) { return o.knn; });
  for (bool adv : {false, true}) score(kMethodOneNn, adv, [](const Outcome& o) { return o.nn; });

  std::size_t flagged_clean = 0;
  std::size_t flagged_adv = 0;
  for (std::size_t i = 0; i < n; ++i) {
    flagged_clean += outcomes[i].flagged ? 1 : 0;
    flagged_adv += outcomes[n + i].flagged ? 1 : 0;
  }
  if (n > 0) {
    report.flagged_clean = static_cast<double>(flagged_clean) / static_cast<double>(n);
    report.flagged_adv = static_cast<double>(flagged_adv) / static_cast<double>(n);
  }
  return report;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_eval_csv(const EvalReport& report, std::ostream& out) {
  out << "method,split,accuracy,epsilon,seed\n";
  for (const auto& r : report.rows) {
    out << r.method << ',' << r.split << ',' << format_double(r.accuracy) << ','
        << format_double(report.epsilon) << ',' << report.seed << '\n';
  }
}

LearningCurve learning_curve(std::uint64_t query_id, std::span<const Layer> layers,
                             const std::vector<std::vector<Population>>& histories) {
  if (histories.size() != layers.size()) {
    throw InvalidInput("learning curve needs one population history per layer");
  }
  LearningCurve curve;
  curve.query_id = query_id;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    for (const auto& pop : histories[li]) {
      if (pop.members.empty()) throw InvariantViolation("empty population in history");
      double sum = 0.0;
      double best = -INFINITY;
      for (const auto& c : pop.members) {
        sum += c.affinity;
        best = std::max(best, c.affinity);
      }
      curve.points.push_back(CurvePoint{layers[li].id(), pop.generation,
                                        sum / static_cast<double>(pop.members.size()), best});
    }
  }
  return curve;
}

void write_curve_csv(const LearningCurve& curve, std::ostream& out) {
  out << "query_id,layer,generation,mean_affinity,max_affinity\n";
  for (const auto& p : curve.points) {
    out << curve.query_id << ',' << p.layer << ',' << p.generation << ','
        << format_double(p.mean_affinity) << ',' << format_double(p.max_affinity) << '\n';
  }
}

std::vector<std::filesystem::path> emit_curves(std::span<const LearningCurve> curves,
                                               const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (const auto& curve : curves) {
    std::ostringstream os;
    write_curve_csv(curve, os);
    auto path = dir / ("curve_" + std::to_string(curve.query_id) + ".csv");
    write_file_atomic(path, os.str());
    paths.push_back(std::move(path));
  }
  return paths;
}

}  // namespace rails
