// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rails/dataset.hpp"
#include "rails/layer.hpp"
#include "rails/maturation.hpp"
#include "rails/types.hpp"

namespace rails {

struct BlobSpec {
  std::vector<Vector> means;  // one per class, in [0,1]^d
  double sigma = 0.08;
  int n_train = 300;          // per class
  int n_test = 100;           // per class
  std::uint64_t seed = 0;

  int num_classes() const noexcept { return static_cast<int>(means.size()); }
  bool operator==(const BlobSpec&) const = default;
};

/// Vertices of a regular simplex with C vertices, centered in the box
/// [lo, hi]^d under a seeded random rotation and scaled to the largest
/// radius that keeps every vertex inside the box.
std::vector<Vector> simplex_means(int num_classes, std::size_t dim, double lo, double hi,
                                  std::uint64_t seed);

/// d=8, C=3, sigma=0.08, simplex means in [0.2,0.8]^8, 300/100 per class.
BlobSpec canonical_blob_spec();

struct BlobData {
  LabeledDataset train;
  LabeledDataset test;
};

/// Seeded isotropic Gaussian blobs clipped to [0,1]^d. Rows are grouped
/// by class. Throws InvalidConfig on sigma < 0, n < 1, or duplicate means.
BlobData make_blobs(const BlobSpec& spec);

enum class AttackKind { RandomNoise, CentroidDrift, BoundaryGreedy };

struct AttackSpec {
  AttackKind kind = AttackKind::CentroidDrift;
  double epsilon = 0.15;
  int steps = 8;  // boundary-greedy only
  std::uint64_t seed = 0;

  bool operator==(const AttackSpec&) const = default;
};

std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);

/// Black-box L-infinity perturbation of every test point. Centroids and
/// the 1-NN margin are taken from `reference` in input space. Outputs
/// stay within epsilon of their source and inside [0,1]^d.
LabeledDataset attack(const LabeledDataset& test, const AttackSpec& spec,
                      const LabeledDataset& reference);

/// 1-NN label in one layer's feature space.
ClassId one_nn(const Layer& layer, const Query& query);

/// k nearest (any class) in every layer, votes pooled across layers,
/// ties to the smallest class id.
ClassId knn_majority(std::span<const Layer> layers, const Query& query, int k);

struct MethodScore {
  std::string method;
  std::string split;
  double accuracy = 0.0;

  bool operator==(const MethodScore&) const = default;
};

struct EvalReport {
  std::vector<MethodScore> rows;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  std::size_t test_size = 0;
  /// Fraction of queries the advisory sensing stage flagged, per split.
  double flagged_clean = 0.0;
  double flagged_adv = 0.0;

  double accuracy(const std::string& method, const std::string& split) const;
};

inline constexpr const char* kMethodRails = "rails";
inline constexpr const char* kMethodKnn = "knn_majority";
inline constexpr const char* kMethodOneNn = "one_nn";

/// Predictions of every method over clean and attacked test sets of equal
/// size. Queries run in parallel over `threads` workers (0 = hardware);
/// results are independent of the thread count.
EvalReport evaluate(const LabeledDataset& train, const LabeledDataset& test_clean,
                    const LabeledDataset& test_adv, const RailsConfig& config, double epsilon,
                    unsigned threads = 0);

/// `method,split,accuracy,epsilon,seed` with shortest round-trip numbers.
void write_eval_csv(const EvalReport& report, std::ostream& out);

struct CurvePoint {
  std::string layer;
  int generation = 0;
  double mean_affinity = 0.0;
  double max_affinity = 0.0;
};

struct LearningCurve {
  std::uint64_t query_id = 0;
  std::vector<CurvePoint> points;  // layer-major, generation ascending
};

/// Mean and max affinity of every retained generation of every layer.
LearningCurve learning_curve(std::uint64_t query_id, std::span<const Layer> layers,
                             const std::vector<std::vector<Population>>& histories);

/// `query_id,layer,generation,mean_affinity,max_affinity`.
void write_curve_csv(const LearningCurve& curve, std::ostream& out);

/// One `curve_<query_id>.csv` per curve under `dir`. Returns the paths.
std::vector<std::filesystem::path> emit_curves(std::span<const LearningCurve> curves,
                                               const std::filesystem::path& dir);

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

}  // namespace rails
