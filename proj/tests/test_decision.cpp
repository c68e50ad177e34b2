// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "rails/decision.hpp"
#include "rails/error.hpp"
#include "rails/harness.hpp"
#include "rails/store.hpp"
#include "test_util.hpp"

namespace rails {
namespace {

using testing::point;
namespace fs = std::filesystem;

PlasmaMemoryOutput plasma_with(std::vector<std::vector<ClassId>> per_layer) {
  PlasmaMemoryOutput out;
  int n = 0;
  for (const auto& labels : per_layer) {
    LayerSelection sel;
    sel.layer_id = "l" + std::to_string(n++);
    for (ClassId c : labels) sel.plasma.push_back(Candidate{point({0.5}, c), -0.1, 1, 0});
    out.layers.push_back(sel);
  }
  return out;
}

TEST(Consensus, Majority) {
  const auto p = consensus(plasma_with({{1, 1, 2}}));
  EXPECT_EQ(p.label, 1);
  EXPECT_EQ(p.vote_counts, (std::map<ClassId, std::size_t>{{1, 2}, {2, 1}}));
  EXPECT_EQ(p.plasma_total, 3u);
}

TEST(Consensus, PoolsLayers) {
  EXPECT_EQ(consensus(plasma_with({{1, 2}, {2}})).label, 2);
}

TEST(Consensus, TieGoesToSmallestClass) {
  EXPECT_EQ(consensus(plasma_with({{2, 2, 1, 1}})).label, 1);
  EXPECT_EQ(consensus(plasma_with({{1, 1, 2, 2}})).label, 1);
}

TEST(Consensus, EmptyPlasmaIsInvariantViolation) {
  EXPECT_THROW(consensus(plasma_with({{}, {}})), InvariantViolation);
}

std::shared_ptr<const LabeledDataset> near_origin(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> rows;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 50; ++i) {
      rows.push_back(point({0.2 * rng.uniform(), 0.2 * rng.uniform(), 0.2 * rng.uniform()}, c));
    }
  }
  return std::make_shared<const LabeledDataset>(std::move(rows));
}

TEST(Sense, TrainingPointScoresZero) {
  auto data = near_origin(1);
  const std::vector<Layer> layers{testing::identity_layer(data)};
  const auto cal = calibrate_leave_one_out(layers, 1);
  const auto r = sense(layers, Query{0, (*data)[17], {}}, 1, cal);
  EXPECT_EQ(r.raw_score, 0.0);
  EXPECT_EQ(r.percentile, 0.0);
  EXPECT_FALSE(r.flagged);
}

TEST(Sense, FarPointIsExtreme) {
  auto data = near_origin(2);
  const std::vector<Layer> layers{testing::identity_layer(data), testing::projection_layer(data, 2, 4)};
  const auto cal = calibrate_leave_one_out(layers, 5);
  const auto r = sense(layers, Query{0, point({1.0, 1.0, 1.0}), {}}, 5, cal);
  EXPECT_EQ(r.percentile, 100.0);
  EXPECT_TRUE(r.flagged);
}

TEST(Sense, CalibrationMedianNearFifty) {
  auto data = near_origin(3);
  const std::vector<Layer> layers{testing::identity_layer(data)};
  Rng rng(5);
  std::vector<Query> clean;
  for (std::uint64_t i = 0; i < 201; ++i) {
    clean.push_back(Query{i, point({0.2 * rng.uniform(), 0.2 * rng.uniform(), 0.2 * rng.uniform()}), {}});
  }
  const auto cal = calibrate(layers, clean, 3);
  ASSERT_EQ(cal.size(), 201u);
  // Locate the query whose statistic is the calibration median.
  const double median = cal.scores()[100];
  for (const auto& q : clean) {
    if (threat_statistic(layers, q, 3) == median) {
      EXPECT_NEAR(sense(layers, q, 3, cal).percentile, 50.0, 2.0);
      return;
    }
  }
  FAIL() << "median query not found";
}

TEST(Sense, PercentileIsMonotone) {
  const Calibration cal({0.3, 0.1, 0.2, 0.2, 0.5});
  double prev = -1.0;
  for (double s = 0.0; s <= 0.6; s += 0.01) {
    const double p = cal.percentile(s);
    EXPECT_GE(p, prev);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 100.0);
    prev = p;
  }
  EXPECT_DOUBLE_EQ(cal.percentile(0.2), 100.0 * (1 + 1.0) / 5);
}

TEST(Sense, EmptyCalibrationIsInvalidConfig) {
  auto data = near_origin(4);
  const std::vector<Layer> layers{testing::identity_layer(data)};
  EXPECT_THROW(sense(layers, Query{0, point({0.1, 0.1, 0.1}), {}}, 1, Calibration{}), InvalidConfig);
}

RailsConfig greedy_config() {
  RailsConfig cfg;
  cfg.k = 5;
  cfg.population_size = 20;
  cfg.generations = 1;
  cfg.rho = 0.0;
  cfg.greedy = true;
  cfg.seed = 3;
  return cfg;
}

TEST(Predict, GreedyOnTrainingPointReturnsItsClass) {
  Rng rng(10);
  auto data = std::make_shared<const LabeledDataset>(testing::random_dataset(rng, 2, 30, 4));
  const std::vector<Layer> layers{testing::identity_layer(data), testing::projection_layer(data, 3, 7)};
  const auto cfg = greedy_config();
  for (std::size_t row : {0u, 13u, 31u, 59u}) {
    const auto r = predict(layers, Query{row, (*data)[row], {}}, cfg);
    EXPECT_EQ(r.prediction.label, *(*data)[row].label);
    for (const auto& sel : r.selection.layers) {
      for (const auto& c : sel.plasma) {
        EXPECT_EQ(c.example, (*data)[row]);
        EXPECT_EQ(c.affinity, 0.0);
      }
    }
  }
}

struct BlobFixture {
  std::shared_ptr<const LabeledDataset> train;
  std::shared_ptr<const LabeledDataset> test;
  std::vector<Layer> layers;
};

BlobFixture blob_fixture() {
  BlobSpec spec;
  spec.means = simplex_means(2, 8, 0.2, 0.8, 5);
  spec.n_train = 100;
  spec.n_test = 100;
  spec.seed = 5;
  auto blobs = make_blobs(spec);
  BlobFixture f;
  f.train = std::make_shared<const LabeledDataset>(std::move(blobs.train));
  f.test = std::make_shared<const LabeledDataset>(std::move(blobs.test));
  f.layers = {testing::identity_layer(f.train), testing::projection_layer(f.train, 4, 11, "proj4")};
  return f;
}

RailsConfig blob_config() {
  RailsConfig cfg;
  cfg.population_size = 200;
  cfg.generations = 3;
  cfg.seed = 77;
  return cfg;
}

TEST(Predict, ReplayGivesIdenticalPredictionAndMemoryBytes) {
  const auto f = blob_fixture();
  const auto cfg = blob_config();
  const Query q{4, (*f.test)[4], {}};
  const auto a = predict(f.layers, q, cfg);
  const auto b = predict(f.layers, q, cfg);
  EXPECT_EQ(a.prediction, b.prediction);
  EXPECT_EQ(a.selection, b.selection);

  const fs::path root = fs::temp_directory_path() / "rails_replay_test";
  fs::remove_all(root);
  save_memory(root / "a", q.id, a.selection, cfg);
  save_memory(root / "b", q.id, b.selection, cfg);
  EXPECT_EQ(read_file(root / "a" / "memory.bin"), read_file(root / "b" / "memory.bin"));
  fs::remove_all(root);
}

TEST(Predict, SensingNeverChangesThePrediction) {
  const auto f = blob_fixture();
  auto with = blob_config();
  auto without = with;
  without.sensing = false;
  const auto cal = calibrate_leave_one_out(f.layers, with.k, 5);
  for (std::size_t i = 0; i < f.test->size(); i += 20) {
    const Query q{i, (*f.test)[i], {}};
    PredictOptions opts;
    opts.calibration = &cal;
    const auto a = predict(f.layers, q, with, opts);
    const auto b = predict(f.layers, q, without, opts);
    ASSERT_TRUE(a.threat.has_value());
    EXPECT_FALSE(b.threat.has_value());
    EXPECT_EQ(a.prediction, b.prediction);
    EXPECT_EQ(a.selection, b.selection);
  }
  // A far-out query is flagged and still classified the same either way.
  PredictOptions opts;
  opts.calibration = &cal;
  const Query far{999, point(Vector(8, 1.0)), {}};
  const auto a = predict(f.layers, far, with, opts);
  EXPECT_TRUE(a.threat->flagged);
  EXPECT_EQ(a.prediction, predict(f.layers, far, without, opts).prediction);
}

TEST(Predict, LabelInvariantToLayerOrder) {
  const auto f = blob_fixture();
  const std::vector<Layer> reversed{f.layers[1], f.layers[0]};
  const auto cfg = blob_config();
  for (std::size_t i = 0; i < f.test->size(); i += 25) {
    const Query q{i, (*f.test)[i], {}};
    const auto a = predict(f.layers, q, cfg);
    const auto b = predict(reversed, q, cfg);
    EXPECT_EQ(a.prediction, b.prediction);
    EXPECT_EQ(a.selection.layers[0], b.selection.layers[1]);
  }
}

TEST(Predict, VoteTotalsMatchPlasmaSizes) {
  const auto f = blob_fixture();
  auto cfg = blob_config();
  for (int t : {20, 60, 200}) {
    cfg.population_size = t;
    const auto r = predict(f.layers, Query{1, (*f.test)[1], {}}, cfg);
    std::size_t votes = 0;
    for (const auto& [c, n] : r.prediction.vote_counts) votes += n;
    const std::size_t want = f.layers.size() * static_cast<std::size_t>(std::ceil(0.05 * t - 1e-9));
    EXPECT_EQ(votes, want);
    EXPECT_EQ(r.prediction.plasma_total, want);
  }
}

TEST(Predict, DuplicateLayerIdsAreRejected) {
  const auto f = blob_fixture();
  const std::vector<Layer> twice{f.layers[0], f.layers[0]};
  EXPECT_THROW(predict(twice, Query{0, (*f.test)[0], {}}, blob_config()), InvalidConfig);
}

TEST(Predict, IndivisiblePopulationIsInvalidConfig) {
  const auto f = blob_fixture();
  auto cfg = blob_config();
  cfg.population_size = 30;
  EXPECT_THROW(predict(f.layers, Query{0, (*f.test)[0], {}}, cfg), InvalidConfig);
}

TEST(Predict, CleanAccuracyTracksKnnBaseline) {
  const auto f = blob_fixture();
  const auto cfg = blob_config();
  ASSERT_EQ(f.test->size(), 200u);
  std::vector<int> rails_hit(f.test->size());
  std::vector<int> knn_hit(f.test->size());
  parallel_for(f.test->size(), 0, [&](std::size_t i) {
    const Query q{i, (*f.test)[i], {}};
    const ClassId truth = *(*f.test)[i].label;
    rails_hit[i] = predict(f.layers, q, cfg).prediction.label == truth;
    knn_hit[i] = knn_majority(f.layers, q, cfg.k) == truth;
  });
  const double n = static_cast<double>(f.test->size());
  const double rails_acc = 100.0 * std::count(rails_hit.begin(), rails_hit.end(), 1) / n;
  const double knn_acc = 100.0 * std::count(knn_hit.begin(), knn_hit.end(), 1) / n;
  EXPECT_NEAR(rails_acc, knn_acc, 2.0);
}

}  // namespace
}  // namespace rails
