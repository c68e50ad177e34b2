// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "rails/error.hpp"
#include "rails/flocking.hpp"
#include "test_util.hpp"

namespace rails {
namespace {

using testing::point;

// Exhaustive scan: score every row of class c, order by (distance asc,
// row asc), keep k. Works on squared distances so it shares no code with
// the library's affinity path.
std::vector<std::size_t> brute_force_rows(const LabeledDataset& data, const FeatureMapper& mapper,
                                          const Example& query, ClassId c, int k) {
  const Vector q = mapper.map(query.values);
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t row = 0; row < data.size(); ++row) {
    if (*data[row].label != c) continue;
    const Vector f = mapper.map(data[row].values);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += (f[i] - q[i]) * (f[i] - q[i]);
    scored.emplace_back(std::sqrt(s), row);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::size_t> rows;
  for (int i = 0; i < k; ++i) rows.push_back(scored[static_cast<std::size_t>(i)].second);
  return rows;
}

std::vector<std::size_t> rows_of(const std::vector<FlockEntry>& entries) {
  std::vector<std::size_t> rows;
  for (const auto& e : entries) rows.push_back(e.row);
  return rows;
}

std::shared_ptr<const LabeledDataset> two_class_toy() {
  return std::make_shared<const LabeledDataset>(std::vector<Example>{
      point({0.0, 0.0}, 0), point({0.5, 0.0}, 0), point({0.0, 0.5}, 0),
      point({1.0, 1.0}, 1), point({0.9, 1.0}, 1)});
}

TEST(Flock, ToyExampleMatchesDistanceTable) {
  auto data = two_class_toy();
  const std::vector<Layer> layers{testing::identity_layer(data)};
  const Query q{0, point({0.05, 0.0}), {}};

  // Distances from (0.05, 0): A = {0.05, 0.45, 0.5025}, B = {1.379, 1.312}.
  const auto result = flock(layers, q, 2);
  ASSERT_EQ(result.at(0, 0).size(), 2u);
  EXPECT_EQ(result.at(0, 0)[0].example.values, (Vector{0.0, 0.0}));
  EXPECT_EQ(result.at(0, 0)[1].example.values, (Vector{0.5, 0.0}));
  EXPECT_EQ(result.at(0, 1)[0].example.values, (Vector{0.9, 1.0}));
  EXPECT_EQ(result.at(0, 1)[1].example.values, (Vector{1.0, 1.0}));
  EXPECT_NEAR(result.at(0, 0)[0].affinity, -0.05, 1e-15);
  EXPECT_NEAR(result.at(0, 1)[0].affinity, -std::sqrt(0.85 * 0.85 + 1.0), 1e-15);
}

TEST(Flock, QueryOnTrainingPointReturnsItself) {
  auto data = two_class_toy();
  const std::vector<Layer> layers{testing::identity_layer(data)};
  const auto result = flock(layers, Query{0, point({0.5, 0.0}), {}}, 1);
  EXPECT_EQ(result.at(0, 0)[0].row, 1u);
  EXPECT_EQ(result.at(0, 0)[0].affinity, 0.0);
}

TEST(Flock, EqualAffinityGoesToLowerRow) {
  auto data = std::make_shared<const LabeledDataset>(std::vector<Example>{
      point({0.25, 0.5}, 0), point({0.75, 0.5}, 0), point({0.5, 0.25}, 0), point({0.0, 0.0}, 1),
      point({1.0, 1.0}, 1)});
  const std::vector<Layer> layers{testing::identity_layer(data)};
  const auto result = flock(layers, Query{0, point({0.5, 0.5}), {}}, 2);
  // Rows 0, 1 and 2 are all at distance 0.25 exactly.
  EXPECT_EQ(rows_of(result.at(0, 0)), (std::vector<std::size_t>{0, 1}));
}

TEST(Flock, PerLayerResultsMatchPerLayerOracle) {
  Rng rng(5);
  auto data = std::make_shared<const LabeledDataset>(testing::random_dataset(rng, 3, 40, 6));
  auto proj = std::make_shared<RandomProjectionMapper>("proj", 6, 3, 9);
  const std::vector<Layer> layers{testing::identity_layer(data), Layer::input_space(data, proj)};
  const Example query = point(testing::random_vector(rng, 6));
  const auto result = flock(layers, Query{0, query, {}}, 4);

  IdentityMapper id("identity", 6);
  for (ClassId c = 0; c < 3; ++c) {
    EXPECT_EQ(rows_of(result.at(0, c)), brute_force_rows(*data, id, query, c, 4));
    EXPECT_EQ(rows_of(result.at(1, c)), brute_force_rows(*data, *proj, query, c, 4));
  }
}

TEST(Flock, KLargerThanClassNamesTheClass) {
  auto data = two_class_toy();
  const std::vector<Layer> layers{testing::identity_layer(data)};
  try {
    flock(layers, Query{0, point({0.1, 0.1}), {}}, 3);
    FAIL() << "expected InvalidConfig";
  } catch (const InvalidConfig& e) {
    EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos) << e.what();
  }
}

TEST(Flock, EmptyLayerListIsInvalidConfig) {
  EXPECT_THROW(flock(std::span<const Layer>{}, Query{0, point({0.1}), {}}, 1), InvalidConfig);
}

TEST(Flock, ClassBalanceAndDeterminism) {
  Rng rng(11);
  auto data = std::make_shared<const LabeledDataset>(testing::random_dataset(rng, 4, 25, 5));
  const std::vector<Layer> layers{testing::identity_layer(data), testing::projection_layer(data, 2, 3)};
  for (int trial = 0; trial < 20; ++trial) {
    const Query q{0, point(testing::random_vector(rng, 5)), {}};
    const auto a = flock(layers, q, 7);
    const auto b = flock(layers, q, 7);
    EXPECT_EQ(a, b);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto entries = a.layer_entries(l);
      ASSERT_EQ(entries.size(), 28u);
      for (ClassId c = 0; c < 4; ++c) {
        for (const auto& e : a.at(l, c)) {
          EXPECT_EQ(*e.example.label, c);
          EXPECT_EQ(e.example, (*data)[e.row]);
        }
        for (std::size_t i = 1; i < a.at(l, c).size(); ++i) {
          EXPECT_GE(a.at(l, c)[i - 1].affinity, a.at(l, c)[i].affinity);
        }
      }
    }
  }
}

TEST(Flock, BruteForceEquivalenceWithTies) {
  Rng rng(2024);
  for (int instance = 0; instance < 50; ++instance) {
    const int classes = 2 + static_cast<int>(rng.below(4));
    const std::size_t per_class = 5 + rng.below(1000 / static_cast<std::size_t>(classes) - 5);
    const std::size_t d = 1 + rng.below(16);
    // Half the instances live on a coarse grid so equal distances occur.
    const int grid = instance % 2 == 0 ? 4 : 0;
    auto data = std::make_shared<const LabeledDataset>(
        testing::random_dataset(rng, classes, per_class, d, grid));
    const int k = 1 + static_cast<int>(rng.below(std::min<std::size_t>(per_class, 12)));
    const std::vector<Layer> layers{testing::identity_layer(data)};
    Example query = point(testing::random_vector(rng, d));
    if (grid > 0) {
      for (double& x : query.values) x = static_cast<double>(rng.below(5)) / 4.0;
    }
    const auto result = flock(layers, Query{0, query, {}}, k);
    IdentityMapper id("identity", d);
    for (ClassId c = 0; c < classes; ++c) {
      ASSERT_EQ(rows_of(result.at(0, c)), brute_force_rows(*data, id, query, c, k))
          << "instance " << instance << " class " << c;
    }
  }
}

// Alternative search structure: a full sort of all rows. Must agree with
// the default partial-sort scan.
class FullSortIndex final : public NeighborIndex {
 public:
  explicit FullSortIndex(const std::vector<Vector>& features) : features_(features) {}
  std::vector<Neighbor> nearest(std::span<const double> feature, std::span<const std::size_t> rows,
                                std::size_t k) const override {
    std::vector<Neighbor> all;
    for (std::size_t r : rows) all.push_back({r, feature_affinity(features_[r], feature)});
    std::stable_sort(all.begin(), all.end(),
                     [](const Neighbor& a, const Neighbor& b) { return a.affinity > b.affinity; });
    all.resize(std::min(k, all.size()));
    return all;
  }

 private:
  const std::vector<Vector>& features_;
};

TEST(Flock, SwappedIndexGivesIdenticalResults) {
  Rng rng(8);
  auto data = std::make_shared<const LabeledDataset>(testing::random_dataset(rng, 3, 60, 4, 3));
  std::vector<Layer> plain{testing::identity_layer(data)};
  std::vector<Layer> swapped{testing::identity_layer(data)};
  swapped[0].set_index(std::make_shared<FullSortIndex>(swapped[0].features()));
  for (int i = 0; i < 30; ++i) {
    const Query q{0, point(testing::random_vector(rng, 4)), {}};
    EXPECT_EQ(flock(plain, q, 5), flock(swapped, q, 5));
  }
}

}  // namespace
}  // namespace rails
