// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rails/affinity.hpp"
#include "rails/dataset.hpp"
#include "rails/neighbor_index.hpp"
#include "rails/types.hpp"

namespace rails {

/// Precomputed layer outputs f_l(x_i), one row per dataset row. Stored as
/// 32-bit floats, matching the on-disk embedding format.
class PrecomputedEmbedding {
 public:
  PrecomputedEmbedding(std::string layer_id, std::size_t rows, std::size_t dim,
                       std::vector<float> data);

  const std::string& layer_id() const noexcept { return id_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<float>& data() const noexcept { return data_; }

  /// Embedding of dataset row `index`, widened to double.
  Vector lookup(std::size_t index) const;

 private:
  std::string id_;
  std::size_t rows_;
  std::size_t dim_;
  std::vector<float> data_;
};

/// Input to a prediction. Embedding layers cannot map arbitrary inputs, so
/// a query carries one companion embedding row per such layer, keyed by
/// layer id.
struct Query {
  std::uint64_t id = 0;
  Example input;
  std::map<std::string, Vector> companions;
};

/// One selected layer: the space the population lives in, the training
/// points expressed in that space, the mapper into feature space, and a
/// neighbor index over the mapped training points.
///
/// For input-space layers the search space is the input space and the
/// mapper is f_l. For embedding layers the search space is the embedding
/// space under one global affine rescale into [0,1] (ranking-preserving)
/// and the mapper is the identity.
class Layer {
 public:
  static Layer input_space(std::shared_ptr<const LabeledDataset> train,
                           std::shared_ptr<const FeatureMapper> mapper);

  /// Training rows are the first `labels.size()` rows of `table`.
  static Layer embedding(const PrecomputedEmbedding& table, std::span<const ClassId> labels);

  const std::string& id() const noexcept { return mapper_->layer_id(); }
  const LabeledDataset& train() const noexcept { return *train_; }
  const FeatureMapper& mapper() const noexcept { return *mapper_; }
  const std::vector<Vector>& features() const noexcept { return *features_; }
  const NeighborIndex& index() const noexcept { return *index_; }
  bool is_embedding() const noexcept { return rescale_.has_value(); }

  /// Swap the neighbor search structure. The replacement must be
  /// result-equivalent to ExhaustiveIndex.
  void set_index(std::shared_ptr<const NeighborIndex> index) { index_ = std::move(index); }

  /// The query expressed in this layer's search space.
  Example search_query(const Query& query) const;

  Vector map(std::span<const double> search_point) const { return mapper_->map(search_point); }

 private:
  struct Rescale {
    double lo = 0.0;
    double scale = 1.0;
  };

  Layer() = default;
  void build_features();

  std::shared_ptr<const LabeledDataset> train_;
  std::shared_ptr<const FeatureMapper> mapper_;
  std::shared_ptr<const std::vector<Vector>> features_;
  std::shared_ptr<const NeighborIndex> index_;
  std::optional<Rescale> rescale_;
};

/// Builds the layer list a config describes. Embedding layers are looked
/// up by layer id in `embeddings`.
std::vector<Layer> make_layers(
    const RailsConfig& config, std::shared_ptr<const LabeledDataset> train,
    const std::map<std::string, std::shared_ptr<const PrecomputedEmbedding>>& embeddings = {});

}  // namespace rails
