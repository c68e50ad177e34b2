// SPDX-License-Identifier: Apache-2.0
#include "rails/layer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rails/error.hpp"

namespace rails {

PrecomputedEmbedding::PrecomputedEmbedding(std::string layer_id, std::size_t rows,
                                           std::size_t dim, std::vector<float> data)
    : id_(std::move(layer_id)), rows_(rows), dim_(dim), data_(std::move(data)) {
  if (data_.size() != rows_ * dim_) {
    throw InvalidInput("embedding '" + id_ + "': " + std::to_string(rows_) + "x" +
                       std::to_string(dim_) + " table needs " + std::to_string(rows_ * dim_) +
                       " values, got " + std::to_string(data_.size()));
  }
}

Vector PrecomputedEmbedding::lookup(std::size_t index) const {
  if (index >= rows_) {
    throw InvalidInput("embedding '" + id_ + "' has " + std::to_string(rows_) +
                       " rows, index " + std::to_string(index) + " requested");
  }
  const float* row = data_.data() + index * dim_;
  return Vector(row, row + dim_);
}

std::vector<Neighbor> ExhaustiveIndex::nearest(std::span<const double> feature,
                                               std::span<const std::size_t> rows,
                                               std::size_t k) const {
  std::vector<Neighbor> scored;
  scored.reserve(rows.size());
  for (std::size_t row : rows) {
    scored.push_back({row, feature_affinity((*features_)[row], feature)});
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), [](const Neighbor& a, const Neighbor& b) {
                      if (a.affinity != b.affinity) return a.affinity > b.affinity;
                      return a.row < b.row;
                    });
  scored.resize(take);
  return scored;
}

Layer Layer::input_space(std::shared_ptr<const LabeledDataset> train,
                         std::shared_ptr<const FeatureMapper> mapper) {
  if (!train || !mapper) throw InvalidInput("layer needs a dataset and a mapper");
  if (train->dim() != mapper->input_dim()) {
    throw InvalidInput("layer '" + mapper->layer_id() + "': expected d=" +
                       std::to_string(mapper->input_dim()) + ", received d=" +
                       std::to_string(train->dim()));
  }
  Layer layer;
  layer.train_ = std::move(train);
  layer.mapper_ = std::move(mapper);
  layer.build_features();
  return layer;
}

Layer Layer::embedding(const PrecomputedEmbedding& table, std::span<const ClassId> labels) {
  if (labels.size() > table.rows()) {
    throw InvalidInput("embedding '" + table.layer_id() + "' has " +
                       std::to_string(table.rows()) + " rows but the training set has " +
                       std::to_string(labels.size()));
  }
  if (labels.empty()) throw InvalidInput("embedding layer needs training rows");
  const std::size_t d = table.dim();
  const auto& data = table.data();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < labels.size() * d; ++i) {
    lo = std::min(lo, static_cast<double>(data[i]));
    hi = std::max(hi, static_cast<double>(data[i]));
  }
  Rescale rescale{lo, hi > lo ? hi - lo : 1.0};

  std::vector<Example> rows;
  rows.reserve(labels.size());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    Vector v = table.lookup(r);
    for (double& x : v) x = std::clamp((x - rescale.lo) / rescale.scale, 0.0, 1.0);
    rows.push_back(Example{std::move(v), labels[r]});
  }
  Layer layer;
  layer.train_ = std::make_shared<const LabeledDataset>(std::move(rows));
  layer.mapper_ = std::make_shared<const IdentityMapper>(table.layer_id(), d);
  layer.rescale_ = rescale;
  layer.build_features();
  return layer;
}

void Layer::build_features() {
  auto features = std::make_shared<std::vector<Vector>>();
  features->reserve(train_->size());
  for (const auto& x : train_->examples()) features->push_back(mapper_->map(x.values));
  features_ = features;
  index_ = std::make_shared<const ExhaustiveIndex>(features_);
}

Example Layer::search_query(const Query& query) const {
  if (!rescale_) {
    if (query.input.dim() != mapper_->input_dim()) {
      throw InvalidInput("query for layer '" + id() + "': expected d=" +
                         std::to_string(mapper_->input_dim()) + ", received d=" +
                         std::to_string(query.input.dim()));
    }
    return Example{query.input.values, std::nullopt};
  }
  auto it = query.companions.find(id());
  if (it == query.companions.end()) {
    throw InvalidInput("query " + std::to_string(query.id) +
                       " carries no companion embedding for layer '" + id() + "'");
  }
  if (it->second.size() != mapper_->input_dim()) {
    throw InvalidInput("companion embedding for layer '" + id() + "': expected d=" +
                       std::to_string(mapper_->input_dim()) + ", received d=" +
                       std::to_string(it->second.size()));
  }
  Vector v = it->second;
  for (double& x : v) x = std::clamp((x - rescale_->lo) / rescale_->scale, 0.0, 1.0);
  return Example{std::move(v), std::nullopt};
}

std::vector<Layer> make_layers(
    const RailsConfig& config, std::shared_ptr<const LabeledDataset> train,
    const std::map<std::string, std::shared_ptr<const PrecomputedEmbedding>>& embeddings) {
  std::vector<Layer> layers;
  const std::size_t d = train->dim();
  for (const auto& spec : config.layers) {
    switch (spec.kind) {
      case LayerKind::Identity:
        layers.push_back(Layer::input_space(train, std::make_shared<IdentityMapper>(spec.id, d)));
        break;
      case LayerKind::Projection:
        layers.push_back(Layer::input_space(
            train, std::make_shared<RandomProjectionMapper>(spec.id, d, spec.output_dim, spec.seed)));
        break;
      case LayerKind::Embedding: {
        auto it = embeddings.find(spec.id);
        if (it == embeddings.end() || !it->second) {
          throw MissingInput("no embedding file supplied for layer '" + spec.id + "'");
        }
        const auto labels = train->labels();
        layers.push_back(Layer::embedding(*it->second, labels));
        break;
      }
    }
  }
  return layers;
}

}  // namespace rails
