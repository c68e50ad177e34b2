// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rails/types.hpp"

namespace rails {

/// Labeled examples plus a per-class row index. Labels must cover the
/// contiguous range [0, C) and every row must be labeled.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  explicit LabeledDataset(std::vector<Example> examples);

  std::size_t size() const noexcept { return examples_.size(); }
  bool empty() const noexcept { return examples_.empty(); }
  std::size_t dim() const noexcept { return examples_.empty() ? 0 : examples_.front().dim(); }
  int num_classes() const noexcept { return static_cast<int>(class_rows_.size()); }

  const Example& operator[](std::size_t row) const { return examples_[row]; }
  std::span<const Example> examples() const noexcept { return examples_; }
  std::span<const std::size_t> class_rows(ClassId c) const { return class_rows_.at(static_cast<std::size_t>(c)); }
  std::span<const std::size_t> all_rows() const noexcept { return all_rows_; }
  std::vector<ClassId> labels() const;

  /// Smallest class size, n_c.
  std::size_t min_class_size() const noexcept;

 private:
  std::vector<Example> examples_;
  std::vector<std::vector<std::size_t>> class_rows_;
  std::vector<std::size_t> all_rows_;
};

}  // namespace rails
