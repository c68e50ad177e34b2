// SPDX-License-Identifier: Apache-2.0
#include "rails/dataset.hpp"

#include <algorithm>
#include <string>

#include "rails/error.hpp"

namespace rails {

LabeledDataset::LabeledDataset(std::vector<Example> examples) : examples_(std::move(examples)) {
  if (examples_.empty()) return;
  const std::size_t d = examples_.front().dim();
  if (d == 0) throw InvalidInput("examples must have d > 0");
  ClassId max_label = -1;
  for (std::size_t row = 0; row < examples_.size(); ++row) {
    const auto& x = examples_[row];
    if (x.dim() != d) {
      throw InvalidInput("row " + std::to_string(row) + ": expected d=" + std::to_string(d) +
                         ", received d=" + std::to_string(x.dim()));
    }
    if (!x.label) throw InvalidInput("row " + std::to_string(row) + " has no label");
    if (*x.label < 0) throw InvalidInput("row " + std::to_string(row) + " has a negative label");
    for (double v : x.values) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw InvalidInput("row " + std::to_string(row) + " has a value outside [0,1]");
      }
    }
    max_label = std::max(max_label, *x.label);
  }
  class_rows_.resize(static_cast<std::size_t>(max_label) + 1);
  all_rows_.resize(examples_.size());
  for (std::size_t row = 0; row < examples_.size(); ++row) {
    class_rows_[static_cast<std::size_t>(*examples_[row].label)].push_back(row);
    all_rows_[row] = row;
  }
  for (std::size_t c = 0; c < class_rows_.size(); ++c) {
    if (class_rows_[c].empty()) {
      throw InvalidInput("labels must cover [0, C): class " + std::to_string(c) + " is empty");
    }
  }
}

std::vector<ClassId> LabeledDataset::labels() const {
  std::vector<ClassId> out;
  out.reserve(examples_.size());
  for (const auto& x : examples_) out.push_back(*x.label);
  return out;
}

std::size_t LabeledDataset::min_class_size() const noexcept {
  std::size_t m = class_rows_.empty() ? 0 : class_rows_.front().size();
  for (const auto& rows : class_rows_) m = std::min(m, rows.size());
  return m;
}

}  // namespace rails
