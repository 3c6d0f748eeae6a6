#pragma once

// ------------------------------------------------------------
// row-major labeled feature matrix, CSV io, shuffled split
// ------------------------------------------------------------

#include <array>
#include <span>
#include <string>
#include <vector>

#include "twinopt/common.hpp"

namespace twinopt {

struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<double> values;  // row-major, n_rows x n_features
  std::vector<int> labels;

  size_t n_rows() const { return labels.size(); }
  size_t n_features() const { return feature_names.size(); }

  std::span<const double> row(size_t i) const {
    return {values.data() + i * n_features(), n_features()};
  }

  double at(size_t i, size_t j) const { return values[i * n_features() + j]; }

  void append_row(std::span<const double> feats, int label);

  // checks shape consistency, finite values and labels in [0, n_classes)
  void validate(int n_classes = 5) const;

  Dataset select_rows(const std::vector<size_t>& idx) const;
  Dataset drop_column(size_t col) const;
  size_t column_index(const std::string& name) const;

  // content fingerprint over names, values and labels
  std::string fingerprint() const;
};

struct SplitRatios {
  double train = 8.0;
  double valid = 1.0;
  double test = 1.0;
};

struct DataSplit {
  Dataset train;
  Dataset valid;
  Dataset test;
};

// shuffled partition: floor(train_share*N) / floor(valid_share*N) / remainder
DataSplit split_dataset(const Dataset& data, const SplitRatios& ratios, uint64_t seed);

// concatenates rows of a and b (same schema)
Dataset concat(const Dataset& a, const Dataset& b);

void write_csv(const Dataset& data, const std::string& path);
Dataset read_csv(const std::string& path);

}  // namespace twinopt
