#include "twinopt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace twinopt {

void Dataset::append_row(std::span<const double> feats, int label) {
  values.insert(values.end(), feats.begin(), feats.end());
  labels.push_back(label);
}

void Dataset::validate(int n_classes) const {
  check(!feature_names.empty(), ErrorKind::InvalidData, "dataset has no feature columns");
  check(n_rows() > 0, ErrorKind::InvalidData, "dataset has no rows");
  check(values.size() == n_rows() * n_features(), ErrorKind::Shape,
        "dataset value buffer does not match rows x features");
  for (double v : values) {
    check(std::isfinite(v), ErrorKind::InvalidData, "dataset contains a non-finite value");
  }
  for (int y : labels) {
    check(y >= 0 && y < n_classes, ErrorKind::InvalidData,
          "label " + std::to_string(y) + " outside [0, " + std::to_string(n_classes) + ")");
  }
}

Dataset Dataset::select_rows(const std::vector<size_t>& idx) const {
  Dataset out;
  out.feature_names = feature_names;
  out.values.reserve(idx.size() * n_features());
  out.labels.reserve(idx.size());
  for (size_t i : idx) out.append_row(row(i), labels[i]);
  return out;
}

Dataset Dataset::drop_column(size_t col) const {
  check(col < n_features(), ErrorKind::Shape, "drop_column: column index out of range");
  check(n_features() >= 2, ErrorKind::CannotDrop, "cannot drop the last remaining feature");
  Dataset out;
  out.feature_names = feature_names;
  out.feature_names.erase(out.feature_names.begin() + static_cast<long>(col));
  out.values.reserve(n_rows() * (n_features() - 1));
  out.labels = labels;
  const size_t d = n_features();
  for (size_t i = 0; i < n_rows(); ++i) {
    const double* r = values.data() + i * d;
    for (size_t j = 0; j < d; ++j) {
      if (j != col) out.values.push_back(r[j]);
    }
  }
  return out;
}

size_t Dataset::column_index(const std::string& name) const {
  for (size_t j = 0; j < feature_names.size(); ++j) {
    if (feature_names[j] == name) return j;
  }
  throw Error(ErrorKind::Shape, "unknown feature column: " + name);
}

std::string Dataset::fingerprint() const {
  std::string buf;
  for (const auto& n : feature_names) {
    buf += n;
    buf += '\n';
  }
  buf.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
  buf.append(reinterpret_cast<const char*>(labels.data()), labels.size() * sizeof(int));
  return content_hash(buf);
}

DataSplit split_dataset(const Dataset& data, const SplitRatios& ratios, uint64_t seed) {
  check(ratios.train > 0 && ratios.valid > 0 && ratios.test > 0, ErrorKind::Config,
        "split ratios must be positive");
  const size_t n = data.n_rows();
  check(n >= 3, ErrorKind::InsufficientData,
        "need at least 3 rows to split, have " + std::to_string(n));

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(seed);
  for (size_t i = n - 1; i > 0; --i) {
    size_t j = rng.uniform_int(i + 1);
    std::swap(order[i], order[j]);
  }

  const double total = ratios.train + ratios.valid + ratios.test;
  const size_t n_train = static_cast<size_t>(std::floor(static_cast<double>(n) * ratios.train / total));
  const size_t n_valid = static_cast<size_t>(std::floor(static_cast<double>(n) * ratios.valid / total));

  std::vector<size_t> idx_train(order.begin(), order.begin() + static_cast<long>(n_train));
  std::vector<size_t> idx_valid(order.begin() + static_cast<long>(n_train),
                                order.begin() + static_cast<long>(n_train + n_valid));
  std::vector<size_t> idx_test(order.begin() + static_cast<long>(n_train + n_valid), order.end());

  return DataSplit{data.select_rows(idx_train), data.select_rows(idx_valid),
                   data.select_rows(idx_test)};
}

Dataset concat(const Dataset& a, const Dataset& b) {
  check(a.feature_names == b.feature_names, ErrorKind::Shape,
        "concat: feature schemas differ");
  Dataset out = a;
  out.values.insert(out.values.end(), b.values.begin(), b.values.end());
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), ErrorKind::Io, "cannot open for writing: " + path);
  for (size_t j = 0; j < data.feature_names.size(); ++j) {
    out << data.feature_names[j] << ',';
  }
  out << "label\n";
  const size_t d = data.n_features();
  std::string line;
  for (size_t i = 0; i < data.n_rows(); ++i) {
    line.clear();
    const double* r = data.values.data() + i * d;
    for (size_t j = 0; j < d; ++j) {
      line += format_double(r[j]);
      line += ',';
    }
    line += std::to_string(data.labels[i]);
    line += '\n';
    out << line;
  }
  check(out.good(), ErrorKind::Io, "write failed: " + path);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Dataset read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), ErrorKind::Io, "cannot open for reading: " + path);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), ErrorKind::InvalidData,
        "empty csv: " + path);
  auto header = split_line(line);
  check(header.size() >= 2 && header.back() == "label", ErrorKind::InvalidData,
        "csv header must end with a label column: " + path);

  Dataset data;
  data.feature_names.assign(header.begin(), header.end() - 1);
  const size_t d = data.feature_names.size();
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_line(line);
    check(cells.size() == d + 1, ErrorKind::InvalidData,
          path + ":" + std::to_string(line_no) + ": expected " + std::to_string(d + 1) +
              " cells, got " + std::to_string(cells.size()));
    for (size_t j = 0; j < d; ++j) {
      double v = 0.0;
      auto res = std::from_chars(cells[j].data(), cells[j].data() + cells[j].size(), v);
      check(res.ec == std::errc{}, ErrorKind::InvalidData,
            path + ":" + std::to_string(line_no) + ": bad number '" + cells[j] + "'");
      data.values.push_back(v);
    }
    data.labels.push_back(std::stoi(cells[d]));
  }
  check(!data.labels.empty(), ErrorKind::InvalidData, "csv has no data rows: " + path);
  return data;
}

}  // namespace twinopt
