#include "dada/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace dada {

void FeatureDataset::rebuild_index() {
  class_index.assign(static_cast<size_t>(num_classes), {});
  for (size_t i = 0; i < labels.size(); ++i) class_index[static_cast<size_t>(labels[i])].push_back(static_cast<Index>(i));
}

void FeatureDataset::validate() const {
  if (static_cast<Index>(labels.size()) != features.rows())
    throw ContractError("FeatureDataset: " + std::to_string(labels.size()) + " labels for " + std::to_string(features.rows()) + " rows");
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw ContractError("FeatureDataset: label " + std::to_string(y) + " out of range");
}

void SynthSpec::validate() const {
  if (num_classes < 1 || dim < 1 || samples_per_class < 1)
    throw ConfigError("synth: num_classes, dim and samples_per_class must be positive");
  if (!(center_scale > 0.0)) throw ConfigError("synth: center_scale must be positive");
  if (!(noise_sigma >= 0.0)) throw ConfigError("synth: noise_sigma must be non-negative");
}

FeatureDataset synth_generate(const SynthSpec &spec) {
  spec.validate();
  Rng rng(spec.seed);
  Matrix centers = normal_matrix(spec.num_classes, spec.dim, 0.0, 1.0, rng);
  for (Index c = 0; c < centers.rows(); ++c) centers.row(c) *= spec.center_scale / centers.row(c).norm();

  FeatureDataset data;
  data.name = "synth";
  data.num_classes = spec.num_classes;
  const Index n = static_cast<Index>(spec.num_classes) * spec.samples_per_class;
  data.features.resize(n, spec.dim);
  data.labels.resize(static_cast<size_t>(n));
  std::normal_distribution<double> noise(0.0, 1.0);
  Index row = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
      for (Index j = 0; j < spec.dim; ++j) data.features(row, j) = centers(c, j) + spec.noise_sigma * noise(rng);
      data.labels[static_cast<size_t>(row)] = c;
    }
  }
  data.original_labels.resize(static_cast<size_t>(spec.num_classes));
  std::iota(data.original_labels.begin(), data.original_labels.end(), 0LL);
  data.rebuild_index();
  return data;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  for (;;) {
    const size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

} // namespace

FeatureDataset load_csv(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  size_t line_no = 0;
  auto fail = [&](const std::string &what) { throw ParseError(path + ":" + std::to_string(line_no) + ": " + what); };

  if (!std::getline(in, line)) {
    line_no = 1;
    fail("empty file");
  }
  ++line_no;
  const auto header = split_fields(line);
  if (header.size() < 2 || trim(header[0]) != "label") fail("header must be 'label,f0,...'");
  const size_t dim = header.size() - 1;

  std::vector<double> values;
  std::vector<long long> raw_labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != dim + 1)
      fail("expected " + std::to_string(dim + 1) + " fields, found " + std::to_string(fields.size()));
    long long label = 0;
    const auto lf = trim(fields[0]);
    auto [lp, lec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (lec != std::errc() || lp != lf.data() + lf.size()) fail("non-integer label '" + std::string(lf) + "'");
    raw_labels.push_back(label);
    for (size_t j = 1; j < fields.size(); ++j) {
      const auto f = trim(fields[j]);
      double v = 0.0;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size() || !std::isfinite(v))
        fail("non-numeric field " + std::to_string(j) + " '" + std::string(f) + "'");
      values.push_back(v);
    }
  }
  if (raw_labels.size() < 2) fail("need at least 2 data rows, found " + std::to_string(raw_labels.size()));

  FeatureDataset data;
  data.name = path;
  const Index n = static_cast<Index>(raw_labels.size());
  data.features = Eigen::Map<const Matrix>(values.data(), n, static_cast<Index>(dim));
  std::map<long long, int> dense;
  for (long long y : raw_labels) {
    auto [it, inserted] = dense.try_emplace(y, static_cast<int>(dense.size()));
    if (inserted) data.original_labels.push_back(y);
    data.labels.push_back(it->second);
  }
  data.num_classes = static_cast<int>(dense.size());
  data.rebuild_index();
  return data;
}

void write_csv(const std::string &path, const Matrix &rows, std::span<const long long> labels, const std::string &column_prefix) {
  if (static_cast<Index>(labels.size()) != rows.rows())
    throw ContractError("write_csv: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows.rows()) + " rows");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "label";
  for (Index j = 0; j < rows.cols(); ++j) out << ',' << column_prefix << j;
  out << '\n';
  char buf[64];
  for (Index i = 0; i < rows.rows(); ++i) {
    out << labels[static_cast<size_t>(i)];
    for (Index j = 0; j < rows.cols(); ++j) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), rows(i, j), std::chars_format::general, 17);
      out << ',' << std::string_view(buf, static_cast<size_t>(p - buf));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

void write_csv(const std::string &path, const FeatureDataset &data) {
  std::vector<long long> labels;
  labels.reserve(data.labels.size());
  for (int y : data.labels)
    labels.push_back(data.original_labels.empty() ? y : data.original_labels[static_cast<size_t>(y)]);
  write_csv(path, data.features, labels);
}

namespace {

FeatureDataset subset(const FeatureDataset &data, const std::vector<int> &classes, const std::string &suffix) {
  FeatureDataset out;
  out.name = data.name + suffix;
  out.num_classes = static_cast<int>(classes.size());
  std::vector<Index> rows;
  for (size_t k = 0; k < classes.size(); ++k) {
    const int c = classes[k];
    out.original_labels.push_back(data.original_labels.empty() ? c : data.original_labels[static_cast<size_t>(c)]);
    for (Index r : data.class_index[static_cast<size_t>(c)]) rows.push_back(r);
  }
  std::sort(rows.begin(), rows.end());
  std::map<int, int> dense;
  for (size_t k = 0; k < classes.size(); ++k) dense[classes[k]] = static_cast<int>(k);
  out.features.resize(static_cast<Index>(rows.size()), data.dim());
  for (size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Index>(i)) = data.features.row(rows[i]);
    out.labels.push_back(dense.at(data.labels[static_cast<size_t>(rows[i])]));
  }
  out.rebuild_index();
  return out;
}

} // namespace

Split split(const FeatureDataset &data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("split: train_fraction must lie in (0, 1), got " + std::to_string(train_fraction));
  std::vector<int> classes(static_cast<size_t>(data.num_classes));
  std::iota(classes.begin(), classes.end(), 0);
  Rng rng(seed);
  std::shuffle(classes.begin(), classes.end(), rng);
  const auto n_train = static_cast<size_t>(std::ceil(train_fraction * static_cast<double>(data.num_classes) - 1e-9));
  if (n_train < 2 || classes.size() - n_train < 2)
    throw ConfigError("split: " + std::to_string(n_train) + " train / " + std::to_string(classes.size() - n_train) +
                      " test classes; each side needs at least 2");
  std::vector<int> train(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<int> test(classes.begin() + static_cast<std::ptrdiff_t>(n_train), classes.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {subset(data, train, ":train"), subset(data, test, ":test")};
}

} // namespace dada
