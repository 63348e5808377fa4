#include "doctest.h"

#include "dada/dataio.hpp"

#include <filesystem>
#include <fstream>
#include <set>

using namespace dada;

namespace {

std::string temp_path(const std::string &name) {
  const auto dir = std::filesystem::temp_directory_path() / "dada_test_dataio";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::string write_text(const std::string &name, const std::string &text) {
  const std::string path = temp_path(name);
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

} // namespace

TEST_CASE("synthetic data is deterministic in its seed") {
  SynthSpec spec;
  spec.samples_per_class = 10;
  const FeatureDataset a = synth_generate(spec), b = synth_generate(spec);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  spec.seed = 1;
  CHECK(synth_generate(spec).features != a.features);
}

TEST_CASE("synthetic centers lie on the requested sphere and noise has the requested scale") {
  SynthSpec spec;
  spec.num_classes = 5;
  spec.dim = 16;
  spec.samples_per_class = 4;
  spec.center_scale = 3.0;
  spec.noise_sigma = 0.0;
  const FeatureDataset clean = synth_generate(spec);
  for (int c = 0; c < 5; ++c) {
    const auto &rows = clean.class_index[static_cast<size_t>(c)];
    REQUIRE(rows.size() == 4);
    for (Index r : rows) {
      CHECK(clean.features.row(r) == clean.features.row(rows[0]));
      CHECK(clean.features.row(r).norm() == doctest::Approx(3.0).epsilon(1e-12));
    }
  }

  spec.noise_sigma = 0.5;
  spec.samples_per_class = 4000;
  const FeatureDataset noisy = synth_generate(spec);
  // Same seed, same centers: the residual against the clean center is pure noise.
  double s2 = 0.0;
  for (Index i = 0; i < noisy.size(); ++i)
    s2 += (noisy.features.row(i) - clean.features.row(clean.class_index[static_cast<size_t>(noisy.labels[static_cast<size_t>(i)])][0]))
              .squaredNorm();
  CHECK(s2 / static_cast<double>(noisy.size() * spec.dim) == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("synthetic dataset parameters are validated") {
  SynthSpec spec;
  spec.num_classes = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = SynthSpec{};
  spec.noise_sigma = -1.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("CSV round trip is exact") {
  SynthSpec spec;
  spec.num_classes = 3;
  spec.dim = 7;
  spec.samples_per_class = 5;
  const FeatureDataset a = synth_generate(spec);
  const std::string path = temp_path("roundtrip.csv");
  write_csv(path, a);
  const FeatureDataset b = load_csv(path);
  CHECK(b.features == a.features);
  CHECK(b.labels == a.labels);
  CHECK(b.num_classes == 3);
}

TEST_CASE("CSV labels are re-indexed densely by first appearance") {
  const FeatureDataset d = load_csv(write_text("sparse.csv", "label,f0\n40,1.5\n7,2\n40,3\n"));
  CHECK(d.labels == Labels{0, 1, 0});
  CHECK(d.original_labels == std::vector<long long>{40, 7});
  CHECK(d.features(1, 0) == 2.0);
}

TEST_CASE("malformed CSV files are rejected with a line number") {
  auto parse_error = [](const std::string &name, const std::string &text, const std::string &fragment) {
    try {
      load_csv(write_text(name, text));
      FAIL("expected ParseError for " << name);
    } catch (const ParseError &e) {
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  parse_error("header.csv", "id,f0\n0,1\n1,2\n", "header");
  parse_error("ragged.csv", "label,f0,f1\n0,1,2\n1,2\n", ":3:");
  parse_error("nonnumeric.csv", "label,f0\n0,1\n1,abc\n", "non-numeric");
  parse_error("short.csv", "label,f0\n0,1\n", "at least 2");
  parse_error("empty.csv", "", "empty");
  CHECK_THROWS_AS(load_csv(temp_path("does-not-exist.csv")), IoError);
}

TEST_CASE("split is class-disjoint with dense labels on each side") {
  SynthSpec spec;
  spec.num_classes = 9;
  spec.samples_per_class = 3;
  spec.dim = 4;
  const FeatureDataset data = synth_generate(spec);
  const Split s = split(data, 0.5, 11);
  CHECK(s.train.num_classes == 5);
  CHECK(s.test.num_classes == 4);
  CHECK(s.train.size() == 15);
  CHECK(s.test.size() == 12);
  std::set<long long> train_orig(s.train.original_labels.begin(), s.train.original_labels.end());
  for (long long y : s.test.original_labels) CHECK(train_orig.count(y) == 0);
  for (const FeatureDataset *side : {&s.train, &s.test}) {
    for (size_t i = 0; i < side->labels.size(); ++i) {
      const int y = side->labels[i];
      REQUIRE(y >= 0);
      REQUIRE(y < side->num_classes);
      // Every row is a row of the source with the same original class.
      const long long orig = side->original_labels[static_cast<size_t>(y)];
      bool found = false;
      for (Index r : data.class_index[static_cast<size_t>(orig)])
        found = found || data.features.row(r) == side->features.row(static_cast<Index>(i));
      CHECK(found);
    }
  }
  const Split again = split(data, 0.5, 11);
  CHECK(again.train.original_labels == s.train.original_labels);
}

TEST_CASE("split rejects fractions that leave a side with fewer than two classes") {
  SynthSpec spec;
  spec.num_classes = 4;
  spec.samples_per_class = 2;
  const FeatureDataset data = synth_generate(spec);
  CHECK_THROWS_AS(split(data, 0.0, 0), ConfigError);
  CHECK_THROWS_AS(split(data, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(split(data, 0.9, 0), ConfigError);
  CHECK_NOTHROW(split(data, 0.5, 0));
}
