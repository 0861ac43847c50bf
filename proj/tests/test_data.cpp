#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "baae/data.hpp"
#include "test_util.hpp"

using namespace baae;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("baae_test_data_" + name);
  fs::remove_all(dir);
  return dir;
}

ZslDataset random_dataset(std::uint64_t seed, std::size_t p = 5, std::size_t q = 3, std::size_t seen = 4,
                          std::size_t unseen = 2, std::size_t per_class = 6) {
  Rng rng(seed);
  ZslDataset ds;
  ds.name = "random";
  const std::size_t m = seen + unseen;
  ds.features = testutil::random_matrix(m * per_class, p, rng, 0.0, 1.0);
  ds.prototypes = testutil::random_matrix(q, m, rng, 0.0, 1.0);
  for (std::size_t c = 0; c < m; ++c) {
    (c < seen ? ds.seen_classes : ds.unseen_classes).push_back(static_cast<std::int32_t>(c));
    for (std::size_t s = 0; s < per_class; ++s) {
      const std::size_t r = ds.labels.size();
      ds.labels.push_back(static_cast<std::int32_t>(c));
      (c < seen && s < per_class / 2 ? ds.train_rows : ds.test_rows).push_back(r);
    }
  }
  return ds;
}

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.field();
  }
  return "<no error>";
}

}  // namespace

TEST(Dataset, RoundTripIsBitwise) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ZslDataset ds = random_dataset(seed);
    if (seed % 2) ds.normalization = NormRecord{NormMode::PerDimension, {0.1, 0.2, 0.3, 0.4, 0.5}, {1, 2, 3, 4, 5}};
    const fs::path dir = scratch("roundtrip");
    save_dataset(dir, ds);
    const ZslDataset back = load_dataset(dir);
    EXPECT_EQ(back, ds);
    for (std::size_t i = 0; i < ds.features.size(); ++i) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(back.features[i]), std::bit_cast<std::uint64_t>(ds.features[i]));
    }
    for (const char* f : {"manifest.json", "X.f64", "A.f64", "y.i32", "splits.json"}) {
      EXPECT_TRUE(fs::exists(dir / f)) << f;
    }
    fs::remove_all(dir);
  }
}

TEST(Dataset, AwaShapedManifestLoads) {
  // Table-sized dimensions with a handful of rows per class.
  ZslDataset ds = random_dataset(3, 2048, 85, 40, 10, 2);
  const fs::path dir = scratch("awa");
  save_dataset(dir, ds);
  const ZslDataset back = load_dataset(dir);
  EXPECT_EQ(back.visual_dim(), 2048u);
  EXPECT_EQ(back.semantic_dim(), 85u);
  EXPECT_EQ(back.num_classes(), 50u);
  EXPECT_EQ(back.seen_classes.size(), 40u);
  EXPECT_EQ(back.unseen_classes.size(), 10u);
  fs::remove_all(dir);
}

TEST(Dataset, RejectsLabelEqualToClassCount) {
  ZslDataset ds = random_dataset(1);
  const fs::path dir = scratch("badlabel");
  save_dataset(dir, ds);
  auto labels = ds.labels;
  labels.back() = static_cast<std::int32_t>(ds.num_classes());
  std::ofstream(dir / "y.i32", std::ios::binary) << io::encode_i32(labels);
  EXPECT_EQ(field_of([&] { load_dataset(dir); }), "y");
  fs::remove_all(dir);
}

TEST(Dataset, RejectsOverlappingSplits) {
  ZslDataset ds = random_dataset(1);
  ds.unseen_classes.push_back(ds.seen_classes.front());
  EXPECT_EQ(field_of([&] { validate(ds); }), "splits");
  ZslDataset rows = random_dataset(1);
  rows.test_rows.push_back(rows.train_rows.front());
  EXPECT_EQ(field_of([&] { validate(rows); }), "splits.test_rows");
  ZslDataset unseen_train = random_dataset(1);
  unseen_train.train_rows.push_back(unseen_train.test_rows.back());
  EXPECT_EQ(field_of([&] { validate(unseen_train); }), "splits.train_rows");
}

TEST(Dataset, RejectsPayloadSizeMismatch) {
  ZslDataset ds = random_dataset(2);
  const fs::path dir = scratch("payload");
  save_dataset(dir, ds);
  std::ofstream(dir / "X.f64", std::ios::binary | std::ios::app) << std::string(8, '\0');
  EXPECT_EQ(field_of([&] { load_dataset(dir); }), "X");
  EXPECT_EQ(field_of([&] { load_dataset(dir / "missing"); }), (dir / "missing" / "manifest.json").string());
  fs::remove_all(dir);
}

TEST(Normalize, Examples) {
  const Tensor x = Tensor::matrix({{0.0, 5.0}, {2.0, 5.0}, {1.0, 5.0}});
  const std::vector<std::size_t> fit{0, 1};
  const auto out = normalize_features(x, fit);
  EXPECT_EQ(out.features(2, 0), 0.5);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(out.features(r, 1), 0.0);
  EXPECT_EQ(out.record.min, (std::vector<double>{0.0, 5.0}));
  EXPECT_EQ(out.record.max, (std::vector<double>{2.0, 5.0}));
  EXPECT_THROW(normalize_features(x, std::vector<std::size_t>{}), ContractError);
}

TEST(Normalize, FitRowsSpanUnitIntervalAndOthersClamp) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor x = testutil::random_matrix(30, 6, rng, -3.0, 7.0);
    std::vector<std::size_t> fit;
    for (std::size_t r = 0; r < 30; r += 2) fit.push_back(r);
    const auto out = normalize_features(x, fit);
    for (std::size_t c = 0; c < 6; ++c) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t r : fit) {
        lo = std::min(lo, out.features(r, c));
        hi = std::max(hi, out.features(r, c));
      }
      EXPECT_EQ(lo, 0.0);
      EXPECT_EQ(hi, 1.0);
    }
    for (double v : out.features.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    // Idempotent on fit rows.
    const auto again = normalize_features(out.features, fit);
    for (std::size_t r : fit) {
      for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(again.features(r, c), out.features(r, c), 1e-12);
    }
    EXPECT_EQ(apply_normalization(x, out.record), out.features);
  }
}

TEST(Normalize, PerVectorMaxMode) {
  const Tensor x = Tensor::matrix({{1.0, 4.0}, {3.0, 1.5}});
  const auto out = normalize_features(x, std::vector<std::size_t>{0}, NormMode::PerVectorMax);
  EXPECT_EQ(out.features, Tensor::matrix({{0.25, 1.0}, {1.0, 0.5}}));
}

TEST(Prototypes, Examples) {
  Rng rng(0);
  const Tensor raw = testutil::random_matrix(4, 3, rng);
  EXPECT_EQ(build_prototypes(raw, AttributeMode::ClassLevel), raw);
  const std::vector<std::int32_t> one{0, 0};
  EXPECT_EQ(build_prototypes(Tensor::matrix({{0, 1}, {1, 1}}), AttributeMode::ImageAveraged, one, 1),
            Tensor::matrix({{0.5}, {1.0}}));
  const std::vector<std::int32_t> gap{0, 0};
  EXPECT_THROW(build_prototypes(Tensor::matrix({{0, 1}, {1, 1}}), AttributeMode::ImageAveraged, gap, 2), DataError);
}

TEST(Prototypes, GroupedMeanOracleAndRelabeling) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t n = 40, q = 5, m = 6;
    const Tensor raw = testutil::random_matrix(n, q, rng);
    std::vector<std::int32_t> y;
    for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<std::int32_t>(i < m ? i : rng.below(m)));
    const Tensor a = build_prototypes(raw, AttributeMode::ImageAveraged, y, m);
    std::map<std::int32_t, std::vector<double>> sums;
    std::map<std::int32_t, int> counts;
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[y[i]];
      s.resize(q, 0.0);
      for (std::size_t k = 0; k < q; ++k) s[k] += raw(i, k);
      ++counts[y[i]];
    }
    for (std::size_t c = 0; c < m; ++c) {
      for (std::size_t k = 0; k < q; ++k) EXPECT_EQ(a(k, c), sums[c][k] / counts[c]);
    }
    std::vector<std::int32_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    baae::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::int32_t> relabeled;
    for (std::int32_t l : y) relabeled.push_back(perm[l]);
    const Tensor b = build_prototypes(raw, AttributeMode::ImageAveraged, relabeled, m);
    for (std::size_t c = 0; c < m; ++c) {
      for (std::size_t k = 0; k < q; ++k) EXPECT_EQ(b(k, perm[c]), a(k, c));
    }
  }
}

TEST(Synthetic, Deterministic) {
  const SyntheticConfig cfg;
  const fs::path d1 = scratch("syn1"), d2 = scratch("syn2");
  save_dataset(d1, make_synthetic(cfg));
  save_dataset(d2, make_synthetic(cfg));
  for (const char* f : {"manifest.json", "X.f64", "A.f64", "y.i32", "splits.json"}) {
    EXPECT_EQ(io::read_file(d1 / f), io::read_file(d2 / f)) << f;
  }
  SyntheticConfig other = cfg;
  other.seed = 8;
  EXPECT_NE(make_synthetic(other).features, make_synthetic(cfg).features);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Synthetic, NoiselessClassesAreConstant) {
  SyntheticConfig cfg;
  cfg.noise_std = 0.0;
  cfg.samples_per_class = 20;
  const auto syn = make_synthetic_with_truth(cfg);
  const ZslDataset& ds = syn.dataset;
  for (std::size_t r = 0; r < ds.num_rows(); ++r) {
    for (std::size_t j = 0; j < ds.visual_dim(); ++j) {
      EXPECT_EQ(ds.features(r, j), syn.class_exemplars(static_cast<std::size_t>(ds.labels[r]), j));
    }
  }
}

TEST(Synthetic, SplitInvariantsHoldExhaustively) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticConfig cfg;
    cfg.seed = seed;
    cfg.seen_classes = 3 + seed % 5;
    cfg.unseen_classes = 2 + seed % 3;
    cfg.samples_per_class = 10 + seed;
    const ZslDataset ds = make_synthetic(cfg);
    EXPECT_NO_THROW(validate(ds));
    const std::set<std::int32_t> seen(ds.seen_classes.begin(), ds.seen_classes.end());
    const std::set<std::int32_t> unseen(ds.unseen_classes.begin(), ds.unseen_classes.end());
    for (std::int32_t c : unseen) EXPECT_FALSE(seen.count(c));
    std::set<std::size_t> train(ds.train_rows.begin(), ds.train_rows.end());
    for (std::size_t r : ds.train_rows) EXPECT_TRUE(seen.count(ds.labels[r]));
    for (std::size_t r : ds.test_rows) EXPECT_FALSE(train.count(r));
    for (std::size_t r = 0; r < ds.num_rows(); ++r) {
      if (unseen.count(ds.labels[r])) {
        EXPECT_FALSE(train.count(r));
      }
    }
    EXPECT_EQ(train.size() + ds.test_rows.size(), ds.num_rows());
    for (double v : ds.features.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Synthetic, GroundTruthOracleSolvesUnseenClasses) {
  const auto syn = make_synthetic_with_truth(SyntheticConfig{});
  const ZslDataset& ds = syn.dataset;
  const auto rows = ds.test_rows_in(ds.unseen_classes);
  std::size_t correct = 0;
  for (std::size_t r : rows) {
    double best = 1e300;
    std::int32_t pick = -1;
    for (std::int32_t c : ds.unseen_classes) {
      double d = 0.0;
      for (std::size_t j = 0; j < ds.visual_dim(); ++j) {
        const double diff = ds.features(r, j) - syn.class_exemplars(static_cast<std::size_t>(c), j);
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        pick = c;
      }
    }
    correct += pick == ds.labels[r];
  }
  EXPECT_GE(100.0 * correct / rows.size(), 95.0);
}

TEST(Synthetic, ConfigValidation) {
  SyntheticConfig cfg;
  cfg.unseen_classes = 1;
  EXPECT_THROW(make_synthetic(cfg), ContractError);
  cfg = {};
  cfg.visual_dim = 0;
  EXPECT_THROW(make_synthetic(cfg), ContractError);
}
