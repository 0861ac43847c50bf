#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "baae/eval.hpp"
#include "baae/training.hpp"
#include "test_util.hpp"

using namespace baae;

namespace {

std::vector<std::int32_t> brute_force_nn(const Tensor& test, const ExemplarSet& ex) {
  std::vector<std::int32_t> out;
  for (std::size_t i = 0; i < test.rows(); ++i) {
    std::vector<std::pair<double, std::int32_t>> all;
    for (std::size_t e = 0; e < ex.labels.size(); ++e) {
      double d = 0.0;
      for (std::size_t k = 0; k < test.cols(); ++k) d += std::pow(test(i, k) - ex.features(e, k), 2);
      all.emplace_back(d, ex.labels[e]);
    }
    out.push_back(std::min_element(all.begin(), all.end())->second);
  }
  return out;
}

MlpParams random_generator(std::size_t q, std::size_t noise, std::size_t p, std::uint64_t seed) {
  return init_params(NetworkSpec{q + noise, {8}, p, Activation::Relu}, seed, 0.5);
}

}  // namespace

TEST(NearestNeighbor, ExactMatchAndTies) {
  const ExemplarSet ex{Tensor::matrix({{0, 0}, {2, 0}, {1, 5}}), {3, 1, 2}};
  EXPECT_EQ(classify_nn(Tensor::matrix({{1, 5}}), ex), (std::vector<std::int32_t>{2}));
  // (1, 0) is equidistant from classes 3 and 1.
  EXPECT_EQ(classify_nn(Tensor::matrix({{1, 0}}), ex), (std::vector<std::int32_t>{1}));
  EXPECT_THROW(classify_nn(Tensor::matrix({{1, 0, 0}}), ex), ShapeError);
  EXPECT_THROW(classify_nn(Tensor::matrix({{1, 0}}), ExemplarSet{}), ContractError);
}

TEST(NearestNeighbor, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 250; ++seed) {
    Rng rng(seed);
    const Tensor test = testutil::random_matrix(20, 4, rng);
    ExemplarSet ex{testutil::random_matrix(30, 4, rng), {}};
    for (int e = 0; e < 30; ++e) ex.labels.push_back(static_cast<std::int32_t>(rng.below(6)));
    if (seed % 5 == 0) {
      // Duplicate exemplars under different labels to exercise ties.
      for (std::size_t k = 0; k < 4; ++k) ex.features(1, k) = ex.features(0, k);
    }
    ASSERT_EQ(classify_nn(test, ex), brute_force_nn(test, ex)) << "seed " << seed;
  }
}

TEST(PerClassTop1, Examples) {
  const std::vector<std::int32_t> classes{0, 1};
  EXPECT_EQ(per_class_top1(std::vector<std::int32_t>{0, 1, 1}, std::vector<std::int32_t>{0, 1, 1}, classes), 100.0);
  EXPECT_EQ(per_class_top1(std::vector<std::int32_t>{0, 1, 1}, std::vector<std::int32_t>{0, 0, 1}, classes), 75.0);
  EXPECT_THROW(per_class_top1(std::vector<std::int32_t>{0}, std::vector<std::int32_t>{0}, classes), DataError);
  EXPECT_THROW(per_class_top1(std::vector<std::int32_t>{0}, std::vector<std::int32_t>{5}, classes), ContractError);
}

TEST(PerClassTop1, LoopOracleAndPermutationInvariance) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::vector<std::int32_t> classes{2, 4, 7, 9};
    std::vector<std::int32_t> truth, pred;
    for (int i = 0; i < 60; ++i) {
      truth.push_back(classes[i < 4 ? i : rng.below(4)]);
      pred.push_back(classes[rng.below(4)]);
    }
    double ref = 0.0;
    for (std::int32_t c : classes) {
      int hit = 0, total = 0;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] != c) continue;
        ++total;
        hit += pred[i] == c;
      }
      ref += 100.0 * hit / total;
    }
    ref /= classes.size();
    const double t = per_class_top1(pred, truth, classes);
    EXPECT_NEAR(t, ref, 1e-12);
    std::vector<std::size_t> order(truth.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order.begin(), order.end(), rng);
    std::vector<std::int32_t> pt, tt;
    for (std::size_t i : order) {
      pt.push_back(pred[i]);
      tt.push_back(truth[i]);
    }
    EXPECT_EQ(per_class_top1(pt, tt, classes), t);
  }
}

TEST(PerClassTop1, UniformGuessingConcentratesNearChance) {
  Rng rng(11);
  const std::vector<std::int32_t> classes{0, 1, 2, 3, 4};
  std::vector<std::int32_t> truth, pred;
  for (std::int32_t c : classes) {
    for (int i = 0; i < 2000; ++i) {
      truth.push_back(c);
      pred.push_back(static_cast<std::int32_t>(rng.below(5)));
    }
  }
  EXPECT_NEAR(per_class_top1(pred, truth, classes), 20.0, 5.0);
}

TEST(Gzsl, HarmonicMean) {
  EXPECT_NEAR(std::round(harmonic_mean(51.4, 85.6) * 10) / 10, 64.2, 1e-9);
  EXPECT_EQ(harmonic_mean(42.0, 42.0), 42.0);
  EXPECT_EQ(harmonic_mean(0.0, 80.0), 0.0);
  EXPECT_EQ(harmonic_mean(0.0, 0.0), 0.0);
}

TEST(Gzsl, ReportRecomputesHarmonicMean) {
  const std::vector<std::int32_t> seen{0, 1}, unseen{2, 3};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    std::vector<std::int32_t> truth, pred;
    for (int i = 0; i < 40; ++i) {
      truth.push_back(static_cast<std::int32_t>(i < 4 ? i : rng.below(4)));
      pred.push_back(static_cast<std::int32_t>(rng.below(4)));
    }
    const GzslScores r = gzsl_report(pred, truth, seen, unseen);
    std::vector<std::int32_t> pu, tu, ps, ts;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      (truth[i] >= 2 ? pu : ps).push_back(pred[i]);
      (truth[i] >= 2 ? tu : ts).push_back(truth[i]);
    }
    EXPECT_EQ(r.u, per_class_top1(pu, tu, unseen));
    EXPECT_EQ(r.s, per_class_top1(ps, ts, seen));
    const double h = r.u + r.s == 0 ? 0.0 : 2 * r.s * r.u / (r.s + r.u);
    EXPECT_NEAR(r.h, h, 1e-12);
    EXPECT_GE(r.h, 0.0);
    EXPECT_LE(r.h, 100.0);
  }
  EXPECT_THROW(gzsl_report(std::vector<std::int32_t>{0}, std::vector<std::int32_t>{0}, seen, unseen), DataError);
}

TEST(Synthesis, CountsDeterminismAndZeroMap) {
  Rng rng(2);
  const Tensor protos = testutil::random_matrix(3, 6, rng, 0, 1);
  const MlpParams theta = random_generator(3, 3, 4, 5);
  const std::vector<std::int32_t> five{0, 1, 2, 4, 5};
  const auto one = synthesize_features(theta, protos, five, 1, 9);
  EXPECT_EQ(one.labels, five);
  EXPECT_EQ(one.features.rows(), 5u);
  const auto a = synthesize_features(theta, protos, five, 7, 9);
  const auto b = synthesize_features(theta, protos, five, 7, 9);
  EXPECT_EQ(a.features, b.features);
  EXPECT_NE(a.features, synthesize_features(theta, protos, five, 7, 10).features);
  // Rows are grouped per class and a class's noise is independent of the count.
  for (std::size_t ci = 0; ci < five.size(); ++ci) {
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(a.features(ci * 7, k), one.features(ci, k));
  }
  MlpParams zero = theta;
  for (Tensor* t : zero.tensors()) std::fill(t->values().begin(), t->values().end(), 0.0);
  const auto zeros = synthesize_features(zero, protos, five, 4, 1);
  for (double v : zeros.features.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(synthesize_features(theta, protos, std::vector<std::int32_t>{6}, 1, 0), DataError);
  EXPECT_THROW(synthesize_features(theta, protos, std::vector<std::int32_t>{}, 1, 0), ContractError);
  EXPECT_THROW(synthesize_features(theta, protos, five, 0, 0), ContractError);
}

TEST(Softmax, SeparableClustersAndDegenerateCases) {
  Rng rng(3);
  auto cluster = [&](std::size_t n, double cx, double cy, std::int32_t label, ExemplarSet& out) {
    const std::size_t r0 = out.labels.size();
    Tensor grown = Tensor::matrix(r0 + n, 2);
    std::copy(out.features.values().begin(), out.features.values().end(), grown.values().begin());
    for (std::size_t i = 0; i < n; ++i) {
      grown(r0 + i, 0) = cx + rng.normal(0.0, 0.1);
      grown(r0 + i, 1) = cy + rng.normal(0.0, 0.1);
      out.labels.push_back(label);
    }
    out.features = grown;
  };
  ExemplarSet train{Tensor::matrix(0, 2), {}}, test{Tensor::matrix(0, 2), {}};
  cluster(50, 1.0, 0.0, 3, train);
  cluster(50, -1.0, 0.0, 8, train);
  cluster(20, 1.0, 0.0, 3, test);
  cluster(20, -1.0, 0.0, 8, test);
  SoftmaxOptions opt;
  opt.learning_rate = 0.05;
  const auto pred = classify_softmax(train, test.features, opt);
  EXPECT_EQ(pred, test.labels);
  EXPECT_EQ(classify_softmax(train, test.features, opt), pred);

  const ExemplarSet single{Tensor::matrix({{0.3, 0.1}}), {4}};
  EXPECT_EQ(classify_softmax(single, test.features), std::vector<std::int32_t>(40, 4));
  EXPECT_THROW(classify_softmax(train, test.features, opt, std::vector<std::int32_t>{3, 5}), DataError);
}

TEST(Evaluation, ZslIgnoresSeenClasses) {
  SyntheticConfig cfg;
  cfg.samples_per_class = 20;
  ZslDataset ds = make_synthetic(cfg);
  const MlpParams theta = random_generator(ds.semantic_dim(), ds.semantic_dim(), ds.visual_dim(), 1);
  EvalOptions opt;
  opt.n_per_class = 5;
  const double t = evaluate_zsl(theta, ds, opt);
  for (std::int32_t c : ds.seen_classes) {
    for (std::size_t k = 0; k < ds.semantic_dim(); ++k) ds.prototypes(k, c) = 0.5;
  }
  EXPECT_EQ(evaluate_zsl(theta, ds, opt), t);
}

TEST(Evaluation, ReportFieldsByTask) {
  SyntheticConfig cfg;
  cfg.samples_per_class = 20;
  const ZslDataset ds = make_synthetic(cfg);
  BaaeParams params = init_baae({ds.visual_dim(), ds.semantic_dim(), ds.semantic_dim(), ds.num_classes()},
                                Architecture{.hidden = 8, .disc_hidden = {4}}, 0);
  EvalOptions opt;
  opt.n_per_class = 3;
  opt.task = Task::Zsl;
  const EvalReport z = evaluate(params, ds, opt);
  EXPECT_TRUE(z.T.has_value());
  EXPECT_FALSE(z.H.has_value());
  EXPECT_EQ(z.zsl_per_class.size(), ds.unseen_classes.size());
  opt.task = Task::Both;
  opt.exemplar_mode = ExemplarMode::GroundTruth;
  const EvalReport both = evaluate(params, ds, opt);
  ASSERT_TRUE(both.H.has_value());
  EXPECT_NEAR(*both.H, harmonic_mean(*both.u, *both.s), 1e-12);
  EXPECT_EQ(both.gzsl_per_class.size(), ds.num_classes());
  const io::json j = to_json(both);
  for (const char* key : {"T", "u", "s", "H", "classifier", "exemplar_mode", "n_per_class"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(Sweep, TableShapeAndTrainedModelBeatsChance) {
  SyntheticConfig cfg;
  cfg.samples_per_class = 60;
  const ZslDataset ds = make_synthetic(cfg);
  HyperParams hp;
  hp.epochs = 15;
  hp.hidden = 128;
  hp.seed = 1;
  const TrainResult trained = train(ds, hp);
  const std::vector<std::size_t> single{1};
  const auto one = sweep_sample_count(trained.params.generator, ds, single, ClassifierKind::NearestNeighbor, 3);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(sweep_tsv(one).substr(0, 14), "n_per_class\tT\n");

  const std::vector<std::size_t> counts{1, 10, 100};
  const auto rows = sweep_sample_count(trained.params.generator, ds, counts, ClassifierKind::NearestNeighbor, 3);
  const auto again = sweep_sample_count(trained.params.generator, ds, counts, ClassifierKind::NearestNeighbor, 3);
  ASSERT_EQ(rows.size(), 3u);
  const double chance = 100.0 / ds.unseen_classes.size();
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rows[i].n_per_class, counts[i]);
    EXPECT_TRUE(std::isfinite(rows[i].T));
    EXPECT_GE(rows[i].T, chance);
    EXPECT_EQ(rows[i].T, again[i].T);
  }
  EXPECT_THROW(sweep_sample_count(trained.params.generator, ds, std::vector<std::size_t>{},
                                  ClassifierKind::NearestNeighbor, 3),
               ContractError);
}
