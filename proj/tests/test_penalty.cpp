#include <gtest/gtest.h>

#include "baae/penalty.hpp"
#include "test_util.hpp"

using namespace baae;
using namespace baae::diff;

namespace {

Var linear_disc(std::span<const Var> p, Var x) { return matmul(x, transpose(p[0])); }

}  // namespace

TEST(Penalty, UnitNormLinearDiscIsZero) {
  const Tensor w = Tensor::matrix({{0.6, 0.8}});
  const Tensor x = Tensor::matrix({{1.0, -2.0}, {0.3, 0.4}});
  const auto r = grad_norm_penalty_value_and_grad(linear_disc, std::span(&w, 1), x);
  EXPECT_NEAR(r.value, 0.0, 1e-15);
}

TEST(Penalty, LinearDiscNormFive) {
  const Tensor w = Tensor::matrix({{3.0, 4.0}});
  const Tensor x = Tensor::matrix({{1.0, 1.0}, {-1.0, 2.0}, {0.0, 0.5}});
  const auto r = grad_norm_penalty_value_and_grad(linear_disc, std::span(&w, 1), x);
  EXPECT_NEAR(r.value, 16.0, 1e-12);
  EXPECT_NEAR(r.param_grads[0][0], 4.8, 1e-12);
  EXPECT_NEAR(r.param_grads[0][1], 6.4, 1e-12);
}

TEST(Penalty, SquaredNormReading) {
  // (|w|^2 - 1)^2 = 24^2, derivative 2 * 24 * 2w.
  const Tensor w = Tensor::matrix({{3.0, 4.0}});
  const Tensor x = Tensor::matrix({{1.0, 1.0}});
  const auto r = grad_norm_penalty_value_and_grad(linear_disc, std::span(&w, 1), x, true);
  EXPECT_NEAR(r.value, 576.0, 1e-9);
  EXPECT_NEAR(r.param_grads[0][0], 288.0, 1e-9);
  EXPECT_NEAR(r.param_grads[0][1], 384.0, 1e-9);
}

TEST(Penalty, HiddenLayerDiscMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    std::vector<Tensor> params{testutil::random_matrix(3, 4, rng), testutil::random_matrix(1, 4, rng),
                               testutil::random_matrix(4, 1, rng), testutil::random_matrix(1, 1, rng)};
    const Tensor x = testutil::random_matrix(6, 3, rng);
    auto disc = [](std::span<const Var> p, Var in) {
      const Var h = relu(add_row_vector(matmul(in, p[0]), p[1]));
      return add_row_vector(matmul(h, p[2]), p[3]);
    };
    const auto r = grad_norm_penalty_value_and_grad(disc, params, x);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto f = [&](const Tensor& t) {
        std::vector<Tensor> probe = params;
        probe[k] = t;
        return grad_norm_penalty_value_and_grad(disc, probe, x).value;
      };
      const Tensor numeric = testutil::numeric_gradient(f, params[k], 1e-5);
      EXPECT_LT(testutil::max_rel_error(r.param_grads[k], numeric, 1e-4), 1e-6)
          << "seed " << seed << " tensor " << k;
    }
  }
}

TEST(Penalty, NonDifferentiableInputPathIsRejected) {
  Graph g;
  const Var x = g.leaf("x", Tensor::matrix({{1.0, 2.0}}));
  const Var w = g.leaf("w", Tensor::matrix({{1.0}, {1.0}}));
  EXPECT_THROW(gradient_penalty(x, [&](Var in) { return matmul(detach(in), w); }), ContractError);
}

TEST(Penalty, ScoreShapeChecked) {
  Graph g;
  const Var x = g.leaf("x", Tensor::matrix({{1.0, 2.0}}));
  EXPECT_THROW(gradient_penalty(x, [&](Var in) { return in; }), ShapeError);
}
