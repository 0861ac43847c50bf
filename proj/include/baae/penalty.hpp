#pragma once

#include <span>
#include <string>
#include <vector>

#include "baae/graph.hpp"

namespace baae::diff {

/// Gradient-norm penalty mean_i (n_i - 1)^2 of a scoring function, where
/// n_i is the Euclidean norm of d score_i / d x_hat_i (or its square when
/// `norm_squared` is set). The input gradient is built with `Graph::gradient`,
/// so the returned scalar differentiates through it.
///
/// `score` maps x_hat (B x d) to one score per row (B x 1). Rows must be
/// scored independently, which holds for every per-row network.
template <class ScoreFn>
Var gradient_penalty(Var x_hat, ScoreFn&& score, bool norm_squared = false) {
  Graph& g = *x_hat.graph();
  const Var scores = score(x_hat);
  if (scores.value().rank() != 2 || scores.cols() != 1 || scores.rows() != x_hat.rows()) {
    throw ShapeError("gradient_penalty: score function returned " +
                     scores.value().shape_string() + " for input " +
                     x_hat.value().shape_string() + ", expected one score per row");
  }
  const Var input_grad = g.gradient(sum(scores), {x_hat}, {.require_participation = true})[0];
  const Var sq = row_squared_norms(input_grad);
  const Var norms = norm_squared ? sq : sqrt(sq);
  return mean(square(norms - 1.0));
}

struct PenaltyValueGrad {
  double value = 0.0;
  std::vector<Tensor> param_grads;
};

/// Value of the gradient penalty of `disc` at `x_hat` and its exact
/// derivative with respect to each parameter tensor (double backpropagation).
///
/// `disc(params, x)` receives the parameters bound as graph leaves and must
/// return B x 1 scores.
template <class DiscFn>
PenaltyValueGrad grad_norm_penalty_value_and_grad(DiscFn&& disc, std::span<const Tensor> params,
                                                  const Tensor& x_hat, bool norm_squared = false) {
  Graph g;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    leaves.push_back(g.leaf("param" + std::to_string(i), params[i]));
  }
  const Var x = g.leaf("x_hat", x_hat);
  const std::span<const Var> bound(leaves);
  const Var penalty =
      gradient_penalty(x, [&](Var input) { return disc(bound, input); }, norm_squared);

  PenaltyValueGrad out;
  out.value = penalty.value().item();
  for (Var grad : g.gradient(penalty, bound)) out.param_grads.push_back(grad.value());
  return out;
}

}  // namespace baae::diff
