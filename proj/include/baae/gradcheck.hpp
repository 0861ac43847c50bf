#pragma once

// Central finite-difference check of every loss term's analytic gradient
// on small random networks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "baae/losses.hpp"
#include "baae/networks.hpp"
#include "baae/rng.hpp"

namespace baae {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double step = 1e-6;
  double tolerance = 1e-5;
  std::size_t batch = 3;
  BaaeDims dims{4, 3, 2, 4};
  std::size_t hidden = 5;
  std::size_t disc_hidden = 4;
  double init_std = 0.5;
  bool gp_norm_squared = false;
  bool split_inference_heads = false;
  /// Test hook: added to the first analytic gradient entry of every term.
  double fault = 0.0;
};

struct GroupError {
  ParamGroup group;
  double rel_error = 0.0;
};

struct TermCheck {
  LossTerm term;
  std::vector<GroupError> groups;
  double max_rel_error = 0.0;
  bool pass = false;
};

/// ||a - n|| / max(||a|| + ||n||, tiny), taken over all entries at once.
inline double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-30);
}

struct GradcheckProblem {
  BaaeParams params;
  Batch batch;
  InterpolationDraws draws;
  LossWeights weights;
  ObjectiveOptions options;
};

inline GradcheckProblem make_gradcheck_problem(const GradcheckOptions& opt) {
  GradcheckProblem pr;
  Architecture arch;
  arch.hidden = opt.hidden;
  arch.disc_hidden = {opt.disc_hidden};
  arch.split_inference_heads = opt.split_inference_heads;
  arch.init_std = opt.init_std;
  pr.params = init_baae(opt.dims, arch, opt.seed);
  // Non-zero biases so their gradients are exercised away from zero.
  Rng rng = Rng(opt.seed).split(1000);
  for (ParamGroup grp : {ParamGroup::Generator, ParamGroup::Inference, ParamGroup::VisualDisc,
                         ParamGroup::SemanticDisc}) {
    for (Tensor* t : group_tensors(pr.params, grp)) {
      if (t->rows() == 1) {
        for (double& v : t->values()) v = rng.normal(0.0, 0.1);
      }
    }
  }
  const std::size_t b = opt.batch;
  const BaaeDims& d = opt.dims;
  pr.batch.features = Tensor::matrix(b, d.visual);
  for (double& v : pr.batch.features.values()) v = rng.uniform();
  pr.batch.prototypes = Tensor::matrix(d.semantic, d.classes);
  for (double& v : pr.batch.prototypes.values()) v = rng.uniform();
  pr.batch.semantics = Tensor::matrix(b, d.semantic);
  pr.batch.noise = Tensor::matrix(b, d.noise);
  for (std::size_t i = 0; i < b; ++i) {
    const auto c = static_cast<std::int32_t>(rng.below(d.classes));
    pr.batch.labels.push_back(c);
    for (std::size_t k = 0; k < d.semantic; ++k) pr.batch.semantics(i, k) = pr.batch.prototypes(k, c);
    for (std::size_t k = 0; k < d.noise; ++k) pr.batch.noise(i, k) = rng.normal();
  }
  pr.draws = InterpolationDraws::draw(b, rng);
  pr.options.gp_norm_squared = opt.gp_norm_squared;
  return pr;
}

inline double term_value(const GradcheckProblem& pr, const BaaeParams& params, LossTerm t) {
  Graph g;
  Objective obj(g, params, pr.batch, pr.weights, pr.draws, pr.options);
  return obj.term(t).value().item();
}

/// Checks each term against the parameter groups it is minimized over.
inline std::vector<TermCheck> gradcheck(const GradcheckOptions& opt = {}) {
  const GradcheckProblem pr = make_gradcheck_problem(opt);
  std::vector<TermCheck> out;
  for (LossTerm t : kAllLossTerms) {
    TermCheck check{t, {}, 0.0, true};
    Graph g;
    Objective obj(g, pr.params, pr.batch, pr.weights, pr.draws, pr.options);
    const Var loss = obj.term(t);
    bool first = true;
    for (ParamGroup grp : optimized_groups(t)) {
      const auto vars = group_vars(obj.vars(), grp);
      const auto grads = g.gradient(loss, vars);
      std::vector<double> analytic, numeric;
      BaaeParams probe = pr.params;
      const auto tensors = group_tensors(probe, grp);
      for (std::size_t k = 0; k < tensors.size(); ++k) {
        const auto gv = grads[k].value().values();
        analytic.insert(analytic.end(), gv.begin(), gv.end());
        for (double& w : tensors[k]->values()) {
          const double saved = w;
          w = saved + opt.step;
          const double up = term_value(pr, probe, t);
          w = saved - opt.step;
          const double down = term_value(pr, probe, t);
          w = saved;
          numeric.push_back((up - down) / (2.0 * opt.step));
        }
      }
      if (first && !analytic.empty()) {
        analytic[0] += opt.fault;
        first = false;
      }
      const double err = relative_error(analytic, numeric);
      check.groups.push_back({grp, err});
      check.max_rel_error = std::max(check.max_rel_error, err);
    }
    check.pass = check.max_rel_error < opt.tolerance;
    out.push_back(check);
  }
  return out;
}

}  // namespace baae
