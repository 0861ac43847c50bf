#pragma once

// Alternating Adam optimization of the full objective, the per-epoch log,
// and class-level cross-validation of hyperparameter candidates.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "baae/adam.hpp"
#include "baae/data.hpp"
#include "baae/eval.hpp"
#include "baae/io.hpp"
#include "baae/losses.hpp"
#include "baae/networks.hpp"
#include "baae/rng.hpp"

namespace baae {

struct HyperParams {
  LossWeights weights;
  double learning_rate = 1e-4;
  std::size_t batch_size = 48;
  /// Required; 0 fails validation.
  std::size_t epochs = 0;
  std::size_t hidden = 1024;
  std::vector<std::size_t> disc_hidden{64};
  /// 0 selects the semantic dimension.
  std::size_t noise_dim = 0;
  std::size_t disc_steps = 1;
  double init_std = 0.01;
  std::uint64_t seed = 0;
  bool gp_norm_squared = false;
  bool split_inference_heads = false;
  bool classifier_bias = false;
  bool adversarial = true;
  bool semantic_alignment = true;

  void validate() const {
    weights.validate();
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
      throw ContractError("hyperparams: lr must be positive");
    }
    if (batch_size == 0) throw ContractError("hyperparams: batch must be >= 1");
    if (epochs == 0) throw ContractError("hyperparams: epochs must be >= 1");
    if (hidden == 0) throw ContractError("hyperparams: hidden must be >= 1");
    for (std::size_t h : disc_hidden) {
      if (h == 0) throw ContractError("hyperparams: disc_hidden widths must be >= 1");
    }
    if (!(init_std > 0) || !std::isfinite(init_std)) {
      throw ContractError("hyperparams: init_std must be positive");
    }
  }

  Architecture architecture() const {
    Architecture a;
    a.hidden = hidden;
    a.disc_hidden = disc_hidden;
    a.split_inference_heads = split_inference_heads;
    a.classifier_bias = classifier_bias;
    a.init_std = init_std;
    return a;
  }

  ObjectiveOptions objective_options() const { return {gp_norm_squared, adversarial, semantic_alignment}; }

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

inline io::json to_json(const HyperParams& hp) {
  return {{"gamma", hp.weights.gamma},
          {"eta", hp.weights.eta},
          {"lambda", hp.weights.lambda},
          {"mu", hp.weights.mu},
          {"lr", hp.learning_rate},
          {"batch", hp.batch_size},
          {"epochs", hp.epochs},
          {"hidden", hp.hidden},
          {"disc_hidden", hp.disc_hidden},
          {"noise_dim", hp.noise_dim},
          {"disc_steps", hp.disc_steps},
          {"init_std", hp.init_std},
          {"seed", hp.seed},
          {"gp_norm_squared", hp.gp_norm_squared},
          {"split_inference_heads", hp.split_inference_heads},
          {"classifier_bias", hp.classifier_bias},
          {"adversarial", hp.adversarial},
          {"semantic_alignment", hp.semantic_alignment}};
}

/// Overrides the fields present in `j`; unknown keys are rejected.
inline HyperParams apply_json(const io::json& j, HyperParams hp, const std::string& context = "hyperparams") {
  if (!j.is_object()) throw DataError(context, "must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto get = [&]<class T>(T& dst) { dst = io::field<T>(j, key, context); };
    if (key == "gamma") get(hp.weights.gamma);
    else if (key == "eta") get(hp.weights.eta);
    else if (key == "lambda") get(hp.weights.lambda);
    else if (key == "mu") get(hp.weights.mu);
    else if (key == "lr") get(hp.learning_rate);
    else if (key == "batch") get(hp.batch_size);
    else if (key == "epochs") get(hp.epochs);
    else if (key == "hidden") get(hp.hidden);
    else if (key == "disc_hidden") get(hp.disc_hidden);
    else if (key == "noise_dim") get(hp.noise_dim);
    else if (key == "disc_steps") get(hp.disc_steps);
    else if (key == "init_std") get(hp.init_std);
    else if (key == "seed") get(hp.seed);
    else if (key == "gp_norm_squared") get(hp.gp_norm_squared);
    else if (key == "split_inference_heads") get(hp.split_inference_heads);
    else if (key == "classifier_bias") get(hp.classifier_bias);
    else if (key == "adversarial") get(hp.adversarial);
    else if (key == "semantic_alignment") get(hp.semantic_alignment);
    else throw DataError(context + "." + key, "unknown hyperparameter");
    (void)value;
  }
  return hp;
}

// ---------------------------------------------------------------------------
// Log

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown mean;
  double seconds = 0.0;
};

struct TrainLog {
  std::uint64_t seed = 0;
  HyperParams hyperparams;
  std::vector<EpochLog> epochs;
};

/// Equality of everything except wall-clock timings.
inline bool same_losses(const TrainLog& a, const TrainLog& b) {
  if (a.seed != b.seed || !(a.hyperparams == b.hyperparams) || a.epochs.size() != b.epochs.size()) return false;
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    if (a.epochs[i].epoch != b.epochs[i].epoch || !(a.epochs[i].mean == b.epochs[i].mean)) return false;
  }
  return true;
}

inline io::json to_json(const LossBreakdown& b) {
  io::json j;
  for (LossTerm t : kAllLossTerms) j[std::string(term_name(t))] = b[t];
  j["generator_total"] = b.generator_total;
  return j;
}

/// One JSON object per epoch, each carrying the seed and generator name.
/// The hyperparameter snapshot rides on the first line.
inline std::string to_jsonl(const TrainLog& log) {
  std::string out;
  for (std::size_t i = 0; i < log.epochs.size(); ++i) {
    const EpochLog& e = log.epochs[i];
    io::json j{{"epoch", e.epoch},
               {"seconds", e.seconds},
               {"seed", log.seed},
               {"rng", Rng::kName},
               {"losses", to_json(e.mean)}};
    if (i == 0) j["hyperparams"] = to_json(log.hyperparams);
    out += j.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  BaaeParams params;
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

namespace detail {

inline void require_finite(double v, std::string_view term, std::size_t epoch) {
  if (!std::isfinite(v)) {
    throw TrainingError(std::string(term), static_cast<int>(epoch),
                        "non-finite " + std::string(term) + " (" + std::to_string(v) + ") in epoch " +
                            std::to_string(epoch));
  }
}

inline void require_finite(std::span<const Var> grads, std::string_view what, std::size_t epoch) {
  for (const Var& g : grads) {
    if (!g.value().all_finite()) {
      throw TrainingError(std::string(what), static_cast<int>(epoch),
                          "non-finite gradient of " + std::string(what) + " in epoch " + std::to_string(epoch));
    }
  }
}

/// Gradient of `loss` with respect to the given groups, applied by Adam.
inline std::vector<Var> step_groups(Graph& g, Var loss, const nn::BaaeVars& vars, BaaeParams& params,
                                    std::span<const ParamGroup> groups, std::vector<AdamState>& states,
                                    double lr, std::string_view what, std::size_t epoch) {
  std::vector<Var> wrt;
  for (ParamGroup grp : groups) {
    const auto v = group_vars(vars, grp);
    wrt.insert(wrt.end(), v.begin(), v.end());
  }
  const auto grads = g.gradient(loss, wrt);
  require_finite(grads, what, epoch);
  std::size_t k = 0;
  for (ParamGroup grp : groups) {
    auto tensors = group_tensors(params, grp);
    std::vector<Tensor> gt;
    gt.reserve(tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) gt.push_back(grads[k++].value());
    adam_step(tensors, gt, states[static_cast<std::size_t>(grp)], lr);
  }
  return grads;
}

}  // namespace detail

/// Seed streams: parameter init from the master seed (see init_baae),
/// minibatch order from split(kShuffle), generator noise from
/// split(kNoise), penalty interpolation from split(kInterpolation).
inline TrainResult train(const ZslDataset& ds, const HyperParams& hp, const EpochCallback& on_epoch = {}) {
  validate(ds);
  hp.validate();
  if (ds.train_rows.empty()) throw DataError("splits.train_rows", "no training rows");

  const BaaeDims dims{ds.visual_dim(), ds.semantic_dim(), hp.noise_dim ? hp.noise_dim : ds.semantic_dim(),
                      ds.num_classes()};
  TrainResult result;
  result.params = init_baae(dims, hp.architecture(), hp.seed);
  result.log.seed = hp.seed;
  result.log.hyperparams = hp;
  BaaeParams& params = result.params;

  const Rng root(hp.seed);
  Rng shuffle_rng = root.split(streams::kShuffle);
  Rng noise_rng = root.split(streams::kNoise);
  Rng interp_rng = root.split(streams::kInterpolation);
  std::vector<AdamState> states(5);
  const ObjectiveOptions options = hp.objective_options();
  const ParamGroup disc_groups[] = {ParamGroup::VisualDisc, ParamGroup::SemanticDisc};
  const ParamGroup gen_groups[] = {ParamGroup::Generator, ParamGroup::Inference, ParamGroup::Classifier};

  std::vector<std::size_t> order = ds.train_rows;
  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle(order.begin(), order.end(), shuffle_rng);
    LossBreakdown sum;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const std::size_t b = rows.size();
      Batch batch;
      batch.features = ds.features.gather_rows(rows);
      batch.semantics = Tensor::matrix(b, dims.semantic);
      batch.noise = Tensor::matrix(b, dims.noise);
      for (std::size_t i = 0; i < b; ++i) {
        const std::int32_t c = ds.labels[rows[i]];
        batch.labels.push_back(c);
        for (std::size_t k = 0; k < dims.semantic; ++k) {
          batch.semantics(i, k) = ds.prototypes(k, static_cast<std::size_t>(c));
        }
        for (std::size_t k = 0; k < dims.noise; ++k) batch.noise(i, k) = noise_rng.normal();
      }
      batch.prototypes = ds.prototypes;

      LossBreakdown step;
      if (hp.adversarial) {
        for (std::size_t s = 0; s < hp.disc_steps; ++s) {
          Graph g;
          const auto draws = InterpolationDraws::draw(b, interp_rng);
          Objective obj(g, params, batch, hp.weights, draws, options);
          const Var dv = obj.adv_visual_disc();
          const Var dsem = obj.adv_semantic_disc();
          detail::require_finite(dv.value().item(), term_name(LossTerm::AdvVisualDisc), epoch);
          detail::require_finite(dsem.value().item(), term_name(LossTerm::AdvSemanticDisc), epoch);
          step.adv_visual_disc = dv.value().item();
          step.adv_semantic_disc = dsem.value().item();
          detail::step_groups(g, obj.discriminator_total(), obj.vars(), params, disc_groups, states,
                              hp.learning_rate, "discriminator_total", epoch);
        }
      }

      Graph g;
      Objective obj(g, params, batch, hp.weights, InterpolationDraws{}, options);
      const Var total = obj.generator_total();
      for (LossTerm t : kAllLossTerms) {
        if (t == LossTerm::AdvVisualDisc || t == LossTerm::AdvSemanticDisc) continue;
        step[t] = obj.term(t).value().item();
        detail::require_finite(step[t], term_name(t), epoch);
      }
      step.generator_total = total.value().item();
      detail::require_finite(step.generator_total, "generator_total", epoch);
      detail::step_groups(g, total, obj.vars(), params, gen_groups, states, hp.learning_rate,
                          "generator_total", epoch);

      for (LossTerm t : kAllLossTerms) sum[t] += step[t];
      sum.generator_total += step.generator_total;
      ++batches;
    }

    EpochLog entry;
    entry.epoch = epoch;
    for (LossTerm t : kAllLossTerms) entry.mean[t] = sum[t] / static_cast<double>(batches);
    entry.mean.generator_total = sum.generator_total / static_cast<double>(batches);
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.epochs.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CvSplit {
  std::vector<std::int32_t> train_classes;
  std::vector<std::int32_t> validation_classes;
};

/// Seeded 80/20 split of the seen classes; at least one class on each side.
inline CvSplit split_seen_classes(const ZslDataset& ds, std::uint64_t folds_seed) {
  if (ds.seen_classes.size() < 5) {
    throw DataError("splits.seen_classes", "cross-validation needs >= 5 seen classes, got " +
                                               std::to_string(ds.seen_classes.size()));
  }
  std::vector<std::int32_t> classes = ds.seen_classes;
  std::sort(classes.begin(), classes.end());
  Rng rng = Rng(folds_seed).split(streams::kCrossValidation);
  shuffle(classes.begin(), classes.end(), rng);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * classes.size())));
  CvSplit split;
  split.validation_classes.assign(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train_classes.assign(classes.begin() + static_cast<std::ptrdiff_t>(n_val), classes.end());
  std::sort(split.validation_classes.begin(), split.validation_classes.end());
  std::sort(split.train_classes.begin(), split.train_classes.end());
  return split;
}

/// The dataset seen by one validation run: held-out seen classes act as
/// unseen, and every one of their rows becomes a test row.
inline ZslDataset validation_dataset(const ZslDataset& ds, const CvSplit& split) {
  ZslDataset out = ds;
  out.seen_classes = split.train_classes;
  out.unseen_classes = split.validation_classes;
  const std::set<std::int32_t> tr(split.train_classes.begin(), split.train_classes.end());
  const std::set<std::int32_t> val(split.validation_classes.begin(), split.validation_classes.end());
  out.train_rows.clear();
  out.test_rows.clear();
  for (std::size_t r : ds.train_rows) {
    if (tr.count(ds.labels[r])) out.train_rows.push_back(r);
    else if (val.count(ds.labels[r])) out.test_rows.push_back(r);
  }
  for (std::size_t r : ds.test_rows) {
    if (tr.count(ds.labels[r]) || val.count(ds.labels[r])) out.test_rows.push_back(r);
  }
  std::sort(out.test_rows.begin(), out.test_rows.end());
  return out;
}

struct CvResult {
  std::size_t best_index = 0;
  HyperParams best;
  std::vector<double> scores;  // traditional-ZSL T on the validation classes
  CvSplit split;
};

/// Trains every candidate on the training classes and scores T on the
/// validation classes. Ties go to the earliest candidate.
inline CvResult cross_validate(const ZslDataset& ds, std::span<const HyperParams> grid, std::uint64_t folds_seed,
                               EvalOptions eval = {}) {
  if (grid.empty()) throw ContractError("cross_validate: empty hyperparameter grid");
  CvResult out;
  out.split = split_seen_classes(ds, folds_seed);
  const ZslDataset fold = validation_dataset(ds, out.split);
  eval.task = Task::Zsl;
  for (const HyperParams& hp : grid) {
    const TrainResult trained = train(fold, hp);
    out.scores.push_back(evaluate_zsl(trained.params.generator, fold, eval));
  }
  for (std::size_t i = 1; i < out.scores.size(); ++i) {
    if (out.scores[i] > out.scores[out.best_index]) out.best_index = i;
  }
  out.best = grid[out.best_index];
  return out;
}

}  // namespace baae
