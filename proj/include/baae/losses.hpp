#pragma once

// Loss terms of the BAAE objective and their composition.
//
// Sums over a batch are implemented as batch means. The generator-side
// total is
//   align_visual + align_semantic + adv_visual_gen + adv_semantic_gen
//     + lambda * (cls_real + cls_synth) + mu * reg
// accumulated left to right in that order. Discriminator losses include
// their gradient penalties and are minimized separately.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "baae/graph.hpp"
#include "baae/networks.hpp"
#include "baae/penalty.hpp"
#include "baae/rng.hpp"

namespace baae {

using diff::Graph;
using diff::Var;

struct LossWeights {
  double gamma = 10.0;   // visual gradient penalty
  double eta = 10.0;     // semantic gradient penalty
  double lambda = 0.01;  // classification
  double mu = 0.001;     // weight regularizer

  void validate() const {
    if (!(gamma >= 0 && eta >= 0 && lambda >= 0 && mu >= 0)) {
      throw ContractError("loss weights must be non-negative");
    }
  }

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct ObjectiveOptions {
  /// Penalize (|grad|^2 - 1)^2 instead of (|grad| - 1)^2.
  bool gp_norm_squared = false;
  /// Include the adversarial generator terms in the generator total.
  bool adversarial = true;
  /// Include align_semantic in the generator total.
  bool semantic_alignment = true;
};

enum class LossTerm {
  AlignVisual,
  AlignSemantic,
  AdvVisualGen,
  AdvVisualDisc,
  AdvSemanticGen,
  AdvSemanticDisc,
  ClsReal,
  ClsSynth,
  Reg,
};

inline constexpr std::array<LossTerm, 9> kAllLossTerms{
    LossTerm::AlignVisual,    LossTerm::AlignSemantic,   LossTerm::AdvVisualGen,
    LossTerm::AdvVisualDisc,  LossTerm::AdvSemanticGen,  LossTerm::AdvSemanticDisc,
    LossTerm::ClsReal,        LossTerm::ClsSynth,        LossTerm::Reg};

constexpr std::string_view term_name(LossTerm t) noexcept {
  switch (t) {
    case LossTerm::AlignVisual: return "align_visual";
    case LossTerm::AlignSemantic: return "align_semantic";
    case LossTerm::AdvVisualGen: return "adv_visual_gen";
    case LossTerm::AdvVisualDisc: return "adv_visual_disc";
    case LossTerm::AdvSemanticGen: return "adv_semantic_gen";
    case LossTerm::AdvSemanticDisc: return "adv_semantic_disc";
    case LossTerm::ClsReal: return "cls_real";
    case LossTerm::ClsSynth: return "cls_synth";
    case LossTerm::Reg: return "reg";
  }
  return "?";
}

enum class ParamGroup { Generator, Inference, VisualDisc, SemanticDisc, Classifier };

constexpr std::string_view group_name(ParamGroup g) noexcept {
  switch (g) {
    case ParamGroup::Generator: return "generator";
    case ParamGroup::Inference: return "inference";
    case ParamGroup::VisualDisc: return "visual_disc";
    case ParamGroup::SemanticDisc: return "semantic_disc";
    case ParamGroup::Classifier: return "classifier";
  }
  return "?";
}

/// Parameter groups each term is minimized over.
inline std::vector<ParamGroup> optimized_groups(LossTerm t) {
  switch (t) {
    case LossTerm::AlignVisual: return {ParamGroup::Generator};
    case LossTerm::AlignSemantic: return {ParamGroup::Generator, ParamGroup::Inference};
    case LossTerm::AdvVisualGen: return {ParamGroup::Generator};
    case LossTerm::AdvVisualDisc: return {ParamGroup::VisualDisc};
    case LossTerm::AdvSemanticGen: return {ParamGroup::Generator, ParamGroup::Inference};
    case LossTerm::AdvSemanticDisc: return {ParamGroup::SemanticDisc};
    case LossTerm::ClsReal: return {ParamGroup::Classifier};
    case LossTerm::ClsSynth: return {ParamGroup::Classifier, ParamGroup::Generator};
    case LossTerm::Reg: return {ParamGroup::Generator, ParamGroup::Inference};
  }
  return {};
}

inline std::vector<Var> group_vars(const nn::BaaeVars& v, ParamGroup g) {
  switch (g) {
    case ParamGroup::Generator: return v.generator.vars();
    case ParamGroup::Inference: return v.inference.vars();
    case ParamGroup::VisualDisc: return v.visual_disc.vars();
    case ParamGroup::SemanticDisc: return v.semantic_disc.vars();
    case ParamGroup::Classifier: return v.classifier.vars();
  }
  return {};
}

inline std::vector<Tensor*> group_tensors(BaaeParams& p, ParamGroup g) {
  switch (g) {
    case ParamGroup::Generator: return p.generator.tensors();
    case ParamGroup::Inference: return p.inference.tensors();
    case ParamGroup::VisualDisc: return p.visual_disc.tensors();
    case ParamGroup::SemanticDisc: return p.semantic_disc.tensors();
    case ParamGroup::Classifier: return p.classifier.tensors();
  }
  return {};
}

struct LossBreakdown {
  double align_visual = 0.0;
  double align_semantic = 0.0;
  double adv_visual_gen = 0.0;
  double adv_visual_disc = 0.0;
  double adv_semantic_gen = 0.0;
  double adv_semantic_disc = 0.0;
  double cls_real = 0.0;
  double cls_synth = 0.0;
  double reg = 0.0;
  double generator_total = 0.0;

  double& operator[](LossTerm t) noexcept {
    switch (t) {
      case LossTerm::AlignVisual: return align_visual;
      case LossTerm::AlignSemantic: return align_semantic;
      case LossTerm::AdvVisualGen: return adv_visual_gen;
      case LossTerm::AdvVisualDisc: return adv_visual_disc;
      case LossTerm::AdvSemanticGen: return adv_semantic_gen;
      case LossTerm::AdvSemanticDisc: return adv_semantic_disc;
      case LossTerm::ClsReal: return cls_real;
      case LossTerm::ClsSynth: return cls_synth;
      case LossTerm::Reg: return reg;
    }
    return generator_total;
  }
  double operator[](LossTerm t) const noexcept { return const_cast<LossBreakdown&>(*this)[t]; }

  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

/// One minibatch. `semantics` holds the prototype of each row's class.
struct Batch {
  Tensor features;   // B x p
  Tensor semantics;  // B x q
  Tensor noise;      // B x noise
  std::vector<std::int32_t> labels;
  Tensor prototypes;  // q x M, every class
};

/// Per-row interpolation coefficients for the gradient penalties, B x 1 each.
struct InterpolationDraws {
  Tensor visual;
  Tensor semantic_real;
  Tensor semantic_synth;

  static InterpolationDraws draw(std::size_t batch, Rng& rng) {
    InterpolationDraws d{Tensor::matrix(batch, 1), Tensor::matrix(batch, 1),
                         Tensor::matrix(batch, 1)};
    for (Tensor* t : {&d.visual, &d.semantic_real, &d.semantic_synth}) {
      for (double& v : t->values()) v = rng.uniform();
    }
    return d;
  }
};

namespace loss {

/// Batch mean of squared Euclidean distances between matching rows.
inline Var align(Var target, Var estimate) {
  if (target.shape() != estimate.shape()) {
    throw ShapeError("align: shapes " + target.value().shape_string() + " and " +
                     estimate.value().shape_string() + " differ");
  }
  return diff::mean(diff::row_squared_norms(target - estimate));
}

/// -mean log sigmoid(l): cross-entropy of scoring logits as "real".
inline Var real_log_loss(Var logits) { return -diff::mean(diff::log_sigmoid(logits)); }

/// -mean log(1 - sigmoid(l)): cross-entropy of scoring logits as "fake".
inline Var fake_log_loss(Var logits) { return -diff::mean(diff::log_sigmoid(-logits)); }

/// Batch mean of -log softmax(scores)[label].
inline Var cross_entropy(Var scores, std::span<const std::int32_t> labels) {
  const std::size_t m = scores.cols();
  if (labels.size() != scores.rows()) {
    throw ShapeError("cls_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(scores.rows()) + " rows");
  }
  Tensor onehot = Tensor::matrix(scores.rows(), m);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= m) {
      throw ContractError("cls_loss: label " + std::to_string(labels[i]) + " at row " +
                          std::to_string(i) + " outside [0, " + std::to_string(m) + ")");
    }
    onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  const Var picked = diff::log_softmax_rows(scores) * scores.graph()->constant(std::move(onehot));
  return diff::sum(picked) * (-1.0 / static_cast<double>(labels.size()));
}

/// Sum of squared weight entries (biases excluded) of the given networks.
inline Var weight_penalty(Graph& g, std::span<const nn::MlpVars* const> nets) {
  std::optional<Var> total;
  for (const nn::MlpVars* net : nets) {
    for (const nn::LayerVars& l : net->layers) {
      const Var s = diff::sum_squares(l.weight);
      total = total ? *total + s : s;
    }
  }
  return total ? *total : g.constant(0.0);
}

}  // namespace loss

/// Builds every loss term of one batch on a graph, sharing intermediate
/// values between terms. Terms are built on first request.
class Objective {
 public:
  Objective(Graph& g, const BaaeParams& params, const Batch& batch, const LossWeights& weights,
            const InterpolationDraws& draws, ObjectiveOptions options = {})
      : g_(g), weights_(weights), draws_(draws), options_(options), labels_(batch.labels) {
    weights_.validate();
    vars_ = nn::bind(g, params);
    const BaaeDims& d = params.dims;
    x_ = g.constant(batch.features);
    a_ = g.constant(batch.semantics);
    z_ = g.constant(batch.noise);
    prototypes_ = g.constant(batch.prototypes);
    nn::require_cols("objective", "features", x_, d.visual);
    nn::require_cols("objective", "semantics", a_, d.semantic);
    nn::require_cols("objective", "noise", z_, d.noise);
    nn::require_same_rows("objective", x_, a_);
    nn::require_same_rows("objective", x_, z_);
    if (batch.prototypes.rank() != 2 || batch.prototypes.rows() != d.semantic ||
        batch.prototypes.cols() != d.classes) {
      throw ShapeError("objective: prototypes " + batch.prototypes.shape_string() +
                       " must be " + std::to_string(d.semantic) + "x" + std::to_string(d.classes));
    }
  }

  Objective(const Objective&) = delete;
  Objective& operator=(const Objective&) = delete;

  const nn::BaaeVars& vars() const noexcept { return vars_; }

  Var term(LossTerm t) {
    switch (t) {
      case LossTerm::AlignVisual: return align_visual();
      case LossTerm::AlignSemantic: return align_semantic();
      case LossTerm::AdvVisualGen: return adv_visual_gen();
      case LossTerm::AdvVisualDisc: return adv_visual_disc();
      case LossTerm::AdvSemanticGen: return adv_semantic_gen();
      case LossTerm::AdvSemanticDisc: return adv_semantic_disc();
      case LossTerm::ClsReal: return cls_real();
      case LossTerm::ClsSynth: return cls_synth();
      case LossTerm::Reg: return reg();
    }
    throw ContractError("unknown loss term");
  }

  Var align_visual() {
    return cached(LossTerm::AlignVisual, [&] { return loss::align(x_, x_tilde()); });
  }

  /// Average over inferences from real and synthesized features.
  Var align_semantic() {
    return cached(LossTerm::AlignSemantic, [&] {
      return (loss::align(a_, encoded_real().semantics) + loss::align(a_, encoded_synth().semantics)) *
             0.5;
    });
  }

  Var adv_visual_gen() {
    return cached(LossTerm::AdvVisualGen,
                  [&] { return loss::real_log_loss(nn::visual_logits(vars_.visual_disc, x_tilde())); });
  }

  Var adv_visual_disc() {
    return cached(LossTerm::AdvVisualDisc, [&] {
      const Var fake = diff::detach(x_tilde());
      Var loss = loss::real_log_loss(nn::visual_logits(vars_.visual_disc, x_)) +
                 loss::fake_log_loss(nn::visual_logits(vars_.visual_disc, fake));
      if (weights_.gamma > 0) {
        const Var x_hat = diff::interpolate(x_, fake, g_.constant(draws_.visual));
        const Var gp = diff::gradient_penalty(
            x_hat, [&](Var in) { return nn::apply(vars_.visual_disc, in); }, options_.gp_norm_squared);
        loss = loss + gp * weights_.gamma;
      }
      return loss;
    });
  }

  Var adv_semantic_gen() {
    return cached(LossTerm::AdvSemanticGen, [&] {
      return (loss::real_log_loss(joint_logits(encoded_real())) +
              loss::real_log_loss(joint_logits(encoded_synth()))) *
             0.5;
    });
  }

  Var adv_semantic_disc() {
    return cached(LossTerm::AdvSemanticDisc, [&] {
      const Var real = diff::concat_cols(a_, z_);
      const Var fake_r = diff::detach(joint(encoded_real()));
      const Var fake_s = diff::detach(joint(encoded_synth()));
      const nn::MlpVars& omega = vars_.semantic_disc;
      Var loss = loss::real_log_loss(nn::apply(omega, real)) +
                 (loss::fake_log_loss(nn::apply(omega, fake_r)) +
                  loss::fake_log_loss(nn::apply(omega, fake_s))) *
                     0.5;
      if (weights_.eta > 0) {
        auto score = [&](Var in) { return nn::apply(omega, in); };
        const Var gp_r = diff::gradient_penalty(
            diff::interpolate(real, fake_r, g_.constant(draws_.semantic_real)), score,
            options_.gp_norm_squared);
        const Var gp_s = diff::gradient_penalty(
            diff::interpolate(real, fake_s, g_.constant(draws_.semantic_synth)), score,
            options_.gp_norm_squared);
        loss = loss + (gp_r + gp_s) * (0.5 * weights_.eta);
      }
      return loss;
    });
  }

  /// Real features do not depend on the generator.
  Var cls_real() {
    return cached(LossTerm::ClsReal, [&] {
      return loss::cross_entropy(nn::compatibility(vars_.classifier, x_, prototypes_), labels_);
    });
  }

  Var cls_synth() {
    return cached(LossTerm::ClsSynth, [&] {
      return loss::cross_entropy(nn::compatibility(vars_.classifier, x_tilde(), prototypes_), labels_);
    });
  }

  Var reg() {
    return cached(LossTerm::Reg, [&] {
      std::vector<const nn::MlpVars*> nets{&vars_.generator};
      for (const nn::MlpVars& h : vars_.inference.heads) nets.push_back(&h);
      return loss::weight_penalty(g_, nets);
    });
  }

  /// Generator-side total, minimized over generator, inference and
  /// classifier parameters. Terms with zero weight or disabled by options
  /// are left out of the graph.
  Var generator_total() {
    Var total = align_visual();
    if (options_.semantic_alignment) total = total + align_semantic();
    if (options_.adversarial) total = total + adv_visual_gen() + adv_semantic_gen();
    if (weights_.lambda > 0) total = total + (cls_real() + cls_synth()) * weights_.lambda;
    if (weights_.mu > 0) total = total + reg() * weights_.mu;
    return total;
  }

  /// Sum of both discriminator losses. Their parameter sets are disjoint,
  /// so one gradient of the sum yields both updates.
  Var discriminator_total() { return adv_visual_disc() + adv_semantic_disc(); }

 private:
  template <class Build>
  Var cached(LossTerm t, Build build) {
    auto& slot = terms_[static_cast<std::size_t>(t)];
    if (!slot) slot = build();
    return *slot;
  }

  Var x_tilde() {
    if (!x_tilde_) x_tilde_ = nn::generate(vars_.generator, a_, z_);
    return *x_tilde_;
  }

  const nn::Inferred& encoded_real() {
    if (!enc_real_) enc_real_ = nn::infer(vars_.inference, x_, vars_.dims.semantic);
    return *enc_real_;
  }

  const nn::Inferred& encoded_synth() {
    if (!enc_synth_) enc_synth_ = nn::infer(vars_.inference, x_tilde(), vars_.dims.semantic);
    return *enc_synth_;
  }

  static Var joint(const nn::Inferred& e) { return diff::concat_cols(e.semantics, e.noise); }
  Var joint_logits(const nn::Inferred& e) { return nn::apply(vars_.semantic_disc, joint(e)); }

  Graph& g_;
  LossWeights weights_;
  InterpolationDraws draws_;
  ObjectiveOptions options_;
  std::vector<std::int32_t> labels_;
  nn::BaaeVars vars_;
  Var x_, a_, z_, prototypes_;
  std::optional<Var> x_tilde_;
  std::optional<nn::Inferred> enc_real_;
  std::optional<nn::Inferred> enc_synth_;
  std::array<std::optional<Var>, kAllLossTerms.size()> terms_;
};

/// Every term of the objective on one batch, with penalty interpolation
/// coefficients drawn from `rng`.
inline LossBreakdown total_objective(const BaaeParams& params, const Batch& batch,
                                     const LossWeights& weights, Rng rng,
                                     ObjectiveOptions options = {}) {
  Graph g;
  const auto draws = InterpolationDraws::draw(batch.features.rows(), rng);
  Objective obj(g, params, batch, weights, draws, options);
  LossBreakdown out;
  for (LossTerm t : kAllLossTerms) out[t] = obj.term(t).value().item();
  out.generator_total = obj.generator_total().value().item();
  return out;
}

// ---------------------------------------------------------------------------
// Standalone terms on tensors

inline double align_visual(const Tensor& x, const Tensor& x_tilde) {
  Graph g;
  return loss::align(g.constant(x), g.constant(x_tilde)).value().item();
}

inline double align_semantic(const Tensor& a, const Tensor& a_tilde) {
  Graph g;
  return loss::align(g.constant(a), g.constant(a_tilde)).value().item();
}

struct AdversarialLosses {
  double disc = 0.0;
  double gen = 0.0;
};

/// Visual adversarial losses with x~ = G(a, z).
inline AdversarialLosses adv_visual(const MlpParams& phi, const MlpParams& theta, const Tensor& x,
                                    const Tensor& a, const Tensor& z, double gamma, Rng rng,
                                    bool gp_norm_squared = false) {
  Graph g;
  const auto vphi = nn::bind(g, phi, "visual_disc");
  const auto vtheta = nn::bind(g, theta, "generator");
  const Var vx = g.constant(x);
  const Var x_tilde = nn::generate(vtheta, g.constant(a), g.constant(z));
  const Var fake = diff::detach(x_tilde);
  Var disc = loss::real_log_loss(nn::visual_logits(vphi, vx)) +
             loss::fake_log_loss(nn::visual_logits(vphi, fake));
  if (gamma > 0) {
    const auto draws = InterpolationDraws::draw(x.rows(), rng);
    const Var x_hat = diff::interpolate(vx, fake, g.constant(draws.visual));
    disc = disc + diff::gradient_penalty(
                      x_hat, [&](Var in) { return nn::apply(vphi, in); }, gp_norm_squared) *
                      gamma;
  }
  const Var gen = loss::real_log_loss(nn::visual_logits(vphi, x_tilde));
  return {disc.value().item(), gen.value().item()};
}

/// Semantic adversarial losses; fake pairs are E(x) and E(G(a, z)).
inline AdversarialLosses adv_semantic(const MlpParams& omega, const InferenceParams& upsilon,
                                      const MlpParams& theta, const Tensor& x, const Tensor& a,
                                      const Tensor& z, double eta, Rng rng,
                                      bool gp_norm_squared = false) {
  BaaeParams p;
  p.dims = {x.cols(), a.cols(), z.cols(), 1};
  p.generator = theta;
  p.inference = upsilon;
  p.semantic_disc = omega;
  p.visual_disc = init_params(NetworkSpec{x.cols(), {}, 1}, Rng(0), 0.0);
  p.classifier = init_classifier(x.cols(), a.cols(), Rng(0), 0.0);
  Batch b{x, a, z, std::vector<std::int32_t>(x.rows(), 0), Tensor::matrix(a.cols(), 1)};
  Graph g;
  const auto draws = InterpolationDraws::draw(x.rows(), rng);
  Objective obj(g, p, b, LossWeights{0.0, eta, 0.0, 0.0}, draws, {gp_norm_squared});
  return {obj.adv_semantic_disc().value().item(), obj.adv_semantic_gen().value().item()};
}

/// cls_real + cls_synth for features `x` and synthesized `x_tilde`.
inline double cls_loss(const ClassifierParams& psi, const Tensor& x, const Tensor& x_tilde,
                       std::span<const std::int32_t> labels, const Tensor& prototypes) {
  Graph g;
  nn::ClassifierVars v{g.leaf("classifier.weight", psi.weight), std::nullopt};
  if (psi.bias) v.bias = g.leaf("classifier.bias", *psi.bias);
  const Var protos = g.constant(prototypes);
  const Var real = loss::cross_entropy(nn::compatibility(v, g.constant(x), protos), labels);
  const Var synth = loss::cross_entropy(nn::compatibility(v, g.constant(x_tilde), protos), labels);
  return (real + synth).value().item();
}

inline double regularizer(const MlpParams& theta, const InferenceParams& upsilon) {
  double s = 0.0;
  bool first = true;
  auto add = [&](const MlpParams& m) {
    for (const Layer& l : m.layers) {
      double t = 0.0;
      for (double w : l.weight.values()) t += w * w;
      s = first ? t : s + t;
      first = false;
    }
  };
  add(theta);
  for (const MlpParams& h : upsilon.heads) add(h);
  return s;
}

}  // namespace baae
