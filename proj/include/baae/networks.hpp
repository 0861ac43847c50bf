#pragma once

// Parameter sets and apply-functions of the five BAAE networks:
//   generator        [a; z] -> x~            (two layers, ReLU hidden, ReLU output)
//   inference        x -> [a~; z~]           (two layers, ReLU hidden, identity output)
//   visual disc      x -> score              (hidden width 64, logistic score)
//   semantic disc    [a; z] -> score
//   classifier       scores x^T W a_j over class prototypes
//
// Weights are stored input-major (in x out) so a batch maps as X W + b.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "baae/error.hpp"
#include "baae/graph.hpp"
#include "baae/rng.hpp"
#include "baae/tensor.hpp"

namespace baae {

enum class Activation { Relu, Identity };

constexpr std::string_view activation_name(Activation a) noexcept {
  return a == Activation::Relu ? "relu" : "identity";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "identity") return Activation::Identity;
  throw DataError("activation", "unknown activation '" + std::string(s) + "'");
}

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 0;
  Activation hidden_activation = Activation::Relu;
  Activation output_activation = Activation::Identity;

  void validate() const {
    if (input_dim == 0 || output_dim == 0) {
      throw ContractError("network spec: input and output dims must be positive");
    }
    for (std::size_t h : hidden) {
      if (h == 0) throw ContractError("network spec: hidden widths must be positive");
    }
  }
};

struct Layer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
  Activation activation = Activation::Identity;
};

struct MlpParams {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }

  /// Weight and bias tensors in layer order (w0, b0, w1, b1, ...).
  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out;
    for (Layer& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<const Tensor*> tensors() const {
    std::vector<const Tensor*> out;
    for (const Layer& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  void validate() const {
    if (layers.empty()) throw ContractError("mlp: no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const Layer& l = layers[k];
      if (l.weight.rank() != 2 || l.bias.rank() != 2 || l.bias.rows() != 1 ||
          l.bias.cols() != l.weight.cols()) {
        throw ShapeError("mlp layer " + std::to_string(k) + ": weight " + l.weight.shape_string() +
                         " and bias " + l.bias.shape_string() + " do not agree");
      }
      if (k > 0 && layers[k - 1].weight.cols() != l.weight.rows()) {
        throw ShapeError("mlp layer " + std::to_string(k) + ": input dim " +
                         std::to_string(l.weight.rows()) + " does not chain with previous output " +
                         std::to_string(layers[k - 1].weight.cols()));
      }
    }
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
      if (!(a.layers[k].weight == b.layers[k].weight) || !(a.layers[k].bias == b.layers[k].bias) ||
          a.layers[k].activation != b.layers[k].activation)
        return false;
    }
    return true;
  }
};

/// Linear map F(a) = W a from class semantics into the visual space.
struct ClassifierParams {
  Tensor weight;              // p x q
  std::optional<Tensor> bias;  // p x 1, absent by default

  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out{&weight};
    if (bias) out.push_back(&*bias);
    return out;
  }
  std::vector<const Tensor*> tensors() const {
    std::vector<const Tensor*> out{&weight};
    if (bias) out.push_back(&*bias);
    return out;
  }

  friend bool operator==(const ClassifierParams& a, const ClassifierParams& b) {
    if (!(a.weight == b.weight) || a.bias.has_value() != b.bias.has_value()) return false;
    return !a.bias || *a.bias == *b.bias;
  }
};

/// Inference network. One head emits [a~; z~] from a shared trunk; with
/// separate heads, head 0 emits a~ and head 1 emits z~ and they share no
/// weights.
struct InferenceParams {
  std::vector<MlpParams> heads;

  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out;
    for (MlpParams& h : heads) {
      for (Tensor* t : h.tensors()) out.push_back(t);
    }
    return out;
  }
  std::vector<const Tensor*> tensors() const {
    std::vector<const Tensor*> out;
    for (const MlpParams& h : heads) {
      for (const Tensor* t : h.tensors()) out.push_back(t);
    }
    return out;
  }

  friend bool operator==(const InferenceParams&, const InferenceParams&) = default;
};

struct BaaeDims {
  std::size_t visual = 0;    // p
  std::size_t semantic = 0;  // q
  std::size_t noise = 0;
  std::size_t classes = 0;   // M

  friend bool operator==(const BaaeDims&, const BaaeDims&) = default;
};

struct Architecture {
  std::size_t hidden = 1024;                 // generator and inference hidden width
  std::vector<std::size_t> disc_hidden{64};  // discriminator hidden widths
  bool split_inference_heads = false;
  bool classifier_bias = false;
  double init_std = 0.01;
};

struct BaaeParams {
  BaaeDims dims;
  MlpParams generator;       // theta
  InferenceParams inference;  // upsilon
  MlpParams visual_disc;     // phi
  MlpParams semantic_disc;   // omega
  ClassifierParams classifier;  // psi

  friend bool operator==(const BaaeParams&, const BaaeParams&) = default;
};

// ---------------------------------------------------------------------------
// Initialization

/// Weights i.i.d. Normal(0, stddev^2) in layer order, row-major; biases zero.
inline MlpParams init_params(const NetworkSpec& spec, Rng rng, double stddev = 0.01) {
  spec.validate();
  MlpParams p;
  std::size_t in = spec.input_dim;
  for (std::size_t k = 0; k <= spec.hidden.size(); ++k) {
    const bool last = k == spec.hidden.size();
    const std::size_t out = last ? spec.output_dim : spec.hidden[k];
    Layer l;
    l.weight = Tensor::matrix(in, out);
    for (double& w : l.weight.values()) w = rng.normal(0.0, stddev);
    l.bias = Tensor::matrix(1, out);
    l.activation = last ? spec.output_activation : spec.hidden_activation;
    p.layers.push_back(std::move(l));
    in = out;
  }
  return p;
}

inline MlpParams init_params(const NetworkSpec& spec, std::uint64_t seed, double stddev = 0.01) {
  return init_params(spec, Rng(seed), stddev);
}

inline ClassifierParams init_classifier(std::size_t visual, std::size_t semantic, Rng rng,
                                        double stddev = 0.01, bool with_bias = false) {
  if (visual == 0 || semantic == 0) throw ContractError("classifier: dims must be positive");
  ClassifierParams c;
  c.weight = Tensor::matrix(visual, semantic);
  for (double& w : c.weight.values()) w = rng.normal(0.0, stddev);
  if (with_bias) c.bias = Tensor::matrix(visual, 1);
  return c;
}

inline NetworkSpec generator_spec(const BaaeDims& d, const Architecture& arch) {
  return {d.semantic + d.noise, {arch.hidden}, d.visual, Activation::Relu, Activation::Relu};
}

inline NetworkSpec visual_disc_spec(const BaaeDims& d, const Architecture& arch) {
  return {d.visual, arch.disc_hidden, 1, Activation::Relu, Activation::Identity};
}

inline NetworkSpec semantic_disc_spec(const BaaeDims& d, const Architecture& arch) {
  return {d.semantic + d.noise, arch.disc_hidden, 1, Activation::Relu, Activation::Identity};
}

/// Fresh parameters for all five networks. Each network draws from its own
/// sub-stream of `seed`.
inline BaaeParams init_baae(const BaaeDims& dims, const Architecture& arch, std::uint64_t seed) {
  if (dims.visual == 0 || dims.semantic == 0 || dims.noise == 0 || dims.classes == 0) {
    throw ContractError("baae: all dims must be positive");
  }
  const Rng root(seed);
  BaaeParams p;
  p.dims = dims;
  p.generator = init_params(generator_spec(dims, arch), root.split(streams::kInitGenerator),
                            arch.init_std);
  const Rng inf = root.split(streams::kInitInference);
  if (arch.split_inference_heads) {
    p.inference.heads.push_back(init_params(
        NetworkSpec{dims.visual, {arch.hidden}, dims.semantic, Activation::Relu, Activation::Identity},
        inf.split(0), arch.init_std));
    p.inference.heads.push_back(init_params(
        NetworkSpec{dims.visual, {arch.hidden}, dims.noise, Activation::Relu, Activation::Identity},
        inf.split(1), arch.init_std));
  } else {
    p.inference.heads.push_back(
        init_params(NetworkSpec{dims.visual, {arch.hidden}, dims.semantic + dims.noise,
                                Activation::Relu, Activation::Identity},
                    inf, arch.init_std));
  }
  p.visual_disc = init_params(visual_disc_spec(dims, arch), root.split(streams::kInitVisualDisc),
                              arch.init_std);
  p.semantic_disc = init_params(semantic_disc_spec(dims, arch),
                                root.split(streams::kInitSemanticDisc), arch.init_std);
  p.classifier = init_classifier(dims.visual, dims.semantic, root.split(streams::kInitClassifier),
                                 arch.init_std, arch.classifier_bias);
  return p;
}

// ---------------------------------------------------------------------------
// Graph-level apply functions

namespace nn {

using diff::Graph;
using diff::Var;

struct LayerVars {
  Var weight;
  Var bias;
  Activation activation = Activation::Identity;
};

struct MlpVars {
  std::vector<LayerVars> layers;

  std::size_t input_dim() const { return layers.front().weight.rows(); }
  std::size_t output_dim() const { return layers.back().weight.cols(); }

  std::vector<Var> vars() const {
    std::vector<Var> out;
    for (const LayerVars& l : layers) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
    return out;
  }
};

inline MlpVars bind(Graph& g, const MlpParams& p, std::string_view prefix) {
  p.validate();
  MlpVars v;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const std::string base = std::string(prefix) + "." + std::to_string(k);
    v.layers.push_back({g.leaf(base + ".weight", p.layers[k].weight),
                        g.leaf(base + ".bias", p.layers[k].bias), p.layers[k].activation});
  }
  return v;
}

inline Var apply(const MlpVars& net, Var x) {
  Var h = x;
  for (const LayerVars& l : net.layers) {
    h = diff::add_row_vector(diff::matmul(h, l.weight), l.bias);
    if (l.activation == Activation::Relu) h = diff::relu(h);
  }
  return h;
}

inline void require_cols(std::string_view op, std::string_view what, Var v, std::size_t expected) {
  if (v.value().rank() != 2 || v.cols() != expected) {
    throw ShapeError(std::string(op) + ": " + std::string(what) + " has shape " +
                     v.value().shape_string() + ", expected " + std::to_string(expected) +
                     " columns");
  }
}

inline void require_same_rows(std::string_view op, Var a, Var b) {
  if (a.rows() != b.rows()) {
    throw ShapeError(std::string(op) + ": batch sizes differ (" + std::to_string(a.rows()) +
                     " vs " + std::to_string(b.rows()) + ")");
  }
}

struct InferenceVars {
  std::vector<MlpVars> heads;

  std::vector<Var> vars() const {
    std::vector<Var> out;
    for (const MlpVars& h : heads) {
      for (Var v : h.vars()) out.push_back(v);
    }
    return out;
  }
};

struct ClassifierVars {
  Var weight;
  std::optional<Var> bias;

  std::vector<Var> vars() const {
    std::vector<Var> out{weight};
    if (bias) out.push_back(*bias);
    return out;
  }
};

struct BaaeVars {
  BaaeDims dims;
  MlpVars generator;
  InferenceVars inference;
  MlpVars visual_disc;
  MlpVars semantic_disc;
  ClassifierVars classifier;
};

inline BaaeVars bind(Graph& g, const BaaeParams& p) {
  BaaeVars v;
  v.dims = p.dims;
  v.generator = nn::bind(g, p.generator, "generator");
  for (std::size_t h = 0; h < p.inference.heads.size(); ++h) {
    v.inference.heads.push_back(nn::bind(g, p.inference.heads[h], "inference." + std::to_string(h)));
  }
  v.visual_disc = nn::bind(g, p.visual_disc, "visual_disc");
  v.semantic_disc = nn::bind(g, p.semantic_disc, "semantic_disc");
  v.classifier.weight = g.leaf("classifier.weight", p.classifier.weight);
  if (p.classifier.bias) v.classifier.bias = g.leaf("classifier.bias", *p.classifier.bias);
  return v;
}

/// x~ = G([a; z]).
inline Var generate(const MlpVars& theta, Var a, Var z) {
  const std::size_t in = theta.input_dim();
  if (a.value().rank() != 2 || z.value().rank() != 2 || a.cols() + z.cols() != in) {
    throw ShapeError("generate: a " + a.value().shape_string() + " and z " +
                     z.value().shape_string() + " do not concatenate to " + std::to_string(in) +
                     " columns");
  }
  require_same_rows("generate", a, z);
  return apply(theta, diff::concat_cols(a, z));
}

struct Inferred {
  Var semantics;  // a~
  Var noise;      // z~
};

/// [a~; z~] = E(x); `semantic_dim` fixes where the split falls.
inline Inferred infer(const InferenceVars& upsilon, Var x, std::size_t semantic_dim) {
  if (upsilon.heads.empty()) throw ContractError("infer: no inference heads");
  require_cols("infer", "x", x, upsilon.heads.front().input_dim());
  if (upsilon.heads.size() == 1) {
    const Var out = apply(upsilon.heads.front(), x);
    const std::size_t total = out.cols();
    if (semantic_dim >= total) throw ShapeError("infer: output too narrow to split");
    return {diff::slice_cols(out, 0, semantic_dim),
            diff::slice_cols(out, semantic_dim, total - semantic_dim)};
  }
  return {apply(upsilon.heads[0], x), apply(upsilon.heads[1], x)};
}

/// Pre-logistic score of the visual discriminator, B x 1.
inline Var visual_logits(const MlpVars& phi, Var x) {
  require_cols("discriminate_visual", "x", x, phi.input_dim());
  return apply(phi, x);
}

inline Var discriminate_visual(const MlpVars& phi, Var x) { return diff::sigmoid(visual_logits(phi, x)); }

/// Pre-logistic score of the semantic discriminator on [a; z], B x 1.
inline Var semantic_logits(const MlpVars& omega, Var a, Var z) {
  require_same_rows("discriminate_semantic", a, z);
  if (a.cols() + z.cols() != omega.input_dim()) {
    throw ShapeError("discriminate_semantic: a " + a.value().shape_string() + " and z " +
                     z.value().shape_string() + " do not concatenate to " +
                     std::to_string(omega.input_dim()) + " columns");
  }
  return apply(omega, diff::concat_cols(a, z));
}

inline Var discriminate_semantic(const MlpVars& omega, Var a, Var z) {
  return diff::sigmoid(semantic_logits(omega, a, z));
}

/// Scores x_i^T F(a_j) for every row i and prototype column j: X (W A).
inline Var compatibility(const ClassifierVars& psi, Var x, Var prototypes) {
  const Tensor& w = psi.weight.value();
  require_cols("compatibility", "x", x, w.rows());
  if (prototypes.value().rank() != 2 || prototypes.rows() != w.cols()) {
    throw ShapeError("compatibility: prototypes " + prototypes.value().shape_string() +
                     " must have " + std::to_string(w.cols()) + " rows");
  }
  Var projected = diff::matmul(psi.weight, prototypes);  // p x M
  if (psi.bias) {
    projected = projected + diff::expand_cols(*psi.bias, projected);
  }
  return diff::matmul(x, projected);
}

}  // namespace nn

// ---------------------------------------------------------------------------
// Tensor-level apply functions

inline Tensor generate(const MlpParams& theta, const Tensor& a, const Tensor& z) {
  diff::Graph g;
  const auto t = nn::bind(g, theta, "generator");
  return nn::generate(t, g.constant(a), g.constant(z)).value();
}

struct InferredTensors {
  Tensor semantics;
  Tensor noise;
};

inline InferredTensors infer(const InferenceParams& upsilon, const Tensor& x,
                             std::size_t semantic_dim) {
  diff::Graph g;
  nn::InferenceVars v;
  for (std::size_t h = 0; h < upsilon.heads.size(); ++h) {
    v.heads.push_back(nn::bind(g, upsilon.heads[h], "inference." + std::to_string(h)));
  }
  const auto out = nn::infer(v, g.constant(x), semantic_dim);
  return {out.semantics.value(), out.noise.value()};
}

inline Tensor discriminate_visual(const MlpParams& phi, const Tensor& x) {
  diff::Graph g;
  const auto v = nn::bind(g, phi, "visual_disc");
  return nn::discriminate_visual(v, g.constant(x)).value();
}

inline Tensor discriminate_semantic(const MlpParams& omega, const Tensor& a, const Tensor& z) {
  diff::Graph g;
  const auto v = nn::bind(g, omega, "semantic_disc");
  return nn::discriminate_semantic(v, g.constant(a), g.constant(z)).value();
}

inline Tensor compatibility(const ClassifierParams& psi, const Tensor& x, const Tensor& prototypes) {
  diff::Graph g;
  nn::ClassifierVars v{g.leaf("classifier.weight", psi.weight), std::nullopt};
  if (psi.bias) v.bias = g.leaf("classifier.bias", *psi.bias);
  return nn::compatibility(v, g.constant(x), g.constant(prototypes)).value();
}

}  // namespace baae
