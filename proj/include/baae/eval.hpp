#pragma once

// Pseudo-feature synthesis and zero-shot evaluation: nearest-neighbour and
// softmax classifiers, per-class top-1 accuracy, and the generalized
// seen/unseen harmonic mean.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "baae/adam.hpp"
#include "baae/data.hpp"
#include "baae/graph.hpp"
#include "baae/io.hpp"
#include "baae/losses.hpp"
#include "baae/networks.hpp"
#include "baae/rng.hpp"

namespace baae {

/// Labelled feature rows used as classifier exemplars or training data.
struct ExemplarSet {
  Tensor features;  // n x p
  std::vector<std::int32_t> labels;

  friend bool operator==(const ExemplarSet&, const ExemplarSet&) = default;
};

struct SynthesizedSet : ExemplarSet {
  std::uint64_t seed = 0;
};

/// For each class c in `classes`, n_per_class rows G(a_c, z) with fresh
/// standard normal z. Class c draws its noise from its own sub-stream of
/// `seed`, so a class's first k rows do not depend on n_per_class or on
/// the other classes requested.
inline SynthesizedSet synthesize_features(const MlpParams& theta, const Tensor& prototypes,
                                          std::span<const std::int32_t> classes,
                                          std::size_t n_per_class, std::uint64_t seed) {
  if (classes.empty()) throw ContractError("synthesize_features: no classes requested");
  if (n_per_class == 0) throw ContractError("synthesize_features: n_per_class must be >= 1");
  const std::size_t q = prototypes.rows();
  if (theta.input_dim() <= q) {
    throw ShapeError("synthesize_features: generator input " + std::to_string(theta.input_dim()) +
                     " leaves no room for noise after " + std::to_string(q) + " semantic dims");
  }
  const std::size_t noise_dim = theta.input_dim() - q;
  const Rng root = Rng(seed).split(streams::kSynthesis);

  SynthesizedSet out;
  out.seed = seed;
  out.features = Tensor::matrix(classes.size() * n_per_class, theta.output_dim());
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    const std::int32_t c = classes[ci];
    if (c < 0 || static_cast<std::size_t>(c) >= prototypes.cols()) {
      throw DataError("classes", "unknown class index " + std::to_string(c));
    }
    Rng rng = root.split(static_cast<std::uint64_t>(c));
    Tensor a = Tensor::matrix(n_per_class, q);
    Tensor z = Tensor::matrix(n_per_class, noise_dim);
    for (std::size_t i = 0; i < n_per_class; ++i) {
      for (std::size_t k = 0; k < q; ++k) a(i, k) = prototypes(k, static_cast<std::size_t>(c));
      for (std::size_t k = 0; k < noise_dim; ++k) z(i, k) = rng.normal();
    }
    const Tensor x = generate(theta, a, z);
    std::copy(x.values().begin(), x.values().end(),
              out.features.values().begin() + static_cast<std::ptrdiff_t>(ci * n_per_class * x.cols()));
    out.labels.insert(out.labels.end(), n_per_class, c);
  }
  return out;
}

/// Label of the Euclidean-nearest exemplar for every test row. Ties go to
/// the lower class index, then the lower exemplar row.
inline std::vector<std::int32_t> classify_nn(const Tensor& test, const ExemplarSet& exemplars) {
  if (exemplars.labels.empty()) throw ContractError("classify_nn: empty exemplar set");
  if (exemplars.features.cols() != test.cols()) {
    throw ShapeError("classify_nn: test rows have " + std::to_string(test.cols()) +
                     " dims, exemplars " + std::to_string(exemplars.features.cols()));
  }
  const std::size_t d = test.cols();
  std::vector<std::int32_t> pred(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) {
    const double* x = test.data() + i * d;
    double best = std::numeric_limits<double>::infinity();
    std::int32_t best_label = exemplars.labels[0];
    for (std::size_t e = 0; e < exemplars.labels.size(); ++e) {
      const double* y = exemplars.features.data() + e * d;
      double dist = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x[k] - y[k];
        dist += diff * diff;
      }
      // Rows are visited in order, so an equal distance only wins with a
      // strictly lower class index.
      if (dist < best || (dist == best && exemplars.labels[e] < best_label)) {
        best = dist;
        best_label = exemplars.labels[e];
      }
    }
    pred[i] = best_label;
  }
  return pred;
}

/// One mean row per class, ordered by class index.
inline ExemplarSet class_means(const ExemplarSet& set) {
  std::map<std::int32_t, std::pair<std::vector<double>, std::size_t>> acc;
  const std::size_t d = set.features.cols();
  for (std::size_t r = 0; r < set.labels.size(); ++r) {
    auto& [sum, count] = acc[set.labels[r]];
    sum.resize(d, 0.0);
    const auto row = set.features.row(r);
    for (std::size_t k = 0; k < d; ++k) sum[k] += row[k];
    ++count;
  }
  ExemplarSet out;
  out.features = Tensor::matrix(acc.size(), d);
  std::size_t r = 0;
  for (const auto& [label, entry] : acc) {
    for (std::size_t k = 0; k < d; ++k) out.features(r, k) = entry.first[k] / static_cast<double>(entry.second);
    out.labels.push_back(label);
    ++r;
  }
  return out;
}

struct SoftmaxOptions {
  double learning_rate = 0.001;
  std::size_t epochs = 200;
  double init_std = 0.01;
  std::uint64_t seed = 0;
};

/// Trains a linear softmax classifier (full batch, Adam) on `train` and
/// returns the argmax class of every test row. When `candidates` is given,
/// each of them must have at least one training row.
inline std::vector<std::int32_t> classify_softmax(const ExemplarSet& train, const Tensor& test,
                                                  const SoftmaxOptions& opt = {},
                                                  std::span<const std::int32_t> candidates = {}) {
  if (train.labels.empty()) throw ContractError("classify_softmax: no training rows");
  if (train.features.cols() != test.cols()) {
    throw ShapeError("classify_softmax: train rows have " + std::to_string(train.features.cols()) +
                     " dims, test rows " + std::to_string(test.cols()));
  }
  std::vector<std::int32_t> classes(train.labels.begin(), train.labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  for (std::int32_t c : candidates) {
    if (!std::binary_search(classes.begin(), classes.end(), c)) {
      throw DataError("labels", "candidate class " + std::to_string(c) + " has no training rows");
    }
  }
  if (classes.size() == 1) return std::vector<std::int32_t>(test.rows(), classes[0]);

  std::vector<std::int32_t> local(train.labels.size());
  for (std::size_t i = 0; i < local.size(); ++i) {
    local[i] = static_cast<std::int32_t>(
        std::lower_bound(classes.begin(), classes.end(), train.labels[i]) - classes.begin());
  }
  const std::size_t d = test.cols();
  const std::size_t k = classes.size();
  Rng rng = Rng(opt.seed).split(streams::kSoftmax);
  Tensor weight = Tensor::matrix(d, k);
  for (double& w : weight.values()) w = rng.normal(0.0, opt.init_std);
  Tensor bias = Tensor::matrix(1, k);
  AdamState state;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    Graph g;
    const Var w = g.leaf("weight", weight);
    const Var b = g.leaf("bias", bias);
    const Var scores = diff::add_row_vector(diff::matmul(g.constant(train.features), w), b);
    const Var loss = loss::cross_entropy(scores, local);
    const auto grads = g.gradient(loss, {w, b});
    const std::vector<Tensor> gt{grads[0].value(), grads[1].value()};
    Tensor* params[] = {&weight, &bias};
    adam_step(params, gt, state, opt.learning_rate);
  }

  RowMatrix scores = test.as_matrix() * weight.as_matrix();
  scores.rowwise() += bias.as_matrix().row(0);
  std::vector<std::int32_t> pred(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(static_cast<Eigen::Index>(i), c) > scores(static_cast<Eigen::Index>(i), best)) best = c;
    }
    pred[i] = classes[static_cast<std::size_t>(best)];
  }
  return pred;
}

// ---------------------------------------------------------------------------
// Metrics

/// Accuracy of each class in `classes` over the rows whose truth is that
/// class, in percent.
inline std::map<std::int32_t, double> per_class_accuracy(std::span<const std::int32_t> pred,
                                                        std::span<const std::int32_t> truth,
                                                        std::span<const std::int32_t> classes) {
  if (pred.size() != truth.size()) {
    throw ShapeError("per_class_top1: " + std::to_string(pred.size()) + " predictions for " +
                     std::to_string(truth.size()) + " labels");
  }
  std::map<std::int32_t, std::pair<std::size_t, std::size_t>> counts;  // correct, total
  for (std::int32_t c : classes) counts[c] = {0, 0};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto it = counts.find(truth[i]);
    if (it == counts.end()) {
      throw ContractError("per_class_top1: truth label " + std::to_string(truth[i]) +
                          " not in the class set");
    }
    ++it->second.second;
    if (pred[i] == truth[i]) ++it->second.first;
  }
  std::map<std::int32_t, double> acc;
  for (const auto& [c, ct] : counts) {
    if (ct.second == 0) throw DataError("classes", "class " + std::to_string(c) + " has no test rows");
    acc[c] = 100.0 * static_cast<double>(ct.first) / static_cast<double>(ct.second);
  }
  return acc;
}

/// Mean over classes of per-class top-1 accuracy, in percent.
inline double per_class_top1(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth,
                             std::span<const std::int32_t> classes) {
  const auto acc = per_class_accuracy(pred, truth, classes);
  double s = 0.0;
  for (const auto& [c, a] : acc) s += a;
  return s / static_cast<double>(acc.size());
}

inline double harmonic_mean(double u, double s) { return u + s == 0.0 ? 0.0 : 2.0 * s * u / (s + u); }

struct GzslScores {
  double u = 0.0;
  double s = 0.0;
  double h = 0.0;
};

/// u and s are per-class top-1 over rows of unseen and seen truth, with
/// predictions ranging over the joint label space.
inline GzslScores gzsl_report(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth,
                              std::span<const std::int32_t> seen, std::span<const std::int32_t> unseen) {
  if (pred.size() != truth.size()) throw ShapeError("gzsl_report: prediction and label counts differ");
  const std::set<std::int32_t> seen_set(seen.begin(), seen.end());
  const std::set<std::int32_t> unseen_set(unseen.begin(), unseen.end());
  std::vector<std::int32_t> pu, tu, ps, ts;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (unseen_set.count(truth[i])) {
      pu.push_back(pred[i]);
      tu.push_back(truth[i]);
    } else if (seen_set.count(truth[i])) {
      ps.push_back(pred[i]);
      ts.push_back(truth[i]);
    } else {
      throw ContractError("gzsl_report: truth label " + std::to_string(truth[i]) + " in neither set");
    }
  }
  if (tu.empty()) throw DataError("unseen", "no test rows with unseen truth");
  if (ts.empty()) throw DataError("seen", "no test rows with seen truth");
  GzslScores out;
  out.u = per_class_top1(pu, tu, unseen);
  out.s = per_class_top1(ps, ts, seen);
  out.h = harmonic_mean(out.u, out.s);
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end evaluation

enum class ClassifierKind { NearestNeighbor, Softmax };
enum class ExemplarMode { Synthesized, GroundTruth };
enum class Task { Zsl, Gzsl, Both };

inline std::string to_string(ClassifierKind k) { return k == ClassifierKind::NearestNeighbor ? "nn" : "softmax"; }
inline std::string to_string(ExemplarMode m) {
  return m == ExemplarMode::Synthesized ? "synthesized" : "groundtruth";
}
inline std::string to_string(Task t) {
  return t == Task::Zsl ? "zsl" : t == Task::Gzsl ? "gzsl" : "both";
}

inline ClassifierKind parse_classifier(const std::string& s) {
  if (s == "nn") return ClassifierKind::NearestNeighbor;
  if (s == "softmax") return ClassifierKind::Softmax;
  throw ContractError("unknown classifier '" + s + "' (nn|softmax)");
}
inline ExemplarMode parse_exemplar_mode(const std::string& s) {
  if (s == "synthesized") return ExemplarMode::Synthesized;
  if (s == "groundtruth") return ExemplarMode::GroundTruth;
  throw ContractError("unknown exemplar mode '" + s + "' (synthesized|groundtruth)");
}
inline Task parse_task(const std::string& s) {
  if (s == "zsl") return Task::Zsl;
  if (s == "gzsl") return Task::Gzsl;
  if (s == "both") return Task::Both;
  throw ContractError("unknown task '" + s + "' (zsl|gzsl|both)");
}

struct EvalOptions {
  Task task = Task::Both;
  ClassifierKind classifier = ClassifierKind::NearestNeighbor;
  ExemplarMode exemplar_mode = ExemplarMode::Synthesized;
  std::size_t n_per_class = 300;
  /// Nearest neighbour against per-class means instead of every exemplar.
  bool class_mean_nn = false;
  std::uint64_t seed = 0;
  SoftmaxOptions softmax;
};

struct EvalReport {
  std::optional<double> T;
  std::optional<double> u;
  std::optional<double> s;
  std::optional<double> H;
  std::map<std::int32_t, double> zsl_per_class;
  std::map<std::int32_t, double> gzsl_per_class;
  EvalOptions options;
};

namespace detail {

inline std::vector<std::int32_t> run_classifier(const ExemplarSet& exemplars, const Tensor& test,
                                                const EvalOptions& opt) {
  if (opt.classifier == ClassifierKind::Softmax) {
    SoftmaxOptions sm = opt.softmax;
    sm.seed = opt.seed;
    return classify_softmax(exemplars, test, sm);
  }
  return classify_nn(test, opt.class_mean_nn ? class_means(exemplars) : exemplars);
}

inline ExemplarSet concat(const ExemplarSet& a, const ExemplarSet& b) {
  ExemplarSet out;
  out.features = Tensor::matrix(a.labels.size() + b.labels.size(), a.features.cols());
  auto dst = out.features.values();
  std::copy(a.features.values().begin(), a.features.values().end(), dst.begin());
  std::copy(b.features.values().begin(), b.features.values().end(),
            dst.begin() + static_cast<std::ptrdiff_t>(a.features.size()));
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

inline std::vector<std::int32_t> labels_of(const ZslDataset& ds, std::span<const std::size_t> rows) {
  std::vector<std::int32_t> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(ds.labels[r]);
  return out;
}

}  // namespace detail

/// Traditional zero-shot accuracy T: unseen test rows classified among the
/// unseen classes using exemplars synthesized for those classes only.
inline double evaluate_zsl(const MlpParams& theta, const ZslDataset& ds, const EvalOptions& opt,
                           std::map<std::int32_t, double>* per_class = nullptr) {
  const auto rows = ds.test_rows_in(ds.unseen_classes);
  const Tensor test = ds.features.gather_rows(rows);
  const auto truth = detail::labels_of(ds, rows);
  const auto synth = synthesize_features(theta, ds.prototypes, ds.unseen_classes, opt.n_per_class, opt.seed);
  const auto pred = detail::run_classifier(synth, test, opt);
  if (per_class) *per_class = per_class_accuracy(pred, truth, ds.unseen_classes);
  return per_class_top1(pred, truth, ds.unseen_classes);
}

/// Generalized zero-shot scores: every test row classified among all seen
/// and unseen classes. Seen classes are backed by synthesized rows or by
/// the real training rows.
inline GzslScores evaluate_gzsl(const MlpParams& theta, const ZslDataset& ds, const EvalOptions& opt,
                                std::map<std::int32_t, double>* per_class = nullptr) {
  std::vector<std::int32_t> all = ds.seen_classes;
  all.insert(all.end(), ds.unseen_classes.begin(), ds.unseen_classes.end());
  const auto rows = ds.test_rows_in(all);
  const Tensor test = ds.features.gather_rows(rows);
  const auto truth = detail::labels_of(ds, rows);

  const ExemplarSet unseen =
      synthesize_features(theta, ds.prototypes, ds.unseen_classes, opt.n_per_class, opt.seed);
  ExemplarSet seen;
  if (opt.exemplar_mode == ExemplarMode::Synthesized) {
    seen = synthesize_features(theta, ds.prototypes, ds.seen_classes, opt.n_per_class, opt.seed);
  } else {
    seen.features = ds.features.gather_rows(ds.train_rows);
    seen.labels = detail::labels_of(ds, ds.train_rows);
  }
  const auto pred = detail::run_classifier(detail::concat(seen, unseen), test, opt);
  if (per_class) *per_class = per_class_accuracy(pred, truth, all);
  return gzsl_report(pred, truth, ds.seen_classes, ds.unseen_classes);
}

inline EvalReport evaluate(const BaaeParams& params, const ZslDataset& ds, const EvalOptions& opt) {
  EvalReport report;
  report.options = opt;
  if (opt.task != Task::Gzsl) report.T = evaluate_zsl(params.generator, ds, opt, &report.zsl_per_class);
  if (opt.task != Task::Zsl) {
    const auto g = evaluate_gzsl(params.generator, ds, opt, &report.gzsl_per_class);
    report.u = g.u;
    report.s = g.s;
    report.H = g.h;
  }
  return report;
}

struct SweepRow {
  std::size_t n_per_class = 0;
  double T = 0.0;
};

/// Traditional zero-shot accuracy for each synthesized sample count.
inline std::vector<SweepRow> sweep_sample_count(const MlpParams& theta, const ZslDataset& ds,
                                                std::span<const std::size_t> counts,
                                                ClassifierKind kind, std::uint64_t seed) {
  if (counts.empty()) throw ContractError("sweep: empty count list");
  std::vector<SweepRow> out;
  for (std::size_t n : counts) {
    EvalOptions opt;
    opt.task = Task::Zsl;
    opt.classifier = kind;
    opt.n_per_class = n;
    opt.seed = seed;
    out.push_back({n, evaluate_zsl(theta, ds, opt)});
  }
  return out;
}

inline std::string sweep_tsv(std::span<const SweepRow> rows) {
  std::string out = "n_per_class\tT\n";
  for (const SweepRow& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\n", r.n_per_class, r.T);
    out += buf;
  }
  return out;
}

inline io::json to_json(const EvalReport& r) {
  io::json j;
  auto table = [](const std::map<std::int32_t, double>& m) {
    io::json t = io::json::object();
    for (const auto& [c, a] : m) t[std::to_string(c)] = a;
    return t;
  };
  j["task"] = to_string(r.options.task);
  j["classifier"] = to_string(r.options.classifier);
  j["exemplar_mode"] = to_string(r.options.exemplar_mode);
  j["n_per_class"] = r.options.n_per_class;
  j["class_mean_nn"] = r.options.class_mean_nn;
  j["seed"] = r.options.seed;
  if (r.T) {
    j["T"] = *r.T;
    j["zsl_per_class"] = table(r.zsl_per_class);
  }
  if (r.H) {
    j["u"] = *r.u;
    j["s"] = *r.s;
    j["H"] = *r.H;
    j["gzsl_per_class"] = table(r.gzsl_per_class);
  }
  return j;
}

}  // namespace baae
