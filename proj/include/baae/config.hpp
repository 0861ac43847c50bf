#pragma once

// Run configuration for the command-line front end: JSON round-trips for
// synthetic-data, evaluation and run settings. Resolution order is
// defaults, then a config file, then explicit flags.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "baae/data.hpp"
#include "baae/eval.hpp"
#include "baae/io.hpp"
#include "baae/training.hpp"

namespace baae {

inline io::json to_json(const SyntheticConfig& c) {
  return {{"p", c.visual_dim},
          {"q", c.semantic_dim},
          {"seen", c.seen_classes},
          {"unseen", c.unseen_classes},
          {"samples_per_class", c.samples_per_class},
          {"noise_std", c.noise_std},
          {"train_fraction", c.train_fraction},
          {"seed", c.seed}};
}

inline SyntheticConfig apply_json(const io::json& j, SyntheticConfig c, const std::string& context) {
  if (!j.is_object()) throw DataError(context, "must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto get = [&]<class T>(T& dst) { dst = io::field<T>(j, key, context); };
    if (key == "p") get(c.visual_dim);
    else if (key == "q") get(c.semantic_dim);
    else if (key == "seen") get(c.seen_classes);
    else if (key == "unseen") get(c.unseen_classes);
    else if (key == "samples_per_class") get(c.samples_per_class);
    else if (key == "noise_std") get(c.noise_std);
    else if (key == "train_fraction") get(c.train_fraction);
    else if (key == "seed") get(c.seed);
    else throw DataError(context + "." + key, "unknown synthetic setting");
    (void)value;
  }
  return c;
}

inline io::json to_json(const EvalOptions& e) {
  return {{"task", to_string(e.task)},
          {"classifier", to_string(e.classifier)},
          {"exemplar_mode", to_string(e.exemplar_mode)},
          {"n_per_class", e.n_per_class},
          {"class_mean_nn", e.class_mean_nn},
          {"seed", e.seed},
          {"softmax", {{"lr", e.softmax.learning_rate},
                       {"epochs", e.softmax.epochs},
                       {"init_std", e.softmax.init_std}}}};
}

inline EvalOptions apply_json(const io::json& j, EvalOptions e, const std::string& context) {
  if (!j.is_object()) throw DataError(context, "must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto get = [&]<class T>(T& dst) { dst = io::field<T>(j, key, context); };
    if (key == "task") e.task = parse_task(io::field<std::string>(j, key, context));
    else if (key == "classifier") e.classifier = parse_classifier(io::field<std::string>(j, key, context));
    else if (key == "exemplar_mode") e.exemplar_mode = parse_exemplar_mode(io::field<std::string>(j, key, context));
    else if (key == "n_per_class") get(e.n_per_class);
    else if (key == "class_mean_nn") get(e.class_mean_nn);
    else if (key == "seed") get(e.seed);
    else if (key == "softmax") {
      const std::string ctx = context + ".softmax";
      if (!value.is_object()) throw DataError(ctx, "must be a JSON object");
      for (const auto& [k, v] : value.items()) {
        (void)v;
        if (k == "lr") e.softmax.learning_rate = io::field<double>(value, k, ctx);
        else if (k == "epochs") e.softmax.epochs = io::field<std::size_t>(value, k, ctx);
        else if (k == "init_std") e.softmax.init_std = io::field<double>(value, k, ctx);
        else throw DataError(ctx + "." + k, "unknown softmax setting");
      }
    } else {
      throw DataError(context + "." + key, "unknown eval setting");
    }
  }
  return e;
}

/// Everything one command needs. Output locations are deliberately not
/// part of the embedded record, so reruns into another directory produce
/// identical artifacts.
struct RunConfig {
  std::string command;
  std::optional<std::string> data;
  std::optional<std::string> checkpoint;
  std::uint64_t seed = 0;
  HyperParams hyperparams;
  EvalOptions eval;
  SyntheticConfig synthetic;
  std::vector<std::size_t> counts{1, 5, 10, 50, 100, 300};
  std::uint64_t folds_seed = 0;
};

inline io::json to_json(const RunConfig& c) {
  io::json j;
  j["command"] = c.command;
  j["seed"] = c.seed;
  j["rng"] = Rng::kName;
  if (c.data) j["data"] = *c.data;
  if (c.checkpoint) j["checkpoint"] = *c.checkpoint;
  j["hyperparams"] = to_json(c.hyperparams);
  j["eval"] = to_json(c.eval);
  j["synthetic"] = to_json(c.synthetic);
  j["counts"] = c.counts;
  j["folds_seed"] = c.folds_seed;
  return j;
}

/// Applies a config file's sections on top of `c`. Recognized top-level
/// keys: seed, data, checkpoint, hyperparams, eval, synthetic, counts,
/// folds_seed.
inline RunConfig apply_json(const io::json& j, RunConfig c, const std::string& context = "config") {
  if (!j.is_object()) throw DataError(context, "must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") c.seed = io::field<std::uint64_t>(j, key, context);
    else if (key == "data") c.data = io::field<std::string>(j, key, context);
    else if (key == "checkpoint") c.checkpoint = io::field<std::string>(j, key, context);
    else if (key == "hyperparams") c.hyperparams = apply_json(value, c.hyperparams, context + ".hyperparams");
    else if (key == "eval") c.eval = apply_json(value, c.eval, context + ".eval");
    else if (key == "synthetic") c.synthetic = apply_json(value, c.synthetic, context + ".synthetic");
    else if (key == "counts") c.counts = io::field<std::vector<std::size_t>>(j, key, context);
    else if (key == "folds_seed") c.folds_seed = io::field<std::uint64_t>(j, key, context);
    else if (key == "command" || key == "rng") continue;  // present in emitted configs
    else throw DataError(context + "." + key, "unknown config key");
  }
  return c;
}

}  // namespace baae
