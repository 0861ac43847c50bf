// baae: command-line front end.
//
//   baae gen-synthetic --out DIR
//   baae train --data DIR --out DIR --epochs N
//   baae synth --data DIR --checkpoint FILE --out DIR
//   baae eval --data DIR --checkpoint FILE --out FILE
//   baae sweep --data DIR --checkpoint FILE --out FILE --counts 1,5,10
//   baae gradcheck
//   baae cv --data DIR --grid FILE --out FILE --epochs N
//
// Every command takes --seed and --config. Flags override the config file,
// which overrides built-in defaults; the resolved config is written into
// every artifact.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "baae/baae.hpp"
#include "baae/config.hpp"

namespace fs = std::filesystem;
using namespace baae;

namespace {

struct Flags {
  std::optional<std::string> data, checkpoint, config, grid;
  std::string out;
  std::optional<std::uint64_t> seed, folds_seed;

  // hyperparameters
  std::optional<std::size_t> epochs, batch, hidden, noise_dim, disc_steps;
  std::optional<std::vector<std::size_t>> disc_hidden;
  std::optional<double> lr, lambda, mu, gamma, eta, init_std;
  bool gp_norm_squared = false, split_heads = false, classifier_bias = false;
  bool no_adversarial = false, no_semantic_alignment = false;

  // evaluation
  std::optional<std::string> task, classifier, exemplar_mode;
  std::optional<std::size_t> n_per_class, softmax_epochs;
  std::optional<double> softmax_lr;
  bool class_mean_nn = false;
  std::optional<std::vector<std::size_t>> counts;

  // synthetic data
  std::optional<std::size_t> p, q, seen, unseen, samples;
  std::optional<double> noise_std, train_fraction;

  // synth
  std::string classes = "unseen";

  // gradcheck
  double inject_fault = 0.0;
  double tolerance = 1e-5;

  bool verbose = false;
  std::vector<const CLI::Option*> given;
};

template <class T, class U>
void set_if(const std::optional<T>& src, U& dst) {
  if (src) dst = *src;
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--seed", f.seed, "master seed; every random stream is split from it");
  cmd->add_option("--config", f.config, "JSON config file (flags take precedence)")->check(CLI::ExistingFile);
}

void add_hyperparams(CLI::App* cmd, Flags& f) {
  cmd->add_option("--epochs", f.epochs, "training epochs (required)");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--batch", f.batch, "minibatch size");
  cmd->add_option("--lambda", f.lambda, "classification loss weight");
  cmd->add_option("--mu", f.mu, "weight regularizer");
  cmd->add_option("--gamma", f.gamma, "visual gradient penalty weight");
  cmd->add_option("--eta", f.eta, "semantic gradient penalty weight");
  cmd->add_option("--hidden", f.hidden, "generator/inference hidden width");
  cmd->add_option("--disc-hidden", f.disc_hidden, "discriminator hidden widths")->delimiter(',');
  cmd->add_option("--noise-dim", f.noise_dim, "noise dimension (0: semantic dimension)");
  cmd->add_option("--disc-steps", f.disc_steps, "discriminator updates per generator update");
  cmd->add_option("--init-std", f.init_std, "weight init standard deviation");
  cmd->add_flag("--gp-norm-squared", f.gp_norm_squared, "penalize (|grad|^2 - 1)^2");
  cmd->add_flag("--split-inference-heads", f.split_heads, "separate semantic and noise inference networks");
  cmd->add_flag("--classifier-bias", f.classifier_bias, "per-class bias in the compatibility classifier");
  cmd->add_flag("--no-adversarial", f.no_adversarial, "drop both adversarial games");
  cmd->add_flag("--no-semantic-alignment", f.no_semantic_alignment, "drop the semantic alignment term");
}

void add_eval(CLI::App* cmd, Flags& f) {
  cmd->add_option("--task", f.task, "zsl|gzsl|both");
  cmd->add_option("--classifier", f.classifier, "nn|softmax");
  cmd->add_option("--exemplar-mode", f.exemplar_mode, "seen-class exemplars: synthesized|groundtruth");
  cmd->add_option("--n-per-class", f.n_per_class, "synthesized rows per class");
  cmd->add_flag("--class-mean-nn", f.class_mean_nn, "nearest neighbour against class means");
  cmd->add_option("--softmax-lr", f.softmax_lr);
  cmd->add_option("--softmax-epochs", f.softmax_epochs);
}

RunConfig resolve(const std::string& command, const Flags& f, const CLI::App* cmd) {
  RunConfig c;
  c.command = command;
  if (command == "gen-synthetic") c.seed = c.synthetic.seed;
  if (f.config) c = apply_json(io::read_json(*f.config), c, *f.config);
  c.command = command;

  set_if(f.seed, c.seed);
  set_if(f.data, c.data);
  set_if(f.checkpoint, c.checkpoint);
  set_if(f.folds_seed, c.folds_seed);
  set_if(f.counts, c.counts);

  HyperParams& hp = c.hyperparams;
  set_if(f.epochs, hp.epochs);
  set_if(f.lr, hp.learning_rate);
  set_if(f.batch, hp.batch_size);
  set_if(f.lambda, hp.weights.lambda);
  set_if(f.mu, hp.weights.mu);
  set_if(f.gamma, hp.weights.gamma);
  set_if(f.eta, hp.weights.eta);
  set_if(f.hidden, hp.hidden);
  set_if(f.disc_hidden, hp.disc_hidden);
  set_if(f.noise_dim, hp.noise_dim);
  set_if(f.disc_steps, hp.disc_steps);
  set_if(f.init_std, hp.init_std);
  auto given = [&](const char* name) {
    const CLI::Option* o = cmd->get_option_no_throw(name);
    return o != nullptr && o->count() > 0;
  };
  if (given("--gp-norm-squared")) hp.gp_norm_squared = true;
  if (given("--split-inference-heads")) hp.split_inference_heads = true;
  if (given("--classifier-bias")) hp.classifier_bias = true;
  if (given("--no-adversarial")) hp.adversarial = false;
  if (given("--no-semantic-alignment")) hp.semantic_alignment = false;

  EvalOptions& e = c.eval;
  if (f.task) e.task = parse_task(*f.task);
  if (f.classifier) e.classifier = parse_classifier(*f.classifier);
  if (f.exemplar_mode) e.exemplar_mode = parse_exemplar_mode(*f.exemplar_mode);
  set_if(f.n_per_class, e.n_per_class);
  set_if(f.softmax_lr, e.softmax.learning_rate);
  set_if(f.softmax_epochs, e.softmax.epochs);
  if (given("--class-mean-nn")) e.class_mean_nn = true;

  SyntheticConfig& s = c.synthetic;
  set_if(f.p, s.visual_dim);
  set_if(f.q, s.semantic_dim);
  set_if(f.seen, s.seen_classes);
  set_if(f.unseen, s.unseen_classes);
  set_if(f.samples, s.samples_per_class);
  set_if(f.noise_std, s.noise_std);
  set_if(f.train_fraction, s.train_fraction);

  // One master seed drives every stream.
  hp.seed = c.seed;
  e.seed = c.seed;
  if (command == "gen-synthetic") s.seed = c.seed;
  return c;
}

ZslDataset require_data(const RunConfig& c) {
  if (!c.data) throw ContractError(c.command + ": --data is required");
  return load_dataset(*c.data);
}

LoadedCheckpoint require_checkpoint(const RunConfig& c) {
  if (!c.checkpoint) throw ContractError(c.command + ": --checkpoint is required");
  if (!fs::exists(*c.checkpoint)) throw DataError(*c.checkpoint, "no such checkpoint");
  return load_checkpoint(*c.checkpoint);
}

/// Config embedded in outputs derived from a checkpoint: the checkpoint is
/// identified by file name plus the training config it records.
io::json embedded_config(const RunConfig& c, const LoadedCheckpoint* ckpt = nullptr) {
  io::json j = to_json(c);
  if (c.checkpoint) j["checkpoint"] = fs::path(*c.checkpoint).filename().string();
  if (ckpt) j["training"] = ckpt->metadata.value("config", io::json::object());
  return j;
}

void write_config(const fs::path& dir, const io::json& config) { io::write_json(dir / "config.json", config); }

int cmd_gen_synthetic(const RunConfig& c, const Flags& f) {
  const SyntheticDataset syn = make_synthetic_with_truth(c.synthetic);
  save_dataset(f.out, syn.dataset);
  write_config(f.out, to_json(c));
  std::cout << "wrote " << syn.dataset.num_rows() << " rows to " << f.out << "\n";
  return 0;
}

int cmd_train(const RunConfig& c, const Flags& f) {
  const ZslDataset ds = require_data(c);
  if (c.hyperparams.epochs == 0) throw ContractError("train: --epochs is required");
  const TrainResult r = train(ds, c.hyperparams, [&](const EpochLog& e) {
    if (f.verbose) {
      std::fprintf(stderr, "epoch %zu  align_visual %.5f  generator_total %.5f  %.2fs\n", e.epoch,
                   e.mean.align_visual, e.mean.generator_total, e.seconds);
    }
  });
  const io::json config = to_json(c);
  fs::create_directories(f.out);
  save_checkpoint(fs::path(f.out) / "checkpoint.json", r.params,
                  {{"config", config}, {"seed", c.seed}, {"rng", Rng::kName}, {"dataset", ds.name}});
  io::write_file_atomic(fs::path(f.out) / "train_log.jsonl", to_jsonl(r.log));
  write_config(f.out, config);
  const LossBreakdown& last = r.log.epochs.back().mean;
  std::cout << "trained " << c.hyperparams.epochs << " epochs, final align_visual " << last.align_visual
            << "; checkpoint in " << f.out << "\n";
  return 0;
}

std::vector<std::int32_t> parse_classes(const std::string& spec, const ZslDataset& ds) {
  if (spec == "unseen") return ds.unseen_classes;
  if (spec == "seen") return ds.seen_classes;
  if (spec == "all") {
    std::vector<std::int32_t> all = ds.seen_classes;
    all.insert(all.end(), ds.unseen_classes.begin(), ds.unseen_classes.end());
    return all;
  }
  std::vector<std::int32_t> out;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const std::size_t comma = std::min(spec.find(',', pos), spec.size());
    try {
      out.push_back(static_cast<std::int32_t>(std::stol(spec.substr(pos, comma - pos))));
    } catch (const std::exception&) {
      throw ContractError("--classes: expected unseen|seen|all or a comma list, got '" + spec + "'");
    }
    pos = comma + 1;
  }
  return out;
}

int cmd_synth(const RunConfig& c, const Flags& f) {
  const ZslDataset ds = require_data(c);
  const LoadedCheckpoint ckpt = require_checkpoint(c);
  const auto classes = parse_classes(f.classes, ds);
  const SynthesizedSet set =
      synthesize_features(ckpt.params.generator, ds.prototypes, classes, c.eval.n_per_class, c.seed);
  const fs::path dir = f.out;
  fs::create_directories(dir);
  io::write_file_atomic(dir / "features.f64", io::encode_f64(set.features.values()));
  io::write_file_atomic(dir / "labels.i32", io::encode_i32(set.labels));
  io::json manifest{{"format", "baae-synthesized"},
                    {"version", 1},
                    {"features", {{"file", "features.f64"}, {"dtype", "f64le"}, {"shape", set.features.shape()}}},
                    {"labels", {{"file", "labels.i32"}, {"dtype", "i32le"}, {"shape", {set.labels.size()}}}},
                    {"classes", classes},
                    {"config", embedded_config(c, &ckpt)}};
  io::write_json(dir / "manifest.json", manifest);
  std::cout << "wrote " << set.labels.size() << " synthesized rows to " << f.out << "\n";
  return 0;
}

int cmd_eval(const RunConfig& c, const Flags& f) {
  const ZslDataset ds = require_data(c);
  const LoadedCheckpoint ckpt = require_checkpoint(c);
  const EvalReport rep = evaluate(ckpt.params, ds, c.eval);
  io::json j = to_json(rep);
  j["config"] = embedded_config(c, &ckpt);
  io::write_json(f.out, j);
  if (rep.T) std::printf("T %.2f\n", *rep.T);
  if (rep.H) std::printf("u %.2f  s %.2f  H %.2f\n", *rep.u, *rep.s, *rep.H);
  return 0;
}

int cmd_sweep(const RunConfig& c, const Flags& f) {
  const ZslDataset ds = require_data(c);
  const LoadedCheckpoint ckpt = require_checkpoint(c);
  const auto rows = sweep_sample_count(ckpt.params.generator, ds, c.counts, c.eval.classifier, c.seed);
  const std::string tsv = "# config " + embedded_config(c, &ckpt).dump() + "\n" + sweep_tsv(rows);
  io::write_file_atomic(f.out, tsv);
  std::cout << sweep_tsv(rows);
  return 0;
}

int cmd_gradcheck(const RunConfig& c, const Flags& f) {
  GradcheckOptions opt;
  opt.seed = c.seed;
  opt.gp_norm_squared = c.hyperparams.gp_norm_squared;
  opt.split_inference_heads = c.hyperparams.split_inference_heads;
  opt.fault = f.inject_fault;
  opt.tolerance = f.tolerance;
  const auto checks = gradcheck(opt);
  bool ok = true;
  io::json terms = io::json::array();
  for (const TermCheck& t : checks) {
    std::printf("%-18s %.3e  %s\n", std::string(term_name(t.term)).c_str(), t.max_rel_error,
                t.pass ? "ok" : "FAIL");
    ok = ok && t.pass;
    io::json groups = io::json::object();
    for (const GroupError& g : t.groups) groups[std::string(group_name(g.group))] = g.rel_error;
    terms.push_back({{"term", term_name(t.term)},
                     {"max_rel_error", t.max_rel_error},
                     {"pass", t.pass},
                     {"groups", groups}});
  }
  if (!f.out.empty()) {
    io::write_json(f.out, {{"terms", terms},
                           {"pass", ok},
                           {"tolerance", opt.tolerance},
                           {"step", opt.step},
                           {"config", to_json(c)}});
  }
  return ok ? 0 : 3;
}

int cmd_cv(const RunConfig& c, const Flags& f) {
  const ZslDataset ds = require_data(c);
  if (!f.grid) throw ContractError("cv: --grid is required");
  const io::json grid_json = io::read_json(*f.grid);
  if (!grid_json.is_array()) throw DataError(*f.grid, "grid must be a JSON array of hyperparameter objects");
  std::vector<HyperParams> grid;
  for (std::size_t i = 0; i < grid_json.size(); ++i) {
    HyperParams hp = apply_json(grid_json[i], c.hyperparams, *f.grid + "[" + std::to_string(i) + "]");
    hp.seed = c.seed;
    grid.push_back(hp);
  }
  const CvResult r = cross_validate(ds, grid, c.folds_seed, c.eval);
  io::json candidates = io::json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    candidates.push_back({{"hyperparams", to_json(grid[i])}, {"T", r.scores[i]}});
    std::printf("candidate %zu  T %.2f\n", i, r.scores[i]);
  }
  io::write_json(f.out, {{"best_index", r.best_index},
                         {"best", to_json(r.best)},
                         {"candidates", candidates},
                         {"split",
                          {{"train_classes", r.split.train_classes},
                           {"validation_classes", r.split.validation_classes}}},
                         {"config", to_json(c)}});
  std::printf("best candidate %zu\n", r.best_index);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bidirectional adversarial autoencoder for zero-shot learning"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  Flags f;

  auto* gen = app.add_subcommand("gen-synthetic", "write the synthetic reference dataset");
  add_common(gen, f);
  gen->add_option("--out", f.out, "output dataset directory")->required();
  gen->add_option("--p", f.p, "visual dimension");
  gen->add_option("--q", f.q, "semantic dimension");
  gen->add_option("--seen", f.seen, "seen classes");
  gen->add_option("--unseen", f.unseen, "unseen classes");
  gen->add_option("--samples-per-class", f.samples);
  gen->add_option("--noise-std", f.noise_std);
  gen->add_option("--train-fraction", f.train_fraction);

  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(tr, f);
  tr->add_option("--data", f.data, "dataset directory");
  tr->add_option("--out", f.out, "output directory")->required();
  tr->add_flag("--verbose,-v", f.verbose, "per-epoch progress on stderr");
  add_hyperparams(tr, f);

  auto* syn = app.add_subcommand("synth", "synthesize features from a checkpoint");
  add_common(syn, f);
  syn->add_option("--data", f.data, "dataset directory");
  syn->add_option("--checkpoint", f.checkpoint, "checkpoint manifest");
  syn->add_option("--out", f.out, "output directory")->required();
  syn->add_option("--classes", f.classes, "unseen|seen|all or comma-separated class indices");
  syn->add_option("--n-per-class", f.n_per_class, "rows per class");

  auto* ev = app.add_subcommand("eval", "zero-shot and generalized zero-shot evaluation");
  add_common(ev, f);
  ev->add_option("--data", f.data, "dataset directory");
  ev->add_option("--checkpoint", f.checkpoint, "checkpoint manifest");
  ev->add_option("--out", f.out, "report JSON")->required();
  add_eval(ev, f);

  auto* sw = app.add_subcommand("sweep", "zero-shot accuracy against synthesized sample count");
  add_common(sw, f);
  sw->add_option("--data", f.data, "dataset directory");
  sw->add_option("--checkpoint", f.checkpoint, "checkpoint manifest");
  sw->add_option("--out", f.out, "TSV output")->required();
  sw->add_option("--counts", f.counts, "comma-separated sample counts")->delimiter(',');
  sw->add_option("--classifier", f.classifier, "nn|softmax");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss term");
  add_common(gc, f);
  gc->add_option("--out", f.out, "optional JSON report");
  gc->add_option("--tolerance", f.tolerance, "maximum relative error");
  gc->add_flag("--gp-norm-squared", f.gp_norm_squared);
  gc->add_flag("--split-inference-heads", f.split_heads);
  gc->add_option("--inject-fault", f.inject_fault, "test hook: perturb the analytic gradients")
      ->group("");

  auto* cv = app.add_subcommand("cv", "cross-validate hyperparameters on held-out seen classes");
  add_common(cv, f);
  cv->add_option("--data", f.data, "dataset directory");
  cv->add_option("--grid", f.grid, "JSON array of hyperparameter overrides")->check(CLI::ExistingFile);
  cv->add_option("--out", f.out, "result JSON")->required();
  cv->add_option("--folds-seed", f.folds_seed, "seed of the class split");
  add_hyperparams(cv, f);
  add_eval(cv, f);

  CLI11_PARSE(app, argc, argv);

  const CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    const RunConfig c = resolve(name, f, cmd);
    if (name == "gen-synthetic") return cmd_gen_synthetic(c, f);
    if (name == "train") return cmd_train(c, f);
    if (name == "synth") return cmd_synth(c, f);
    if (name == "eval") return cmd_eval(c, f);
    if (name == "sweep") return cmd_sweep(c, f);
    if (name == "gradcheck") return cmd_gradcheck(c, f);
    if (name == "cv") return cmd_cv(c, f);
  } catch (const TrainingError& e) {
    std::cerr << "error: training aborted: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
