// SPDX-License-Identifier: Apache-2.0
// ensnet: dataset generation, two-phase training, cross-validation and
// evaluation of the shared-trunk ensemble.
#include <CLI11.hpp>

#include <iostream>

#include "ensnet/commands.hpp"

namespace {

ensnet::KeyValues overrides_from(const std::vector<std::string>& sets) {
  ensnet::KeyValues kv;
  for (const auto& s : sets) kv.push_back(ensnet::parse_override(s));
  return kv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shared-trunk CNN ensemble with semi-supervised retraining"};
  app.require_subcommand(1);

  ensnet::SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic expression-like dataset and manifest");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--classes", synth.spec.num_classes, "Number of classes");
  s->add_option("--subjects", synth.spec.num_subjects, "Number of subjects");
  s->add_option("--per-class", synth.spec.samples_per_subject_class, "Samples per subject and class");
  s->add_option("--seed", synth.spec.seed, "Generator seed");
  s->add_option("--subject-noise", synth.spec.subject_noise, "Per-subject distortion scale");
  s->add_option("--pattern-noise", synth.spec.pattern_noise, "Per-pixel noise standard deviation");
  s->add_option("--image-size", synth.spec.image_size, "Image side in pixels");
  s->add_option("--subject-prefix", synth.spec.subject_prefix, "Prefix of generated subject ids");

  std::vector<std::string> sets;
  auto add_config = [&](CLI::App* cmd, std::filesystem::path& config) {
    cmd->add_option("--config", config, "key=value config file");
    cmd->add_option("--set", sets, "Override a config key (key=value), repeatable");
  };

  ensnet::TrainOptions train;
  auto* t = app.add_subcommand("train", "Phase 1: supervised per-branch training");
  add_config(t, train.config);
  t->add_option("--data", train.data, "Labelled manifest");
  t->add_option("--val", train.val, "Validation manifest");
  t->add_option("--out", train.out, "Output checkpoint")->required();

  ensnet::RetrainOptions retrain;
  auto* r = app.add_subcommand("retrain", "Phase 2: retraining on unlabelled samples");
  add_config(r, retrain.config);
  r->add_option("--ckpt", retrain.ckpt, "Input checkpoint")->required();
  r->add_option("--unlabelled", retrain.unlabelled, "Unlabelled manifest");
  r->add_option("--eval", retrain.evals, "Evaluation set name=manifest, repeatable");
  r->add_option("--out", retrain.out, "Output checkpoint")->required();

  ensnet::XvalOptions xval;
  auto* x = app.add_subcommand("xval", "Subject-independent 10-fold cross-validation");
  add_config(x, xval.config);
  x->add_option("--data", xval.data, "Labelled manifest with subject ids");
  x->add_option("--out", xval.out, "Output directory")->required();
  x->add_option("--folds-subset", xval.folds_subset, "Run only these trials (test folds)")->delimiter(',');
  x->add_flag("--parallel-trials", xval.parallel_trials, "Run trials concurrently");

  ensnet::EvalOptions eval;
  auto* e = app.add_subcommand("eval", "Confusion matrices and recognition rates");
  e->add_option("--ckpt", eval.ckpt, "Checkpoint")->required();
  e->add_option("--data", eval.data, "Labelled manifest")->required();
  e->add_flag("--per-branch", eval.per_branch, "Also score every branch");
  e->add_option("--out", eval.out, "Directory for CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (s->parsed()) ensnet::cmd_synth(synth, std::cout);
    if (t->parsed()) {
      train.overrides = overrides_from(sets);
      ensnet::cmd_train(train, std::cout);
    }
    if (r->parsed()) {
      retrain.overrides = overrides_from(sets);
      ensnet::cmd_retrain(retrain, std::cout);
    }
    if (x->parsed()) {
      xval.overrides = overrides_from(sets);
      ensnet::cmd_xval(xval, std::cout);
    }
    if (e->parsed()) ensnet::cmd_eval(eval, std::cout);
  } catch (const std::exception& ex) {
    std::cerr << "ensnet: " << ex.what() << '\n';
    return ensnet::exit_code_for(ex);
  }
  return 0;
}
