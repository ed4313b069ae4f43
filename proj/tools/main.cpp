#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "myotorque/error.hpp"

namespace {

using namespace myotorque;
using namespace myotorque::cli;

struct RunFlags {
  std::string joint;
  std::string config = "all";
  std::string unit = "segment";
};

void add_run_flags(CLI::App* app, RunConfig& run, RunFlags& flags, bool multi_config) {
  app->add_option("--joint", flags.joint, "ankle or knee (checked against the manifests)")
      ->check(CLI::IsMember({"ankle", "knee"}));
  if (multi_config) {
    app->add_option("--config", flags.config, "baseline, emg, fmg or all")
        ->check(CLI::IsMember({"baseline", "emg", "fmg", "all"}));
  } else {
    flags.config = "fmg";
    app->add_option("--config", flags.config, "baseline, emg or fmg")
        ->check(CLI::IsMember({"baseline", "emg", "fmg"}));
  }
  app->add_option("--folds", run.folds, "cross-validation folds")->check(CLI::Range(2, 1000));
  app->add_option("--unit", flags.unit, "fold unit: segment or sample")
      ->check(CLI::IsMember({"segment", "sample"}));
  app->add_option("--seed", run.seed, "seed for folds and optimizer restarts");
  app->add_option("--cap", run.cap, "maximum training rows per GP fit")->check(CLI::PositiveNumber);
  app->add_option("--optimize-cap", run.optimize_cap, "rows used for the hyperparameter search")
      ->check(CLI::PositiveNumber);
  app->add_option("--restarts", run.restarts, "optimizer restarts")->check(CLI::Range(1, 1000));
  app->add_option("--fix-scales", run.fix_scales, "hold output and length scale at 1 (true|false)");
  app->add_option("--min-separation", run.preprocess.segmentation.min_separation_s,
                  "minimum time between motion extrema [s]")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--min-prominence", run.preprocess.segmentation.min_prominence_frac,
                  "extremum prominence as a fraction of the angle range")
      ->check(CLI::Range(0.0, 1.0));
}

void resolve(RunConfig& run, const RunFlags& flags) {
  if (!flags.joint.empty()) run.joint = joint_from_string(flags.joint);
  run.configs = parse_configs(flags.config);
  run.unit = fold_unit_from_string(flags.unit);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint torque estimation from angle, velocity and muscle signals with GP regression"};
  app.require_subcommand(1);

  // simulate
  SimulateArgs sim;
  std::string sim_spec, sim_joint = "knee";
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic session with ground truth");
  simulate->add_option("--spec", sim_spec, "session spec JSON (defaults to the built-in spec of --joint)");
  simulate->add_option("--joint", sim_joint, "ankle or knee")->check(CLI::IsMember({"ankle", "knee"}));
  auto* seed_opt = simulate->add_option("--seed", sim_seed, "override the session spec seed");
  simulate->add_option("--out", sim.out_dir, "output directory")->required();

  // ingest
  std::vector<std::string> ingest_manifests;
  auto* ingest = app.add_subcommand("ingest", "load take manifests and summarize their channels");
  ingest->add_option("manifests", ingest_manifests, "manifest files or directories")->required();

  // features
  FeaturesArgs feat;
  RunFlags feat_flags;
  auto* features = app.add_subcommand("features", "write the feature table of a session");
  features->add_option("manifests", feat.manifests, "manifest files or directories")->required();
  add_run_flags(features, feat.run, feat_flags, false);
  features->add_option("--out", feat.out, "output CSV")->required();

  // evaluate
  EvaluateArgs eval;
  RunFlags eval_flags;
  auto* evaluate = app.add_subcommand("evaluate", "k-fold cross-validation with metrics and exports");
  evaluate->add_option("manifests", eval.manifests, "manifest files or directories")->required();
  add_run_flags(evaluate, eval.run, eval_flags, true);
  evaluate->add_option("--out", eval.out_dir, "output directory")->required();

  // train
  TrainArgs train;
  RunFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "fit a model on all rows and save it");
  train_cmd->add_option("manifests", train.manifests, "manifest files or directories")->required();
  add_run_flags(train_cmd, train.run, train_flags, false);
  train_cmd->add_option("--out", train.model_out, "model file")->required();

  // predict
  PredictArgs pred;
  auto* predict_cmd = app.add_subcommand("predict", "estimate torque for one take with a saved model");
  predict_cmd->add_option("--model", pred.model_in, "model file")->required();
  predict_cmd->add_option("manifest", pred.manifest, "take manifest")->required();
  predict_cmd->add_option("--out", pred.out, "output CSV")->required();

  // stream
  StreamArgs stream;
  std::string stream_calib;
  auto* stream_cmd = app.add_subcommand("stream", "causal estimates for 200 Hz frames on standard input");
  stream_cmd->add_option("--model", stream.model_in, "model file")->required();
  stream_cmd->add_option("--calibration", stream_calib,
                         "take manifest whose calibration replaces the model's");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kSuccess : kUsageError;
  }

  try {
    if (*simulate) {
      if (!sim_spec.empty()) sim.spec_path = sim_spec;
      sim.joint = joint_from_string(sim_joint);
      if (*seed_opt) sim.seed = sim_seed;
      return cmd_simulate(sim, std::cout, std::cerr);
    }
    if (*ingest) return cmd_ingest(ingest_manifests, std::cout, std::cerr);
    if (*features) {
      resolve(feat.run, feat_flags);
      return cmd_features(feat, std::cout, std::cerr);
    }
    if (*evaluate) {
      resolve(eval.run, eval_flags);
      return cmd_evaluate(eval, std::cout, std::cerr);
    }
    if (*train_cmd) {
      resolve(train.run, train_flags);
      return cmd_train(train, std::cout, std::cerr);
    }
    if (*predict_cmd) return cmd_predict(pred, std::cout, std::cerr);
    if (*stream_cmd) {
      if (!stream_calib.empty()) stream.calibration_manifest = stream_calib;
      std::ios::sync_with_stdio(false);
      return cmd_stream(stream, std::cin, std::cout, std::cerr);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  }
  return kUsageError;
}
