#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "myotorque/error.hpp"
#include "myotorque/model_bundle.hpp"
#include "myotorque/recording_io.hpp"
#include "myotorque/stream.hpp"
#include "myotorque/synthgen.hpp"

namespace myotorque::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// The take whose in-sample trace goes to timeseries_<joint>_<config>.csv.
constexpr double kExportVelocity = 60.0;

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: IoError: " << e.what() << '\n';
    return kDataError;
  }
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + p.string() + "'");
  return out;
}

void write_file(const fs::path& p, const std::function<void(std::ostream&)>& writer) {
  auto out = open_out(p);
  writer(out);
  out.close();
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + p.string() + "'");
}

std::vector<LoadedTake> load(const std::vector<std::string>& args, const RunConfig& run) {
  if (args.empty()) throw Error(ErrorCode::InvalidArgument, "no manifests given");
  auto takes = load_takes(expand_manifest_args(args));
  if (run.joint && *run.joint != takes.front().manifest.joint) {
    throw Error(ErrorCode::ConfigMismatch, "--joint " + std::string(to_string(*run.joint)) +
                                               " but the manifests are " +
                                               std::string(to_string(takes.front().manifest.joint)) +
                                               " takes");
  }
  return takes;
}

ModelConfig single_config(const RunConfig& run) {
  if (run.configs.size() != 1) {
    throw Error(ErrorCode::InvalidArgument, "this command needs exactly one --config");
  }
  return run.configs.front();
}

int export_take(const std::vector<LoadedTake>& takes) {
  for (std::size_t i = 0; i < takes.size(); ++i) {
    if (takes[i].manifest.velocity_deg_s == kExportVelocity && takes[i].manifest.take_index == 0) {
      return static_cast<int>(i);
    }
  }
  return 0;
}

json run_json(const RunConfig& run) {
  const auto& seg = run.preprocess.segmentation;
  return {{"folds", run.folds},
          {"unit", std::string(to_string(run.unit))},
          {"seed", run.seed},
          {"cap", run.cap},
          {"optimize_cap", run.optimize_cap},
          {"restarts", run.restarts},
          {"fix_scales", run.fix_scales},
          {"segmentation",
           {{"min_separation_s", seg.min_separation_s}, {"min_prominence_frac", seg.min_prominence_frac}}}};
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotPositiveDefinite:
      return kNumericalFailure;
    case ErrorCode::InvalidArgument:
      return kUsageError;
    default:
      return kDataError;
  }
}

GpOptions RunConfig::gp_options() const {
  GpOptions o;
  o.cap = cap;
  o.optimize_cap = optimize_cap;
  o.fix_scales = fix_scales;
  o.optimizer.restarts = restarts;
  o.optimizer.seed = seed;
  o.optimizer.fixed.output_scale = fix_scales;
  o.optimizer.fixed.length_scale = fix_scales;
  return o;
}

std::vector<ModelConfig> parse_configs(const std::string& value) {
  if (value == "all") return {ModelConfig::baseline, ModelConfig::emg, ModelConfig::fmg};
  return {config_from_string(value)};
}

int cmd_simulate(const SimulateArgs& args, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    SessionSpec spec = default_session_spec(args.joint);
    if (args.spec_path) {
      std::ifstream in(*args.spec_path);
      if (!in) throw Error(ErrorCode::IoError, "cannot open spec '" + args.spec_path->string() + "'");
      try {
        spec = read_session_spec(in);
      } catch (const Error& e) {
        throw e.with_context(args.spec_path->string());
      }
    }
    if (args.seed) spec.seed = *args.seed;
    const auto session = generate_session(spec);
    const auto manifests = write_session(args.out_dir, session);
    log << "wrote " << manifests.size() << " " << to_string(spec.joint) << " take manifests to "
        << args.out_dir.string() << '\n';
    return kSuccess;
  });
}

int cmd_ingest(const std::vector<std::string>& manifests, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto takes = load_takes(expand_manifest_args(manifests));
    for (const auto& t : takes) {
      out << t.manifest_path.string() << ": " << to_string(t.manifest.joint) << ", "
          << t.manifest.velocity_deg_s << " deg/s, take " << t.manifest.take_index << '\n';
      for (const auto& [label, s] : t.recording.channels) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "  %-12s %8zu samples @ %6.0f Hz  [%s]\n", label.c_str(), s.size(),
                      s.sample_rate_hz(), std::string(to_string(s.unit())).c_str());
        out << buf;
      }
      out << "  calibration: angle offset " << t.calibration.angle_offset << " deg";
      for (const auto& [m, v] : t.calibration.fmg_offsets) out << ", " << to_string(m) << ' ' << v;
      out << '\n';
    }
    return kSuccess;
  });
}

int cmd_features(const FeaturesArgs& args, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const auto config = single_config(args.run);
    const auto takes = load(args.manifests, args.run);
    const auto table = session_features(takes, config, args.run.preprocess);
    write_file(args.out, [&](std::ostream& os) { write_feature_table(os, table); });
    log << "wrote " << table.size() << " rows x " << table.dimension() << " features to "
        << args.out.string() << '\n';
    return kSuccess;
  });
}

int cmd_evaluate(const EvaluateArgs& args, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    if (args.run.configs.empty()) throw Error(ErrorCode::InvalidArgument, "no configuration selected");
    const auto takes = load(args.manifests, args.run);
    const Joint joint = takes.front().manifest.joint;
    const int export_index = export_take(takes);
    const GpOptions gp = args.run.gp_options();

    std::vector<MetricsReport> reports;
    json meta = run_json(args.run);
    meta["joint"] = std::string(to_string(joint));
    meta["takes"] = takes.size();
    meta["configs"] = json::array();

    for (ModelConfig config : args.run.configs) {
      const std::string tag = std::string(to_string(joint)) + "_" + std::string(to_string(config));
      const auto table = session_features(takes, config, args.run.preprocess);
      const auto folds = kfold_split(cv_units(table, args.run.unit), args.run.folds, args.run.seed, args.run.unit);
      auto report = evaluate_cv(table, folds, gp);
      const GprModel full = train_model(table, gp);

      write_file(args.out_dir / ("scatter_" + tag + ".csv"),
                 [&](std::ostream& os) { write_scatter_csv(os, export_scatter(table, report, &full)); });
      write_file(args.out_dir / ("timeseries_" + tag + ".csv"),
                 [&](std::ostream& os) { write_timeseries_csv(os, export_timeseries(table, export_index, full)); });

      meta["configs"].push_back({{"config", std::string(to_string(config))},
                                 {"n_rows", report.n_rows},
                                 {"dimension", report.dimension},
                                 {"columns", table.column_names},
                                 {"mse_normalized", report.mse_normalized},
                                 {"rmse_normalized", report.rmse_normalized}});
      log << to_string(config) << ": rows " << report.n_rows << ", d " << report.dimension << ", RMSE "
          << report.rmse_normalized << '\n';
      reports.push_back(std::move(report));
    }

    write_file(args.out_dir / "metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, reports); });
    const std::string table_text = render_table(reports);
    write_file(args.out_dir / "report.txt", [&](std::ostream& os) { os << table_text; });
    write_file(args.out_dir / "run.json", [&](std::ostream& os) { os << meta.dump(2) << '\n'; });
    log << table_text;
    return kSuccess;
  });
}

int cmd_train(const TrainArgs& args, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const auto config = single_config(args.run);
    const auto takes = load(args.manifests, args.run);
    const auto table = session_features(takes, config, args.run.preprocess);
    ModelBundle bundle{takes.front().manifest.joint, config, table.column_names, args.run.preprocess,
                       takes.front().calibration, train_model(table, args.run.gp_options())};
    write_file(args.model_out, [&](std::ostream& os) { save_bundle(os, bundle); });
    log << "trained " << to_string(bundle.joint) << '/' << to_string(config) << " on " << bundle.model.size()
        << " of " << table.size() << " rows; noise variance " << bundle.model.hyper.noise_variance() << '\n';
    return kSuccess;
  });
}

int cmd_predict(const PredictArgs& args, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    std::ifstream in(args.model_in);
    if (!in) throw Error(ErrorCode::IoError, "cannot open model '" + args.model_in.string() + "'");
    const ModelBundle bundle = load_bundle(in);
    const LoadedTake take = load_take(args.manifest);
    require_joint(bundle, take.manifest.joint);
    FeatureTable table = build_session_features(
        {{&take.recording, &take.calibration, 0, take.manifest_path.string()}}, bundle.joint, bundle.config,
        bundle.preprocess);
    if (table.column_names != bundle.feature_columns) {
      throw Error(ErrorCode::DimensionMismatch, "feature columns differ from the model's");
    }
    write_file(args.out, [&](std::ostream& os) { write_timeseries_csv(os, export_timeseries(table, 0, bundle.model)); });
    log << "wrote " << table.size() << " estimates to " << args.out.string() << '\n';
    return kSuccess;
  });
}

int cmd_stream(const StreamArgs& args, std::istream& in, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::ifstream model(args.model_in);
    if (!model) throw Error(ErrorCode::IoError, "cannot open model '" + args.model_in.string() + "'");
    ModelBundle bundle = load_bundle(model);
    std::optional<CalibrationRecord> calib;
    if (args.calibration_manifest) {
      const auto take = load_take(*args.calibration_manifest);
      require_joint(bundle, take.manifest.joint);
      calib = take.calibration;
    }
    StreamEstimator estimator(std::move(bundle), calib);
    run_stream(in, out, err, estimator);
    return kSuccess;
  });
}

}  // namespace myotorque::cli
