#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "myotorque/eval.hpp"
#include "myotorque/preprocess.hpp"

namespace myotorque::cli {

// Stable process exit codes.
enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 1,
  kDataError = 2,
  kNumericalFailure = 3,
};

// Maps a library error to an exit code.
int exit_code_for(ErrorCode code);

struct RunConfig {
  std::optional<Joint> joint;             // checked against the manifests if given
  std::vector<ModelConfig> configs{ModelConfig::baseline, ModelConfig::emg, ModelConfig::fmg};
  int folds = 5;
  FoldUnit unit = FoldUnit::segment;
  std::uint64_t seed = 42;
  std::size_t cap = 2000;
  std::size_t optimize_cap = 500;
  int restarts = 5;
  bool fix_scales = true;
  PreprocessOptions preprocess;

  GpOptions gp_options() const;
};

// "all" expands to the three configurations; otherwise one name.
std::vector<ModelConfig> parse_configs(const std::string& value);

struct SimulateArgs {
  std::optional<std::filesystem::path> spec_path;  // defaults to the joint's built-in spec
  Joint joint = Joint::knee;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir;
};

struct EvaluateArgs {
  std::vector<std::string> manifests;  // files or directories
  RunConfig run;
  std::filesystem::path out_dir;
};

struct TrainArgs {
  std::vector<std::string> manifests;
  RunConfig run;  // exactly one config
  std::filesystem::path model_out;
};

struct PredictArgs {
  std::filesystem::path model_in;
  std::string manifest;
  std::filesystem::path out;
};

struct FeaturesArgs {
  std::vector<std::string> manifests;
  RunConfig run;  // exactly one config
  std::filesystem::path out;
};

struct StreamArgs {
  std::filesystem::path model_in;
  std::optional<std::string> calibration_manifest;
};

// Each command reports progress on `log` and returns an ExitCode. Library
// errors are caught, printed to `err` and mapped with exit_code_for.
int cmd_simulate(const SimulateArgs& args, std::ostream& log, std::ostream& err);
int cmd_ingest(const std::vector<std::string>& manifests, std::ostream& out, std::ostream& err);
int cmd_features(const FeaturesArgs& args, std::ostream& log, std::ostream& err);
int cmd_evaluate(const EvaluateArgs& args, std::ostream& log, std::ostream& err);
int cmd_train(const TrainArgs& args, std::ostream& log, std::ostream& err);
int cmd_predict(const PredictArgs& args, std::ostream& log, std::ostream& err);
int cmd_stream(const StreamArgs& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace myotorque::cli
