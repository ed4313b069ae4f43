#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "myotorque/preprocess.hpp"
#include "myotorque/synthgen.hpp"
#include "myotorque/timeseries.hpp"

namespace myotorque {

// On-disk layout of one take:
//   <stem>.json          manifest (joint, velocity, file names, rates, calibration)
//   <stem>_2000hz.csv    time_s, angle_deg, torque_nm, emg_<M>...
//   <stem>_200hz.csv     time_s, fmg_<M>...
// Calibration files are shared by all takes of a session:
//   calibration_standing.csv  (200 Hz, fmg_<M>...)
//   calibration_angle.csv     (2000 Hz, angle_deg)
// Paths inside a manifest are relative to the manifest's directory.

inline constexpr int kManifestVersion = 1;

struct RateGroupFile {
  std::string file;
  double sample_rate_hz = 0.0;
};

struct TakeManifest {
  Joint joint = Joint::knee;
  double velocity_deg_s = 0.0;
  int take_index = 0;
  std::vector<RateGroupFile> recordings;
  RateGroupFile calibration_standing;
  RateGroupFile calibration_angle;
};

// Columns are written in the given order after time_s. All series must share
// rate, start and length. Values use 17 significant digits.
void write_recording_csv(std::ostream& os, const std::vector<TimeSeries>& series);

// Column units follow from the names (angle_deg, torque_nm, emg_*, fmg_*).
// The time column must increase with a constant interval of 1/rate within
// 1 ppm; the first timestamp becomes the series start.
std::vector<TimeSeries> read_recording_csv(std::istream& is, double sample_rate_hz,
                                           const std::string& source = "<stream>");

void write_manifest(std::ostream& os, const TakeManifest& manifest);
TakeManifest read_manifest(std::istream& is, const std::string& source = "<stream>");

struct LoadedTake {
  std::filesystem::path manifest_path;
  TakeManifest manifest;
  MultiChannelRecording recording;
  CalibrationRecord calibration;
};

// Reads the manifest, every rate-group file and the calibration recordings.
// Errors are prefixed with the manifest path.
LoadedTake load_take(const std::filesystem::path& manifest_path);

// Directories expand to their take_*.json files (sorted); files pass through.
std::vector<std::filesystem::path> expand_manifest_args(const std::vector<std::string>& args);

// Loads every manifest; all must share one joint (ConfigMismatch otherwise).
std::vector<LoadedTake> load_takes(const std::vector<std::filesystem::path>& manifests);

// Features of all loaded takes; take index in the table = position in `takes`.
FeatureTable session_features(const std::vector<LoadedTake>& takes, ModelConfig config,
                              const PreprocessOptions& opts = {});

// "take_v060_k0" for 60 deg/s, take index 0.
std::string take_stem(double velocity_deg_s, int take_index);

// Writes calibration files, per-take CSVs and manifests, the session spec (spec.json)
// and per-take ground truth (<stem>_truth.csv). Returns the manifest paths in
// session order.
std::vector<std::filesystem::path> write_session(const std::filesystem::path& dir,
                                                 const SyntheticSession& session);

}  // namespace myotorque
