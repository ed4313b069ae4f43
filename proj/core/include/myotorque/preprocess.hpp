#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "myotorque/timeseries.hpp"

namespace myotorque {

enum class Joint { ankle, knee };
enum class Muscle { TA, GM, GL, BF, RF, ST, VM, VL };
enum class ModelConfig { baseline, emg, fmg };

std::string_view to_string(Joint joint);
std::string_view to_string(Muscle muscle);
std::string_view to_string(ModelConfig config);
Joint joint_from_string(std::string_view name);
Muscle muscle_from_string(std::string_view name);
ModelConfig config_from_string(std::string_view name);

inline constexpr Muscle kAllMuscles[] = {Muscle::TA, Muscle::GM, Muscle::GL, Muscle::BF,
                                         Muscle::RF, Muscle::ST, Muscle::VM, Muscle::VL};

// Primary muscles per joint, in feature-column order:
// ankle (TA, GM, GL); knee (BF, RF, ST, VM, VL).
const std::vector<Muscle>& muscles_for(Joint joint);

// 2 for baseline (angle, velocity), 2 + |muscles_for(joint)| otherwise.
std::size_t feature_dimension(Joint joint, ModelConfig config);

// Column names in contract order: angle, velocity, then muscles.
std::vector<std::string> feature_columns(Joint joint, ModelConfig config);

// Channel labels used throughout recordings and files.
namespace channel {
inline constexpr const char* kAngle = "angle_deg";
inline constexpr const char* kTorque = "torque_nm";
std::string emg(Muscle m);
std::string fmg(Muscle m);
}  // namespace channel

struct CalibrationRecord {
  std::map<Muscle, double> fmg_offsets;
  double angle_offset = 0.0;
};

struct SegmentBoundaries {
  std::vector<std::size_t> extrema_indices;
  std::vector<bool> extremum_is_max;  // parallel to extrema_indices
  // Half-open [start, end) sample ranges, one per full motion cycle.
  std::vector<std::pair<std::size_t, std::size_t>> segments;
};

enum class SegmentAnchor { maxima, minima };

struct SegmentationOptions {
  double min_separation_s = 0.25;
  double min_prominence_frac = 0.10;
  SegmentAnchor anchor = SegmentAnchor::maxima;
};

// Design matrix on a single 200 Hz timeline. Segment id 0 marks rows outside
// any complete cycle; ids are unique across a concatenated table.
struct FeatureTable {
  Joint joint = Joint::knee;
  ModelConfig config = ModelConfig::baseline;
  std::vector<std::string> column_names;
  Eigen::MatrixXd rows;
  Eigen::VectorXd targets;
  std::vector<int> segment_of_row;
  std::vector<int> take_of_row;
  std::vector<double> time_s;
  std::vector<NormalizationStats> column_stats;
  std::optional<NormalizationStats> target_stats;

  std::size_t size() const { return static_cast<std::size_t>(rows.rows()); }
  std::size_t dimension() const { return static_cast<std::size_t>(rows.cols()); }
};

// Subtracts per-muscle FMG offsets and the angle offset. Only FMG channels
// that are present need an offset.
MultiChannelRecording apply_calibration(const MultiChannelRecording& recording,
                                        const CalibrationRecord& calib);

// Offsets are the sample means of each fmg_<muscle> channel in the standing
// recording and of the initial-position angle recording.
CalibrationRecord compute_calibration(const MultiChannelRecording& standing_recording,
                                      const TimeSeries& initial_angle_recording);

struct EnvelopeOptions {
  int order = 4;
  double band_low_hz = 20.0;
  double band_high_hz = 500.0;
  double lowpass_hz = 6.0;
};

// Band-pass, rectify, low-pass; both filters applied zero-phase.
TimeSeries emg_envelope(const TimeSeries& raw, const EnvelopeOptions& opts = {});

struct VelocityOptions {
  int order = 2;
  double cutoff_hz = 20.0;
};

// Zero-phase low-pass of the angle (the "filtered angle") and its gradient.
TimeSeries filtered_angle(const TimeSeries& angle, const VelocityOptions& opts = {});
TimeSeries joint_velocity(const TimeSeries& angle, const VelocityOptions& opts = {});

// Alternating extrema with hysteresis (prominence) and a minimum spacing;
// one segment between each pair of consecutive anchor extrema.
SegmentBoundaries segment_motions(const TimeSeries& filtered_angle,
                                  const SegmentationOptions& opts = {});
SegmentBoundaries segment_motions(const TimeSeries& filtered_angle, double min_separation_s,
                                  double min_prominence_frac);

struct PreprocessOptions {
  EnvelopeOptions envelope;
  VelocityOptions velocity;
  SegmentationOptions segmentation;
};

FeatureTable build_features(const MultiChannelRecording& recording, Joint joint,
                            ModelConfig config, const CalibrationRecord& calib,
                            const PreprocessOptions& opts = {});

// Appends `part` to `table`, renumbering its non-zero segment ids past the
// existing ones and tagging rows with take index `take`.
void append_rows(FeatureTable& table, const FeatureTable& part, int take);

struct TakeInput {
  const MultiChannelRecording* recording = nullptr;
  const CalibrationRecord* calibration = nullptr;
  int take = 0;
  std::string name;  // error context
};

// build_features per take, concatenated with append_rows. Errors carry the
// take name.
FeatureTable build_session_features(const std::vector<TakeInput>& takes, Joint joint,
                                    ModelConfig config, const PreprocessOptions& opts = {});

FeatureTable select_rows(const FeatureTable& table, const std::vector<std::size_t>& rows);

// CSV with columns take, segment, time_s, <feature columns>, torque_nm.
// Doubles are written with 17 significant digits so reading is bit-exact.
void write_feature_table(std::ostream& os, const FeatureTable& table);
FeatureTable read_feature_table(std::istream& is, Joint joint, ModelConfig config);

}  // namespace myotorque
