#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <utility>
#include <vector>

#include "myotorque/preprocess.hpp"
#include "myotorque/timeseries.hpp"

namespace myotorque {

// Synthetic isokinetic sessions with known ground truth.
//
// Each take: hold at the rest angle (mid-range), move to the upper range
// limit, perform `swings_per_take` full down/up swings at constant |velocity|,
// return to rest, hold. Velocity changes are blended with a raised-cosine over
// `turnaround_blend_s`, which leaves the piecewise-linear path unchanged
// outside the blend windows.
//
// Torque model (linear, noise-free part):
//   T = passive_stiffness * angle + damping * velocity + sum_i w_i * a_i(t)
// where a_i = co_contraction + s_k * peak_i * sin(pi * phase) for the agonists
// of the current half-swing (antagonists get antagonist_fraction of that
// bump) and s_k = max(0, 1 + rep_amplitude_jitter * z_k) is the effort of
// swing k, z being normal draws standardized within the take.
//
// FMG (200 Hz): offset_i + gain * lowpass(a_i) + slow sinusoidal drift + noise.
// EMG (2000 Hz): gain_v * a_i(t) * carrier_i(t) + noise, the carrier being
// unit-RMS white noise band-limited to 20-500 Hz, the noise scaled to emg_snr.

struct NoiseSpec {
  double emg_snr = 4.0;            // RMS amplitude ratio signal / additive noise
  double fmg_noise_std = 0.01;     // normalized_force
  double torque_noise_std = 1.0;   // N m
  double angle_noise_std = 0.05;   // deg
};

struct TorqueCoefficients {
  double passive_stiffness = 0.0;  // N m / deg   (c1)
  double damping = 0.0;            // N m s / deg (c2)
  std::map<Muscle, double> muscle_weights;  // N m per unit activation (w_i)
};

struct ActivationSpec {
  double co_contraction = 0.05;
  double antagonist_fraction = 0.15;
  std::map<Muscle, double> peak;  // per-muscle agonist peak
};

struct FmgSpec {
  double gain = 1.0;
  double lowpass_hz = 10.0;
  double drift_amplitude = 0.02;
  double drift_hz = 0.05;
  std::map<Muscle, double> offsets;
};

struct TimingSpec {
  double hold_s = 0.5;
  double turnaround_blend_s = 0.010;
  double calibration_s = 10.0;
  double initial_angle_s = 1.0;
};

struct SessionSpec {
  Joint joint = Joint::knee;
  std::vector<double> velocities_deg_s;
  int swings_per_take = 5;
  int takes_per_velocity = 3;
  std::pair<double, double> angle_range_deg{0.0, 90.0};
  NoiseSpec noise;
  double rep_amplitude_jitter = 0.25;
  std::uint64_t seed = 42;

  TorqueCoefficients torque;
  ActivationSpec activation;
  FmgSpec fmg;
  double emg_gain_v = 1e-3;
  double angle_offset_deg = 0.0;
  TimingSpec timing;
};

// Pinned defaults; identical to config/synth_<joint>.json.
SessionSpec default_session_spec(Joint joint);

// Throws InvalidSpec naming the offending field.
void validate(const SessionSpec& spec);

// JSON. Missing fields keep the joint's defaults; unknown or ill-typed fields
// raise InvalidSpec with the field path.
SessionSpec read_session_spec(std::istream& is);
void write_session_spec(std::ostream& os, const SessionSpec& spec);

struct GroundTruth {
  TimeSeries true_torque;  // newton_meters, 200 Hz
  TimeSeries true_angle;   // degrees, calibrated coordinate
  TimeSeries true_velocity;
  std::map<Muscle, TimeSeries> true_activations;
  std::vector<std::size_t> true_segment_boundaries;  // 200 Hz indices of the swing maxima
  std::vector<double> swing_effort;
  TorqueCoefficients model_coefficients;
};

struct SyntheticTake {
  MultiChannelRecording recording;  // angle/torque/EMG at 2000 Hz, FMG at 200 Hz
  GroundTruth truth;
  double velocity_deg_s = 0.0;
  int take_index = 0;
};

struct CalibrationSession {
  MultiChannelRecording standing;  // FMG channels, 200 Hz
  TimeSeries initial_angle;        // angle at the zero position, 2000 Hz
};

struct SyntheticSession {
  SessionSpec spec;
  CalibrationSession calibration;
  std::vector<SyntheticTake> takes;
};

// Deterministic per (spec.seed, velocity, take_index); independent of any
// other take.
SyntheticTake generate_take(const SessionSpec& spec, double velocity_deg_s, int take_index);
CalibrationSession generate_calibration(const SessionSpec& spec);

// |velocities| * takes_per_velocity takes, velocity-major order.
SyntheticSession generate_session(const SessionSpec& spec);

// Analytic angle/velocity of the take schedule (calibrated coordinate).
struct MotionProfile {
  double duration_s = 0.0;
  double angle(double t) const;
  double velocity(double t) const;

  struct Phase {
    double start;
    double end;
    double start_angle;
    double rate;  // deg/s, 0 for holds
    int swing;    // swing index, -1 outside swings
  };
  std::vector<Phase> phases;
  double blend_s = 0.0;
};

MotionProfile motion_profile(const SessionSpec& spec, double velocity_deg_s);

}  // namespace myotorque
