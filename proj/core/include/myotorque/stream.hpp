#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "myotorque/filters.hpp"
#include "myotorque/model_bundle.hpp"

namespace myotorque {

// Online counterpart of the batch pipeline for 200 Hz frames. Zero-phase
// filtering is impossible causally, so the angle passes a single-pass
// low-pass (same order and cutoff as the batch velocity filter) and the
// velocity is its backward difference. EMG configurations are not supported.

struct StreamFrame {
  double time_s = 0.0;
  double angle_deg = 0.0;
  std::vector<double> fmg;  // muscles_for(joint) order; ignored for baseline
};

struct StreamEstimate {
  double time_s = 0.0;
  double torque_nm = 0.0;
  double std_nm = 0.0;  // predictive, including observation noise
};

class StreamEstimator {
 public:
  static constexpr double kFrameRateHz = 200.0;

  // ConfigMismatch for EMG bundles. Calibration defaults to the bundle's.
  explicit StreamEstimator(ModelBundle bundle, std::optional<CalibrationRecord> calibration = {});

  StreamEstimate push(const StreamFrame& frame);
  void reset();

  std::size_t fmg_channels() const;
  const ModelBundle& bundle() const { return bundle_; }

 private:
  ModelBundle bundle_;
  CalibrationRecord calibration_;
  CausalFilter angle_filter_;
  bool primed_ = false;
  double last_filtered_ = 0.0;
  // (K + noise I)^-1, lower triangle only. One symmetric product per frame
  // instead of a triangular solve against the factor.
  Eigen::MatrixXd inverse_covariance_;
};

struct StreamStats {
  std::size_t lines = 0;
  std::size_t estimates = 0;
  std::size_t malformed = 0;
};

// Line protocol: each input line `time_s, angle_deg[, fmg_<m>...]` yields
// `time_s,torque_estimate_nm,predictive_std_nm`. A `#` comment line stating the
// causal processing precedes the first estimate. Blank lines, `#` lines and a
// header line starting with `time_s` are skipped; malformed lines are
// reported to `err` and skipped.
StreamStats run_stream(std::istream& in, std::ostream& out, std::ostream& err,
                       StreamEstimator& estimator);

}  // namespace myotorque
