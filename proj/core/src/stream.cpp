#include "myotorque/stream.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "csv_util.hpp"
#include "myotorque/error.hpp"
#include "myotorque/eval.hpp"

namespace myotorque {

namespace {

const ModelBundle& checked(const ModelBundle& b) {
  if (b.config == ModelConfig::emg) {
    throw Error(ErrorCode::ConfigMismatch, "streaming supports baseline and fmg models only");
  }
  if (!b.model.target_stats) throw Error(ErrorCode::InvalidArgument, "model has no target statistics");
  return b;
}

}  // namespace

StreamEstimator::StreamEstimator(ModelBundle bundle, std::optional<CalibrationRecord> calibration)
    : bundle_(std::move(bundle)),
      calibration_(calibration ? *calibration : checked(bundle_).calibration.value_or(CalibrationRecord{})),
      angle_filter_(design_butterworth_lowpass(bundle_.preprocess.velocity.order,
                                               bundle_.preprocess.velocity.cutoff_hz, kFrameRateHz)) {
  checked(bundle_);
  const auto& L = bundle_.model.cholesky_lower;
  inverse_covariance_ = Eigen::MatrixXd::Identity(L.rows(), L.cols());
  L.triangularView<Eigen::Lower>().solveInPlace(inverse_covariance_);
  L.triangularView<Eigen::Lower>().transpose().solveInPlace(inverse_covariance_);
}

std::size_t StreamEstimator::fmg_channels() const {
  return bundle_.config == ModelConfig::fmg ? muscles_for(bundle_.joint).size() : 0;
}

void StreamEstimator::reset() {
  angle_filter_.reset();
  primed_ = false;
  last_filtered_ = 0.0;
}

StreamEstimate StreamEstimator::push(const StreamFrame& frame) {
  const auto& muscles = muscles_for(bundle_.joint);
  if (bundle_.config == ModelConfig::fmg && frame.fmg.size() != muscles.size()) {
    throw Error(ErrorCode::DimensionMismatch, "frame has " + std::to_string(frame.fmg.size()) +
                                                  " FMG values, model needs " +
                                                  std::to_string(muscles.size()));
  }
  const double angle = frame.angle_deg - calibration_.angle_offset;
  if (!primed_) {
    angle_filter_.prime(angle);
    last_filtered_ = angle;
    primed_ = true;
  }
  const double filtered = angle_filter_.step(angle);
  const double velocity = (filtered - last_filtered_) * kFrameRateHz;
  last_filtered_ = filtered;

  const auto d = static_cast<Eigen::Index>(bundle_.model.dimension());
  Eigen::MatrixXd z(1, d);
  z(0, 0) = filtered;
  z(0, 1) = velocity;
  if (bundle_.config == ModelConfig::fmg) {
    for (std::size_t i = 0; i < muscles.size(); ++i) {
      const auto it = calibration_.fmg_offsets.find(muscles[i]);
      z(0, static_cast<Eigen::Index>(2 + i)) = frame.fmg[i] - (it == calibration_.fmg_offsets.end() ? 0.0 : it->second);
    }
  }
  const auto& model = bundle_.model;
  const Eigen::VectorXd k = cross_kernel(model.train_inputs, standardize_rows(z, model.input_stats), model.hyper).col(0);
  const double mean = k.dot(model.alpha);
  const Eigen::VectorXd pk = inverse_covariance_.selfadjointView<Eigen::Lower>() * k;
  const double variance = std::max(0.0, model.hyper.prior_variance() - k.dot(pk));
  const auto& ts = *model.target_stats;
  return {frame.time_s, ts.invert(mean), std::sqrt(variance + model.hyper.noise_variance()) * ts.std_dev()};
}

StreamStats run_stream(std::istream& in, std::ostream& out, std::ostream& err, StreamEstimator& est) {
  StreamStats stats;
  const std::size_t n_fmg = est.fmg_channels();
  const std::size_t n_all = muscles_for(est.bundle().joint).size();
  std::string line;
  bool header_written = false;
  while (std::getline(in, line)) {
    ++stats.lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#' || line.rfind("time_s", 0) == 0) continue;
    StreamFrame frame;
    try {
      const auto fields = csv::split_csv(line);
      // Baseline models accept frames with or without the FMG columns.
      if (fields.size() != 2 + n_fmg && fields.size() != 2 + n_all) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(stats.lines) + ": expected " + std::to_string(2 + n_fmg) + " fields, got " +
                                               std::to_string(fields.size()));
      }
      frame.time_s = csv::parse_number<double>(fields[0], stats.lines);
      frame.angle_deg = csv::parse_number<double>(fields[1], stats.lines);
      for (std::size_t i = 0; i < n_fmg; ++i) frame.fmg.push_back(csv::parse_number<double>(fields[2 + i], stats.lines));
      const bool finite = std::isfinite(frame.time_s) && std::isfinite(frame.angle_deg) &&
                          std::all_of(frame.fmg.begin(), frame.fmg.end(), [](double v) { return std::isfinite(v); });
      if (!finite) throw Error(ErrorCode::NonFiniteValue, "line " + std::to_string(stats.lines) + ": non-finite value");
    } catch (const Error& e) {
      ++stats.malformed;
      err << e.detail() << '\n';
      continue;
    }
    const auto estimate = est.push(frame);
    if (!header_written) {
      out << "# time_s,torque_estimate_nm,predictive_std_nm; causal single-pass filtering, "
             "not zero-phase: estimates lag the batch pipeline by the filter group delay\n";
      header_written = true;
    }
    out << csv::format_double(estimate.time_s) << ',' << csv::format_double(estimate.torque_nm) << ','
        << csv::format_double(estimate.std_nm) << '\n';
    out.flush();
    ++stats.estimates;
  }
  return stats;
}

}  // namespace myotorque
