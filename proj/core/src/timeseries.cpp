#include "myotorque/timeseries.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <utility>

namespace myotorque {

namespace {

constexpr std::array<std::pair<Unit, std::string_view>, 6> kUnitNames{{
    {Unit::degrees, "degrees"},
    {Unit::degrees_per_second, "degrees_per_second"},
    {Unit::newton_meters, "newton_meters"},
    {Unit::volts, "volts"},
    {Unit::normalized_force, "normalized_force"},
    {Unit::dimensionless, "dimensionless"},
}};

void check_finite(const std::string& label, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::NonFiniteValue,
                  "channel '" + label + "' sample " + std::to_string(i) + " is not finite");
    }
  }
}

}  // namespace

std::string_view to_string(Unit unit) {
  for (const auto& [u, name] : kUnitNames) {
    if (u == unit) return name;
  }
  return "dimensionless";
}

Unit unit_from_string(std::string_view name) {
  for (const auto& [u, n] : kUnitNames) {
    if (n == name) return u;
  }
  throw Error(ErrorCode::ParseError, "unknown unit '" + std::string(name) + "'");
}

TimeSeries::TimeSeries(std::string label, Unit unit, double sample_rate_hz, double start_time_s,
                       std::vector<double> values)
    : label_(std::move(label)),
      unit_(unit),
      sample_rate_hz_(sample_rate_hz),
      start_time_s_(start_time_s),
      values_(std::move(values)) {
  if (!(sample_rate_hz_ > 0.0) || !std::isfinite(sample_rate_hz_)) {
    throw Error(ErrorCode::InvalidArgument, "channel '" + label_ + "' needs a positive sample rate");
  }
  if (!std::isfinite(start_time_s_)) {
    throw Error(ErrorCode::NonFiniteValue, "channel '" + label_ + "' has a non-finite start time");
  }
  check_finite(label_, values_);
}

double TimeSeries::end_time_s() const {
  if (values_.empty()) {
    throw Error(ErrorCode::DegenerateSeries, "channel '" + label_ + "' is empty");
  }
  return time_at(values_.size() - 1);
}

TimeSeries TimeSeries::with_values(std::vector<double> values) const {
  return TimeSeries(label_, unit_, sample_rate_hz_, start_time_s_, std::move(values));
}

TimeSeries TimeSeries::with_values(std::vector<double> values, Unit unit) const {
  return TimeSeries(label_, unit, sample_rate_hz_, start_time_s_, std::move(values));
}

TimeSeries TimeSeries::relabeled(std::string label) const {
  return TimeSeries(std::move(label), unit_, sample_rate_hz_, start_time_s_, values_);
}

NormalizationStats::NormalizationStats(double mean, double std_dev) : mean_(mean), std_dev_(std_dev) {
  if (!std::isfinite(mean_)) {
    throw Error(ErrorCode::NonFiniteValue, "normalization mean is not finite");
  }
  if (!(std_dev_ > 0.0) || !std::isfinite(std_dev_)) {
    throw Error(ErrorCode::ZeroVariance, "normalization std_dev must be positive and finite");
  }
}

const TimeSeries& MultiChannelRecording::at(const std::string& label) const {
  auto it = channels.find(label);
  if (it == channels.end()) {
    throw Error(ErrorCode::MissingChannel, "recording has no channel '" + label + "'");
  }
  return it->second;
}

void MultiChannelRecording::add(TimeSeries series) {
  std::string label = series.label();
  if (!channels.emplace(label, std::move(series)).second) {
    throw Error(ErrorCode::InvalidArgument, "duplicate channel '" + label + "'");
  }
}

void MultiChannelRecording::replace(TimeSeries series) {
  std::string label = series.label();
  channels.insert_or_assign(label, std::move(series));
}

TimeSeries resample_linear(const TimeSeries& series, double target_rate_hz,
                           std::size_t target_count, std::optional<double> target_start_s) {
  if (series.size() < 2) {
    throw Error(ErrorCode::DegenerateSeries,
                "channel '" + series.label() + "' needs at least 2 samples to interpolate");
  }
  if (!(target_rate_hz > 0.0) || target_count == 0) {
    throw Error(ErrorCode::InvalidArgument, "target grid needs a positive rate and count");
  }
  const double start = target_start_s.value_or(series.start_time_s());
  const double end = start + static_cast<double>(target_count - 1) / target_rate_hz;
  const double src_rate = series.sample_rate_hz();
  const std::size_t n = series.size();
  const double last_pos = static_cast<double>(n - 1);
  // Half a nanosample of slack absorbs rounding in grid arithmetic.
  constexpr double kSlack = 1e-9;
  const double first_pos = (start - series.start_time_s()) * src_rate;
  const double final_pos = (end - series.start_time_s()) * src_rate;
  if (first_pos < -kSlack || final_pos > last_pos + kSlack) {
    throw Error(ErrorCode::TargetOutsideSupport,
                "target grid [" + std::to_string(start) + ", " + std::to_string(end) +
                    "] s exceeds channel '" + series.label() + "' span [" +
                    std::to_string(series.start_time_s()) + ", " +
                    std::to_string(series.end_time_s()) + "] s");
  }

  const auto& src = series.values();
  std::vector<double> out(target_count);
  for (std::size_t i = 0; i < target_count; ++i) {
    const double t = start + static_cast<double>(i) / target_rate_hz;
    const double pos = std::clamp((t - series.start_time_s()) * src_rate, 0.0, last_pos);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    if (lo >= n - 1) lo = n - 2;
    const double frac = pos - static_cast<double>(lo);
    out[i] = src[lo] + frac * (src[lo + 1] - src[lo]);
  }
  return TimeSeries(series.label(), series.unit(), target_rate_hz, start, std::move(out));
}

NormalizationStats fit_stats(std::span<const double> values) {
  if (values.size() < 2) {
    throw Error(ErrorCode::DegenerateSeries, "need at least 2 samples to estimate variance");
  }
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) {
    throw Error(ErrorCode::ZeroVariance, "all samples are identical");
  }
  return NormalizationStats(mean, sd);
}

TimeSeries standardize(const TimeSeries& series, const NormalizationStats& stats) {
  std::vector<double> out(series.size());
  std::transform(series.values().begin(), series.values().end(), out.begin(),
                 [&](double v) { return stats.apply(v); });
  return series.with_values(std::move(out), Unit::dimensionless);
}

TimeSeries destandardize(const TimeSeries& series, const NormalizationStats& stats, Unit unit) {
  std::vector<double> out(series.size());
  std::transform(series.values().begin(), series.values().end(), out.begin(),
                 [&](double v) { return stats.invert(v); });
  return series.with_values(std::move(out), unit);
}

}  // namespace myotorque
