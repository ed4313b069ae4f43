#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "myotorque/error.hpp"

namespace myotorque {

enum class Unit {
  degrees,
  degrees_per_second,
  newton_meters,
  volts,
  normalized_force,
  dimensionless,
};

std::string_view to_string(Unit unit);
Unit unit_from_string(std::string_view name);

// Uniformly sampled channel. Sample i sits at start_time_s + i / sample_rate_hz.
// Values are always finite; construction rejects NaN/Inf and non-positive rates.
class TimeSeries {
 public:
  TimeSeries(std::string label, Unit unit, double sample_rate_hz, double start_time_s,
             std::vector<double> values);

  const std::string& label() const { return label_; }
  Unit unit() const { return unit_; }
  double sample_rate_hz() const { return sample_rate_hz_; }
  double start_time_s() const { return start_time_s_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double time_at(std::size_t i) const {
    return start_time_s_ + static_cast<double>(i) / sample_rate_hz_;
  }
  // Timestamp of the last sample; requires a non-empty series.
  double end_time_s() const;
  double operator[](std::size_t i) const { return values_[i]; }

  // Same metadata, new samples (validated).
  TimeSeries with_values(std::vector<double> values) const;
  TimeSeries with_values(std::vector<double> values, Unit unit) const;
  TimeSeries relabeled(std::string label) const;

 private:
  std::string label_;
  Unit unit_;
  double sample_rate_hz_;
  double start_time_s_;
  std::vector<double> values_;
};

class NormalizationStats {
 public:
  // Throws ZeroVariance unless std_dev is finite and > 0.
  NormalizationStats(double mean, double std_dev);

  double mean() const { return mean_; }
  double std_dev() const { return std_dev_; }

  double apply(double x) const { return (x - mean_) / std_dev_; }
  double invert(double z) const { return z * std_dev_ + mean_; }

  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;

 private:
  double mean_;
  double std_dev_;
};

// Channels keyed by label. Rates may differ between channels (FMG vs EMG).
struct MultiChannelRecording {
  std::map<std::string, TimeSeries> channels;
  std::map<std::string, std::string> meta;

  bool has(const std::string& label) const { return channels.count(label) != 0; }
  // Throws MissingChannel.
  const TimeSeries& at(const std::string& label) const;
  // Throws InvalidArgument on a duplicate label.
  void add(TimeSeries series);
  void replace(TimeSeries series);
};

// Linear interpolation onto `target_count` samples spaced 1/target_rate_hz
// apart beginning at target_start_s (defaults to the source start). The grid
// must lie inside the source span; there is no extrapolation.
TimeSeries resample_linear(const TimeSeries& series, double target_rate_hz,
                           std::size_t target_count,
                           std::optional<double> target_start_s = std::nullopt);

// Sample mean and (n-1) standard deviation.
NormalizationStats fit_stats(std::span<const double> values);

TimeSeries standardize(const TimeSeries& series, const NormalizationStats& stats);
TimeSeries destandardize(const TimeSeries& series, const NormalizationStats& stats, Unit unit);

}  // namespace myotorque
