#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "myotorque/timeseries.hpp"

namespace myotorque {

enum class FilterKind { lowpass, bandpass };

struct FilterDesign {
  FilterKind kind = FilterKind::lowpass;
  int order = 0;
  std::vector<double> cutoffs_hz;  // one edge for lowpass, two for bandpass
  double sample_rate_hz = 0.0;
};

// One second-order section, transposed direct form II. a[0] is always 1.
// First-order sections carry b[2] = a[2] = 0.
struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 3> a{1.0, 0.0, 0.0};
  int order = 2;
};

// Designed filters keep both the cascade used for filtering and the expanded
// transfer-function polynomials (a[0] = 1) for inspection.
struct IirCoefficients {
  std::vector<double> feedforward_b;
  std::vector<double> feedback_a;
  FilterDesign design;
  std::vector<Biquad> sections;

  int filter_order() const;
};

// Digital Butterworth low-pass: analog prototype + bilinear transform with
// pre-warping, so the single-pass magnitude at cutoff_hz is exactly 1/sqrt(2).
IirCoefficients design_butterworth_lowpass(int order, double cutoff_hz, double sample_rate_hz);

// Analog low-pass prototype of `order` mapped to band-pass, then bilinear.
// The digital filter has order 2 * order. Unit gain at the (pre-warped)
// geometric band centre.
IirCoefficients design_butterworth_bandpass(int order, double low_hz, double high_hz,
                                            double sample_rate_hz);

std::complex<double> frequency_response(const IirCoefficients& coeffs, double freq_hz);
double magnitude_response(const IirCoefficients& coeffs, double freq_hz);

// Roots of the feedback polynomial, collected section by section.
std::vector<std::complex<double>> poles(const IirCoefficients& coeffs);

// Edge extension used by filtfilt: 3 * (max(len(b), len(a)) - 1).
std::size_t filtfilt_pad_length(const IirCoefficients& coeffs);

// Single causal pass through the cascade from a zero state.
std::vector<double> sosfilt(std::span<const Biquad> sections, std::span<const double> x);

// Forward-backward filtering with odd-reflection padding and steady-state
// initial conditions, averaged with the backward-forward pass so the result
// commutes with time reversal. Zero phase; magnitude is the squared
// single-pass magnitude. Requires more than 3 * filtfilt_pad_length samples.
std::vector<double> filtfilt(const IirCoefficients& coeffs, std::span<const double> x);
TimeSeries filtfilt(const IirCoefficients& coeffs, const TimeSeries& series);

TimeSeries rectify(const TimeSeries& series);

// Central differences inside, one-sided at both ends, scaled by the sample
// rate. Degrees become degrees_per_second; other units become dimensionless.
TimeSeries gradient(const TimeSeries& series);

// Sample-by-sample cascade with persistent state for causal processing.
class CausalFilter {
 public:
  explicit CausalFilter(const IirCoefficients& coeffs);

  // Sets the state to the steady state reached under a constant input x0.
  void prime(double x0);
  void reset();
  double step(double x);

 private:
  std::vector<Biquad> sections_;
  std::vector<std::array<double, 2>> state_;
};

}  // namespace myotorque
