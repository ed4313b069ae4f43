#include "myotorque/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace myotorque {

namespace {

using cplx = std::complex<double>;

// Poles of the unit-cutoff analog Butterworth prototype, left half plane.
std::vector<cplx> butterworth_prototype(int order) {
  std::vector<cplx> out;
  out.reserve(static_cast<std::size_t>(order));
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
    out.push_back(std::polar(1.0, theta));
  }
  return out;
}

double prewarp(double freq_hz, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * freq_hz / fs); }

cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

// Groups digital poles into conjugate pairs (complex) or pairs of real poles.
// A single leftover real pole becomes a first-order section.
std::vector<Biquad> pair_poles(std::vector<cplx> zpoles) {
  constexpr double kImagTol = 1e-12;
  std::vector<Biquad> sections;
  std::vector<double> reals;
  for (const cplx& p : zpoles) {
    if (std::abs(p.imag()) <= kImagTol) {
      reals.push_back(p.real());
    } else if (p.imag() > 0.0) {
      Biquad bq;
      bq.a = {1.0, -2.0 * p.real(), std::norm(p)};
      sections.push_back(bq);
    }
  }
  std::sort(reals.begin(), reals.end());
  std::size_t i = 0;
  for (; i + 1 < reals.size(); i += 2) {
    Biquad bq;
    bq.a = {1.0, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]};
    sections.push_back(bq);
  }
  if (i < reals.size()) {
    Biquad bq;
    bq.order = 1;
    bq.a = {1.0, -reals[i], 0.0};
    sections.push_back(bq);
  }
  return sections;
}

cplx section_response(const Biquad& s, cplx z_inv) {
  const cplx num = s.b[0] + z_inv * (s.b[1] + z_inv * s.b[2]);
  const cplx den = s.a[0] + z_inv * (s.a[1] + z_inv * s.a[2]);
  return num / den;
}

std::vector<double> convolve(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> out(x.size() + y.size() - 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) out[i + j] += x[i] * y[j];
  }
  return out;
}

void expand(IirCoefficients& c) {
  std::vector<double> b{1.0};
  std::vector<double> a{1.0};
  for (const Biquad& s : c.sections) {
    const auto len = static_cast<std::ptrdiff_t>(s.order) + 1;
    b = convolve(b, std::vector<double>(s.b.begin(), s.b.begin() + len));
    a = convolve(a, std::vector<double>(s.a.begin(), s.a.begin() + len));
  }
  c.feedforward_b = std::move(b);
  c.feedback_a = std::move(a);
}

// Transposed-direct-form-II state for a unit step held forever.
std::vector<std::array<double, 2>> steady_state(std::span<const Biquad> sections) {
  std::vector<std::array<double, 2>> zi(sections.size());
  double level = 1.0;
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const Biquad& s = sections[k];
    const double gain = (s.b[0] + s.b[1] + s.b[2]) / (s.a[0] + s.a[1] + s.a[2]);
    const double y = gain * level;
    const double z2 = s.b[2] * level - s.a[2] * y;
    const double z1 = s.b[1] * level - s.a[1] * y + z2;
    zi[k] = {z1, z2};
    level = y;
  }
  return zi;
}

void run_cascade(std::span<const Biquad> sections, std::vector<std::array<double, 2>>& state,
                 std::vector<double>& data) {
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const Biquad& s = sections[k];
    double z1 = state[k][0];
    double z2 = state[k][1];
    for (double& v : data) {
      const double x = v;
      const double y = s.b[0] * x + z1;
      z1 = s.b[1] * x - s.a[1] * y + z2;
      z2 = s.b[2] * x - s.a[2] * y;
      v = y;
    }
    state[k] = {z1, z2};
  }
}

void check_rate(double fs) {
  if (!(fs > 0.0) || !std::isfinite(fs)) {
    throw Error(ErrorCode::InvalidCutoff, "sample rate must be positive");
  }
}

}  // namespace

int IirCoefficients::filter_order() const {
  int n = 0;
  for (const Biquad& s : sections) n += s.order;
  return n;
}

IirCoefficients design_butterworth_lowpass(int order, double cutoff_hz, double sample_rate_hz) {
  if (order <= 0) throw Error(ErrorCode::InvalidOrder, "filter order must be positive");
  check_rate(sample_rate_hz);
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate_hz / 2.0)) {
    throw Error(ErrorCode::InvalidCutoff, "cutoff " + std::to_string(cutoff_hz) +
                                              " Hz must lie in (0, Nyquist) for fs " +
                                              std::to_string(sample_rate_hz) + " Hz");
  }
  const double wc = prewarp(cutoff_hz, sample_rate_hz);
  std::vector<cplx> zpoles;
  for (const cplx& p : butterworth_prototype(order)) zpoles.push_back(bilinear(wc * p, sample_rate_hz));

  IirCoefficients c;
  c.design = {FilterKind::lowpass, order, {cutoff_hz}, sample_rate_hz};
  c.sections = pair_poles(std::move(zpoles));
  for (Biquad& s : c.sections) {
    // Zeros at z = -1; unit gain at DC per section.
    if (s.order == 2) {
      const double g = (s.a[0] + s.a[1] + s.a[2]) / 4.0;
      s.b = {g, 2.0 * g, g};
    } else {
      const double g = (s.a[0] + s.a[1]) / 2.0;
      s.b = {g, g, 0.0};
    }
  }
  expand(c);
  return c;
}

IirCoefficients design_butterworth_bandpass(int order, double low_hz, double high_hz,
                                            double sample_rate_hz) {
  if (order <= 0) throw Error(ErrorCode::InvalidOrder, "filter order must be positive");
  check_rate(sample_rate_hz);
  if (!(low_hz > 0.0) || !(low_hz < high_hz) || !(high_hz < sample_rate_hz / 2.0)) {
    throw Error(ErrorCode::InvalidBand, "band [" + std::to_string(low_hz) + ", " +
                                            std::to_string(high_hz) +
                                            "] Hz must satisfy 0 < low < high < Nyquist");
  }
  const double wl = prewarp(low_hz, sample_rate_hz);
  const double wh = prewarp(high_hz, sample_rate_hz);
  const double bw = wh - wl;
  const double w0sq = wl * wh;

  std::vector<cplx> zpoles;
  for (const cplx& p : butterworth_prototype(order)) {
    const cplx half = p * bw / 2.0;
    const cplx root = std::sqrt(half * half - w0sq);
    zpoles.push_back(bilinear(half + root, sample_rate_hz));
    zpoles.push_back(bilinear(half - root, sample_rate_hz));
  }

  IirCoefficients c;
  c.design = {FilterKind::bandpass, order, {low_hz, high_hz}, sample_rate_hz};
  c.sections = pair_poles(std::move(zpoles));
  const double w0_digital = 2.0 * std::atan(std::sqrt(w0sq) / (2.0 * sample_rate_hz));
  const cplx z_inv = std::polar(1.0, -w0_digital);
  for (Biquad& s : c.sections) {
    // One zero at z = +1 and one at z = -1 per section.
    s.b = {1.0, 0.0, -1.0};
    const double g = std::abs(section_response(s, z_inv));
    for (double& v : s.b) v /= g;
  }
  expand(c);
  return c;
}

std::complex<double> frequency_response(const IirCoefficients& coeffs, double freq_hz) {
  const double w = 2.0 * std::numbers::pi * freq_hz / coeffs.design.sample_rate_hz;
  const cplx z_inv = std::polar(1.0, -w);
  cplx h{1.0, 0.0};
  for (const Biquad& s : coeffs.sections) h *= section_response(s, z_inv);
  return h;
}

double magnitude_response(const IirCoefficients& coeffs, double freq_hz) {
  return std::abs(frequency_response(coeffs, freq_hz));
}

std::vector<std::complex<double>> poles(const IirCoefficients& coeffs) {
  std::vector<cplx> out;
  for (const Biquad& s : coeffs.sections) {
    if (s.order == 1) {
      out.emplace_back(-s.a[1], 0.0);
      continue;
    }
    const cplx disc = std::sqrt(cplx(s.a[1] * s.a[1] - 4.0 * s.a[2], 0.0));
    out.push_back((-s.a[1] + disc) / 2.0);
    out.push_back((-s.a[1] - disc) / 2.0);
  }
  return out;
}

std::size_t filtfilt_pad_length(const IirCoefficients& coeffs) {
  const std::size_t len = std::max(coeffs.feedforward_b.size(), coeffs.feedback_a.size());
  return 3 * (len - 1);
}

std::vector<double> sosfilt(std::span<const Biquad> sections, std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  std::vector<std::array<double, 2>> state(sections.size(), {0.0, 0.0});
  run_cascade(sections, state, out);
  return out;
}

std::vector<double> filtfilt(const IirCoefficients& coeffs, std::span<const double> x) {
  const std::size_t pad = filtfilt_pad_length(coeffs);
  const std::size_t n = x.size();
  if (n <= 3 * pad) {
    throw Error(ErrorCode::SeriesTooShort, "filtfilt needs more than " + std::to_string(3 * pad) +
                                               " samples, got " + std::to_string(n));
  }
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i > 0; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 2 - i]);

  const auto zi = steady_state(coeffs.sections);
  auto scaled = [&](double level) {
    auto z = zi;
    for (auto& s : z) {
      s[0] *= level;
      s[1] *= level;
    }
    return z;
  };

  auto forward_backward = [&](std::vector<double> v) {
    auto state = scaled(v.front());
    run_cascade(coeffs.sections, state, v);
    std::reverse(v.begin(), v.end());
    state = scaled(v.front());
    run_cascade(coeffs.sections, state, v);
    std::reverse(v.begin(), v.end());
    return v;
  };
  // Start-up transients make forward-backward and backward-forward differ
  // near the edges; their mean commutes exactly with time reversal.
  const auto fb = forward_backward(ext);
  std::reverse(ext.begin(), ext.end());
  auto bf = forward_backward(std::move(ext));
  std::reverse(bf.begin(), bf.end());

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * (fb[pad + i] + bf[pad + i]);
  return out;
}

TimeSeries filtfilt(const IirCoefficients& coeffs, const TimeSeries& series) {
  return series.with_values(filtfilt(coeffs, std::span<const double>(series.values())));
}

TimeSeries rectify(const TimeSeries& series) {
  std::vector<double> out(series.values());
  for (double& v : out) v = std::abs(v);
  return series.with_values(std::move(out));
}

TimeSeries gradient(const TimeSeries& series) {
  const std::size_t n = series.size();
  if (n < 3) {
    throw Error(ErrorCode::SeriesTooShort, "gradient needs at least 3 samples");
  }
  const auto& x = series.values();
  const double fs = series.sample_rate_hz();
  std::vector<double> d(n);
  d[0] = (x[1] - x[0]) * fs;
  d[n - 1] = (x[n - 1] - x[n - 2]) * fs;
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (x[i + 1] - x[i - 1]) * fs / 2.0;
  const Unit unit = series.unit() == Unit::degrees ? Unit::degrees_per_second : Unit::dimensionless;
  return series.with_values(std::move(d), unit);
}

CausalFilter::CausalFilter(const IirCoefficients& coeffs)
    : sections_(coeffs.sections), state_(coeffs.sections.size(), {0.0, 0.0}) {}

void CausalFilter::prime(double x0) {
  state_ = steady_state(sections_);
  for (auto& s : state_) {
    s[0] *= x0;
    s[1] *= x0;
  }
}

void CausalFilter::reset() { std::fill(state_.begin(), state_.end(), std::array<double, 2>{0.0, 0.0}); }

double CausalFilter::step(double x) {
  double v = x;
  for (std::size_t k = 0; k < sections_.size(); ++k) {
    const Biquad& s = sections_[k];
    auto& z = state_[k];
    const double y = s.b[0] * v + z[0];
    z[0] = s.b[1] * v - s.a[1] * y + z[1];
    z[1] = s.b[2] * v - s.a[2] * y;
    v = y;
  }
  return v;
}

}  // namespace myotorque
