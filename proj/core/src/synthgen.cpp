#include "myotorque/synthgen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <string>

#include <json.hpp>

#include "csv_util.hpp"
#include "myotorque/error.hpp"
#include "myotorque/filters.hpp"

namespace myotorque {
namespace {

using nlohmann::json;

constexpr double kPi = std::numbers::pi;
constexpr double kFmgRate = 200.0;
constexpr double kFastRate = 2000.0;

// ---------------------------------------------------------------- randomness

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

// mt19937_64's output sequence is fixed by the standard; the std
// distributions are not, so uniform and normal draws are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {  // (0, 1)
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double phi = 2.0 * kPi * uniform();
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Independent streams per take and per purpose.
enum class Stream : std::uint64_t {
  effort = 1,
  drift_phase = 2,
  fmg_noise = 3,
  carrier = 4,
  emg_noise = 5,
  torque_noise = 6,
  angle_noise = 7,
  calibration = 8,
};

std::uint64_t take_seed(std::uint64_t seed, double velocity, int take_index) {
  return mix(mix(seed, std::bit_cast<std::uint64_t>(velocity)),
             static_cast<std::uint64_t>(static_cast<std::int64_t>(take_index)));
}

Rng stream_rng(std::uint64_t base, Stream s, std::uint64_t sub = 0) {
  return Rng(mix(mix(base, static_cast<std::uint64_t>(s)), sub));
}

// ------------------------------------------------------------------- spec

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
  throw Error(ErrorCode::InvalidSpec, "field '" + path + "': " + why);
}

bool contains(const std::vector<Muscle>& ms, Muscle m) {
  return std::find(ms.begin(), ms.end(), m) != ms.end();
}

void check_muscle_map(const std::map<Muscle, double>& values, Joint joint, const std::string& path,
                      bool nonnegative) {
  const auto& ms = muscles_for(joint);
  for (Muscle m : ms) {
    auto it = values.find(m);
    if (it == values.end()) bad_field(path + "." + std::string(to_string(m)), "missing");
    if (!std::isfinite(it->second)) bad_field(path + "." + std::string(to_string(m)), "not finite");
    if (nonnegative && it->second < 0.0) {
      bad_field(path + "." + std::string(to_string(m)), "must be >= 0");
    }
  }
  for (const auto& [m, v] : values) {
    if (!contains(ms, m)) {
      bad_field(path + "." + std::string(to_string(m)), "muscle not used by this joint");
    }
  }
}

void check_nonneg(double v, const std::string& path) {
  if (!std::isfinite(v) || v < 0.0) bad_field(path, "must be finite and >= 0");
}

void check_positive(double v, const std::string& path) {
  if (!std::isfinite(v) || v <= 0.0) bad_field(path, "must be finite and > 0");
}

// Typed field access with the field path in every diagnostic.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) bad_field(path_.empty() ? "<root>" : path_, "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : obj_.items()) {
      if (!ok.count(k)) bad_field(join(k), "unknown field");
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const json& raw(const char* key) const { return obj_.at(key); }

  void number(const char* key, double& out) const {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number()) bad_field(join(key), "expected a number");
    out = v.get<double>();
  }

  void integer(const char* key, int& out) const {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_number_integer()) bad_field(join(key), "expected an integer");
    out = v.get<int>();
  }

  void muscle_map(const char* key, std::map<Muscle, double>& out) const {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_object()) bad_field(join(key), "expected an object keyed by muscle");
    for (const auto& [name, val] : v.items()) {
      Muscle m;
      try {
        m = muscle_from_string(name);
      } catch (const Error&) {
        bad_field(join(key) + "." + name, "unknown muscle");
      }
      if (!val.is_number()) bad_field(join(key) + "." + name, "expected a number");
      out[m] = val.get<double>();
    }
  }

 private:
  const json& obj_;
  std::string path_;
};

json muscle_map_json(const std::map<Muscle, double>& values) {
  json j = json::object();
  for (const auto& [m, v] : values) j[std::string(to_string(m))] = v;
  return j;
}

// ------------------------------------------------------------- kinematics

double blended_angle(double s, double u, double w, double tau, double start_angle) {
  // Velocity u -> w via raised cosine over [0, tau]; integral from the
  // blend start.
  return start_angle + u * s + 0.5 * (w - u) * (s - tau / kPi * std::sin(kPi * s / tau));
}

double blended_velocity(double s, double u, double w, double tau) {
  return u + 0.5 * (w - u) * (1.0 - std::cos(kPi * s / tau));
}

// Activation of muscle m given the phase and swing effort.
struct ActivationModel {
  Joint joint;
  ActivationSpec spec;
  std::vector<double> effort;  // per swing

  // Rising angle: knee extension, ankle plantarflexion.
  static bool rising_agonist(Joint joint, Muscle m) {
    if (joint == Joint::knee) return m == Muscle::RF || m == Muscle::VM || m == Muscle::VL;
    return m == Muscle::GM || m == Muscle::GL;
  }

  double operator()(const MotionProfile& p, Muscle m, double t) const {
    double a = spec.co_contraction;
    const auto it = std::upper_bound(p.phases.begin(), p.phases.end(), t,
                                     [](double v, const MotionProfile::Phase& ph) { return v < ph.start; });
    if (it == p.phases.begin()) return a;
    const auto& ph = *std::prev(it);
    if (ph.rate == 0.0 || t >= ph.end) return a;
    const double s = ph.swing >= 0 ? effort[static_cast<std::size_t>(ph.swing)] : 1.0;
    const double bump = s * spec.peak.at(m) * std::sin(kPi * (t - ph.start) / (ph.end - ph.start));
    const bool agonist = (ph.rate > 0.0) == rising_agonist(joint, m);
    return a + (agonist ? bump : spec.antagonist_fraction * bump);
  }
};

std::vector<double> band_limited_carrier(std::size_t n, Rng& rng) {
  std::vector<double> white(n);
  for (auto& v : white) v = rng.normal();
  const auto band = design_butterworth_bandpass(4, 20.0, 500.0, kFastRate);
  auto c = sosfilt(band.sections, white);
  double ss = 0.0;
  for (double v : c) ss += v * v;
  const double rms = std::sqrt(ss / static_cast<double>(n));
  for (auto& v : c) v /= rms;
  return c;
}

double rms(const std::vector<double>& v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  return v.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(v.size()));
}

std::size_t sample_count(double duration_s, double rate) {
  return static_cast<std::size_t>(std::floor(duration_s * rate + 1e-9)) + 1;
}

}  // namespace

// ----------------------------------------------------------------- profile

double MotionProfile::angle(double t) const {
  if (phases.empty()) return 0.0;
  t = std::clamp(t, 0.0, duration_s);
  const double half = 0.5 * blend_s;
  std::size_t k = 0;
  while (k + 1 < phases.size() && t >= phases[k + 1].start) ++k;
  // Inside a blend window around the boundary at phases[k].start or phases[k+1].start.
  if (half > 0.0) {
    if (k > 0 && t < phases[k].start + half) {
      const auto& prev = phases[k - 1];
      const double b = phases[k].start;
      const double a0 = phases[k].start_angle - prev.rate * half;
      return blended_angle(t - (b - half), prev.rate, phases[k].rate, blend_s, a0);
    }
    if (k + 1 < phases.size() && t > phases[k + 1].start - half) {
      const double b = phases[k + 1].start;
      const double a0 = phases[k + 1].start_angle - phases[k].rate * half;
      return blended_angle(t - (b - half), phases[k].rate, phases[k + 1].rate, blend_s, a0);
    }
  }
  return phases[k].start_angle + phases[k].rate * (t - phases[k].start);
}

double MotionProfile::velocity(double t) const {
  if (phases.empty() || t < 0.0 || t > duration_s) return 0.0;
  const double half = 0.5 * blend_s;
  std::size_t k = 0;
  while (k + 1 < phases.size() && t >= phases[k + 1].start) ++k;
  if (half > 0.0) {
    if (k > 0 && t < phases[k].start + half) {
      const double b = phases[k].start;
      return blended_velocity(t - (b - half), phases[k - 1].rate, phases[k].rate, blend_s);
    }
    if (k + 1 < phases.size() && t > phases[k + 1].start - half) {
      const double b = phases[k + 1].start;
      return blended_velocity(t - (b - half), phases[k].rate, phases[k + 1].rate, blend_s);
    }
  }
  return phases[k].rate;
}

MotionProfile motion_profile(const SessionSpec& spec, double v) {
  const auto [lo, hi] = spec.angle_range_deg;
  const double rest = 0.5 * (lo + hi);
  const double span = hi - lo;
  MotionProfile p;
  p.blend_s = spec.timing.turnaround_blend_s;
  double t = 0.0;
  auto push = [&](double duration, double from, double rate, int swing) {
    p.phases.push_back({t, t + duration, from, rate, swing});
    t += duration;
  };
  push(spec.timing.hold_s, rest, 0.0, -1);
  push((hi - rest) / v, rest, v, -1);
  for (int k = 0; k < spec.swings_per_take; ++k) {
    push(span / v, hi, -v, k);
    push(span / v, lo, v, k);
  }
  push((hi - rest) / v, hi, -v, -1);
  push(spec.timing.hold_s, rest, 0.0, -1);
  p.duration_s = t;
  return p;
}

// ------------------------------------------------------------------- spec

SessionSpec default_session_spec(Joint joint) {
  SessionSpec s;
  s.joint = joint;
  s.swings_per_take = 5;
  s.takes_per_velocity = 3;
  s.seed = 42;
  s.rep_amplitude_jitter = 0.25;
  s.noise = NoiseSpec{};
  s.emg_gain_v = 1e-3;
  s.timing = TimingSpec{};
  s.activation.co_contraction = 0.05;
  s.activation.antagonist_fraction = 0.15;
  s.fmg.gain = 1.0;
  s.fmg.lowpass_hz = 10.0;
  s.fmg.drift_amplitude = 0.02;
  s.fmg.drift_hz = 0.05;
  if (joint == Joint::knee) {
    s.velocities_deg_s = {60.0, 90.0, 120.0, 150.0};
    s.angle_range_deg = {0.0, 90.0};
    s.angle_offset_deg = 3.0;
    s.torque.passive_stiffness = 0.3;
    s.torque.damping = 0.05;
    s.torque.muscle_weights = {{Muscle::BF, -50.0}, {Muscle::RF, 40.0}, {Muscle::ST, -50.0},
                               {Muscle::VM, 40.0},  {Muscle::VL, 40.0}};
    s.activation.peak = {{Muscle::BF, 0.7}, {Muscle::RF, 0.6}, {Muscle::ST, 0.6},
                         {Muscle::VM, 0.8}, {Muscle::VL, 0.8}};
    s.fmg.offsets = {{Muscle::BF, 0.40}, {Muscle::RF, 0.55}, {Muscle::ST, 0.35},
                     {Muscle::VM, 0.60}, {Muscle::VL, 0.50}};
  } else {
    s.velocities_deg_s = {30.0, 60.0, 90.0, 120.0};
    s.angle_range_deg = {-20.0, 25.0};
    s.angle_offset_deg = -2.0;
    s.torque.passive_stiffness = 0.4;
    s.torque.damping = 0.03;
    s.torque.muscle_weights = {{Muscle::TA, -40.0}, {Muscle::GM, 35.0}, {Muscle::GL, 30.0}};
    s.activation.peak = {{Muscle::TA, 0.7}, {Muscle::GM, 0.8}, {Muscle::GL, 0.6}};
    s.fmg.offsets = {{Muscle::TA, 0.45}, {Muscle::GM, 0.50}, {Muscle::GL, 0.40}};
  }
  return s;
}

void validate(const SessionSpec& s) {
  if (s.velocities_deg_s.empty()) bad_field("velocities_deg_s", "must not be empty");
  for (double v : s.velocities_deg_s) check_positive(v, "velocities_deg_s");
  if (s.swings_per_take < 1) bad_field("swings_per_take", "must be >= 1");
  if (s.takes_per_velocity < 1) bad_field("takes_per_velocity", "must be >= 1");
  const auto [lo, hi] = s.angle_range_deg;
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    bad_field("angle_range_deg", "expected finite [min, max] with min < max");
  }
  check_positive(s.noise.emg_snr, "noise.emg_snr");
  check_nonneg(s.noise.fmg_noise_std, "noise.fmg_noise_std");
  check_nonneg(s.noise.torque_noise_std, "noise.torque_noise_std");
  check_nonneg(s.noise.angle_noise_std, "noise.angle_noise_std");
  check_nonneg(s.rep_amplitude_jitter, "rep_amplitude_jitter");
  if (!std::isfinite(s.torque.passive_stiffness)) bad_field("torque.passive_stiffness", "not finite");
  if (!std::isfinite(s.torque.damping)) bad_field("torque.damping", "not finite");
  check_muscle_map(s.torque.muscle_weights, s.joint, "torque.muscle_weights", false);
  check_nonneg(s.activation.co_contraction, "activation.co_contraction");
  check_nonneg(s.activation.antagonist_fraction, "activation.antagonist_fraction");
  check_muscle_map(s.activation.peak, s.joint, "activation.peak", true);
  if (!std::isfinite(s.fmg.gain)) bad_field("fmg.gain", "not finite");
  check_positive(s.fmg.lowpass_hz, "fmg.lowpass_hz");
  if (s.fmg.lowpass_hz >= 0.5 * kFmgRate) bad_field("fmg.lowpass_hz", "must be below 100 Hz");
  check_nonneg(s.fmg.drift_amplitude, "fmg.drift_amplitude");
  check_nonneg(s.fmg.drift_hz, "fmg.drift_hz");
  check_muscle_map(s.fmg.offsets, s.joint, "fmg.offsets", false);
  check_positive(s.emg_gain_v, "emg_gain_v");
  if (!std::isfinite(s.angle_offset_deg)) bad_field("angle_offset_deg", "not finite");
  check_nonneg(s.timing.hold_s, "timing.hold_s");
  check_nonneg(s.timing.turnaround_blend_s, "timing.turnaround_blend_s");
  check_positive(s.timing.calibration_s, "timing.calibration_s");
  check_positive(s.timing.initial_angle_s, "timing.initial_angle_s");
  // Every phase must outlast the blend so that blends never overlap.
  const double vmax = *std::max_element(s.velocities_deg_s.begin(), s.velocities_deg_s.end());
  const double shortest_motion = 0.5 * (hi - lo) / vmax;
  const double shortest = s.timing.hold_s > 0.0 ? std::min(shortest_motion, s.timing.hold_s)
                                                 : shortest_motion;
  if (s.timing.turnaround_blend_s >= shortest) {
    bad_field("timing.turnaround_blend_s", "must be shorter than every motion phase and hold");
  }
}

SessionSpec read_session_spec(std::istream& is) {
  json root;
  try {
    root = json::parse(is);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("malformed spec file: ") + e.what());
  }
  Reader r(root, "");
  r.allow({"joint", "velocities_deg_s", "swings_per_take", "takes_per_velocity", "angle_range_deg",
           "noise", "rep_amplitude_jitter", "seed", "torque", "activation", "fmg", "emg_gain_v",
           "angle_offset_deg", "timing"});
  if (!r.has("joint") || !r.raw("joint").is_string()) bad_field("joint", "expected \"knee\" or \"ankle\"");
  Joint joint;
  try {
    joint = joint_from_string(r.raw("joint").get<std::string>());
  } catch (const Error&) {
    bad_field("joint", "expected \"knee\" or \"ankle\"");
  }
  SessionSpec s = default_session_spec(joint);

  if (r.has("velocities_deg_s")) {
    const json& v = r.raw("velocities_deg_s");
    if (!v.is_array()) bad_field("velocities_deg_s", "expected an array of numbers");
    s.velocities_deg_s.clear();
    for (const auto& x : v) {
      if (!x.is_number()) bad_field("velocities_deg_s", "expected an array of numbers");
      s.velocities_deg_s.push_back(x.get<double>());
    }
  }
  r.integer("swings_per_take", s.swings_per_take);
  r.integer("takes_per_velocity", s.takes_per_velocity);
  if (r.has("angle_range_deg")) {
    const json& v = r.raw("angle_range_deg");
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      bad_field("angle_range_deg", "expected [min, max]");
    }
    s.angle_range_deg = {v[0].get<double>(), v[1].get<double>()};
  }
  if (r.has("noise")) {
    Reader n(r.raw("noise"), "noise");
    n.allow({"emg_snr", "fmg_noise_std", "torque_noise_std", "angle_noise_std"});
    n.number("emg_snr", s.noise.emg_snr);
    n.number("fmg_noise_std", s.noise.fmg_noise_std);
    n.number("torque_noise_std", s.noise.torque_noise_std);
    n.number("angle_noise_std", s.noise.angle_noise_std);
  }
  r.number("rep_amplitude_jitter", s.rep_amplitude_jitter);
  if (r.has("seed")) {
    const json& v = r.raw("seed");
    if (!v.is_number_unsigned()) {
      bad_field("seed", "expected a non-negative integer");
    }
    s.seed = v.get<std::uint64_t>();
  }
  if (r.has("torque")) {
    Reader t(r.raw("torque"), "torque");
    t.allow({"passive_stiffness", "damping", "muscle_weights"});
    t.number("passive_stiffness", s.torque.passive_stiffness);
    t.number("damping", s.torque.damping);
    t.muscle_map("muscle_weights", s.torque.muscle_weights);
  }
  if (r.has("activation")) {
    Reader a(r.raw("activation"), "activation");
    a.allow({"co_contraction", "antagonist_fraction", "peak"});
    a.number("co_contraction", s.activation.co_contraction);
    a.number("antagonist_fraction", s.activation.antagonist_fraction);
    a.muscle_map("peak", s.activation.peak);
  }
  if (r.has("fmg")) {
    Reader f(r.raw("fmg"), "fmg");
    f.allow({"gain", "lowpass_hz", "drift_amplitude", "drift_hz", "offsets"});
    f.number("gain", s.fmg.gain);
    f.number("lowpass_hz", s.fmg.lowpass_hz);
    f.number("drift_amplitude", s.fmg.drift_amplitude);
    f.number("drift_hz", s.fmg.drift_hz);
    f.muscle_map("offsets", s.fmg.offsets);
  }
  r.number("emg_gain_v", s.emg_gain_v);
  r.number("angle_offset_deg", s.angle_offset_deg);
  if (r.has("timing")) {
    Reader t(r.raw("timing"), "timing");
    t.allow({"hold_s", "turnaround_blend_s", "calibration_s", "initial_angle_s"});
    t.number("hold_s", s.timing.hold_s);
    t.number("turnaround_blend_s", s.timing.turnaround_blend_s);
    t.number("calibration_s", s.timing.calibration_s);
    t.number("initial_angle_s", s.timing.initial_angle_s);
  }
  validate(s);
  return s;
}

void write_session_spec(std::ostream& os, const SessionSpec& s) {
  json j;
  j["joint"] = std::string(to_string(s.joint));
  j["velocities_deg_s"] = s.velocities_deg_s;
  j["swings_per_take"] = s.swings_per_take;
  j["takes_per_velocity"] = s.takes_per_velocity;
  j["angle_range_deg"] = {s.angle_range_deg.first, s.angle_range_deg.second};
  j["noise"] = {{"emg_snr", s.noise.emg_snr},
                {"fmg_noise_std", s.noise.fmg_noise_std},
                {"torque_noise_std", s.noise.torque_noise_std},
                {"angle_noise_std", s.noise.angle_noise_std}};
  j["rep_amplitude_jitter"] = s.rep_amplitude_jitter;
  j["seed"] = s.seed;
  j["torque"] = {{"passive_stiffness", s.torque.passive_stiffness},
                 {"damping", s.torque.damping},
                 {"muscle_weights", muscle_map_json(s.torque.muscle_weights)}};
  j["activation"] = {{"co_contraction", s.activation.co_contraction},
                     {"antagonist_fraction", s.activation.antagonist_fraction},
                     {"peak", muscle_map_json(s.activation.peak)}};
  j["fmg"] = {{"gain", s.fmg.gain},
              {"lowpass_hz", s.fmg.lowpass_hz},
              {"drift_amplitude", s.fmg.drift_amplitude},
              {"drift_hz", s.fmg.drift_hz},
              {"offsets", muscle_map_json(s.fmg.offsets)}};
  j["emg_gain_v"] = s.emg_gain_v;
  j["angle_offset_deg"] = s.angle_offset_deg;
  j["timing"] = {{"hold_s", s.timing.hold_s},
                 {"turnaround_blend_s", s.timing.turnaround_blend_s},
                 {"calibration_s", s.timing.calibration_s},
                 {"initial_angle_s", s.timing.initial_angle_s}};
  os << j.dump(2) << '\n';
}

// --------------------------------------------------------------- generation

SyntheticTake generate_take(const SessionSpec& spec, double velocity, int take_index) {
  validate(spec);
  if (std::find(spec.velocities_deg_s.begin(), spec.velocities_deg_s.end(), velocity) ==
      spec.velocities_deg_s.end()) {
    throw Error(ErrorCode::InvalidSpec, "velocity " + std::to_string(velocity) + " is not in velocities_deg_s");
  }
  if (take_index < 0 || take_index >= spec.takes_per_velocity) {
    throw Error(ErrorCode::InvalidSpec, "take_index out of range [0, takes_per_velocity)");
  }

  const std::uint64_t base = take_seed(spec.seed, velocity, take_index);
  const auto& muscles = muscles_for(spec.joint);
  const MotionProfile profile = motion_profile(spec, velocity);

  ActivationModel act{spec.joint, spec.activation, {}};
  {
    // Draws are standardized within the take, so the efforts have sample
    // std exactly rep_amplitude_jitter (given two or more swings).
    Rng rng = stream_rng(base, Stream::effort);
    std::vector<double> z(static_cast<std::size_t>(spec.swings_per_take));
    for (auto& x : z) x = rng.normal();
    if (z.size() > 1) {
      const auto stats = fit_stats(z);
      for (auto& x : z) x = stats.apply(x);
    }
    for (double x : z) act.effort.push_back(std::max(0.0, 1.0 + spec.rep_amplitude_jitter * x));
  }

  const std::size_t n_slow = sample_count(profile.duration_s, kFmgRate);
  const std::size_t n_fast = sample_count(profile.duration_s, kFastRate);
  const auto& w = spec.torque.muscle_weights;

  auto torque_at = [&](double t, double* angle_out, double* vel_out,
                       std::map<Muscle, double>* acts_out) {
    const double th = profile.angle(t);
    const double om = profile.velocity(t);
    double tq = spec.torque.passive_stiffness * th + spec.torque.damping * om;
    for (Muscle m : muscles) {
      const double a = act(profile, m, t);
      tq += w.at(m) * a;
      if (acts_out) (*acts_out)[m] = a;
    }
    if (angle_out) *angle_out = th;
    if (vel_out) *vel_out = om;
    return tq;
  };

  // 200 Hz ground truth.
  std::vector<double> true_torque(n_slow), true_angle(n_slow), true_vel(n_slow);
  std::map<Muscle, std::vector<double>> true_act;
  for (Muscle m : muscles) true_act[m].resize(n_slow);
  for (std::size_t i = 0; i < n_slow; ++i) {
    const double t = static_cast<double>(i) / kFmgRate;
    std::map<Muscle, double> a;
    true_torque[i] = torque_at(t, &true_angle[i], &true_vel[i], &a);
    for (Muscle m : muscles) true_act[m][i] = a[m];
  }

  // Upper turnarounds: the first opens swing 0, the last closes the final swing.
  std::vector<std::size_t> boundaries;
  for (const auto& ph : profile.phases) {
    if (ph.rate < 0.0 && ph.start_angle == spec.angle_range_deg.second) {
      boundaries.push_back(static_cast<std::size_t>(std::lround(ph.start * kFmgRate)));
    }
  }

  MultiChannelRecording rec;
  rec.meta["joint"] = std::string(to_string(spec.joint));
  rec.meta["velocity_deg_s"] = csv::format_double(velocity);
  rec.meta["take_index"] = std::to_string(take_index);

  // 2000 Hz channels.
  std::vector<double> angle_fast(n_fast), torque_fast(n_fast);
  std::map<Muscle, std::vector<double>> act_fast;
  for (Muscle m : muscles) act_fast[m].resize(n_fast);
  {
    Rng an = stream_rng(base, Stream::angle_noise);
    Rng tn = stream_rng(base, Stream::torque_noise);
    for (std::size_t i = 0; i < n_fast; ++i) {
      const double t = static_cast<double>(i) / kFastRate;
      double th = 0.0;
      std::map<Muscle, double> a;
      const double tq = torque_at(t, &th, nullptr, &a);
      angle_fast[i] = th + spec.angle_offset_deg + spec.noise.angle_noise_std * an.normal();
      torque_fast[i] = tq + spec.noise.torque_noise_std * tn.normal();
      for (Muscle m : muscles) act_fast[m][i] = a[m];
    }
  }
  rec.add(TimeSeries(channel::kAngle, Unit::degrees, kFastRate, 0.0, std::move(angle_fast)));
  rec.add(TimeSeries(channel::kTorque, Unit::newton_meters, kFastRate, 0.0, std::move(torque_fast)));

  for (Muscle m : muscles) {
    const auto mi = static_cast<std::uint64_t>(m);
    Rng cr = stream_rng(base, Stream::carrier, mi);
    const auto carrier = band_limited_carrier(n_fast, cr);
    std::vector<double> emg(n_fast);
    const auto& a = act_fast[m];
    for (std::size_t i = 0; i < n_fast; ++i) emg[i] = spec.emg_gain_v * a[i] * carrier[i];
    const double noise_std = rms(emg) / spec.noise.emg_snr;
    Rng nr = stream_rng(base, Stream::emg_noise, mi);
    for (auto& v : emg) v += noise_std * nr.normal();
    rec.add(TimeSeries(channel::emg(m), Unit::volts, kFastRate, 0.0, std::move(emg)));
  }

  // 200 Hz FMG.
  const auto lp = design_butterworth_lowpass(2, spec.fmg.lowpass_hz, kFmgRate);
  for (Muscle m : muscles) {
    const auto mi = static_cast<std::uint64_t>(m);
    Rng pr = stream_rng(base, Stream::drift_phase, mi);
    const double phase = 2.0 * kPi * pr.uniform();
    Rng nr = stream_rng(base, Stream::fmg_noise, mi);
    CausalFilter f(lp);
    const auto& a = true_act[m];
    f.prime(a.front());
    std::vector<double> fmg(n_slow);
    for (std::size_t i = 0; i < n_slow; ++i) {
      const double t = static_cast<double>(i) / kFmgRate;
      fmg[i] = spec.fmg.offsets.at(m) + spec.fmg.gain * f.step(a[i]) +
               spec.fmg.drift_amplitude * std::sin(2.0 * kPi * spec.fmg.drift_hz * t + phase) +
               spec.noise.fmg_noise_std * nr.normal();
    }
    rec.add(TimeSeries(channel::fmg(m), Unit::normalized_force, kFmgRate, 0.0, std::move(fmg)));
  }

  std::map<Muscle, TimeSeries> truth_act;
  for (Muscle m : muscles) {
    truth_act.emplace(m, TimeSeries("activation_" + std::string(to_string(m)), Unit::dimensionless,
                                    kFmgRate, 0.0, std::move(true_act[m])));
  }

  GroundTruth truth{
      TimeSeries("true_torque_nm", Unit::newton_meters, kFmgRate, 0.0, std::move(true_torque)),
      TimeSeries("true_angle_deg", Unit::degrees, kFmgRate, 0.0, std::move(true_angle)),
      TimeSeries("true_velocity_deg_s", Unit::degrees_per_second, kFmgRate, 0.0, std::move(true_vel)),
      std::move(truth_act),
      std::move(boundaries),
      act.effort,
      spec.torque};

  return SyntheticTake{std::move(rec), std::move(truth), velocity, take_index};
}

CalibrationSession generate_calibration(const SessionSpec& spec) {
  validate(spec);
  const std::uint64_t base = mix(spec.seed, static_cast<std::uint64_t>(Stream::calibration));
  MultiChannelRecording standing;
  standing.meta["joint"] = std::string(to_string(spec.joint));
  const std::size_t n = sample_count(spec.timing.calibration_s, kFmgRate);
  for (Muscle m : muscles_for(spec.joint)) {
    Rng rng = stream_rng(base, Stream::fmg_noise, static_cast<std::uint64_t>(m));
    std::vector<double> v(n);
    for (auto& x : v) x = spec.fmg.offsets.at(m) + spec.noise.fmg_noise_std * rng.normal();
    standing.add(TimeSeries(channel::fmg(m), Unit::normalized_force, kFmgRate, 0.0, std::move(v)));
  }
  Rng rng = stream_rng(base, Stream::angle_noise);
  std::vector<double> a(sample_count(spec.timing.initial_angle_s, kFastRate));
  for (auto& x : a) x = spec.angle_offset_deg + spec.noise.angle_noise_std * rng.normal();
  return CalibrationSession{std::move(standing),
                            TimeSeries(channel::kAngle, Unit::degrees, kFastRate, 0.0, std::move(a))};
}

SyntheticSession generate_session(const SessionSpec& spec) {
  validate(spec);
  SyntheticSession session{spec, generate_calibration(spec), {}};
  session.takes.reserve(spec.velocities_deg_s.size() * static_cast<std::size_t>(spec.takes_per_velocity));
  for (double v : spec.velocities_deg_s) {
    for (int k = 0; k < spec.takes_per_velocity; ++k) session.takes.push_back(generate_take(spec, v, k));
  }
  return session;
}

}  // namespace myotorque
