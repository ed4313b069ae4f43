#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "myotorque/error.hpp"
#include "myotorque/eval.hpp"
#include "myotorque/synthgen.hpp"

using namespace myotorque;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Least-squares slope of y against t.
double fitted_slope(const std::vector<double>& t, const std::vector<double>& y) {
  const auto n = static_cast<double>(t.size());
  double mt = 0, my = 0;
  for (std::size_t i = 0; i < t.size(); ++i) mt += t[i], my += y[i];
  mt /= n;
  my /= n;
  double stt = 0, sty = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    stt += (t[i] - mt) * (t[i] - mt);
    sty += (t[i] - mt) * (y[i] - my);
  }
  return sty / stt;
}

SessionSpec quiet_spec(Joint joint) {
  SessionSpec s = default_session_spec(joint);
  s.rep_amplitude_jitter = 0.0;
  s.noise.fmg_noise_std = 0.0;
  s.noise.torque_noise_std = 0.0;
  s.noise.angle_noise_std = 0.0;
  s.fmg.drift_amplitude = 0.0;
  return s;
}

std::string spec_text(const SessionSpec& s) {
  std::ostringstream os;
  write_session_spec(os, s);
  return os.str();
}

std::string read_error(const std::string& json) {
  std::istringstream is(json);
  try {
    (void)read_session_spec(is);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidSpec);
    return e.what();
  }
  FAIL("expected InvalidSpec for " << json);
  return {};
}

}  // namespace

TEST_CASE("default sessions follow the protocol", "[synthgen]") {
  const auto knee = default_session_spec(Joint::knee);
  CHECK(knee.velocities_deg_s == std::vector<double>{60, 90, 120, 150});
  const auto ankle = default_session_spec(Joint::ankle);
  CHECK(ankle.velocities_deg_s == std::vector<double>{30, 60, 90, 120});
  for (const auto& s : {knee, ankle}) {
    CHECK(s.swings_per_take == 5);
    CHECK(s.takes_per_velocity == 3);
  }
  const auto session = generate_session(ankle);
  REQUIRE(session.takes.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(session.takes[i].velocity_deg_s == ankle.velocities_deg_s[i / 3]);
    CHECK(session.takes[i].take_index == static_cast<int>(i % 3));
  }
  CHECK(generate_session(knee).takes.size() == 12);
}

TEST_CASE("channels, rates and units", "[synthgen]") {
  const auto take = generate_take(default_session_spec(Joint::knee), 90.0, 1);
  const auto& r = take.recording;
  CHECK(r.at(channel::kAngle).sample_rate_hz() == 2000.0);
  CHECK(r.at(channel::kTorque).unit() == Unit::newton_meters);
  for (Muscle m : muscles_for(Joint::knee)) {
    CHECK(r.at(channel::emg(m)).sample_rate_hz() == 2000.0);
    CHECK(r.at(channel::emg(m)).unit() == Unit::volts);
    CHECK(r.at(channel::fmg(m)).sample_rate_hz() == 200.0);
    CHECK(r.at(channel::fmg(m)).unit() == Unit::normalized_force);
  }
  CHECK_FALSE(r.has("fmg_TA"));
  CHECK(take.truth.true_torque.sample_rate_hz() == 200.0);
  CHECK(r.meta.at("take_index") == "1");
}

TEST_CASE("generation is deterministic and order independent", "[synthgen]") {
  const auto spec = default_session_spec(Joint::ankle);
  const auto a = generate_take(spec, 60.0, 2);
  const auto b = generate_take(spec, 60.0, 2);
  for (const auto& [label, s] : a.recording.channels) CHECK(b.recording.at(label).values() == s.values());
  CHECK(a.truth.swing_effort == b.truth.swing_effort);

  const auto session = generate_session(spec);
  for (const auto& [label, s] : session.takes[5].recording.channels) CHECK(a.recording.at(label).values() == s.values());

  // Other takes and other seeds differ.
  const auto c = generate_take(spec, 60.0, 1);
  CHECK(c.recording.at("fmg_TA").values() != a.recording.at("fmg_TA").values());
  auto reseeded = spec;
  reseeded.seed = 43;
  CHECK(generate_take(reseeded, 60.0, 2).recording.at(channel::kTorque).values() !=
        a.recording.at(channel::kTorque).values());

  CHECK_THROWS_AS(generate_take(spec, 45.0, 0), Error);
  CHECK_THROWS_AS(generate_take(spec, 60.0, 3), Error);
}

TEST_CASE("true torque reconstructs from its components", "[synthgen]") {
  for (Joint joint : {Joint::ankle, Joint::knee}) {
    const auto spec = default_session_spec(joint);
    for (double v : spec.velocities_deg_s) {
      const auto take = generate_take(spec, v, 0);
      const auto& t = take.truth;
      const auto& c = t.model_coefficients;
      for (std::size_t i = 0; i < t.true_torque.size(); ++i) {
        double tq = c.passive_stiffness * t.true_angle[i] + c.damping * t.true_velocity[i];
        for (const auto& [m, a] : t.true_activations) {
          CHECK(a[i] >= 0.0);
          tq += c.muscle_weights.at(m) * a[i];
        }
        CHECK_THAT(t.true_torque[i], WithinAbs(tq, 1e-10));
      }
    }
  }
}

TEST_CASE("noise-free takes repeat every swing", "[synthgen]") {
  for (Joint joint : {Joint::ankle, Joint::knee}) {
    const auto spec = quiet_spec(joint);
    for (double v : spec.velocities_deg_s) {
      const auto take = generate_take(spec, v, 0);
      const auto& b = take.truth.true_segment_boundaries;
      REQUIRE(b.size() == 6);
      const double range = spec.angle_range_deg.second - spec.angle_range_deg.first;
      const auto period = static_cast<std::size_t>(std::lround(2.0 * range / v * 200.0));
      const auto& tq = take.truth.true_torque;
      const auto& measured = take.recording.at(channel::kTorque);
      INFO(to_string(joint) << " at " << v << " deg/s");
      for (int k = 2; k < 5; ++k) {
        for (std::size_t j = 0; j < period; ++j) {
          const std::size_t i1 = b[1] + j, ik = b[1] + static_cast<std::size_t>(k - 1) * period + j;
          CHECK_THAT(tq[ik], WithinAbs(tq[i1], 1e-9));
          CHECK_THAT(measured[10 * ik], WithinAbs(measured[10 * i1], 1e-9));
        }
      }
    }
  }
}

TEST_CASE("angle plateaus move at the nominal velocity", "[synthgen]") {
  for (Joint joint : {Joint::ankle, Joint::knee}) {
    const auto spec = default_session_spec(joint);
    for (double v : spec.velocities_deg_s) {
      const auto take = generate_take(spec, v, 1);
      const auto profile = motion_profile(spec, v);
      const auto& angle = take.recording.at(channel::kAngle);
      int checked = 0;
      for (const auto& ph : profile.phases) {
        if (ph.swing < 0 || ph.rate == 0.0) continue;
        const double len = ph.end - ph.start;
        std::vector<double> t, y;
        for (auto i = static_cast<std::size_t>(std::ceil((ph.start + 0.1 * len) * 2000.0));
             angle.time_at(i) < ph.end - 0.1 * len; ++i) {
          t.push_back(angle.time_at(i));
          y.push_back(angle[i]);
        }
        CHECK_THAT(std::abs(fitted_slope(t, y)), WithinRel(v, 0.01));
        ++checked;
      }
      CHECK(checked == 2 * spec.swings_per_take);
    }
  }
}

TEST_CASE("every take segments into its swings", "[synthgen]") {
  for (Joint joint : {Joint::ankle, Joint::knee}) {
    const auto session = generate_session(default_session_spec(joint));
    const auto calib = compute_calibration(session.calibration.standing, session.calibration.initial_angle);
    for (const auto& take : session.takes) {
      INFO(to_string(joint) << " " << take.velocity_deg_s << " deg/s take " << take.take_index);
      const auto& truth = take.truth.true_segment_boundaries;
      CHECK(truth.size() == 6);
      const auto table = build_features(take.recording, joint, ModelConfig::baseline, calib);
      std::vector<std::size_t> starts;
      for (std::size_t i = 0; i < table.size(); ++i) {
        const int s = table.segment_of_row[i];
        if (s != 0 && (i == 0 || table.segment_of_row[i - 1] != s)) starts.push_back(i);
      }
      REQUIRE(starts.size() == 5);
      for (std::size_t k = 0; k < 5; ++k) {
        const auto d = static_cast<long>(starts[k]) - static_cast<long>(truth[k]);
        CHECK(std::abs(d) <= 4);
      }
    }
  }
}

TEST_CASE("swing effort changes peak torque", "[synthgen][property]") {
  for (Joint joint : {Joint::ankle, Joint::knee}) {
    const auto spec = default_session_spec(joint);
    const auto session = generate_session(spec);
    for (const auto& take : session.takes) {
      const auto& b = take.truth.true_segment_boundaries;
      const auto& tq = take.truth.true_torque;
      std::vector<double> peaks;
      for (std::size_t k = 0; k + 1 < b.size(); ++k) {
        double p = 0.0;
        for (std::size_t i = b[k]; i < b[k + 1]; ++i) p = std::max(p, std::abs(tq[i]));
        peaks.push_back(p);
      }
      double mean = 0.0;
      for (double p : peaks) mean += p;
      mean /= static_cast<double>(peaks.size());
      const auto [lo, hi] = std::minmax_element(peaks.begin(), peaks.end());
      INFO(to_string(joint) << " " << take.velocity_deg_s << " deg/s take " << take.take_index);
      CHECK(*hi - *lo >= 0.5 * spec.rep_amplitude_jitter * mean);
      CHECK_THAT(fit_stats(take.truth.swing_effort).std_dev(), WithinRel(spec.rep_amplitude_jitter, 1e-12));
    }
  }
}

TEST_CASE("FMG follows the activation, raw EMG does not", "[synthgen]") {
  for (Joint joint : {Joint::ankle, Joint::knee}) {
    const auto spec = default_session_spec(joint);
    for (double v : {spec.velocities_deg_s.front(), spec.velocities_deg_s.back()}) {
      const auto take = generate_take(spec, v, 0);
      for (Muscle m : muscles_for(joint)) {
        INFO(to_string(joint) << " " << v << " deg/s " << to_string(m));
        const auto& act = take.truth.true_activations.at(m);
        CHECK(correlation(take.recording.at(channel::fmg(m)).values(), act.values()) >= 0.95);

        const auto& raw = take.recording.at(channel::emg(m));
        const auto act_fast = resample_linear(act, 2000.0, (act.size() - 1) * 10 + 1);
        const std::vector<double> raw_head(raw.values().begin(), raw.values().begin() + act_fast.size());
        CHECK(std::abs(correlation(raw_head, act_fast.values())) <= 0.05);

        const auto env = resample_linear(emg_envelope(raw), 200.0, act.size());
        CHECK(correlation(env.values(), act.values()) >= 0.9);
      }
    }
  }
}

TEST_CASE("without muscle torque the muscle signals add nothing", "[synthgen][ablation]") {
  SessionSpec spec = default_session_spec(Joint::knee);
  for (auto& [m, w] : spec.torque.muscle_weights) w = 0.0;
  spec.velocities_deg_s = {60.0, 120.0};
  spec.takes_per_velocity = 2;
  const auto session = generate_session(spec);
  const auto calib = compute_calibration(session.calibration.standing, session.calibration.initial_angle);
  GpOptions opts;
  opts.cap = 1000;
  opts.optimize_cap = 400;
  opts.optimizer.restarts = 3;
  std::map<ModelConfig, double> score;
  for (ModelConfig config : {ModelConfig::baseline, ModelConfig::fmg}) {
    std::vector<TakeInput> inputs;
    for (std::size_t i = 0; i < session.takes.size(); ++i) {
      inputs.push_back({&session.takes[i].recording, &calib, static_cast<int>(i), ""});
    }
    const auto table = build_session_features(inputs, spec.joint, config);
    score[config] = evaluate_cv(table, kfold_split(cv_units(table, FoldUnit::segment), 5, 42), opts).mse_normalized;
  }
  INFO("baseline " << score[ModelConfig::baseline] << ", fmg " << score[ModelConfig::fmg]);
  CHECK(score[ModelConfig::baseline] <= 1.2 * score[ModelConfig::fmg]);
}

TEST_CASE("calibration session carries the known offsets", "[synthgen]") {
  const auto spec = default_session_spec(Joint::knee);
  const auto cal = generate_calibration(spec);
  const auto& bf = cal.standing.at("fmg_BF");
  CHECK(bf.end_time_s() == spec.timing.calibration_s);
  const auto rec = compute_calibration(cal.standing, cal.initial_angle);
  for (const auto& [m, off] : spec.fmg.offsets) {
    CHECK_THAT(rec.fmg_offsets.at(m), WithinAbs(off, 3.0 * spec.noise.fmg_noise_std / std::sqrt(static_cast<double>(bf.size()))));
  }
  CHECK_THAT(rec.angle_offset, WithinAbs(spec.angle_offset_deg, 3.0 * spec.noise.angle_noise_std / std::sqrt(static_cast<double>(cal.initial_angle.size()))));
}

TEST_CASE("session spec JSON round trip and defaults", "[synthgen][spec]") {
  for (Joint joint : {Joint::ankle, Joint::knee}) {
    const auto spec = default_session_spec(joint);
    std::istringstream is(spec_text(spec));
    CHECK(spec_text(read_session_spec(is)) == spec_text(spec));

    // Missing fields keep the joint's defaults.
    std::istringstream minimal(std::string("{\"joint\": \"") + std::string(to_string(joint)) + "\"}");
    CHECK(spec_text(read_session_spec(minimal)) == spec_text(spec));

    const std::string path = std::string(MYOTORQUE_CONFIG_DIR) + "/synth_" + std::string(to_string(joint)) + ".json";
    std::ifstream file(path);
    REQUIRE(file.good());
    CHECK(spec_text(read_session_spec(file)) == spec_text(spec));
  }
}

TEST_CASE("malformed session specs name the field", "[synthgen][spec]") {
  CHECK_THAT(read_error(R"({"joint": "knee", "noise": {"emg_snr": "loud"}})"),
             Catch::Matchers::ContainsSubstring("noise.emg_snr"));
  CHECK_THAT(read_error(R"({"joint": "knee", "colour": 3})"), Catch::Matchers::ContainsSubstring("colour"));
  CHECK_THAT(read_error(R"({"seed": 1})"), Catch::Matchers::ContainsSubstring("joint"));
  CHECK_THAT(read_error(R"({"joint": "knee", "velocities_deg_s": [60, -90]})"),
             Catch::Matchers::ContainsSubstring("velocities_deg_s"));
  CHECK_THAT(read_error(R"({"joint": "knee", "swings_per_take": 0})"),
             Catch::Matchers::ContainsSubstring("swings_per_take"));
  CHECK_THAT(read_error(R"({"joint": "ankle", "torque": {"muscle_weights": {"BF": 1.0}}})"),
             Catch::Matchers::ContainsSubstring("torque.muscle_weights"));
  CHECK_THAT(read_error("{\"joint\": "), Catch::Matchers::ContainsSubstring("malformed"));
}
