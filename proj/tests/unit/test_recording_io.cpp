#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include "myotorque/error.hpp"
#include "myotorque/eval.hpp"
#include "myotorque/model_bundle.hpp"
#include "myotorque/recording_io.hpp"
#include "myotorque/synthgen.hpp"

using namespace myotorque;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("myotorque_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SessionSpec small_spec(Joint joint) {
  SessionSpec s = default_session_spec(joint);
  s.velocities_deg_s = {s.velocities_deg_s.back()};
  s.takes_per_velocity = 2;
  return s;
}

ErrorCode read_code(const std::string& csv, double rate) {
  std::istringstream is(csv);
  try {
    (void)read_recording_csv(is, rate, "test.csv");
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error for:\n" << csv);
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("recording CSV round trips bit-exactly", "[io]") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> a(50), t(50);
  for (auto& x : a) x = 1e3 * nd(rng);
  for (auto& x : t) x = 1e-7 * nd(rng);
  const std::vector<TimeSeries> series{TimeSeries("angle_deg", Unit::degrees, 2000.0, 1.25, a),
                                       TimeSeries("torque_nm", Unit::newton_meters, 2000.0, 1.25, t)};
  std::stringstream ss;
  write_recording_csv(ss, series);
  CHECK(ss.str().rfind("time_s,angle_deg,torque_nm\n", 0) == 0);
  const auto back = read_recording_csv(ss, 2000.0);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].label() == series[i].label());
    CHECK(back[i].unit() == series[i].unit());
    CHECK(back[i].values() == series[i].values());
    CHECK(back[i].start_time_s() == 1.25);
  }

  std::stringstream mixed;
  CHECK_THROWS_AS(write_recording_csv(mixed, {series[0], TimeSeries("fmg_TA", Unit::normalized_force, 200.0, 0.0, {1.0})}),
                  Error);
}

TEST_CASE("recording CSV format errors", "[io]") {
  CHECK(read_code("", 200.0) == ErrorCode::ParseError);
  CHECK(read_code("t,angle_deg\n0,1\n", 200.0) == ErrorCode::ParseError);
  CHECK(read_code("time_s,elbow_deg\n0,1\n", 200.0) == ErrorCode::ParseError);
  CHECK(read_code("time_s,angle_deg\n0,1\n0.005\n", 200.0) == ErrorCode::ParseError);
  CHECK(read_code("time_s,angle_deg\n0,1\n0.005,abc\n", 200.0) == ErrorCode::ParseError);
  CHECK(read_code("time_s,angle_deg\n0,1\n0,2\n", 200.0) == ErrorCode::ParseError);
  CHECK(read_code("time_s,angle_deg\n0,1\n0.0051,2\n", 200.0) == ErrorCode::ParseError);
  CHECK(read_code("time_s,angle_deg\n0,1\n0.005,nan\n", 200.0) == ErrorCode::NonFiniteValue);

  // Within 1 ppm of the nominal interval passes.
  std::istringstream ok("time_s,angle_deg,fmg_GM\n0,1,0.5\n0.005000000001,2,0.5\n");
  const auto s = read_recording_csv(ok, 200.0);
  CHECK(s[1].unit() == Unit::normalized_force);

  std::istringstream bad("time_s,angle_deg\n0,1\n0.005,x\n");
  try {
    (void)read_recording_csv(bad, 200.0, "take_v030_k0_200hz.csv");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("take_v030_k0_200hz.csv") != std::string::npos);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("manifests round trip and check their version", "[io]") {
  TakeManifest m;
  m.joint = Joint::ankle;
  m.velocity_deg_s = 30.0;
  m.take_index = 2;
  m.recordings = {{"a_2000hz.csv", 2000.0}, {"a_200hz.csv", 200.0}};
  m.calibration_standing = {"calibration_standing.csv", 200.0};
  m.calibration_angle = {"calibration_angle.csv", 2000.0};
  std::stringstream ss;
  write_manifest(ss, m);
  const auto back = read_manifest(ss);
  CHECK(back.joint == m.joint);
  CHECK(back.velocity_deg_s == m.velocity_deg_s);
  CHECK(back.take_index == m.take_index);
  REQUIRE(back.recordings.size() == 2);
  CHECK(back.recordings[1].file == "a_200hz.csv");
  CHECK(back.recordings[1].sample_rate_hz == 200.0);
  CHECK(back.calibration_angle.file == "calibration_angle.csv");

  std::string text = ss.str();
  const auto pos = text.find("\"version\": 1");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 12, "\"version\": 9");
  std::istringstream future(text);
  try {
    (void)read_manifest(future);
    FAIL("expected VersionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VersionMismatch);
  }
  std::istringstream other(R"({"format": "something", "version": 1})");
  CHECK_THROWS_AS(read_manifest(other), Error);
}

TEST_CASE("written sessions load back bit-exactly", "[io]") {
  const auto dir = scratch("session");
  const auto session = generate_session(small_spec(Joint::knee));
  const auto manifests = write_session(dir, session);
  REQUIRE(manifests.size() == 2);
  CHECK(manifests[0].filename() == take_stem(150.0, 0) + ".json");
  CHECK(fs::exists(dir / "spec.json"));
  CHECK(fs::exists(dir / (take_stem(150.0, 1) + "_truth.csv")));

  const auto expected = compute_calibration(session.calibration.standing, session.calibration.initial_angle);
  for (std::size_t k = 0; k < manifests.size(); ++k) {
    const auto loaded = load_take(manifests[k]);
    CHECK(loaded.manifest.joint == Joint::knee);
    CHECK(loaded.manifest.take_index == static_cast<int>(k));
    const auto& original = session.takes[k].recording;
    REQUIRE(loaded.recording.channels.size() == original.channels.size());
    for (const auto& [label, s] : original.channels) {
      const auto& got = loaded.recording.at(label);
      CHECK(got.values() == s.values());
      CHECK(got.sample_rate_hz() == s.sample_rate_hz());
      CHECK(got.start_time_s() == s.start_time_s());
      CHECK(got.unit() == s.unit());
    }
    CHECK(loaded.calibration.fmg_offsets == expected.fmg_offsets);
    CHECK(loaded.calibration.angle_offset == expected.angle_offset);
  }

  // Directories expand to their manifests in sorted order.
  CHECK(expand_manifest_args({dir.string()}) == manifests);
  CHECK_THROWS_AS(expand_manifest_args({(dir / "absent").string()}), Error);

  // Writing the same session again gives identical bytes.
  const auto again = scratch("session_again");
  write_session(again, session);
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::ifstream a(entry.path(), std::ios::binary), b(again / entry.path().filename(), std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    INFO(entry.path().filename());
    CHECK(sa.str() == sb.str());
  }
  fs::remove_all(again);
}

TEST_CASE("takes of different joints do not mix", "[io]") {
  const auto knee_dir = scratch("mix_knee");
  const auto ankle_dir = scratch("mix_ankle");
  const auto k = write_session(knee_dir, generate_session(small_spec(Joint::knee)));
  const auto a = write_session(ankle_dir, generate_session(small_spec(Joint::ankle)));
  try {
    (void)load_takes({k[0], a[0]});
    FAIL("expected ConfigMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigMismatch);
  }
  const auto takes = load_takes({a[0], a[1]});
  const auto table = session_features(takes, ModelConfig::fmg);
  CHECK(table.dimension() == 5);
  CHECK(table.take_of_row.back() == 1);
  fs::remove_all(knee_dir);
  fs::remove_all(ankle_dir);
}

TEST_CASE("a missing recording file names the manifest", "[io]") {
  const auto dir = scratch("missing");
  const auto m = write_session(dir, generate_session(small_spec(Joint::ankle)));
  fs::remove(dir / (take_stem(120.0, 0) + "_200hz.csv"));
  try {
    (void)load_take(m[0]);
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
    CHECK(std::string(e.what()).find(m[0].filename().string()) != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("take stems", "[io]") {
  CHECK(take_stem(60.0, 0) == "take_v060_k0");
  CHECK(take_stem(150.0, 2) == "take_v150_k2");
}

TEST_CASE("model bundles round trip", "[io][bundle]") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 1.0);
  FeatureTable t;
  t.joint = Joint::ankle;
  t.config = ModelConfig::fmg;
  t.column_names = feature_columns(t.joint, t.config);
  t.rows.resize(120, 5);
  t.targets.resize(120);
  for (Eigen::Index i = 0; i < 120; ++i) {
    for (Eigen::Index c = 0; c < 5; ++c) t.rows(i, c) = nd(rng);
    t.targets(i) = 3.0 * t.rows(i, 0) - t.rows(i, 3) + 0.1 * nd(rng);
  }
  GpOptions opts;
  opts.optimizer.restarts = 2;
  CalibrationRecord calib;
  calib.fmg_offsets = {{Muscle::TA, 0.45}, {Muscle::GM, 0.5}, {Muscle::GL, 0.4}};
  calib.angle_offset = -2.0;
  PreprocessOptions pre;
  pre.segmentation.min_separation_s = 0.4;
  pre.segmentation.anchor = SegmentAnchor::minima;
  const ModelBundle bundle{t.joint, t.config, t.column_names, pre, calib, train_model(t, opts)};

  std::stringstream ss;
  save_bundle(ss, bundle);
  const auto text = ss.str();
  const auto back = load_bundle(ss);
  CHECK(back.joint == bundle.joint);
  CHECK(back.config == bundle.config);
  CHECK(back.feature_columns == bundle.feature_columns);
  CHECK(back.preprocess.segmentation.min_separation_s == 0.4);
  CHECK(back.preprocess.segmentation.anchor == SegmentAnchor::minima);
  REQUIRE(back.calibration.has_value());
  CHECK(back.calibration->fmg_offsets == calib.fmg_offsets);
  const Eigen::VectorXd before = predict_original(bundle.model, t.rows);
  const Eigen::VectorXd after = predict_original(back.model, t.rows);
  CHECK((before - after).cwiseAbs().maxCoeff() <= 1e-12);

  require_joint(back, Joint::ankle);
  try {
    require_joint(back, Joint::knee);
    FAIL("expected ConfigMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigMismatch);
  }

  const std::string future = std::regex_replace(text, std::regex("\"version\":\\s*1"), "\"version\": 2");
  REQUIRE(future != text);
  std::istringstream fs_future(future);
  try {
    (void)load_bundle(fs_future);
    FAIL("expected VersionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::VersionMismatch);
  }
  std::istringstream junk("not json");
  CHECK_THROWS_AS(load_bundle(junk), Error);
}
