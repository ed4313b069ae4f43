#include "myotorque/recording_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "csv_util.hpp"
#include "myotorque/error.hpp"

namespace myotorque {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kIntervalTolerance = 1e-6;  // relative, per sample interval

Unit unit_for_column(const std::string& name, const std::string& source) {
  if (name == channel::kAngle) return Unit::degrees;
  if (name == channel::kTorque) return Unit::newton_meters;
  if (name.rfind("emg_", 0) == 0 || name.rfind("fmg_", 0) == 0) {
    muscle_from_string(name.substr(4));  // validates the muscle
    return name[0] == 'e' ? Unit::volts : Unit::normalized_force;
  }
  throw Error(ErrorCode::ParseError, source + ": unknown column '" + name + "'");
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + p.string() + "'");
  return in;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + p.string() + "'");
  return out;
}

void close_checked(std::ofstream& out, const fs::path& p) {
  out.close();
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + p.string() + "'");
}

std::vector<TimeSeries> read_csv_file(const fs::path& p, double rate) {
  auto in = open_in(p);
  return read_recording_csv(in, rate, p.string());
}

}  // namespace

void write_recording_csv(std::ostream& os, const std::vector<TimeSeries>& series) {
  if (series.empty()) throw Error(ErrorCode::InvalidArgument, "no series to write");
  const auto& first = series.front();
  for (const auto& s : series) {
    if (s.size() != first.size() || s.sample_rate_hz() != first.sample_rate_hz() ||
        s.start_time_s() != first.start_time_s()) {
      throw Error(ErrorCode::LengthMismatch,
                  "series '" + s.label() + "' does not share the timeline of '" + first.label() + "'");
    }
  }
  os << "time_s";
  for (const auto& s : series) os << ',' << s.label();
  os << '\n';
  std::string line;
  for (std::size_t i = 0; i < first.size(); ++i) {
    line = csv::format_double(first.time_at(i));
    for (const auto& s : series) {
      line += ',';
      line += csv::format_double(s[i]);
    }
    line += '\n';
    os << line;
  }
}

std::vector<TimeSeries> read_recording_csv(std::istream& is, double rate, const std::string& source) {
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw Error(ErrorCode::InvalidArgument, source + ": sample rate must be positive");
  }
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::ParseError, source + ": empty file");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = csv::split_csv(line);
  if (header.empty() || header[0] != "time_s") {
    throw Error(ErrorCode::ParseError, source + ": first column must be time_s");
  }
  std::vector<std::string> names;
  std::vector<Unit> units;
  for (std::size_t c = 1; c < header.size(); ++c) {
    names.emplace_back(header[c]);
    try {
      units.push_back(unit_for_column(names.back(), source));
    } catch (const Error&) {
      throw Error(ErrorCode::ParseError, source + ": unknown column '" + names.back() + "'");
    }
  }
  std::vector<std::vector<double>> cols(names.size());
  std::vector<double> time;
  std::size_t line_no = 1;
  try {
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty() || line == "\r") continue;
      const auto fields = csv::split_csv(line);
      if (fields.size() != names.size() + 1) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                               std::to_string(names.size() + 1) + " fields");
      }
      time.push_back(csv::parse_number<double>(fields[0], line_no));
      for (std::size_t c = 0; c < names.size(); ++c) {
        cols[c].push_back(csv::parse_number<double>(fields[c + 1], line_no));
      }
    }
  } catch (const Error& e) {
    throw e.with_context(source);
  }
  if (time.empty()) throw Error(ErrorCode::ParseError, source + ": no samples");
  const double dt = 1.0 / rate;
  for (std::size_t i = 1; i < time.size(); ++i) {
    const double step = time[i] - time[i - 1];
    if (!(step > 0.0)) {
      throw Error(ErrorCode::ParseError,
                  source + ": time column not strictly increasing at row " + std::to_string(i + 1));
    }
    if (std::abs(step - dt) > kIntervalTolerance * dt) {
      throw Error(ErrorCode::ParseError, source + ": sample interval at row " + std::to_string(i + 1) +
                                             " deviates from 1/" + csv::format_double(rate) + " s");
    }
  }
  std::vector<TimeSeries> out;
  for (std::size_t c = 0; c < names.size(); ++c) {
    out.emplace_back(names[c], units[c], rate, time.front(), std::move(cols[c]));
  }
  return out;
}

void write_manifest(std::ostream& os, const TakeManifest& m) {
  json j;
  j["format"] = "myotorque-take";
  j["version"] = kManifestVersion;
  j["joint"] = std::string(to_string(m.joint));
  j["velocity_deg_s"] = m.velocity_deg_s;
  j["take_index"] = m.take_index;
  json files = json::array();
  for (const auto& r : m.recordings) files.push_back({{"file", r.file}, {"sample_rate_hz", r.sample_rate_hz}});
  j["recordings"] = std::move(files);
  j["calibration"] = {
      {"standing", {{"file", m.calibration_standing.file}, {"sample_rate_hz", m.calibration_standing.sample_rate_hz}}},
      {"initial_angle", {{"file", m.calibration_angle.file}, {"sample_rate_hz", m.calibration_angle.sample_rate_hz}}}};
  os << j.dump(2) << '\n';
}

TakeManifest read_manifest(std::istream& is, const std::string& source) {
  try {
    const json j = json::parse(is);
    if (j.at("format").get<std::string>() != "myotorque-take") {
      throw Error(ErrorCode::ParseError, source + ": not a take manifest");
    }
    if (j.at("version").get<int>() != kManifestVersion) {
      throw Error(ErrorCode::VersionMismatch, source + ": unsupported manifest version " +
                                                  std::to_string(j.at("version").get<int>()));
    }
    TakeManifest m;
    m.joint = joint_from_string(j.at("joint").get<std::string>());
    m.velocity_deg_s = j.at("velocity_deg_s").get<double>();
    m.take_index = j.at("take_index").get<int>();
    auto group = [](const json& g) {
      return RateGroupFile{g.at("file").get<std::string>(), g.at("sample_rate_hz").get<double>()};
    };
    for (const auto& r : j.at("recordings")) m.recordings.push_back(group(r));
    m.calibration_standing = group(j.at("calibration").at("standing"));
    m.calibration_angle = group(j.at("calibration").at("initial_angle"));
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, source + ": " + e.what());
  }
}

LoadedTake load_take(const fs::path& manifest_path) {
  try {
    auto in = open_in(manifest_path);
    LoadedTake t{manifest_path, read_manifest(in, manifest_path.string()), {}, {}};
    const fs::path dir = manifest_path.parent_path();
    t.recording.meta["joint"] = std::string(to_string(t.manifest.joint));
    t.recording.meta["velocity_deg_s"] = csv::format_double(t.manifest.velocity_deg_s);
    t.recording.meta["take_index"] = std::to_string(t.manifest.take_index);
    t.recording.meta["source"] = manifest_path.string();
    for (const auto& g : t.manifest.recordings) {
      for (auto& s : read_csv_file(dir / g.file, g.sample_rate_hz)) t.recording.add(std::move(s));
    }
    MultiChannelRecording standing;
    for (auto& s : read_csv_file(dir / t.manifest.calibration_standing.file,
                                 t.manifest.calibration_standing.sample_rate_hz)) {
      standing.add(std::move(s));
    }
    auto angle = read_csv_file(dir / t.manifest.calibration_angle.file,
                               t.manifest.calibration_angle.sample_rate_hz);
    auto it = std::find_if(angle.begin(), angle.end(),
                           [](const TimeSeries& s) { return s.label() == channel::kAngle; });
    if (it == angle.end()) {
      throw Error(ErrorCode::MissingChannel, "initial-angle calibration file has no angle_deg column");
    }
    t.calibration = compute_calibration(standing, *it);
    return t;
  } catch (const Error& e) {
    if (e.detail().rfind(manifest_path.string(), 0) == 0) throw;
    throw e.with_context(manifest_path.string());
  }
}

std::vector<fs::path> expand_manifest_args(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    const fs::path p(a);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind("take_", 0) == 0 && e.path().extension() == ".json") {
          found.push_back(e.path());
        }
      }
      std::sort(found.begin(), found.end());
      if (found.empty()) throw Error(ErrorCode::IoError, "no take manifests in '" + a + "'");
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      throw Error(ErrorCode::IoError, "no such file or directory '" + a + "'");
    }
  }
  return out;
}

std::vector<LoadedTake> load_takes(const std::vector<fs::path>& manifests) {
  std::vector<LoadedTake> takes;
  for (const auto& p : manifests) {
    takes.push_back(load_take(p));
    if (takes.back().manifest.joint != takes.front().manifest.joint) {
      throw Error(ErrorCode::ConfigMismatch, "'" + p.string() + "' is a " +
                                                 std::string(to_string(takes.back().manifest.joint)) +
                                                 " take; expected " +
                                                 std::string(to_string(takes.front().manifest.joint)));
    }
  }
  return takes;
}

FeatureTable session_features(const std::vector<LoadedTake>& takes, ModelConfig config,
                              const PreprocessOptions& opts) {
  if (takes.empty()) throw Error(ErrorCode::InvalidArgument, "no takes");
  std::vector<TakeInput> inputs;
  for (std::size_t i = 0; i < takes.size(); ++i) {
    inputs.push_back({&takes[i].recording, &takes[i].calibration, static_cast<int>(i),
                      takes[i].manifest_path.string()});
  }
  return build_session_features(inputs, takes.front().manifest.joint, config, opts);
}

std::string take_stem(double velocity, int take_index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "take_v%03ld_k%d", std::lround(velocity), take_index);
  return buf;
}

std::vector<fs::path> write_session(const fs::path& dir, const SyntheticSession& session) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorCode::IoError, "cannot create directory '" + dir.string() + "'");
  }
  const auto& muscles = muscles_for(session.spec.joint);

  const RateGroupFile standing_file{"calibration_standing.csv", 200.0};
  const RateGroupFile angle_file{"calibration_angle.csv", 2000.0};
  {
    std::vector<TimeSeries> cols;
    for (Muscle m : muscles) cols.push_back(session.calibration.standing.at(channel::fmg(m)));
    auto out = open_out(dir / standing_file.file);
    write_recording_csv(out, cols);
    close_checked(out, dir / standing_file.file);
  }
  {
    auto out = open_out(dir / angle_file.file);
    write_recording_csv(out, {session.calibration.initial_angle});
    close_checked(out, dir / angle_file.file);
  }
  {
    auto out = open_out(dir / "spec.json");
    write_session_spec(out, session.spec);
    close_checked(out, dir / "spec.json");
  }

  std::vector<fs::path> manifests;
  for (const auto& take : session.takes) {
    const std::string stem = take_stem(take.velocity_deg_s, take.take_index);
    const auto& rec = take.recording;

    std::vector<TimeSeries> fast{rec.at(channel::kAngle), rec.at(channel::kTorque)};
    std::vector<TimeSeries> slow;
    for (Muscle m : muscles) {
      if (rec.has(channel::emg(m))) fast.push_back(rec.at(channel::emg(m)));
      if (rec.has(channel::fmg(m))) slow.push_back(rec.at(channel::fmg(m)));
    }
    TakeManifest m{session.spec.joint, take.velocity_deg_s, take.take_index, {}, standing_file, angle_file};
    for (const auto* group : {&fast, &slow}) {
      if (group->empty()) continue;
      char suffix[32];
      std::snprintf(suffix, sizeof suffix, "_%ldhz.csv", std::lround(group->front().sample_rate_hz()));
      const std::string file = stem + suffix;
      auto out = open_out(dir / file);
      write_recording_csv(out, *group);
      close_checked(out, dir / file);
      m.recordings.push_back({file, group->front().sample_rate_hz()});
    }

    {
      const auto& gt = take.truth;
      std::vector<TimeSeries> cols{gt.true_torque, gt.true_angle, gt.true_velocity};
      for (const auto& [mu, a] : gt.true_activations) cols.push_back(a);
      const std::string file = stem + "_truth.csv";
      auto out = open_out(dir / file);
      // Ground truth columns are not recording channels; written directly.
      out << "time_s";
      for (const auto& c : cols) out << ',' << c.label();
      out << '\n';
      for (std::size_t i = 0; i < cols.front().size(); ++i) {
        out << csv::format_double(cols.front().time_at(i));
        for (const auto& c : cols) out << ',' << csv::format_double(c[i]);
        out << '\n';
      }
      close_checked(out, dir / file);
    }

    const fs::path manifest_path = dir / (stem + ".json");
    auto out = open_out(manifest_path);
    write_manifest(out, m);
    close_checked(out, manifest_path);
    manifests.push_back(manifest_path);
  }
  return manifests;
}

}  // namespace myotorque
