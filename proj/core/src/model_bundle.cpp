#include "myotorque/model_bundle.hpp"

#include <istream>
#include <ostream>

#include <json.hpp>

#include "json_codec.hpp"
#include "myotorque/error.hpp"

namespace myotorque {
namespace {

using nlohmann::json;

json preprocess_to_json(const PreprocessOptions& p) {
  return {{"envelope",
           {{"order", p.envelope.order},
            {"band_low_hz", p.envelope.band_low_hz},
            {"band_high_hz", p.envelope.band_high_hz},
            {"lowpass_hz", p.envelope.lowpass_hz}}},
          {"velocity", {{"order", p.velocity.order}, {"cutoff_hz", p.velocity.cutoff_hz}}},
          {"segmentation",
           {{"min_separation_s", p.segmentation.min_separation_s},
            {"min_prominence_frac", p.segmentation.min_prominence_frac},
            {"anchor", p.segmentation.anchor == SegmentAnchor::maxima ? "maxima" : "minima"}}}};
}

PreprocessOptions preprocess_from_json(const json& j) {
  PreprocessOptions p;
  const auto& e = j.at("envelope");
  p.envelope.order = e.at("order").get<int>();
  p.envelope.band_low_hz = e.at("band_low_hz").get<double>();
  p.envelope.band_high_hz = e.at("band_high_hz").get<double>();
  p.envelope.lowpass_hz = e.at("lowpass_hz").get<double>();
  const auto& v = j.at("velocity");
  p.velocity.order = v.at("order").get<int>();
  p.velocity.cutoff_hz = v.at("cutoff_hz").get<double>();
  const auto& s = j.at("segmentation");
  p.segmentation.min_separation_s = s.at("min_separation_s").get<double>();
  p.segmentation.min_prominence_frac = s.at("min_prominence_frac").get<double>();
  const auto anchor = s.at("anchor").get<std::string>();
  if (anchor != "maxima" && anchor != "minima") {
    throw Error(ErrorCode::ParseError, "bundle: unknown segmentation anchor '" + anchor + "'");
  }
  p.segmentation.anchor = anchor == "maxima" ? SegmentAnchor::maxima : SegmentAnchor::minima;
  return p;
}

json calibration_to_json(const CalibrationRecord& c) {
  json offsets = json::object();
  for (const auto& [m, v] : c.fmg_offsets) offsets[std::string(to_string(m))] = v;
  return {{"fmg_offsets", std::move(offsets)}, {"angle_offset", c.angle_offset}};
}

CalibrationRecord calibration_from_json(const json& j) {
  CalibrationRecord c;
  for (const auto& [name, v] : j.at("fmg_offsets").items()) c.fmg_offsets[muscle_from_string(name)] = v.get<double>();
  c.angle_offset = j.at("angle_offset").get<double>();
  return c;
}

}  // namespace

void save_bundle(std::ostream& os, const ModelBundle& b) {
  json j;
  j["format"] = "myotorque-bundle";
  j["version"] = kBundleVersion;
  j["joint"] = std::string(to_string(b.joint));
  j["config"] = std::string(to_string(b.config));
  j["feature_columns"] = b.feature_columns;
  j["preprocess"] = preprocess_to_json(b.preprocess);
  j["calibration"] = b.calibration ? calibration_to_json(*b.calibration) : json(nullptr);
  j["gp"] = json_codec::gpr_to_json(b.model);
  os << j.dump() << '\n';
  if (!os) throw Error(ErrorCode::IoError, "failed writing model bundle");
}

ModelBundle load_bundle(std::istream& is) {
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model bundle: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "myotorque-bundle") {
    throw Error(ErrorCode::ParseError, "not a model bundle");
  }
  if (j.value("version", -1) != kBundleVersion) {
    throw Error(ErrorCode::VersionMismatch, "model bundle version " + std::to_string(j.value("version", -1)) +
                                                " is not supported (expected " +
                                                std::to_string(kBundleVersion) + ")");
  }
  try {
    ModelBundle b;
    b.joint = joint_from_string(j.at("joint").get<std::string>());
    b.config = config_from_string(j.at("config").get<std::string>());
    b.feature_columns = j.at("feature_columns").get<std::vector<std::string>>();
    b.preprocess = preprocess_from_json(j.at("preprocess"));
    if (!j.at("calibration").is_null()) b.calibration = calibration_from_json(j.at("calibration"));
    b.model = json_codec::gpr_from_json(j.at("gp"));
    if (b.feature_columns != feature_columns(b.joint, b.config) ||
        static_cast<std::size_t>(b.model.train_inputs.cols()) != b.feature_columns.size() ||
        b.model.input_stats.size() != b.feature_columns.size()) {
      throw Error(ErrorCode::DimensionMismatch, "model bundle columns disagree with its joint/config");
    }
    return b;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model bundle: ") + e.what());
  }
}

void require_joint(const ModelBundle& b, Joint joint) {
  if (b.joint != joint) {
    throw Error(ErrorCode::ConfigMismatch, "model joint is " + std::string(to_string(b.joint)) +
                                               ", data joint is " + std::string(to_string(joint)));
  }
}

}  // namespace myotorque
