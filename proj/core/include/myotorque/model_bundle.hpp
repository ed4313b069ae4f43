#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "myotorque/gpr.hpp"
#include "myotorque/preprocess.hpp"

namespace myotorque {

inline constexpr int kBundleVersion = 1;

// A trained estimator: the GP plus everything needed to rebuild its inputs.
struct ModelBundle {
  Joint joint = Joint::knee;
  ModelConfig config = ModelConfig::baseline;
  std::vector<std::string> feature_columns;
  PreprocessOptions preprocess;
  // Offsets of the training session; raw streamed frames are corrected with them.
  std::optional<CalibrationRecord> calibration;
  GprModel model;
};

void save_bundle(std::ostream& os, const ModelBundle& bundle);

// ParseError on malformed content, VersionMismatch on a different format
// version, DimensionMismatch if the GP width disagrees with the columns.
ModelBundle load_bundle(std::istream& is);

// ConfigMismatch unless the bundle was trained for `joint`.
void require_joint(const ModelBundle& bundle, Joint joint);

}  // namespace myotorque
