#include "myotorque/preprocess.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "csv_util.hpp"
#include "myotorque/filters.hpp"

namespace myotorque {

namespace {

using csv::format_double;
using csv::parse_number;
using csv::split_csv;

constexpr double kFeatureRateHz = 200.0;

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view name, const std::pair<Enum, std::string_view> (&table)[N],
                std::string_view what) {
  for (const auto& [e, n] : table) {
    if (n == name) return e;
  }
  throw Error(ErrorCode::ParseError, "unknown " + std::string(what) + " '" + std::string(name) + "'");
}

template <typename Enum, std::size_t N>
std::string_view enum_name(Enum value, const std::pair<Enum, std::string_view> (&table)[N]) {
  for (const auto& [e, n] : table) {
    if (e == value) return n;
  }
  return "?";
}

constexpr std::pair<Joint, std::string_view> kJointNames[] = {{Joint::ankle, "ankle"},
                                                              {Joint::knee, "knee"}};
constexpr std::pair<Muscle, std::string_view> kMuscleNames[] = {
    {Muscle::TA, "TA"}, {Muscle::GM, "GM"}, {Muscle::GL, "GL"}, {Muscle::BF, "BF"},
    {Muscle::RF, "RF"}, {Muscle::ST, "ST"}, {Muscle::VM, "VM"}, {Muscle::VL, "VL"}};
constexpr std::pair<ModelConfig, std::string_view> kConfigNames[] = {
    {ModelConfig::baseline, "baseline"}, {ModelConfig::emg, "emg"}, {ModelConfig::fmg, "fmg"}};

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct Extremum {
  std::size_t index;
  double value;
  bool is_max;
};

bool more_extreme(const Extremum& a, const Extremum& b) {
  return a.is_max ? a.value >= b.value : a.value <= b.value;
}

std::vector<Extremum> zigzag(const std::vector<double>& x, double threshold) {
  std::vector<Extremum> out;
  int trend = 0;
  std::size_t hi_i = 0;
  std::size_t lo_i = 0;
  Extremum cand{0, x[0], false};
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double v = x[i];
    if (trend == 0) {
      if (v > x[hi_i]) hi_i = i;
      if (v < x[lo_i]) lo_i = i;
      // The extreme that ends the undecided phase touches the signal edge and
      // is not bracketed, so it is not recorded.
      if (v - x[lo_i] >= threshold) {
        trend = 1;
        cand = {i, v, true};
      } else if (x[hi_i] - v >= threshold) {
        trend = -1;
        cand = {i, v, false};
      }
      continue;
    }
    if (trend > 0) {
      if (v > cand.value) {
        cand = {i, v, true};
      } else if (cand.value - v >= threshold) {
        out.push_back(cand);
        trend = -1;
        cand = {i, v, false};
      }
    } else {
      if (v < cand.value) {
        cand = {i, v, false};
      } else if (v - cand.value >= threshold) {
        out.push_back(cand);
        trend = 1;
        cand = {i, v, true};
      }
    }
  }
  return out;
}

// Removes adjacent extrema closer than min_gap samples as a pair, folding each
// removed point into the surviving neighbour of the same type.
void prune_close(std::vector<Extremum>& ex, std::size_t min_gap) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t j = 0; j + 1 < ex.size(); ++j) {
      if (ex[j + 1].index - ex[j].index >= min_gap) continue;
      const Extremum a = ex[j];
      const Extremum b = ex[j + 1];
      if (j + 2 < ex.size() && more_extreme(a, ex[j + 2])) ex[j + 2] = a;
      if (j >= 1 && more_extreme(b, ex[j - 1])) ex[j - 1] = b;
      ex.erase(ex.begin() + static_cast<std::ptrdiff_t>(j),
               ex.begin() + static_cast<std::ptrdiff_t>(j + 2));
      changed = true;
      break;
    }
  }
}

struct Grid {
  double start;
  double rate;
  std::size_t count;
};

TimeSeries on_grid(const TimeSeries& s, const Grid& g) {
  if (s.sample_rate_hz() == g.rate && s.start_time_s() == g.start && s.size() >= g.count) {
    std::vector<double> v(s.values().begin(),
                          s.values().begin() + static_cast<std::ptrdiff_t>(g.count));
    return s.with_values(std::move(v));
  }
  return resample_linear(s, g.rate, g.count, g.start);
}

}  // namespace

std::string_view to_string(Joint joint) { return enum_name(joint, kJointNames); }
std::string_view to_string(Muscle muscle) { return enum_name(muscle, kMuscleNames); }
std::string_view to_string(ModelConfig config) { return enum_name(config, kConfigNames); }
Joint joint_from_string(std::string_view name) { return parse_enum(name, kJointNames, "joint"); }
Muscle muscle_from_string(std::string_view name) { return parse_enum(name, kMuscleNames, "muscle"); }
ModelConfig config_from_string(std::string_view name) {
  return parse_enum(name, kConfigNames, "model config");
}

const std::vector<Muscle>& muscles_for(Joint joint) {
  static const std::vector<Muscle> ankle{Muscle::TA, Muscle::GM, Muscle::GL};
  static const std::vector<Muscle> knee{Muscle::BF, Muscle::RF, Muscle::ST, Muscle::VM, Muscle::VL};
  return joint == Joint::ankle ? ankle : knee;
}

std::size_t feature_dimension(Joint joint, ModelConfig config) {
  return config == ModelConfig::baseline ? 2 : 2 + muscles_for(joint).size();
}

std::vector<std::string> feature_columns(Joint joint, ModelConfig config) {
  std::vector<std::string> cols{"angle_deg", "velocity_deg_s"};
  if (config == ModelConfig::baseline) return cols;
  for (Muscle m : muscles_for(joint)) {
    cols.push_back(config == ModelConfig::emg ? channel::emg(m) : channel::fmg(m));
  }
  return cols;
}

std::string channel::emg(Muscle m) { return "emg_" + std::string(to_string(m)); }
std::string channel::fmg(Muscle m) { return "fmg_" + std::string(to_string(m)); }

MultiChannelRecording apply_calibration(const MultiChannelRecording& recording,
                                        const CalibrationRecord& calib) {
  MultiChannelRecording out = recording;
  for (Muscle m : kAllMuscles) {
    const std::string label = channel::fmg(m);
    if (!recording.has(label)) continue;
    auto it = calib.fmg_offsets.find(m);
    if (it == calib.fmg_offsets.end()) {
      throw Error(ErrorCode::MissingChannel,
                  "calibration has no FMG offset for muscle " + std::string(to_string(m)));
    }
    const TimeSeries& s = recording.at(label);
    std::vector<double> v(s.values());
    for (double& x : v) x -= it->second;
    out.replace(s.with_values(std::move(v)));
  }
  if (recording.has(channel::kAngle)) {
    const TimeSeries& s = recording.at(channel::kAngle);
    std::vector<double> v(s.values());
    for (double& x : v) x -= calib.angle_offset;
    out.replace(s.with_values(std::move(v)));
  }
  return out;
}

CalibrationRecord compute_calibration(const MultiChannelRecording& standing_recording,
                                      const TimeSeries& initial_angle_recording) {
  if (initial_angle_recording.empty()) {
    throw Error(ErrorCode::DegenerateSeries, "initial-position angle recording is empty");
  }
  CalibrationRecord calib;
  for (Muscle m : kAllMuscles) {
    const std::string label = channel::fmg(m);
    if (!standing_recording.has(label)) continue;
    const TimeSeries& s = standing_recording.at(label);
    if (s.empty()) {
      throw Error(ErrorCode::DegenerateSeries, "standing channel '" + label + "' is empty");
    }
    calib.fmg_offsets[m] = mean_of(s.values());
  }
  if (calib.fmg_offsets.empty()) {
    throw Error(ErrorCode::DegenerateSeries, "standing recording has no FMG channels");
  }
  calib.angle_offset = mean_of(initial_angle_recording.values());
  return calib;
}

TimeSeries emg_envelope(const TimeSeries& raw, const EnvelopeOptions& opts) {
  const double fs = raw.sample_rate_hz();
  const auto band = design_butterworth_bandpass(opts.order, opts.band_low_hz, opts.band_high_hz, fs);
  const auto smooth = design_butterworth_lowpass(opts.order, opts.lowpass_hz, fs);
  return filtfilt(smooth, rectify(filtfilt(band, raw)));
}

TimeSeries filtered_angle(const TimeSeries& angle, const VelocityOptions& opts) {
  const auto lp = design_butterworth_lowpass(opts.order, opts.cutoff_hz, angle.sample_rate_hz());
  return filtfilt(lp, angle);
}

TimeSeries joint_velocity(const TimeSeries& angle, const VelocityOptions& opts) {
  const TimeSeries slope = gradient(filtered_angle(angle, opts));
  return slope.with_values(slope.values(), Unit::degrees_per_second);
}

SegmentBoundaries segment_motions(const TimeSeries& filtered, const SegmentationOptions& opts) {
  if (!(opts.min_separation_s >= 0.0) || !(opts.min_prominence_frac > 0.0) ||
      !(opts.min_prominence_frac < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "segmentation thresholds out of range");
  }
  const auto& x = filtered.values();
  if (x.size() < 3) throw Error(ErrorCode::NoMotionDetected, "angle too short to segment");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) throw Error(ErrorCode::NoMotionDetected, "angle is constant");

  auto ex = zigzag(x, opts.min_prominence_frac * range);
  const auto min_gap =
      static_cast<std::size_t>(std::llround(opts.min_separation_s * filtered.sample_rate_hz()));
  prune_close(ex, min_gap);
  if (ex.size() < 3) {
    throw Error(ErrorCode::NoMotionDetected,
                "found " + std::to_string(ex.size()) + " direction changes, need at least 3");
  }

  SegmentBoundaries out;
  std::vector<std::size_t> anchors;
  const bool want_max = opts.anchor == SegmentAnchor::maxima;
  for (const Extremum& e : ex) {
    out.extrema_indices.push_back(e.index);
    out.extremum_is_max.push_back(e.is_max);
    if (e.is_max == want_max) anchors.push_back(e.index);
  }
  for (std::size_t k = 0; k + 1 < anchors.size(); ++k) out.segments.emplace_back(anchors[k], anchors[k + 1]);
  return out;
}

SegmentBoundaries segment_motions(const TimeSeries& filtered, double min_separation_s,
                                  double min_prominence_frac) {
  SegmentationOptions opts;
  opts.min_separation_s = min_separation_s;
  opts.min_prominence_frac = min_prominence_frac;
  return segment_motions(filtered, opts);
}

FeatureTable build_features(const MultiChannelRecording& recording, Joint joint, ModelConfig config,
                            const CalibrationRecord& calib, const PreprocessOptions& opts) {
  const auto& muscles = muscles_for(joint);
  for (const char* label : {channel::kAngle, channel::kTorque}) {
    if (!recording.has(label)) {
      throw Error(ErrorCode::MissingChannel, std::string("recording has no '") + label + "' channel");
    }
  }
  std::vector<std::string> muscle_labels;
  if (config != ModelConfig::baseline) {
    for (Muscle m : muscles) {
      const std::string label = config == ModelConfig::emg ? channel::emg(m) : channel::fmg(m);
      if (!recording.has(label)) {
        throw Error(ErrorCode::MissingChannel, "recording has no '" + label + "' channel (muscle " +
                                                   std::string(to_string(m)) + ")");
      }
      muscle_labels.push_back(label);
    }
  }

  const MultiChannelRecording rec = apply_calibration(recording, calib);
  const TimeSeries& angle = rec.at(channel::kAngle);
  const TimeSeries& torque = rec.at(channel::kTorque);
  const TimeSeries smooth_angle = filtered_angle(angle, opts.velocity);
  const TimeSeries slope = gradient(smooth_angle);
  const TimeSeries velocity = slope.with_values(slope.values(), Unit::degrees_per_second);

  std::vector<TimeSeries> envelopes;
  if (config == ModelConfig::emg) {
    for (const auto& label : muscle_labels) envelopes.push_back(emg_envelope(rec.at(label), opts.envelope));
  }

  // The reference timeline is the FMG stream when one exists, else a 200 Hz
  // grid from the angle start.
  Grid grid{angle.start_time_s(), kFeatureRateHz, 0};
  const TimeSeries* reference = nullptr;
  for (Muscle m : muscles) {
    if (rec.has(channel::fmg(m))) {
      reference = &rec.at(channel::fmg(m));
      break;
    }
  }
  double span_start = std::max(angle.start_time_s(), torque.start_time_s());
  double span_end = std::min(angle.end_time_s(), torque.end_time_s());
  for (const auto& e : envelopes) {
    span_start = std::max(span_start, e.start_time_s());
    span_end = std::min(span_end, e.end_time_s());
  }
  if (reference != nullptr) {
    grid.rate = reference->sample_rate_hz();
    grid.start = reference->start_time_s();
    span_end = std::min(span_end, reference->end_time_s());
  }
  if (config == ModelConfig::fmg) {
    for (const auto& label : muscle_labels) {
      span_start = std::max(span_start, rec.at(label).start_time_s());
      span_end = std::min(span_end, rec.at(label).end_time_s());
    }
  }
  // Skip reference ticks that start before every source has data.
  constexpr double kEps = 1e-9;
  if (grid.start < span_start - kEps) {
    grid.start += std::ceil((span_start - grid.start) * grid.rate - kEps) / grid.rate;
  }
  if (!(span_end > grid.start)) {
    throw Error(ErrorCode::AlignmentError, "channel time spans do not overlap");
  }
  grid.count = static_cast<std::size_t>(std::floor((span_end - grid.start) * grid.rate + kEps)) + 1;
  if (grid.count < 2) throw Error(ErrorCode::AlignmentError, "channel overlap is shorter than two ticks");

  const TimeSeries angle_rs = on_grid(angle, grid);
  const TimeSeries velocity_rs = on_grid(velocity, grid);
  const TimeSeries torque_rs = on_grid(torque, grid);
  const TimeSeries smooth_rs = on_grid(smooth_angle, grid);

  std::vector<TimeSeries> muscle_cols;
  if (config == ModelConfig::emg) {
    for (const auto& e : envelopes) muscle_cols.push_back(on_grid(e, grid));
  } else if (config == ModelConfig::fmg) {
    for (const auto& label : muscle_labels) muscle_cols.push_back(on_grid(rec.at(label), grid));
  }

  FeatureTable table;
  table.joint = joint;
  table.config = config;
  table.column_names = feature_columns(joint, config);
  const auto n = static_cast<Eigen::Index>(grid.count);
  const auto d = static_cast<Eigen::Index>(table.column_names.size());
  table.rows.resize(n, d);
  table.targets.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    table.rows(i, 0) = angle_rs[u];
    table.rows(i, 1) = velocity_rs[u];
    for (std::size_t c = 0; c < muscle_cols.size(); ++c) {
      table.rows(i, static_cast<Eigen::Index>(c) + 2) = muscle_cols[c][u];
    }
    table.targets(i) = torque_rs[u];
    table.time_s.push_back(angle_rs.time_at(u));
  }

  table.segment_of_row.assign(grid.count, 0);
  table.take_of_row.assign(grid.count, 0);
  const SegmentBoundaries seg = segment_motions(smooth_rs, opts.segmentation);
  for (std::size_t k = 0; k < seg.segments.size(); ++k) {
    for (std::size_t i = seg.segments[k].first; i < seg.segments[k].second; ++i) {
      table.segment_of_row[i] = static_cast<int>(k) + 1;
    }
  }
  return table;
}

void append_rows(FeatureTable& table, const FeatureTable& part, int take) {
  if (table.size() == 0) {
    table.joint = part.joint;
    table.config = part.config;
    table.column_names = part.column_names;
    table.rows.resize(0, static_cast<Eigen::Index>(part.dimension()));
  }
  if (table.joint != part.joint || table.config != part.config ||
      table.dimension() != part.dimension()) {
    throw Error(ErrorCode::ConfigMismatch, "cannot concatenate tables of different joint/config");
  }
  int offset = 0;
  for (int s : table.segment_of_row) offset = std::max(offset, s);
  const Eigen::Index old_n = table.rows.rows();
  const Eigen::Index add = part.rows.rows();
  table.rows.conservativeResize(old_n + add, Eigen::NoChange);
  table.rows.bottomRows(add) = part.rows;
  table.targets.conservativeResize(old_n + add);
  table.targets.tail(add) = part.targets;
  for (std::size_t i = 0; i < part.size(); ++i) {
    const int s = part.segment_of_row[i];
    table.segment_of_row.push_back(s == 0 ? 0 : s + offset);
    table.take_of_row.push_back(take);
    table.time_s.push_back(part.time_s[i]);
  }
  table.column_stats.clear();
  table.target_stats.reset();
}

FeatureTable build_session_features(const std::vector<TakeInput>& takes, Joint joint,
                                    ModelConfig config, const PreprocessOptions& opts) {
  FeatureTable table;
  table.joint = joint;
  table.config = config;
  table.column_names = feature_columns(joint, config);
  table.rows.resize(0, static_cast<Eigen::Index>(feature_dimension(joint, config)));
  for (const auto& t : takes) {
    if (t.recording == nullptr || t.calibration == nullptr) {
      throw Error(ErrorCode::InvalidArgument, "take input without recording or calibration");
    }
    try {
      append_rows(table, build_features(*t.recording, joint, config, *t.calibration, opts), t.take);
    } catch (const Error& e) {
      throw e.with_context(t.name.empty() ? "take " + std::to_string(t.take) : t.name);
    }
  }
  return table;
}

FeatureTable select_rows(const FeatureTable& table, const std::vector<std::size_t>& rows) {
  FeatureTable out;
  out.joint = table.joint;
  out.config = table.config;
  out.column_names = table.column_names;
  out.column_stats = table.column_stats;
  out.target_stats = table.target_stats;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.rows.resize(n, table.rows.cols());
  out.targets.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t r = rows[static_cast<std::size_t>(i)];
    out.rows.row(i) = table.rows.row(static_cast<Eigen::Index>(r));
    out.targets(i) = table.targets(static_cast<Eigen::Index>(r));
    out.segment_of_row.push_back(table.segment_of_row[r]);
    out.take_of_row.push_back(table.take_of_row[r]);
    out.time_s.push_back(table.time_s[r]);
  }
  return out;
}

void write_feature_table(std::ostream& os, const FeatureTable& table) {
  os << "take,segment,time_s";
  for (const auto& c : table.column_names) os << ',' << c;
  os << ',' << channel::kTorque << '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    os << table.take_of_row[i] << ',' << table.segment_of_row[i] << ',' << format_double(table.time_s[i]);
    for (Eigen::Index c = 0; c < table.rows.cols(); ++c) os << ',' << format_double(table.rows(r, c));
    os << ',' << format_double(table.targets(r)) << '\n';
  }
}

FeatureTable read_feature_table(std::istream& is, Joint joint, ModelConfig config) {
  FeatureTable table;
  table.joint = joint;
  table.config = config;
  table.column_names = feature_columns(joint, config);

  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::ParseError, "feature table is empty");
  const auto header = split_csv(line);
  const std::size_t d = table.column_names.size();
  bool ok = header.size() == d + 4 && header[0] == "take" && header[1] == "segment" &&
            header[2] == "time_s" && header[d + 3] == channel::kTorque;
  for (std::size_t c = 0; ok && c < d; ++c) ok = header[c + 3] == table.column_names[c];
  if (!ok) {
    throw Error(ErrorCode::ConfigMismatch, "feature table header does not match " +
                                               std::string(to_string(joint)) + "/" +
                                               std::string(to_string(config)));
  }

  std::vector<std::vector<double>> values;
  std::vector<double> targets;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != d + 4) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(d + 4) + " fields");
    }
    table.take_of_row.push_back(parse_number<int>(f[0], line_no));
    table.segment_of_row.push_back(parse_number<int>(f[1], line_no));
    table.time_s.push_back(parse_number<double>(f[2], line_no));
    std::vector<double> row(d);
    for (std::size_t c = 0; c < d; ++c) row[c] = parse_number<double>(f[c + 3], line_no);
    values.push_back(std::move(row));
    targets.push_back(parse_number<double>(f[d + 3], line_no));
  }
  const auto n = static_cast<Eigen::Index>(values.size());
  table.rows.resize(n, static_cast<Eigen::Index>(d));
  table.targets.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      table.rows(i, static_cast<Eigen::Index>(c)) = values[static_cast<std::size_t>(i)][c];
    }
    table.targets(i) = targets[static_cast<std::size_t>(i)];
  }
  return table;
}

}  // namespace myotorque
