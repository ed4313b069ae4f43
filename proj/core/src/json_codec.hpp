#pragma once

#include <json.hpp>

#include "myotorque/gpr.hpp"
#include "myotorque/preprocess.hpp"

namespace myotorque::json_codec {

// nlohmann/json prints doubles in shortest round-trip form, so every value
// below survives save/load bit-exactly.

inline nlohmann::json stats_to_json(const NormalizationStats& s) {
  return {{"mean", s.mean()}, {"std_dev", s.std_dev()}};
}

inline NormalizationStats stats_from_json(const nlohmann::json& j) {
  return NormalizationStats(j.at("mean").get<double>(), j.at("std_dev").get<double>());
}

inline nlohmann::json hyper_to_json(const Hyperparameters& h) {
  return {{"log_noise_variance", h.log_noise_variance},
          {"log_output_scale", h.log_output_scale},
          {"log_length_scale", h.log_length_scale}};
}

inline Hyperparameters hyper_from_json(const nlohmann::json& j) {
  Hyperparameters h;
  h.log_noise_variance = j.at("log_noise_variance").get<double>();
  h.log_output_scale = j.at("log_output_scale").get<double>();
  h.log_length_scale = j.at("log_length_scale").get<double>();
  return h;
}

inline nlohmann::json gpr_to_json(const GprModel& m) {
  nlohmann::json inputs = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.train_inputs.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.train_inputs.cols(); ++c) row.push_back(m.train_inputs(i, c));
    inputs.push_back(std::move(row));
  }
  nlohmann::json targets = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.train_targets.size(); ++i) targets.push_back(m.train_targets(i));
  nlohmann::json input_stats = nlohmann::json::array();
  for (const auto& s : m.input_stats) input_stats.push_back(stats_to_json(s));

  nlohmann::json j;
  j["dimension"] = m.train_inputs.cols();
  j["hyperparameters"] = hyper_to_json(m.hyper);
  j["train_inputs"] = std::move(inputs);
  j["train_targets"] = std::move(targets);
  j["input_stats"] = std::move(input_stats);
  j["target_stats"] = m.target_stats ? stats_to_json(*m.target_stats) : nlohmann::json(nullptr);
  return j;
}

inline GprModel gpr_from_json(const nlohmann::json& j) {
  try {
    const auto d = j.at("dimension").get<Eigen::Index>();
    const auto& rows = j.at("train_inputs");
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = rows.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(row.size()) != d) {
        throw Error(ErrorCode::DimensionMismatch, "model row width differs from its dimension");
      }
      for (Eigen::Index c = 0; c < d; ++c) X(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    const auto& t = j.at("train_targets");
    Eigen::VectorXd y(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) y(static_cast<Eigen::Index>(i)) = t[i].get<double>();

    GprModel m = fit(X, y, hyper_from_json(j.at("hyperparameters")));
    for (const auto& s : j.at("input_stats")) m.input_stats.push_back(stats_from_json(s));
    if (!j.at("target_stats").is_null()) m.target_stats = stats_from_json(j.at("target_stats"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model file: ") + e.what());
  }
}

}  // namespace myotorque::json_codec
