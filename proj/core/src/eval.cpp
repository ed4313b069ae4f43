#include "myotorque/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "csv_util.hpp"

namespace myotorque {

namespace {

using csv::format_double;

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::string display_name(ModelConfig c) {
  switch (c) {
    case ModelConfig::baseline: return "baseline";
    case ModelConfig::emg: return "EMG";
    case ModelConfig::fmg: return "FMG";
  }
  return "?";
}

}  // namespace

std::string_view to_string(FoldUnit unit) { return unit == FoldUnit::segment ? "segment" : "sample"; }

FoldUnit fold_unit_from_string(std::string_view name) {
  if (name == "segment") return FoldUnit::segment;
  if (name == "sample") return FoldUnit::sample;
  throw Error(ErrorCode::ParseError, "unknown fold unit '" + std::string(name) + "'");
}

std::vector<std::size_t> FoldAssignment::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(k, 0)), 0);
  for (const auto& [unit_id, fold] : assignment) ++sizes[static_cast<std::size_t>(fold)];
  return sizes;
}

FoldAssignment kfold_split(const std::vector<int>& unit_ids, int k, std::uint64_t seed, FoldUnit unit) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k-fold needs k >= 2");
  const std::set<int> distinct(unit_ids.begin(), unit_ids.end());
  if (distinct.size() != unit_ids.size()) {
    throw Error(ErrorCode::InvalidArgument, "unit ids must be unique");
  }
  if (unit_ids.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::TooFewUnits, std::to_string(unit_ids.size()) + " units cannot fill " +
                                            std::to_string(k) + " folds");
  }
  std::vector<int> order(distinct.begin(), distinct.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

  FoldAssignment out;
  out.k = k;
  out.unit = unit;
  out.seed = seed;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.assignment[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  return out;
}

std::vector<int> cv_units(const FeatureTable& table, FoldUnit unit) {
  std::vector<int> ids;
  if (unit == FoldUnit::sample) {
    ids.resize(table.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    return ids;
  }
  const std::set<int> segs(table.segment_of_row.begin(), table.segment_of_row.end());
  for (int s : segs) {
    if (s != 0) ids.push_back(s);
  }
  return ids;
}

double mse(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(y_true.size()) + " measured vs " +
                                               std::to_string(y_pred.size()) + " estimated values");
  }
  if (y_true.empty()) throw Error(ErrorCode::LengthMismatch, "mse of empty vectors");
  double ss = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double r = y_true[i] - y_pred[i];
    ss += r * r;
  }
  return ss / static_cast<double>(y_true.size());
}

double rmse(std::span<const double> y_true, std::span<const double> y_pred) {
  return std::sqrt(mse(y_true, y_pred));
}

double relative_improvement(double metric_a, double metric_b) {
  if (!(metric_a > 0.0)) {
    throw Error(ErrorCode::NonPositiveBaseline, "reference metric must be positive");
  }
  return (metric_a - metric_b) / metric_a;
}

double rmse_percent_of_peak(std::span<const double> y_true, std::span<const double> y_pred) {
  double peak = 0.0;
  for (double v : y_true) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) throw Error(ErrorCode::DegenerateTarget, "measured torque is identically zero");
  return rmse(y_true, y_pred) / peak;
}

std::vector<std::size_t> stride_subsample(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> idx;
  if (cap == 0 || n <= cap) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  idx.reserve(cap);
  for (std::size_t k = 0; k < cap; ++k) idx.push_back(k * n / cap);
  return idx;
}

Eigen::MatrixXd standardize_rows(const Eigen::MatrixXd& rows, const std::vector<NormalizationStats>& stats) {
  if (static_cast<std::size_t>(rows.cols()) != stats.size()) {
    throw Error(ErrorCode::DimensionMismatch, "rows have " + std::to_string(rows.cols()) +
                                                  " columns but " + std::to_string(stats.size()) +
                                                  " normalization entries");
  }
  Eigen::MatrixXd out(rows.rows(), rows.cols());
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    const auto& s = stats[static_cast<std::size_t>(c)];
    out.col(c) = ((rows.col(c).array() - s.mean()) / s.std_dev()).matrix();
  }
  return out;
}

GprModel train_model(const FeatureTable& train, const GpOptions& opts) {
  const std::size_t n = train.size();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "training needs at least 2 rows");

  std::vector<NormalizationStats> col_stats;
  for (Eigen::Index c = 0; c < train.rows.cols(); ++c) {
    const Eigen::VectorXd col = train.rows.col(c);
    col_stats.push_back(fit_stats(std::span<const double>(col.data(), static_cast<std::size_t>(col.size()))));
  }
  const NormalizationStats target_stats =
      fit_stats(std::span<const double>(train.targets.data(), n));

  const Eigen::MatrixXd Z = standardize_rows(train.rows, col_stats);
  const Eigen::VectorXd t = ((train.targets.array() - target_stats.mean()) / target_stats.std_dev()).matrix();

  const auto keep = stride_subsample(n, opts.cap);
  Eigen::MatrixXd Xk(static_cast<Eigen::Index>(keep.size()), Z.cols());
  Eigen::VectorXd yk(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    Xk.row(static_cast<Eigen::Index>(i)) = Z.row(static_cast<Eigen::Index>(keep[i]));
    yk(static_cast<Eigen::Index>(i)) = t(static_cast<Eigen::Index>(keep[i]));
  }

  const auto search = stride_subsample(keep.size(), opts.optimize_cap);
  Eigen::MatrixXd Xo(static_cast<Eigen::Index>(search.size()), Z.cols());
  Eigen::VectorXd yo(static_cast<Eigen::Index>(search.size()));
  for (std::size_t i = 0; i < search.size(); ++i) {
    Xo.row(static_cast<Eigen::Index>(i)) = Xk.row(static_cast<Eigen::Index>(search[i]));
    yo(static_cast<Eigen::Index>(i)) = yk(static_cast<Eigen::Index>(search[i]));
  }

  OptimizerOptions oo = opts.optimizer;
  if (opts.fix_scales) {
    oo.fixed = FixedMask{true, true};
    oo.initial.log_output_scale = 0.0;
    oo.initial.log_length_scale = 0.0;
  } else {
    oo.fixed = FixedMask{false, false};
  }
  const OptimizationResult best = optimize_hyperparameters(Xo, yo, oo);

  GprModel model = fit(Xk, yk, best.hyper);
  model.input_stats = std::move(col_stats);
  model.target_stats = target_stats;
  return model;
}

Eigen::VectorXd predict_normalized(const GprModel& model, const Eigen::MatrixXd& raw_rows) {
  return predict(model, standardize_rows(raw_rows, model.input_stats), false).mean;
}

Eigen::VectorXd predict_original(const GprModel& model, const Eigen::MatrixXd& raw_rows) {
  if (!model.target_stats) {
    throw Error(ErrorCode::InvalidArgument, "model has no target normalization statistics");
  }
  const auto& ts = *model.target_stats;
  return (predict_normalized(model, raw_rows).array() * ts.std_dev() + ts.mean()).matrix();
}

MetricsReport evaluate_cv(const FeatureTable& table, const FoldAssignment& folds, const GpOptions& opts) {
  const std::size_t n = table.size();
  MetricsReport report;
  report.joint = table.joint;
  report.config = table.config;
  report.n_rows = n;
  report.dimension = table.dimension();
  report.k = folds.k;
  report.unit = folds.unit;
  report.seed = folds.seed;
  report.cap = opts.cap;
  report.oof_estimate.assign(n, std::numeric_limits<double>::quiet_NaN());

  // Fold of each row; -1 means always in training (segment id 0).
  std::vector<int> fold_of_row(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const int unit_id = folds.unit == FoldUnit::sample ? static_cast<int>(i) : table.segment_of_row[i];
    if (folds.unit == FoldUnit::segment && unit_id == 0) continue;
    auto it = folds.assignment.find(unit_id);
    if (it == folds.assignment.end()) {
      throw Error(ErrorCode::InvalidArgument,
                  "fold assignment does not cover unit " + std::to_string(unit_id));
    }
    fold_of_row[i] = it->second;
  }

  double mse_sum = 0.0;
  for (int f = 0; f < folds.k; ++f) {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < n; ++i) (fold_of_row[i] == f ? test_idx : train_idx).push_back(i);
    if (test_idx.empty()) throw Error(ErrorCode::TooFewUnits, "fold " + std::to_string(f) + " is empty");

    // The model (and its normalization statistics) is built from the training
    // rows only; test rows are selected afterwards.
    const GprModel model = train_model(select_rows(table, train_idx), opts);
    const FeatureTable test = select_rows(table, test_idx);

    const Eigen::VectorXd pred = predict_normalized(model, test.rows);
    const auto& ts = *model.target_stats;
    const Eigen::VectorXd truth = ((test.targets.array() - ts.mean()) / ts.std_dev()).matrix();

    FoldMetrics fm;
    fm.fold = f;
    fm.n_train = train_idx.size();
    fm.n_test = test_idx.size();
    fm.mse_normalized = mse(to_vector(truth), to_vector(pred));
    fm.rmse_normalized = std::sqrt(fm.mse_normalized);
    fm.hyper = model.hyper;
    fm.input_stats = model.input_stats;
    fm.target_stats = model.target_stats;
    report.folds.push_back(fm);
    mse_sum += fm.mse_normalized;

    for (std::size_t j = 0; j < test_idx.size(); ++j) {
      report.oof_estimate[test_idx[j]] = ts.invert(pred(static_cast<Eigen::Index>(j)));
    }
  }
  report.mse_normalized = mse_sum / static_cast<double>(folds.k);
  report.rmse_normalized = std::sqrt(report.mse_normalized);
  return report;
}

ScatterExport export_scatter(const FeatureTable& table, const MetricsReport& report,
                             const GprModel* full_model) {
  ScatterExport out;
  out.joint = table.joint;
  out.config = table.config;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (std::isnan(report.oof_estimate[i])) continue;
    out.measured.push_back(table.targets(static_cast<Eigen::Index>(i)));
    out.estimated.push_back(report.oof_estimate[i]);
    out.split.push_back(Split::test);
  }
  if (full_model != nullptr) {
    const Eigen::VectorXd est = predict_original(*full_model, table.rows);
    for (std::size_t i = 0; i < table.size(); ++i) {
      out.measured.push_back(table.targets(static_cast<Eigen::Index>(i)));
      out.estimated.push_back(est(static_cast<Eigen::Index>(i)));
      out.split.push_back(Split::train);
    }
  }
  return out;
}

TimeseriesExport export_timeseries(const FeatureTable& table, int take, const GprModel& model) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.take_of_row[i] == take) rows.push_back(i);
  }
  TimeseriesExport out;
  if (rows.empty()) return out;
  const FeatureTable part = select_rows(table, rows);
  const Eigen::VectorXd est = predict_original(model, part.rows);
  out.time_s = part.time_s;
  out.measured = to_vector(part.targets);
  out.estimated = to_vector(est);
  return out;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsReport>& reports) {
  os << "joint,config,fold,mse_norm,rmse_norm\n";
  for (const auto& r : reports) {
    const std::string prefix = std::string(to_string(r.joint)) + ',' + std::string(to_string(r.config)) + ',';
    for (const auto& f : r.folds) {
      os << prefix << f.fold << ',' << format_double(f.mse_normalized) << ','
         << format_double(f.rmse_normalized) << '\n';
    }
    os << prefix << "mean," << format_double(r.mse_normalized) << ',' << format_double(r.rmse_normalized)
       << '\n';
  }
}

void write_scatter_csv(std::ostream& os, const ScatterExport& scatter) {
  os << "measured,estimated,split\n";
  for (std::size_t i = 0; i < scatter.measured.size(); ++i) {
    os << format_double(scatter.measured[i]) << ',' << format_double(scatter.estimated[i]) << ','
       << (scatter.split[i] == Split::test ? "test" : "train") << '\n';
  }
}

void write_timeseries_csv(std::ostream& os, const TimeseriesExport& series) {
  os << "time_s,measured_nm,estimated_nm\n";
  for (std::size_t i = 0; i < series.time_s.size(); ++i) {
    os << format_double(series.time_s[i]) << ',' << format_double(series.measured[i]) << ','
       << format_double(series.estimated[i]) << '\n';
  }
}

std::string render_table(const std::vector<MetricsReport>& reports) {
  std::vector<Joint> joints;
  for (Joint j : {Joint::ankle, Joint::knee}) {
    if (std::any_of(reports.begin(), reports.end(), [&](const auto& r) { return r.joint == j; })) {
      joints.push_back(j);
    }
  }
  int k = reports.empty() ? 5 : reports.front().k;
  std::ostringstream os;
  char buf[64];
  os << k << "-fold cross-validation results\n";
  os << "          ";
  for (Joint j : joints) {
    std::snprintf(buf, sizeof buf, "%-18s", std::string(to_string(j)).c_str());
    os << buf;
  }
  os << "\n          ";
  for (std::size_t i = 0; i < joints.size(); ++i) os << "MSE     RMSE      ";
  os << '\n';
  for (ModelConfig c : {ModelConfig::baseline, ModelConfig::emg, ModelConfig::fmg}) {
    if (std::none_of(reports.begin(), reports.end(), [&](const auto& r) { return r.config == c; })) continue;
    std::snprintf(buf, sizeof buf, "%-10s", display_name(c).c_str());
    os << buf;
    for (Joint j : joints) {
      auto it = std::find_if(reports.begin(), reports.end(),
                             [&](const auto& r) { return r.joint == j && r.config == c; });
      if (it == reports.end()) {
        os << "-       -         ";
      } else {
        std::snprintf(buf, sizeof buf, "%.4f  %.4f    ", it->mse_normalized, it->rmse_normalized);
        os << buf;
      }
    }
    os << '\n';
  }
  os << "(metrics on the z-scored scale)\n";
  return os.str();
}

}  // namespace myotorque
