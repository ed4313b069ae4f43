#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "myotorque/gpr.hpp"
#include "myotorque/preprocess.hpp"

namespace myotorque {

enum class FoldUnit { segment, sample };

std::string_view to_string(FoldUnit unit);
FoldUnit fold_unit_from_string(std::string_view name);

struct FoldAssignment {
  int k = 5;
  FoldUnit unit = FoldUnit::segment;
  std::map<int, int> assignment;  // unit id -> fold in [0, k)
  std::uint64_t seed = 0;

  std::vector<std::size_t> fold_sizes() const;
};

// Seeded Fisher-Yates shuffle of the unit ids, then round-robin into k folds.
FoldAssignment kfold_split(const std::vector<int>& unit_ids, int k, std::uint64_t seed,
                           FoldUnit unit = FoldUnit::segment);

// Units of a table: distinct non-zero segment ids, or every row index.
std::vector<int> cv_units(const FeatureTable& table, FoldUnit unit);

double mse(std::span<const double> y_true, std::span<const double> y_pred);
double rmse(std::span<const double> y_true, std::span<const double> y_pred);

// (a - b) / a; throws NonPositiveBaseline unless a > 0.
double relative_improvement(double metric_a, double metric_b);

// rmse / max |y_true| in original units; throws DegenerateTarget if the
// measured signal is identically zero.
double rmse_percent_of_peak(std::span<const double> y_true, std::span<const double> y_pred);

struct GpOptions {
  OptimizerOptions optimizer;
  std::size_t cap = 2000;           // training rows kept (uniform stride) for the final fit
  std::size_t optimize_cap = 500;   // rows used for the hyperparameter search
  bool fix_scales = true;           // hold output and length scale at 1
};

// Uniform-stride subsample of 0..n-1 down to at most cap indices.
std::vector<std::size_t> stride_subsample(std::size_t n, std::size_t cap);

// Standardizes columns and targets with statistics fitted on `train` alone,
// searches hyperparameters and fits. The returned model carries the stats.
GprModel train_model(const FeatureTable& train, const GpOptions& opts);

Eigen::MatrixXd standardize_rows(const Eigen::MatrixXd& rows, const std::vector<NormalizationStats>& stats);

// Posterior mean on the normalized scale for raw (unnormalized) feature rows.
Eigen::VectorXd predict_normalized(const GprModel& model, const Eigen::MatrixXd& raw_rows);
// Denormalized to the target's original unit.
Eigen::VectorXd predict_original(const GprModel& model, const Eigen::MatrixXd& raw_rows);

struct FoldMetrics {
  int fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double mse_normalized = 0.0;
  double rmse_normalized = 0.0;
  Hyperparameters hyper;
  std::vector<NormalizationStats> input_stats;
  std::optional<NormalizationStats> target_stats;
};

struct MetricsReport {
  Joint joint = Joint::knee;
  ModelConfig config = ModelConfig::baseline;
  std::size_t n_rows = 0;
  std::size_t dimension = 0;
  int k = 5;
  FoldUnit unit = FoldUnit::segment;
  std::uint64_t seed = 0;
  std::size_t cap = 0;
  std::vector<FoldMetrics> folds;
  double mse_normalized = 0.0;   // mean of the per-fold MSEs
  double rmse_normalized = 0.0;  // sqrt(mse_normalized)
  // Out-of-fold estimate per table row in original units; NaN for rows never
  // tested (segment 0 under segment folds).
  std::vector<double> oof_estimate;
};

MetricsReport evaluate_cv(const FeatureTable& table, const FoldAssignment& folds, const GpOptions& opts);

enum class Split { train, test };

struct ScatterExport {
  Joint joint = Joint::knee;
  ModelConfig config = ModelConfig::baseline;
  std::vector<double> measured;
  std::vector<double> estimated;
  std::vector<Split> split;
};

// Out-of-fold estimates tagged test, followed by in-sample estimates of
// `full_model` for every row tagged train (when a model is given).
ScatterExport export_scatter(const FeatureTable& table, const MetricsReport& report,
                             const GprModel* full_model = nullptr);

struct TimeseriesExport {
  std::vector<double> time_s;
  std::vector<double> measured;
  std::vector<double> estimated;
};

// Rows of one take predicted with `model`, in original units.
TimeseriesExport export_timeseries(const FeatureTable& table, int take, const GprModel& model);

void write_metrics_csv(std::ostream& os, const std::vector<MetricsReport>& reports);
void write_scatter_csv(std::ostream& os, const ScatterExport& scatter);
void write_timeseries_csv(std::ostream& os, const TimeseriesExport& series);

// Plain-text table: rows baseline / EMG / FMG, an MSE and RMSE column pair
// per joint.
std::string render_table(const std::vector<MetricsReport>& reports);

}  // namespace myotorque
