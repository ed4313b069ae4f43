#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "myotorque/timeseries.hpp"

namespace myotorque {

// Log-space hyperparameters of a zero-mean GP with RBF covariance
//   k(x, x') = s^2 exp(-|x - x'|^2 / (2 l^2)).
// With s = l = 1 this is exactly exp(-|x - x'|^2 / 2).
struct Hyperparameters {
  double log_noise_variance = std::log(0.1);
  double log_output_scale = 0.0;
  double log_length_scale = 0.0;

  double noise_variance() const { return std::exp(log_noise_variance); }
  double output_scale() const { return std::exp(log_output_scale); }
  double length_scale() const { return std::exp(log_length_scale); }
  double prior_variance() const { return std::exp(2.0 * log_output_scale); }

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

// Which of the optional log-parameters are held constant. Noise is always
// learned.
struct FixedMask {
  bool output_scale = true;
  bool length_scale = true;

  std::size_t active_count() const { return 1 + (output_scale ? 0 : 1) + (length_scale ? 0 : 1); }
};

double kernel_rbf(const Eigen::Ref<const Eigen::VectorXd>& x,
                  const Eigen::Ref<const Eigen::VectorXd>& x_prime, const Hyperparameters& hyper);

// Noise-free kernel matrix over the rows of X.
Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& X, const Hyperparameters& hyper);

// K(A, B) with one row per row of A and one column per row of B.
Eigen::MatrixXd cross_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                             const Hyperparameters& hyper);

struct GprModel {
  Eigen::MatrixXd train_inputs;
  Eigen::VectorXd train_targets;
  Hyperparameters hyper;
  Eigen::MatrixXd cholesky_lower;  // L with L L^T = K + (noise + jitter) I
  Eigen::VectorXd alpha;           // (K + noise I)^-1 y
  double jitter = 0.0;             // diagonal added beyond the noise term, usually 0
  std::vector<NormalizationStats> input_stats;
  std::optional<NormalizationStats> target_stats;

  std::size_t size() const { return static_cast<std::size_t>(train_inputs.rows()); }
  std::size_t dimension() const { return static_cast<std::size_t>(train_inputs.cols()); }
};

// Exact inference. On Cholesky failure a jitter of 1e-9 * mean(diag) is added
// and grown x10 per retry up to 1e-3 * mean(diag); beyond that the fit fails
// with NotPositiveDefinite.
GprModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Hyperparameters& hyper);

double log_marginal_likelihood(const GprModel& model);

// Gradient of the LML over the active log-parameters, ordered
// (log noise variance, log output scale, log length scale), skipping fixed ones.
Eigen::VectorXd lml_gradient(const GprModel& model, const FixedMask& fixed = {});

struct OptimizerOptions {
  int restarts = 5;
  int max_iters = 100;
  double tolerance = 1e-6;  // on the projected gradient norm
  FixedMask fixed;
  std::uint64_t seed = 0;
  Hyperparameters initial;  // supplies the values of fixed parameters
  double min_log_noise = std::log(1e-6);
  double max_log_noise = std::log(1e2);
  double min_log_scale = -5.0;
  double max_log_scale = 5.0;
};

struct RestartTrace {
  Hyperparameters start;
  double start_lml = 0.0;
  Hyperparameters end;
  double end_lml = 0.0;
  int iterations = 0;
  bool failed = false;
};

struct OptimizationResult {
  Hyperparameters hyper;
  double lml = 0.0;
  std::vector<RestartTrace> restarts;
};

// Multi-start quasi-Newton (BFGS with backtracking, box-projected) ascent of
// the LML in log space. Restart starting points form a seeded Latin-hypercube
// grid on [-4, 1] for each active parameter. The best end point wins, ties to
// the lowest restart index.
OptimizationResult optimize_hyperparameters(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                            const OptimizerOptions& opts = {});

struct Prediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // latent variance, clamped at 0; empty if not requested
};

Prediction predict(const GprModel& model, const Eigen::MatrixXd& X_star, bool with_variance = true);

// Text container (JSON) with inputs, targets, hyperparameters and
// normalization statistics. Loading refits, reproducing predictions exactly.
void save_model(std::ostream& os, const GprModel& model);
GprModel load_model(std::istream& is);

}  // namespace myotorque
