#include "myotorque/gpr.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "json_codec.hpp"
#include "myotorque/error.hpp"

namespace myotorque {

namespace {

constexpr int kModelFormatVersion = 1;

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  // Direct differences: no cancellation for nearby points.
  Eigen::MatrixXd d(A.rows(), B.rows());
  const Eigen::MatrixXd At = A.transpose();
  const Eigen::MatrixXd Bt = B.transpose();
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) d(i, j) = (At.col(i) - Bt.col(j)).squaredNorm();
  }
  return d;
}

Eigen::MatrixXd rbf_from_distances(const Eigen::MatrixXd& d2, const Hyperparameters& h) {
  const double inv = 1.0 / (2.0 * h.length_scale() * h.length_scale());
  return (h.prior_variance() * (-inv * d2.array()).exp()).matrix();
}

Eigen::MatrixXd self_distances(const Eigen::MatrixXd& X) {
  const Eigen::MatrixXd Xt = X.transpose();
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = (Xt.col(i) - Xt.col(j)).squaredNorm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

struct Objective {
  const Eigen::MatrixXd& X;
  const Eigen::VectorXd& y;
  const OptimizerOptions& opts;

  Hyperparameters unpack(const Eigen::VectorXd& theta) const {
    Hyperparameters h = opts.initial;
    Eigen::Index k = 0;
    h.log_noise_variance = theta(k++);
    if (!opts.fixed.output_scale) h.log_output_scale = theta(k++);
    if (!opts.fixed.length_scale) h.log_length_scale = theta(k++);
    return h;
  }

  // Negative LML and its gradient; +inf when the fit fails.
  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
    try {
      const GprModel m = fit(X, y, unpack(theta));
      grad = -lml_gradient(m, opts.fixed);
      const double f = -log_marginal_likelihood(m);
      return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      grad = Eigen::VectorXd::Zero(theta.size());
      return std::numeric_limits<double>::infinity();
    }
  }
};

struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  Eigen::VectorXd clamp(const Eigen::VectorXd& v) const { return v.cwiseMax(lo).cwiseMin(hi); }

  Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g) const {
    Eigen::VectorXd pg = g;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if ((x(i) <= lo(i) && g(i) > 0.0) || (x(i) >= hi(i) && g(i) < 0.0)) pg(i) = 0.0;
    }
    return pg;
  }
};

RestartTrace run_bfgs(const Objective& obj, const Box& box, Eigen::VectorXd x) {
  RestartTrace trace;
  x = box.clamp(x);
  Eigen::VectorXd g;
  double f = obj(x, g);
  trace.start = obj.unpack(x);
  trace.start_lml = -f;
  if (!std::isfinite(f)) {
    trace.failed = true;
    trace.end = trace.start;
    trace.end_lml = -f;
    return trace;
  }

  const Eigen::Index n = x.size();
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  constexpr double kMaxStep = 2.0;
  for (int it = 0; it < obj.opts.max_iters; ++it) {
    trace.iterations = it;
    const Eigen::VectorXd pg = box.projected_gradient(x, g);
    if (pg.norm() <= obj.opts.tolerance) break;

    Eigen::VectorXd p = -H * g;
    if (p.dot(g) >= 0.0) {
      H.setIdentity();
      p = -g;
    }
    if (p.norm() > kMaxStep) p *= kMaxStep / p.norm();

    double t = 1.0;
    Eigen::VectorXd xn;
    Eigen::VectorXd gn;
    double fn = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      xn = box.clamp(x + t * p);
      fn = obj(xn, gn);
      if (std::isfinite(fn) && fn <= f + 1e-4 * g.dot(xn - x)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;

    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd yk = gn - g;
    const double sy = s.dot(yk);
    const bool stalled = (f - fn) <= 1e-14 * (1.0 + std::abs(f)) && s.norm() < 1e-10;
    x = xn;
    g = gn;
    f = fn;
    if (stalled) break;
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      H = (I - rho * s * yk.transpose()) * H * (I - rho * yk * s.transpose()) + rho * s * s.transpose();
    }
    trace.iterations = it + 1;
  }
  trace.end = obj.unpack(x);
  trace.end_lml = -f;
  return trace;
}

}  // namespace

double kernel_rbf(const Eigen::Ref<const Eigen::VectorXd>& x,
                  const Eigen::Ref<const Eigen::VectorXd>& x_prime, const Hyperparameters& hyper) {
  if (x.size() != x_prime.size()) {
    throw Error(ErrorCode::DimensionMismatch, "kernel inputs have dimensions " +
                                                  std::to_string(x.size()) + " and " +
                                                  std::to_string(x_prime.size()));
  }
  const double ell = hyper.length_scale();
  const double d2 = ((x - x_prime) / ell).squaredNorm();
  return hyper.prior_variance() * std::exp(-0.5 * d2);
}

Eigen::MatrixXd gram_matrix(const Eigen::MatrixXd& X, const Hyperparameters& hyper) {
  return rbf_from_distances(self_distances(X), hyper);
}

Eigen::MatrixXd cross_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                             const Hyperparameters& hyper) {
  if (A.cols() != B.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "inputs have " + std::to_string(A.cols()) +
                                                  " columns, model expects " +
                                                  std::to_string(B.cols()));
  }
  return rbf_from_distances(squared_distances(A, B), hyper);
}

GprModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Hyperparameters& hyper) {
  if (X.rows() < 1) throw Error(ErrorCode::InvalidArgument, "cannot fit a GP to zero rows");
  if (X.rows() != y.size()) {
    throw Error(ErrorCode::DimensionMismatch, std::to_string(X.rows()) + " input rows but " +
                                                  std::to_string(y.size()) + " targets");
  }
  if (!y.allFinite() || !X.allFinite()) {
    throw Error(ErrorCode::NonFiniteValue, "training data contains non-finite values");
  }
  const double noise = hyper.noise_variance();
  if (!std::isfinite(noise) || !std::isfinite(hyper.prior_variance()) ||
      !std::isfinite(hyper.length_scale()) || hyper.length_scale() <= 0.0) {
    throw Error(ErrorCode::InvalidArgument, "hyperparameters are not finite");
  }

  GprModel m;
  m.train_inputs = X;
  m.train_targets = y;
  m.hyper = hyper;

  Eigen::MatrixXd K = gram_matrix(X, hyper);
  K.diagonal().array() += noise;
  const double mean_diag = K.diagonal().mean();

  Eigen::LLT<Eigen::MatrixXd> llt(K);
  double jitter = 0.0;
  double factor = 1e-9;
  while (llt.info() != Eigen::Success) {
    if (factor > 1e-3 * (1.0 + 1e-9)) {
      throw Error(ErrorCode::NotPositiveDefinite,
                  "kernel matrix is not positive definite even with jitter 1e-3 * mean(diag)");
    }
    const double next = factor * mean_diag;
    K.diagonal().array() += next - jitter;
    jitter = next;
    factor *= 10.0;
    llt.compute(K);
  }
  m.jitter = jitter;
  m.cholesky_lower = llt.matrixL();
  m.alpha = llt.solve(y);
  return m;
}

double log_marginal_likelihood(const GprModel& model) {
  const double n = static_cast<double>(model.size());
  const double data_fit = -0.5 * model.train_targets.dot(model.alpha);
  const double log_det_half = model.cholesky_lower.diagonal().array().log().sum();
  return data_fit - log_det_half - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd lml_gradient(const GprModel& model, const FixedMask& fixed) {
  const auto n = static_cast<Eigen::Index>(model.size());
  const auto L = model.cholesky_lower.triangularView<Eigen::Lower>();
  Eigen::VectorXd grad(static_cast<Eigen::Index>(fixed.active_count()));
  const double noise = model.hyper.noise_variance();

  if (fixed.output_scale && fixed.length_scale) {
    // Only dK/dlog(noise) = noise * I is needed: tr(K^-1) = |L^-1|_F^2.
    Eigen::MatrixXd Linv = Eigen::MatrixXd::Identity(n, n);
    L.solveInPlace(Linv);
    grad(0) = 0.5 * noise * (model.alpha.squaredNorm() - Linv.squaredNorm());
    return grad;
  }

  Eigen::MatrixXd W = Eigen::MatrixXd::Identity(n, n);
  L.solveInPlace(W);
  L.transpose().solveInPlace(W);  // W = K^-1
  W = model.alpha * model.alpha.transpose() - W;

  Eigen::Index k = 0;
  grad(k++) = 0.5 * noise * W.trace();
  const Eigen::MatrixXd d2 = self_distances(model.train_inputs);
  const Eigen::MatrixXd Kf = rbf_from_distances(d2, model.hyper);
  if (!fixed.output_scale) grad(k++) = (W.array() * Kf.array()).sum();
  if (!fixed.length_scale) {
    const double ell2 = model.hyper.length_scale() * model.hyper.length_scale();
    grad(k++) = 0.5 * (W.array() * Kf.array() * d2.array()).sum() / ell2;
  }
  return grad;
}

OptimizationResult optimize_hyperparameters(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                            const OptimizerOptions& opts) {
  if (X.rows() < 2) throw Error(ErrorCode::InvalidArgument, "hyperparameter search needs n >= 2");
  if (opts.restarts < 1) throw Error(ErrorCode::InvalidArgument, "need at least one restart");

  const auto dim = static_cast<Eigen::Index>(opts.fixed.active_count());
  Box box{Eigen::VectorXd(dim), Eigen::VectorXd(dim)};
  box.lo(0) = opts.min_log_noise;
  box.hi(0) = opts.max_log_noise;
  for (Eigen::Index i = 1; i < dim; ++i) {
    box.lo(i) = opts.min_log_scale;
    box.hi(i) = opts.max_log_scale;
  }

  // Latin hypercube over [-4, 1]: one stratum per restart for every parameter.
  constexpr double kGridLo = -4.0;
  constexpr double kGridHi = 1.0;
  const auto R = static_cast<std::size_t>(opts.restarts);
  std::mt19937_64 rng(opts.seed);
  std::vector<Eigen::VectorXd> starts(R, Eigen::VectorXd(dim));
  for (Eigen::Index p = 0; p < dim; ++p) {
    std::vector<std::size_t> strata(R);
    std::iota(strata.begin(), strata.end(), 0);
    for (std::size_t i = R; i > 1; --i) std::swap(strata[i - 1], strata[rng() % i]);
    for (std::size_t r = 0; r < R; ++r) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      starts[r](p) = kGridLo + (kGridHi - kGridLo) * (static_cast<double>(strata[r]) + u) /
                                   static_cast<double>(R);
    }
  }

  const Objective obj{X, y, opts};
  OptimizationResult result;
  result.lml = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t r = 0; r < R; ++r) {
    RestartTrace trace = run_bfgs(obj, box, starts[r]);
    if (!trace.failed && trace.end_lml > result.lml) {
      result.lml = trace.end_lml;
      result.hyper = trace.end;
      any = true;
    }
    result.restarts.push_back(trace);
  }
  if (!any) {
    throw Error(ErrorCode::NotPositiveDefinite, "every optimizer restart failed to factorize");
  }
  return result;
}

Prediction predict(const GprModel& model, const Eigen::MatrixXd& X_star, bool with_variance) {
  if (static_cast<std::size_t>(X_star.cols()) != model.dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "query has " + std::to_string(X_star.cols()) +
                                                  " features, model expects " +
                                                  std::to_string(model.dimension()));
  }
  Prediction out;
  // K* stored as n x m so the triangular solve works column-wise.
  const Eigen::MatrixXd Ks = cross_kernel(model.train_inputs, X_star, model.hyper);
  out.mean = Ks.transpose() * model.alpha;
  if (with_variance) {
    Eigen::MatrixXd V = Ks;
    model.cholesky_lower.triangularView<Eigen::Lower>().solveInPlace(V);
    out.variance =
        (model.hyper.prior_variance() - V.colwise().squaredNorm().array()).cwiseMax(0.0).matrix().transpose();
  }
  return out;
}

void save_model(std::ostream& os, const GprModel& model) {
  nlohmann::json j = json_codec::gpr_to_json(model);
  j["format"] = "myotorque-gpr";
  j["version"] = kModelFormatVersion;
  os << j.dump() << '\n';
  if (!os) throw Error(ErrorCode::IoError, "failed writing model");
}

GprModel load_model(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model file: ") + e.what());
  }
  if (j.value("format", "") != "myotorque-gpr") {
    throw Error(ErrorCode::ParseError, "not a GP model file");
  }
  if (j.value("version", -1) != kModelFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "model format version " +
                                                std::to_string(j.value("version", -1)) +
                                                " is not supported (expected " +
                                                std::to_string(kModelFormatVersion) + ")");
  }
  return json_codec::gpr_from_json(j);
}

}  // namespace myotorque
