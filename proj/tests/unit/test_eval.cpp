#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "myotorque/error.hpp"
#include "myotorque/eval.hpp"
#include "myotorque/synthgen.hpp"

using namespace myotorque;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// n rows of N(0, 1) inputs in blocks of `block` rows per segment id (1-based).
FeatureTable random_table(std::size_t n, std::size_t block, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  FeatureTable t;
  t.joint = Joint::ankle;
  t.config = ModelConfig::baseline;
  t.column_names = feature_columns(t.joint, t.config);
  t.rows.resize(static_cast<Eigen::Index>(n), 2);
  t.targets.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    t.rows(r, 0) = 20.0 + 15.0 * nd(rng);
    t.rows(r, 1) = -3.0 + 40.0 * nd(rng);
    t.targets(r) = 5.0 * nd(rng) + 1.0;
    t.segment_of_row.push_back(static_cast<int>(i / block) + 1);
    t.take_of_row.push_back(static_cast<int>(i / (n / 2)));
    t.time_s.push_back(static_cast<double>(i) / 200.0);
  }
  return t;
}

GpOptions quick_options() {
  GpOptions o;
  o.optimizer.restarts = 3;
  o.optimize_cap = 200;
  return o;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<int> iota_ids(int n, int first = 0) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = first + i;
  return ids;
}

}  // namespace

TEST_CASE("k-fold sizes", "[eval][kfold]") {
  const auto ten = kfold_split(iota_ids(10), 5, 1);
  CHECK(ten.fold_sizes() == std::vector<std::size_t>(5, 2));

  auto sizes = kfold_split(iota_ids(11), 5, 1).fold_sizes();
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<std::size_t>{2, 2, 2, 2, 3});

  try {
    (void)kfold_split(iota_ids(4), 5, 0);
    FAIL("expected TooFewUnits");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewUnits);
  }
  CHECK_THROWS_AS(kfold_split({1, 1, 2, 3, 4, 5}, 5, 0), Error);
  CHECK_THROWS_AS(kfold_split(iota_ids(10), 1, 0), Error);
}

TEST_CASE("k-fold assignment properties", "[eval][kfold][property]") {
  for (int n = 5; n < 60; n += 3) {
    for (int k : {2, 3, 5}) {
      if (n < k) continue;
      const auto ids = iota_ids(n, 100);
      const auto a = kfold_split(ids, k, static_cast<std::uint64_t>(n * k));
      REQUIRE(a.assignment.size() == ids.size());
      for (int id : ids) {
        REQUIRE(a.assignment.count(id) == 1);
        CHECK(a.assignment.at(id) >= 0);
        CHECK(a.assignment.at(id) < k);
      }
      const auto s = a.fold_sizes();
      CHECK(*std::max_element(s.begin(), s.end()) - *std::min_element(s.begin(), s.end()) <= 1);
      CHECK(kfold_split(ids, k, static_cast<std::uint64_t>(n * k)).assignment == a.assignment);
    }
  }
  // Different seeds shuffle differently.
  CHECK(kfold_split(iota_ids(50), 5, 1).assignment != kfold_split(iota_ids(50), 5, 2).assignment);
}

TEST_CASE("cross-validation units", "[eval][kfold]") {
  auto t = random_table(30, 10, 1);
  t.segment_of_row[0] = 0;
  t.segment_of_row[29] = 0;
  CHECK(cv_units(t, FoldUnit::segment) == std::vector<int>{1, 2, 3});
  CHECK(cv_units(t, FoldUnit::sample).size() == 30);
  CHECK(fold_unit_from_string(to_string(FoldUnit::sample)) == FoldUnit::sample);
}

TEST_CASE("error metrics by hand", "[eval][metrics]") {
  const std::vector<double> a{1.5, -2.0, 3.25};
  CHECK(mse(a, a) == 0.0);
  CHECK(rmse(a, a) == 0.0);
  CHECK(mse(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 1.0);
  CHECK(rmse(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 1.0);
  CHECK(mse(std::vector<double>{0, 2}, std::vector<double>{1, 0}) == 2.5);
  CHECK(rmse(std::vector<double>{0, 2}, std::vector<double>{1, 0}) == std::sqrt(2.5));
  try {
    (void)mse(std::vector<double>{1, 2}, std::vector<double>{1});
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
}

TEST_CASE("rmse is the root of mse", "[eval][metrics][property]") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(17), b(17);
    for (auto& x : a) x = nd(rng);
    for (auto& x : b) x = nd(rng);
    CHECK(rmse(a, b) == std::sqrt(mse(a, b)));
  }
}

TEST_CASE("relative improvements of the reported table", "[eval][metrics]") {
  // Ankle and knee, baseline vs FMG.
  CHECK_THAT(relative_improvement(0.0906, 0.0105), WithinAbs(0.884, 0.0005));
  CHECK_THAT(relative_improvement(0.3009, 0.1026), WithinAbs(0.659, 0.0005));
  CHECK_THAT(relative_improvement(0.0428, 0.0092), WithinAbs(0.785, 0.0005));
  CHECK_THAT(relative_improvement(0.2070, 0.0957), WithinAbs(0.538, 0.0005));
  CHECK(relative_improvement(2.0, 3.0) == -0.5);
  for (double bad : {0.0, -1.0}) {
    try {
      (void)relative_improvement(bad, 0.1);
      FAIL("expected NonPositiveBaseline");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonPositiveBaseline);
    }
  }
}

TEST_CASE("rmse as a fraction of peak torque", "[eval][metrics]") {
  const std::vector<double> y{0.0, 10.0};
  CHECK(rmse_percent_of_peak(y, y) == 0.0);
  CHECK_THAT(rmse_percent_of_peak(y, std::vector<double>{1.0, 10.0}), WithinRel(std::sqrt(0.5) / 10.0, 1e-15));
  CHECK_THAT(rmse_percent_of_peak(std::vector<double>{-20.0, 5.0}, std::vector<double>{-20.0, 7.0}),
             WithinRel(std::sqrt(2.0) / 20.0, 1e-15));
  try {
    (void)rmse_percent_of_peak(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 1.0});
    FAIL("expected DegenerateTarget");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateTarget);
  }
}

TEST_CASE("stride subsampling", "[eval]") {
  CHECK(stride_subsample(5, 10).size() == 5);
  const auto s = stride_subsample(10, 4);
  CHECK(s == std::vector<std::size_t>{0, 2, 5, 7});
  const auto big = stride_subsample(100003, 2000);
  REQUIRE(big.size() == 2000);
  for (std::size_t i = 1; i < big.size(); ++i) CHECK(big[i] > big[i - 1]);
  CHECK(big.back() < 100003);
}

TEST_CASE("normalization statistics come from training rows only", "[eval][cv][property]") {
  auto table = random_table(300, 15, 7);
  table.segment_of_row[0] = 0;  // an always-train row
  const auto folds = kfold_split(cv_units(table, FoldUnit::segment), 5, 3);
  const auto report = evaluate_cv(table, folds, quick_options());
  REQUIRE(report.folds.size() == 5);

  for (const auto& fm : report.folds) {
    std::vector<std::vector<double>> cols(2);
    std::vector<double> targets;
    std::size_t n_test = 0;
    for (std::size_t i = 0; i < table.size(); ++i) {
      const int s = table.segment_of_row[i];
      if (s != 0 && folds.assignment.at(s) == fm.fold) {
        ++n_test;
        continue;
      }
      for (int c = 0; c < 2; ++c) cols[static_cast<std::size_t>(c)].push_back(table.rows(static_cast<Eigen::Index>(i), c));
      targets.push_back(table.targets(static_cast<Eigen::Index>(i)));
    }
    CHECK(fm.n_test == n_test);
    CHECK(fm.n_train + fm.n_test == table.size());
    REQUIRE(fm.input_stats.size() == 2);
    for (int c = 0; c < 2; ++c) CHECK(fm.input_stats[static_cast<std::size_t>(c)] == fit_stats(cols[static_cast<std::size_t>(c)]));
    CHECK(*fm.target_stats == fit_stats(targets));
  }

  // Corrupting test rows of one fold cannot move that fold's statistics.
  auto poisoned = table;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const int s = table.segment_of_row[i];
    if (s != 0 && folds.assignment.at(s) == 2) {
      poisoned.rows.row(static_cast<Eigen::Index>(i)) *= 1000.0;
      poisoned.targets(static_cast<Eigen::Index>(i)) = -1e4;
    }
  }
  const auto report_p = evaluate_cv(poisoned, folds, quick_options());
  CHECK(report_p.folds[2].input_stats == report.folds[2].input_stats);
  CHECK(report_p.folds[2].target_stats == report.folds[2].target_stats);
  CHECK(report_p.folds[2].hyper == report.folds[2].hyper);
}

TEST_CASE("every tested row is tested once", "[eval][cv]") {
  auto table = random_table(200, 10, 8);
  for (std::size_t i = 0; i < 7; ++i) table.segment_of_row[i] = 0;
  const auto report = evaluate_cv(table, kfold_split(cv_units(table, FoldUnit::segment), 5, 1), quick_options());
  std::size_t tested = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    CHECK(std::isnan(report.oof_estimate[i]) == (table.segment_of_row[i] == 0));
    if (!std::isnan(report.oof_estimate[i])) ++tested;
  }
  std::size_t n_test = 0;
  for (const auto& f : report.folds) n_test += f.n_test;
  CHECK(n_test == tested);

  double sum = 0.0;
  for (const auto& f : report.folds) {
    CHECK(f.rmse_normalized == std::sqrt(f.mse_normalized));
    sum += f.mse_normalized;
  }
  CHECK_THAT(report.mse_normalized, WithinAbs(sum / 5.0, 1e-15));
  CHECK(std::abs(report.rmse_normalized - std::sqrt(report.mse_normalized)) <= 1e-12);

  const auto scatter = export_scatter(table, report);
  CHECK(scatter.measured.size() == tested);
  CHECK(scatter.estimated.size() == tested);
  CHECK(std::all_of(scatter.split.begin(), scatter.split.end(), [](Split s) { return s == Split::test; }));
}

TEST_CASE("pure noise is irreducible", "[eval][cv]") {
  const auto table = random_table(500, 10, 12);
  const auto report = evaluate_cv(table, kfold_split(cv_units(table, FoldUnit::segment), 5, 2), quick_options());
  CHECK(report.mse_normalized >= 0.8);
  CHECK(report.mse_normalized <= 1.2);
}

TEST_CASE("a target equal to an input column is learned", "[eval][cv]") {
  auto table = random_table(400, 10, 13);
  table.targets = table.rows.col(0);
  // Unit length scales cap the accuracy near 1e-3; learned scales let the
  // noise variance reach its floor.
  auto opts = quick_options();
  opts.fix_scales = false;
  for (FoldUnit unit : {FoldUnit::segment, FoldUnit::sample}) {
    const auto report = evaluate_cv(table, kfold_split(cv_units(table, unit), 5, 4, unit), opts);
    CHECK(report.mse_normalized <= 1e-4);
    for (const auto& f : report.folds) CHECK(f.hyper.noise_variance() <= 1e-4);
  }
}

TEST_CASE("cross-validation is deterministic", "[eval][cv]") {
  const auto table = random_table(250, 10, 14);
  const auto folds = kfold_split(cv_units(table, FoldUnit::segment), 5, 9);
  const auto a = evaluate_cv(table, folds, quick_options());
  const auto b = evaluate_cv(table, folds, quick_options());
  std::ostringstream sa, sb;
  write_metrics_csv(sa, {a});
  write_metrics_csv(sb, {b});
  CHECK(sa.str() == sb.str());
  for (std::size_t i = 0; i < a.oof_estimate.size(); ++i) {
    CHECK((a.oof_estimate[i] == b.oof_estimate[i] || (std::isnan(a.oof_estimate[i]) && std::isnan(b.oof_estimate[i]))));
  }
}

TEST_CASE("scatter exports of trivial predictors", "[eval][export]") {
  const auto table = random_table(40, 10, 15);
  MetricsReport perfect;
  perfect.oof_estimate.assign(table.targets.data(), table.targets.data() + table.size());
  const auto s = export_scatter(table, perfect);
  REQUIRE(s.measured.size() == table.size());
  for (std::size_t i = 0; i < s.measured.size(); ++i) CHECK(s.measured[i] == s.estimated[i]);

  MetricsReport constant;
  constant.oof_estimate.assign(table.size(), 3.5);
  const auto c = export_scatter(table, constant);
  for (double e : c.estimated) CHECK(e == 3.5);

  std::ostringstream os;
  write_scatter_csv(os, c);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "measured,estimated,split");
  std::size_t lines = 0;
  while (std::getline(is, line)) {
    ++lines;
    CHECK(line.ends_with(",test"));
  }
  CHECK(lines == table.size());
}

TEST_CASE("metrics csv and table layout", "[eval][export]") {
  MetricsReport r;
  r.joint = Joint::knee;
  r.config = ModelConfig::fmg;
  r.k = 2;
  r.folds = {FoldMetrics{0, 10, 5, 0.25, 0.5, {}, {}, {}}, FoldMetrics{1, 10, 5, 0.04, 0.2, {}, {}, {}}};
  r.mse_normalized = 0.145;
  r.rmse_normalized = std::sqrt(0.145);
  std::ostringstream os;
  write_metrics_csv(os, {r});
  CHECK(os.str() ==
        "joint,config,fold,mse_norm,rmse_norm\n"
        "knee,fmg,0,0.25,0.5\n"
        "knee,fmg,1,0.040000000000000001,0.20000000000000001\n"
        "knee,fmg,mean,0.14499999999999999,0.38078865529319539\n");
  const auto text = render_table({r});
  CHECK(text.find("knee") != std::string::npos);
  CHECK(text.find("FMG") != std::string::npos);
  CHECK(text.find("0.1450  0.3808") != std::string::npos);
  CHECK(text.find("baseline") == std::string::npos);
}

TEST_CASE("synthetic takes: FMG tracks torque and beats the baseline", "[eval][synthetic]") {
  SessionSpec spec = default_session_spec(Joint::ankle);
  spec.velocities_deg_s = {60.0, 90.0};
  spec.takes_per_velocity = 1;
  const auto session = generate_session(spec);
  const auto calib = compute_calibration(session.calibration.standing, session.calibration.initial_angle);

  GpOptions opts;
  opts.cap = 800;
  opts.optimize_cap = 300;
  opts.optimizer.restarts = 3;
  std::map<ModelConfig, double> pct;
  for (ModelConfig config : {ModelConfig::baseline, ModelConfig::fmg}) {
    std::vector<TakeInput> inputs;
    for (std::size_t i = 0; i < session.takes.size(); ++i) {
      inputs.push_back({&session.takes[i].recording, &calib, static_cast<int>(i), ""});
    }
    const auto table = build_session_features(inputs, spec.joint, config);
    const auto model = train_model(table, opts);
    const auto series = export_timeseries(table, 0, model);
    REQUIRE(!series.time_s.empty());
    if (config == ModelConfig::fmg) CHECK(correlation(series.measured, series.estimated) >= 0.95);

    const auto report = evaluate_cv(table, kfold_split(cv_units(table, FoldUnit::segment), 5, 42), opts);
    std::vector<double> measured, estimated;
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (std::isnan(report.oof_estimate[i])) continue;
      measured.push_back(table.targets(static_cast<Eigen::Index>(i)));
      estimated.push_back(report.oof_estimate[i]);
    }
    pct[config] = rmse_percent_of_peak(measured, estimated);
  }
  CHECK(pct[ModelConfig::fmg] < pct[ModelConfig::baseline]);
}
