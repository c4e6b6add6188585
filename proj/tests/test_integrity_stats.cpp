#include <doctest.h>

#include <random>

#include "navim/integrity.hpp"
#include "support/oracles.hpp"

using namespace navim;

TEST_CASE("test statistic is the squared norm") {
  CHECK(test_statistic(Eigen::VectorXd::Zero(5)) == 0.0);
  Eigen::VectorXd v(2);
  v << 3.0, 4.0;
  CHECK(test_statistic(v) == doctest::Approx(25.0).epsilon(1e-15));

  // Chi-square mean: dof-12 i.i.d. standard normals over many trials.
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g(0.0, 1.0);
  double sum = 0.0;
  const int trials = 100000;
  for (int i = 0; i < trials; ++i) {
    Eigen::VectorXd e(12);
    for (int k = 0; k < 12; ++k) e(k) = g(rng);
    sum += test_statistic(e);
  }
  CHECK(sum / trials == doctest::Approx(12.0).epsilon(0.1 / 12.0));
}

TEST_CASE("detection threshold against table value and oracle") {
  CHECK(detection_threshold(1, 0.05) == doctest::Approx(3.8415).epsilon(1e-3 / 3.8415));
  CHECK(detection_threshold(1, 1e-5) ==
        doctest::Approx(oracle::chi2_quantile(1.0 - 1e-5, 1.0)).epsilon(1e-8));

  for (int dof : {2, 5, 30, 120}) {
    CHECK(detection_threshold(dof, 1e-5) ==
          doctest::Approx(oracle::chi2_quantile(1.0 - 1e-5, dof)).epsilon(1e-8));
  }

  // Strictly increasing in dof at fixed P_FA.
  CHECK(detection_threshold(2, 1e-3) > detection_threshold(1, 1e-3));
  CHECK(detection_threshold(10, 1e-3) > detection_threshold(9, 1e-3));
  CHECK(detection_threshold(101, 1e-3) > detection_threshold(100, 1e-3));

  CHECK_THROWS_AS(detection_threshold(0, 0.01), std::invalid_argument);
}

TEST_CASE("minimum detectable noncentrality: closed form, oracle, monotonicity") {
  const double lambda = min_detectable_noncentrality(1, 1e-5, 1e-3);

  // dof-1 closed form (sqrt(T) + z_{1-PMD})^2.
  const double t = detection_threshold(1, 1e-5);
  const double closed = std::pow(std::sqrt(t) + oracle::normal_quantile(1.0 - 1e-3), 2);
  CHECK(lambda == doctest::Approx(closed).epsilon(1e-3));
  CHECK(lambda == doctest::Approx(56.4).epsilon(5e-3));

  // Noncentral-CDF oracle: P[nc-chi2(1, lambda) <= T] = P_MD to 1e-6 relative.
  CHECK(oracle::nc_chi2_cdf(t, 1.0, lambda) == doctest::Approx(1e-3).epsilon(1e-6));

  // Decreasing in P_MD at fixed dof / P_FA.
  CHECK(min_detectable_noncentrality(1, 1e-5, 1e-2) < lambda);
  CHECK(min_detectable_noncentrality(1, 1e-5, 1e-4) > lambda);

  // Oracle agreement at larger dof too.
  for (int dof : {6, 40, 150}) {
    const double la = min_detectable_noncentrality(dof, 1e-5, 1e-3);
    const double thr = detection_threshold(dof, 1e-5);
    CHECK(oracle::nc_chi2_cdf(thr, dof, la) == doctest::Approx(1e-3).epsilon(1e-5));
  }
}

TEST_CASE("Monte Carlo detection rate at the minimum detectable noncentrality") {
  // Inject a bias with noncentrality exactly lambda_a into dof-1 whitened
  // residuals; detection rate must be 1 - P_MD within 0.5%.
  const double p_fa = 1e-5, p_md = 1e-3;
  const double t = detection_threshold(1, p_fa);
  const double delta = std::sqrt(min_detectable_noncentrality(1, p_fa, p_md));

  std::mt19937_64 rng(31337);
  std::normal_distribution<double> g(0.0, 1.0);
  const int trials = 100000;
  int detected = 0;
  for (int i = 0; i < trials; ++i) {
    const double x = g(rng) + delta;
    if (x * x > t) ++detected;
  }
  const double rate = static_cast<double>(detected) / trials;
  CHECK(rate == doctest::Approx(1.0 - p_md).epsilon(0.005));
}

TEST_CASE("fault mode priors reproduce the product values") {
  const auto priors = fault_mode_priors(1e-5, 1e-3, 1e-4);
  double sum = 0.0;
  for (const auto& [mode, p] : priors) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  auto find = [&](const std::string& key) {
    for (const auto& [mode, p] : priors) {
      if (mode.key() == key) return p;
    }
    FAIL("mode not found");
    return 0.0;
  };
  CHECK(find("giv") == doctest::Approx(0.9989).epsilon(5e-5 / 0.9989));
  CHECK(find("GiV") == doctest::Approx(0.999e-9).epsilon(1e-3));

  const auto equal = fault_mode_priors(0.5, 0.5, 0.5);
  for (const auto& [mode, p] : equal) CHECK(p == doctest::Approx(0.125).epsilon(1e-15));

  CHECK_THROWS_AS(fault_mode_priors(0.0, 0.5, 0.5), std::invalid_argument);
}

TEST_CASE("integrity risk allocation reproduces the six-mode split") {
  BudgetConfig cfg;  // defaults are the published parameters
  const IntegrityBudget b = allocate_integrity_risk(cfg);

  CHECK(b.modes.size() == 6);
  CHECK(b.horizontal_budget == doctest::Approx(5e-8).epsilon(1e-15));
  CHECK(b.per_mode_risk == doctest::Approx(5e-8 / 6.0).epsilon(1e-12));

  // The allocated set: fault-free, single faults, GNSS+IMU, IMU+vision.
  for (const char* key : {"giv", "Giv", "gIv", "giV", "GIv", "gIV"}) {
    CHECK(b.find(FaultMode{key[0] == 'G', key[1] == 'I', key[2] == 'V'}) != nullptr);
  }
  CHECK(b.find(FaultMode{true, false, true}) == nullptr);  // GiV excluded
  CHECK(b.find(FaultMode{true, true, true}) == nullptr);   // GIV excluded

  // Allocation conservation.
  double total = 0.0;
  for (const auto& m : b.modes) total += b.per_mode_risk;
  CHECK(std::abs(total - b.horizontal_budget) < 1e-15);

  // Fault-free K_md ~ 5.76 via the normal-quantile oracle.
  const AllocatedMode* ff = b.find(FaultMode{});
  REQUIRE(ff != nullptr);
  CHECK(ff->p_hmi_given_fault == doctest::Approx(5e-8 / 6.0 / 0.99889011).epsilon(1e-6));
  CHECK(ff->k_md == doctest::Approx(5.76).epsilon(2e-3));
  CHECK(ff->k_md ==
        doctest::Approx(oracle::normal_quantile(1.0 - ff->p_hmi_given_fault / 2.0))
            .epsilon(1e-9));

  // Raising the cutoff to 1e-7 also drops the GNSS+IMU mode (prior ~1e-8).
  BudgetConfig tight = cfg;
  tight.exclusion_cutoff = 1e-7;
  const IntegrityBudget b2 = allocate_integrity_risk(tight);
  CHECK(b2.find(FaultMode{true, true, false}) == nullptr);
  // The IMU+vision prior (0.99999e-7) sits marginally below the same cutoff.
  CHECK(b2.modes.size() == 4);
}

TEST_CASE("sensitivity matrix left inverse and pinv flag") {
  {
    const Eigen::MatrixXd j = Eigen::MatrixXd::Identity(3, 3);
    bool pinv = true;
    const Eigen::MatrixXd b = sensitivity_matrix(j, Eigen::MatrixXd::Identity(3, 3), &pinv);
    CHECK(!pinv);
    CHECK((b - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);
  }
  {
    // Repeated scalar measurement: J = (1,1)^T -> B = (0.5, 0.5).
    Eigen::MatrixXd j(2, 1);
    j << 1.0, 1.0;
    const Eigen::MatrixXd b = sensitivity_matrix(j, Eigen::MatrixXd::Identity(2, 2));
    CHECK(b(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(b(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  }
  {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::MatrixXd j(12, 5);
      for (int r = 0; r < 12; ++r)
        for (int c = 0; c < 5; ++c) j(r, c) = g(rng);
      Eigen::VectorXd wdiag(12);
      for (int r = 0; r < 12; ++r) wdiag(r) = 0.2 + std::abs(g(rng));
      const Eigen::MatrixXd b = sensitivity_matrix(j, wdiag.asDiagonal());
      CHECK((b * j - Eigen::MatrixXd::Identity(5, 5)).norm() < 1e-10);
    }
  }
  {
    // Rank-deficient: flagged.
    Eigen::MatrixXd j(2, 2);
    j << 1, 1, 1, 1;
    bool pinv = false;
    sensitivity_matrix(j, Eigen::MatrixXd::Identity(2, 2), &pinv);
    CHECK(pinv);
  }
}

TEST_CASE("slopes: unit case, arithmetic, brute-force injection oracle") {
  {
    const Eigen::MatrixXd b = Eigen::MatrixXd::Identity(3, 3);
    const SlopeAnalysis sa = slopes(ResidualSource::Gnss, b, Eigen::VectorXd::Ones(3), 10.0);
    CHECK((sa.slope - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-15);
    CHECK(sa.max_slope.maxCoeff() == doctest::Approx(1.0));
  }
  {
    Eigen::MatrixXd b(1, 1);
    b << 0.5;
    Eigen::VectorXd tau(1);
    tau << 4.0;
    const SlopeAnalysis sa = slopes(ResidualSource::Imu, b, tau, 1.0);
    CHECK(sa.slope(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
  }

  // Brute force: inject a bias xi into component m of a random linear system,
  // measure |state error_q| / sqrt(xi^2 tau_mm); must equal Slope_mq.
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int sys = 0; sys < 20; ++sys) {
    const int m_dim = 8, n_dim = 3;
    Eigen::MatrixXd j(m_dim, n_dim);
    for (int r = 0; r < m_dim; ++r)
      for (int c = 0; c < n_dim; ++c) j(r, c) = g(rng);
    Eigen::VectorXd tau(m_dim);
    for (int r = 0; r < m_dim; ++r) tau(r) = 0.3 + std::abs(g(rng));
    const Eigen::MatrixXd w = tau.asDiagonal();  // weight = inverse covariance

    const Eigen::MatrixXd b = sensitivity_matrix(j, w);
    const SlopeAnalysis sa = slopes(ResidualSource::Gnss, b, tau, 1.0);

    const double xi = 2.7;
    for (int m = 0; m < m_dim; ++m) {
      const Eigen::VectorXd fault = xi * Eigen::VectorXd::Unit(m_dim, m);
      const Eigen::VectorXd dx = b * fault;
      const double lambda = xi * xi * tau(m);
      for (int q = 0; q < n_dim; ++q) {
        CHECK(std::abs(dx(q)) / std::sqrt(lambda) ==
              doctest::Approx(sa.slope(q, m)).epsilon(1e-8));
      }
    }
  }

  Eigen::VectorXd bad_tau(1);
  bad_tau << -1.0;
  CHECK_THROWS_AS(slopes(ResidualSource::Gnss, Eigen::MatrixXd::Ones(1, 1), bad_tau, 1.0),
                  std::invalid_argument);
}

TEST_CASE("position error bounding formulas") {
  const IntegrityBudget budget = allocate_integrity_risk(BudgetConfig{});
  const double k_ff = budget.find(FaultMode{})->k_md;

  // Fault-free scalar toy: xi = sqrt(3) per axis.
  Eigen::Matrix3d p = 3.0 * Eigen::Matrix3d::Identity();
  SlopeSet none;
  none.gnss = slopes(ResidualSource::Gnss, Eigen::MatrixXd::Zero(3, 0), Eigen::VectorXd(0), 0);
  none.imu = slopes(ResidualSource::Imu, Eigen::MatrixXd::Zero(3, 0), Eigen::VectorXd(0), 0);
  none.vision =
      slopes(ResidualSource::Vision, Eigen::MatrixXd::Zero(3, 0), Eigen::VectorXd(0), 0);

  const PebMode ff = position_error_bounding(FaultMode{}, p, none, budget);
  CHECK(ff.peb_axes(0) == doctest::Approx(k_ff * std::sqrt(3.0)).epsilon(1e-12));
  CHECK(ff.peb_axes(0) == doctest::Approx(9.98).epsilon(2e-3));
  CHECK(ff.peb_h == doctest::Approx(std::hypot(ff.peb_axes(0), ff.peb_axes(1))).epsilon(1e-12));

  // IMU-fault mode with max slope 0.2 and lambda_a = 56.4 adds 0.2*sqrt(56.4).
  SlopeSet with_imu = none;
  Eigen::MatrixXd b(3, 1);
  b << 0.2, 0.2, 0.2;
  with_imu.imu = slopes(ResidualSource::Imu, b, Eigen::VectorXd::Ones(1), 56.4);
  const FaultMode imu_mode{false, true, false};
  const double k_imu = budget.find(imu_mode)->k_md;
  const PebMode im = position_error_bounding(imu_mode, p, with_imu, budget);
  CHECK(im.peb_axes(0) ==
        doctest::Approx(k_imu * std::sqrt(3.0) + 0.2 * std::sqrt(56.4)).epsilon(1e-12));

  // Dual-fault mode dominates each constituent single-fault mode at equal K.
  SlopeSet both = with_imu;
  Eigen::MatrixXd bg(3, 2);
  bg << 0.4, 0.1, 0.3, 0.2, 0.05, 0.3;
  both.gnss = slopes(ResidualSource::Gnss, bg, Eigen::VectorXd::Ones(2), 40.0);
  const FaultMode dual{true, true, false};
  const PebMode pd = position_error_bounding(dual, p, both, budget);
  const double k_dual = budget.find(dual)->k_md;
  for (int q = 0; q < 3; ++q) {
    CHECK(pd.peb_axes(q) >=
          im.peb_axes(q) - (k_imu - k_dual) * std::sqrt(3.0) - 1e-12);
  }

  // Missing slope analysis for a faulted sensor is an error.
  SlopeSet missing;
  CHECK_THROWS_AS(position_error_bounding(imu_mode, p, missing, budget),
                  std::invalid_argument);
  // Unallocated mode is an error.
  CHECK_THROWS_AS(position_error_bounding(FaultMode{true, false, true}, p, none, budget),
                  std::invalid_argument);
}

TEST_CASE("availability counting") {
  CHECK(availability({1.0, 2.0, 3.0}, 6.0).availability_pct == doctest::Approx(100.0));
  CHECK(availability({7.0, 7.0}, 6.0).availability_pct == doctest::Approx(0.0));
  CHECK(availability({5.0, 7.0, 5.0, 7.0}, 6.0).availability_pct == doctest::Approx(50.0));
  CHECK_THROWS_AS(availability({}, 6.0), std::invalid_argument);
  CHECK_THROWS_AS(availability({1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("stacking window residuals keeps order and labels") {
  std::deque<WhitenedResidual> hist;
  for (int e = 0; e < 5; ++e) {
    const int n = (e == 3) ? 0 : 6;  // one empty epoch inside the window
    Eigen::VectorXd raw(n);
    for (int i = 0; i < n; ++i) raw(i) = e + 0.1 * i;
    std::vector<std::string> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = "G" + std::to_string(i + 1);
    hist.push_back(whiten(raw, Eigen::VectorXd::Ones(n), ResidualSource::Gnss, e, labels));
  }

  const StackedResidual m1 = stack_window_residuals(hist, 1);
  CHECK(m1.values.size() == 6);
  CHECK(m1.epoch_of.front() == 4);

  const StackedResidual m3 = stack_window_residuals(hist, 3);
  CHECK(m3.values.size() == 12);  // epochs 2, 3(empty), 4
  CHECK(m3.epoch_of.front() == 2);
  CHECK(m3.epoch_of.back() == 4);
  CHECK(m3.labels.size() == 12);

  // Window longer than the history: startup uses whatever is available.
  const StackedResidual m99 = stack_window_residuals(hist, 99);
  CHECK(m99.values.size() == 24);
  CHECK(m99.values(0) == doctest::Approx(0.0));
}

TEST_CASE("detection config rate conversion is opt-in") {
  DetectionConfig cfg;
  CHECK(cfg.effective_p_fa() == cfg.p_fa);  // per-exposure by default
  cfg.exposure_interval_s = 360.0;
  CHECK(cfg.effective_p_fa() == doctest::Approx(cfg.p_fa * 0.1).epsilon(1e-12));
  cfg.p_fa = 2.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
