#pragma once

#include <Eigen/Core>

#include <array>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "navim/factors.hpp"
#include "navim/solver.hpp"

namespace navim {

struct DetectionConfig {
  int window_m = 10;       // epochs
  double p_fa = 1e-5;      // false alarm probability
  double p_md = 1e-3;      // missed detection probability
  // 0 keeps the configured per-hour rates as per-exposure values, the way the
  // source formulas apply them; a positive interval opts into conversion.
  double exposure_interval_s = 0.0;
  double rate_reference_s = 3600.0;

  double effective_p_fa() const;
  double effective_p_md() const;
  void validate() const;
};

/// T = e^T e for a stacked whitened residual vector.
double test_statistic(const Eigen::VectorXd& stacked);

/// Central chi-square quantile at 1 - p_fa.
double detection_threshold(int dof, double p_fa);

/// Smallest noncentrality lambda_a with
/// P[chi2_nc(dof, lambda_a) <= threshold(dof, p_fa)] = p_md.
double min_detectable_noncentrality(int dof, double p_fa, double p_md);

/// Phi^-1(1 - p/2): two-sided normal quantile used for K_md.
double bilateral_normal_quantile(double p);

struct StackedResidual {
  Eigen::VectorXd values;
  std::vector<std::string> labels;
  std::vector<int> epoch_of;
};

/// Concatenates the last window_m epochs of one sensor class in epoch order.
StackedResidual stack_window_residuals(const std::deque<WhitenedResidual>& history,
                                       int window_m);

struct FaultMode {
  bool gnss = false;
  bool imu = false;
  bool vision = false;

  static const std::array<FaultMode, 8>& all();
  /// Three-letter key, uppercase marks the faulted sensors: "giv" is
  /// fault-free, "Giv" is GNSS-only, "gIV" is IMU+vision.
  std::string key() const;
  bool operator==(const FaultMode& o) const {
    return gnss == o.gnss && imu == o.imu && vision == o.vision;
  }
};

/// Product-form joint probabilities of the eight fault modes; sums to one.
std::array<std::pair<FaultMode, double>, 8> fault_mode_priors(double p_g, double p_i,
                                                              double p_v);

struct BudgetConfig {
  double p_hmi_total = 1e-7;
  double horizontal_share = 0.5;
  double p_g = 1e-5;
  double p_i = 1e-3;
  double p_v = 1e-4;
  double exclusion_cutoff = 1e-9;  // modes with smaller prior get no allocation
};

struct AllocatedMode {
  FaultMode mode;
  double prior = 0.0;
  double p_hmi_given_fault = 0.0;
  double k_md = 0.0;
};

struct IntegrityBudget {
  BudgetConfig config;
  double horizontal_budget = 0.0;
  double per_mode_risk = 0.0;
  std::vector<AllocatedMode> modes;

  const AllocatedMode* find(const FaultMode& mode) const;
};

IntegrityBudget allocate_integrity_risk(const BudgetConfig& cfg);

/// B = (J^T W J)^-1 J^T W; pseudo-inverse when rank-deficient (flagged).
Eigen::MatrixXd sensitivity_matrix(const Eigen::MatrixXd& j, const Eigen::MatrixXd& w,
                                   bool* pinv_flag = nullptr);

struct SlopeAnalysis {
  ResidualSource sensor = ResidualSource::Gnss;
  Eigen::MatrixXd b;          // state axes x residual components
  Eigen::MatrixXd slope;      // |b_qm| / sqrt(tau_mm)
  Eigen::VectorXd max_slope;  // per state axis; zero when no components
  double lambda_a = 0.0;
};

/// Characteristic slopes of one sensor class: slope_qm = |b_qm|/sqrt(tau_mm).
SlopeAnalysis slopes(ResidualSource sensor, const Eigen::MatrixXd& b,
                     const Eigen::VectorXd& tau_diag, double lambda_a);

struct SlopeSet {
  std::optional<SlopeAnalysis> gnss;
  std::optional<SlopeAnalysis> imu;
  std::optional<SlopeAnalysis> vision;
};

struct PebMode {
  FaultMode mode;
  Eigen::Vector3d peb_axes = Eigen::Vector3d::Zero();
  double peb_h = 0.0;
  double k_md = 0.0;
};

/// PEB_q = K_md * xi_q + sum over the mode's faulted sensors of
/// max_m slope_qm * sqrt(lambda_a); horizontal by root-sum-square of the
/// first two axes.
PebMode position_error_bounding(const FaultMode& mode, const Eigen::Matrix3d& p_cov,
                                const SlopeSet& slope_set, const IntegrityBudget& budget);

struct AvailabilityStat {
  int epochs = 0;
  int available = 0;
  double availability_pct = 0.0;
  double avg_peb_h = 0.0;
};

AvailabilityStat availability(const std::vector<double>& peb_h_series, double alert_limit);

// ---------------------------------------------------------------------------
// Windowed detection with exclusion over a live sliding window.

struct ClassStat {
  double statistic = 0.0;
  double threshold = 0.0;
  int dof = 0;
  bool over = false;
};

struct DetectionState {
  std::deque<WhitenedResidual> gnss;
  std::deque<WhitenedResidual> imu;
  std::deque<WhitenedResidual> vision;
};

struct FdeOutcome {
  ClassStat gnss, imu, vision;
  std::vector<int> excluded_sats;
  bool imu_excluded = false;
  bool vision_excluded = false;
  bool continuity_alert = false;
  int resolve_count = 0;
};

/// Tests the three class statistics of the newest epoch against their
/// thresholds and, when enabled, excludes implicated measurements (largest
/// windowed contributor for GNSS, the current pre-integration for IMU, the
/// current epoch's visual factors for vision), re-solving and re-testing
/// until everything passes or the class is exhausted. Appends the final
/// epoch residuals to the history.
FdeOutcome run_detection(SlidingWindow& window, DetectionState& history,
                         const DetectionConfig& cfg, bool fde_enabled);

struct PebReport {
  int epoch_index = 0;
  double t = 0.0;
  ClassStat gnss, imu, vision;
  std::vector<int> excluded_sats;
  bool imu_excluded = false;
  bool vision_excluded = false;
  bool continuity_alert = false;
  std::vector<PebMode> modes;  // budget order
  double hpe = 0.0;
  Eigen::Vector3d position_error = Eigen::Vector3d::Zero();
  SensorCovariances covariances;

  const PebMode* find_mode(const std::string& key) const;
};

/// Full per-epoch integrity product: detection statistics, per-mode PEBs,
/// and the evaluation-only position error against the truth snapshot.
PebReport integrity_report(SlidingWindow& window, DetectionState& history,
                           const DetectionConfig& det_cfg, const IntegrityBudget& budget,
                           bool fde_enabled, const ImuState& truth);

}  // namespace navim
