#pragma once

#include <Eigen/Core>

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "navim/factors.hpp"
#include "navim/geom.hpp"
#include "navim/preint.hpp"
#include "navim/scenario.hpp"

namespace navim {

struct SolverConfig {
  int window_capacity = 10;
  int max_iterations = 30;
  double cost_decrease_tol = 1e-6;  // relative
  double step_norm_tol = 1e-8;
  double init_damping = 1e-4;
  double condition_limit = 1e12;
  double min_inv_depth = 1e-4;      // 1/m, positive-depth barrier
  double default_depth_m = 20.0;
  double sigma_px = 1.0;
  Eigen::Vector3d gravity = kGravityW;
  ImuNoiseModel imu_noise;
  CameraModel camera;

  // Receiver clock process model (constant drift plus white walk).
  double clk_walk_m = 0.02;          // m / sqrt(s)
  double clk_drift_walk_mps = 0.005; // m/s / sqrt(s)

  // Constant-velocity bridge used when an epoch's pre-integration is excluded.
  double bridge_pos_sigma_m = 1.0;
  double bridge_vel_sigma_mps = 1.0;
  double bridge_att_sigma_rad = 0.2;

  // Re-integrate the stored pre-integration when the linearization bias drifts.
  double relin_accel_bias = 0.05;  // m/s^2
  double relin_gyro_bias = 0.005;  // rad/s
};

/// Diagonal prior sigmas for the first window state and the yaw offset.
struct InitialPriorConfig {
  double p_sigma = 0.3;
  double v_sigma = 0.05;
  double theta_sigma = 0.01;
  double ba_sigma = 0.02;
  double bg_sigma = 0.002;
  double clk_sigma = 5.0;
  double clk_drift_sigma = 0.1;
  double psi_sigma = 0.01;

  Eigen::VectorXd state_sigmas() const;
};

struct SolveReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double cost_imu = 0.0;
  double cost_gnss = 0.0;
  double cost_vision = 0.0;
  double cost_prior = 0.0;
  bool converged = false;
  std::vector<double> damping_trace;
};

/// Per-sensor state error covariances on the newest state's position block
/// plus their combination P = C_rB + C_rc + C_rp.
struct SensorCovariances {
  Eigen::Matrix3d c_imu = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d c_vision = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d c_gnss = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d combined = Eigen::Matrix3d::Zero();
  bool gnss_pinv = false;
  bool vision_pinv = false;
  bool imu_pinv = false;
  bool vision_present = false;
};

/// Whitened newest-epoch Jacobians per sensor class. Columns of each matrix
/// start with the three w-frame position axes of the newest state.
struct EpochClassJacobians {
  Eigen::MatrixXd imu;     // 15 x 15, over [p v theta ba bg]
  Eigen::MatrixXd gnss;    // n_sat x (3 + n_active_constellations + 1 for psi)
  Eigen::MatrixXd vision;  // 2*n_obs x 3
};

struct Keyframe {
  ImuState state;
  MeasurementEpoch epoch;
  std::optional<PreintegratedImu> preint;  // from the previous keyframe
  bool imu_excluded = false;
  bool vision_excluded = false;
  std::set<int> excluded_sats;
};

class ObservabilityError : public std::runtime_error {
 public:
  explicit ObservabilityError(const std::string& what) : std::runtime_error(what) {}
};

/// Sliding-window nonlinear least-squares estimator over the full state
/// (keyframe states, feature inverse depths, yaw offset psi).
class SlidingWindow {
 public:
  SlidingWindow(const SolverConfig& cfg, const InitialPriorConfig& prior,
                const AnchorGeodesy& anchor);

  /// Installs the first state and psi estimate together with the initial prior.
  void init(const ImuState& x0, double psi0);

  /// Appends a keyframe; the state is predicted by propagating the previous
  /// optimum through the pre-integration. Slides first when full.
  void add_keyframe(const MeasurementEpoch& epoch,
                    std::optional<PreintegratedImu> preint = std::nullopt);

  SolveReport optimize();

  /// Drops the oldest keyframe, re-anchors its features, installs the
  /// position/attitude prior on the new oldest state.
  void slide();

  // -- FDE mutators (newest epoch) --
  void exclude_satellite(int sat_id);
  void exclude_imu_current();
  void exclude_vision_current();

  // -- Accessors --
  int size() const { return static_cast<int>(frames_.size()); }
  int capacity() const { return cfg_.window_capacity; }
  bool initialized() const { return initialized_; }
  const Keyframe& frame(int i) const { return frames_.at(i); }
  const Keyframe& newest() const { return frames_.back(); }
  const ImuState& state(int i) const { return frames_.at(i).state; }
  double psi() const { return psi_; }
  const AnchorGeodesy& anchor() const { return anchor_; }
  const std::map<int, FeatureParam>& features() const { return features_; }
  const SolverConfig& config() const { return cfg_; }

  /// Post-fit whitened residuals of the newest epoch for one sensor class.
  WhitenedResidual epoch_residual(ResidualSource source) const;

  /// Eq.-(27)-(29)-style per-sensor covariances at the newest epoch.
  SensorCovariances state_covariance() const;

  /// Whitened newest-epoch Jacobians for the sensitivity/slope analysis.
  EpochClassJacobians epoch_jacobians() const;

  /// Marginal covariance of the newest state's position from the full
  /// fused normal matrix (used for NEES-style consistency checks).
  Eigen::Matrix3d marginal_position_covariance() const;

  /// Raises ObservabilityError naming the weakly observed block when the
  /// normal matrix condition number exceeds the configured limit.
  void check_observability() const;

 private:
  struct Assembly;

  void refresh_features();
  void reanchor_or_drop(int dropped_frame);
  Assembly assemble(bool with_jacobians) const;
  double evaluate_cost(const std::vector<ImuState>& states,
                       const std::map<int, FeatureParam>& feats, double psi,
                       SolveReport* report) const;
  int state_col(int frame) const { return frame * ImuState::kErrorDim; }
  int feature_col(int feature_id) const;
  int psi_col() const;
  int total_cols() const;

  SolverConfig cfg_;
  InitialPriorConfig prior_cfg_;
  AnchorGeodesy anchor_;
  bool initialized_ = false;

  std::vector<Keyframe> frames_;
  std::map<int, FeatureParam> features_;
  double psi_ = 0.0;

  // Diagonal prior on frame 0 (full state at init, position/attitude after
  // sliding) and on psi.
  ImuState prior_center_;
  Eigen::VectorXd prior_sigmas_;  // kErrorDim, <=0 entries disabled
  double psi_prior_center_ = 0.0;
  double psi_prior_sigma_ = 0.0;

  mutable std::optional<Eigen::MatrixXd> cached_hessian_;
};

/// (J^T J)^-1 for a whitened Jacobian; falls back to the pseudo-inverse and
/// sets *used_pinv when the normal matrix is rank-deficient.
Eigen::MatrixXd normal_covariance(const Eigen::MatrixXd& j_whitened, bool* used_pinv);

}  // namespace navim
