#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <span>
#include <utility>
#include <vector>

#include "navim/geom.hpp"

namespace navim {

struct ImuSample {
  double t = 0.0;                                    // s
  Eigen::Vector3d accel = Eigen::Vector3d::Zero();   // specific force, m/s^2
  Eigen::Vector3d gyro = Eigen::Vector3d::Zero();    // rad/s
};

/// Continuous-time noise densities assumed by the estimator.
struct ImuNoiseModel {
  double accel_density = 0.02;     // m/s^2/sqrt(Hz)
  double gyro_density = 0.002;     // rad/s/sqrt(Hz)
  double accel_bias_walk = 1e-4;   // m/s^2 * sqrt(s) random walk
  double gyro_bias_walk = 1e-5;    // rad/s * sqrt(s) random walk
};

using Matrix15d = Eigen::Matrix<double, 15, 15>;
using Vector15d = Eigen::Matrix<double, 15, 1>;

/// Relative motion deltas between two keyframes, integrated from bias-corrected
/// IMU samples with the midpoint rule, with covariance and bias Jacobians.
///
/// Residual/covariance block order: [alpha(3) beta(3) theta(3) ba(3) bg(3)].
class PreintegratedImu {
 public:
  static constexpr int kDim = 15;
  static constexpr int kAlpha = 0;
  static constexpr int kBeta = 3;
  static constexpr int kTheta = 6;
  static constexpr int kBa = 9;
  static constexpr int kBg = 12;

  static PreintegratedImu integrate(std::span<const ImuSample> samples,
                                    const Eigen::Vector3d& ba_lin,
                                    const Eigen::Vector3d& bg_lin,
                                    const ImuNoiseModel& noise);

  /// Chains two consecutive segments; deltas and bias Jacobians are exact,
  /// covariance is combined to first order.
  PreintegratedImu compose(const PreintegratedImu& next) const;

  /// First-order bias-corrected deltas at (ba, bg) near the linearization bias.
  Eigen::Vector3d alpha(const Eigen::Vector3d& ba, const Eigen::Vector3d& bg) const;
  Eigen::Vector3d beta(const Eigen::Vector3d& ba, const Eigen::Vector3d& bg) const;
  Rotation theta(const Eigen::Vector3d& bg) const;

  const Eigen::Vector3d& alpha_raw() const { return alpha_; }
  const Eigen::Vector3d& beta_raw() const { return beta_; }
  const Rotation& theta_raw() const { return theta_; }
  double dt() const { return dt_; }
  const Eigen::Vector3d& ba_lin() const { return ba_lin_; }
  const Eigen::Vector3d& bg_lin() const { return bg_lin_; }
  const Matrix15d& covariance() const { return cov_; }

  /// L with L * cov * L^T = I; whitening transform for the residual.
  const Matrix15d& sqrt_info() const;

  const Eigen::Matrix3d& d_alpha_d_ba() const { return j_alpha_ba_; }
  const Eigen::Matrix3d& d_alpha_d_bg() const { return j_alpha_bg_; }
  const Eigen::Matrix3d& d_beta_d_ba() const { return j_beta_ba_; }
  const Eigen::Matrix3d& d_beta_d_bg() const { return j_beta_bg_; }
  const Eigen::Matrix3d& d_theta_d_bg() const { return j_theta_bg_; }

 private:
  Eigen::Vector3d alpha_ = Eigen::Vector3d::Zero();
  Eigen::Vector3d beta_ = Eigen::Vector3d::Zero();
  Rotation theta_;
  double dt_ = 0.0;
  Eigen::Vector3d ba_lin_ = Eigen::Vector3d::Zero();
  Eigen::Vector3d bg_lin_ = Eigen::Vector3d::Zero();
  Matrix15d cov_ = Matrix15d::Zero();
  Eigen::Matrix3d j_alpha_ba_ = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d j_alpha_bg_ = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d j_beta_ba_ = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d j_beta_bg_ = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d j_theta_bg_ = Eigen::Matrix3d::Zero();
  mutable Matrix15d sqrt_info_;
  mutable bool sqrt_info_valid_ = false;
};

/// Pre-integration residual between two keyframe states (Eq. block order
/// alpha, beta, theta, ba, bg). Zero when the states are exactly consistent
/// with the noiseless deltas.
Vector15d preint_residual(const PreintegratedImu& p, const ImuState& state_k,
                          const ImuState& state_k1, const Eigen::Vector3d& gravity);

/// Analytic Jacobians of preint_residual with respect to the manifold_plus
/// error coordinates of both states (15 x 20 each, clock columns zero).
struct PreintJacobian {
  Eigen::Matrix<double, 15, ImuState::kErrorDim> d_state_k;
  Eigen::Matrix<double, 15, ImuState::kErrorDim> d_state_k1;
};

PreintJacobian preint_jacobian(const PreintegratedImu& p, const ImuState& state_k,
                               const ImuState& state_k1, const Eigen::Vector3d& gravity);

/// Right Jacobian of SO(3) and its inverse at rotation vector phi.
Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& phi);
Eigen::Matrix3d so3_right_jacobian_inverse(const Eigen::Vector3d& phi);

}  // namespace navim
