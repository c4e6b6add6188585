#include "navim/preint.hpp"

#include <Eigen/Cholesky>

#include <stdexcept>

namespace navim {

namespace {

// Noise input order: [n_a(3) n_g(3) n_ba(3) n_bg(3)].
using Matrix15x12 = Eigen::Matrix<double, 15, 12>;

}  // namespace

PreintegratedImu PreintegratedImu::integrate(std::span<const ImuSample> samples,
                                             const Eigen::Vector3d& ba_lin,
                                             const Eigen::Vector3d& bg_lin,
                                             const ImuNoiseModel& noise) {
  if (samples.empty()) {
    throw std::invalid_argument("preintegrate: empty sample segment");
  }
  for (size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].t > samples[i - 1].t)) {
      throw std::invalid_argument("preintegrate: non-monotone timestamps");
    }
  }

  PreintegratedImu out;
  out.ba_lin_ = ba_lin;
  out.bg_lin_ = bg_lin;

  Matrix15d full_jac = Matrix15d::Identity();  // accumulated transition product

  for (size_t i = 0; i + 1 < samples.size(); ++i) {
    const double dt = samples[i + 1].t - samples[i].t;
    const Eigen::Vector3d a0 = samples[i].accel - ba_lin;
    const Eigen::Vector3d a1 = samples[i + 1].accel - ba_lin;
    const Eigen::Vector3d w_mid =
        0.5 * (samples[i].gyro + samples[i + 1].gyro) - bg_lin;

    const Eigen::Matrix3d r0 = out.theta_.matrix();
    const Rotation theta_next = out.theta_.plus(w_mid * dt);
    const Eigen::Matrix3d r1 = theta_next.matrix();

    const Eigen::Vector3d a_mid = 0.5 * (r0 * a0 + r1 * a1);
    const Eigen::Vector3d alpha_next = out.alpha_ + out.beta_ * dt + 0.5 * a_mid * dt * dt;
    const Eigen::Vector3d beta_next = out.beta_ + a_mid * dt;

    // Midpoint error-state transition.
    const Eigen::Matrix3d aa = Eigen::Matrix3d::Identity() - skew(w_mid) * dt;
    const Eigen::Matrix3d p1 = -0.5 * r0 * skew(a0);
    const Eigen::Matrix3d p2 = -0.5 * r1 * skew(a1);
    const Eigen::Matrix3d r_mid = 0.5 * (r0 + r1);

    Matrix15d f = Matrix15d::Identity();
    f.block<3, 3>(kAlpha, kBeta) = dt * Eigen::Matrix3d::Identity();
    f.block<3, 3>(kAlpha, kTheta) = 0.5 * dt * dt * (p1 + p2 * aa);
    f.block<3, 3>(kAlpha, kBa) = -0.5 * dt * dt * r_mid;
    f.block<3, 3>(kAlpha, kBg) = -0.5 * dt * dt * dt * p2;
    f.block<3, 3>(kBeta, kTheta) = dt * (p1 + p2 * aa);
    f.block<3, 3>(kBeta, kBa) = -dt * r_mid;
    f.block<3, 3>(kBeta, kBg) = -dt * dt * p2;
    f.block<3, 3>(kTheta, kTheta) = aa;
    f.block<3, 3>(kTheta, kBg) = -dt * Eigen::Matrix3d::Identity();

    Matrix15x12 g = Matrix15x12::Zero();
    g.block<3, 3>(kAlpha, 0) = -0.5 * dt * dt * r_mid;
    g.block<3, 3>(kAlpha, 3) = -0.5 * dt * dt * dt * p2;
    g.block<3, 3>(kBeta, 0) = -dt * r_mid;
    g.block<3, 3>(kBeta, 3) = -dt * dt * p2;
    g.block<3, 3>(kTheta, 3) = -dt * Eigen::Matrix3d::Identity();
    g.block<3, 3>(kBa, 6) = Eigen::Matrix3d::Identity();
    g.block<3, 3>(kBg, 9) = Eigen::Matrix3d::Identity();

    Eigen::Matrix<double, 12, 1> qd;
    qd.segment<3>(0).setConstant(noise.accel_density * noise.accel_density / dt);
    qd.segment<3>(3).setConstant(noise.gyro_density * noise.gyro_density / dt);
    qd.segment<3>(6).setConstant(noise.accel_bias_walk * noise.accel_bias_walk * dt);
    qd.segment<3>(9).setConstant(noise.gyro_bias_walk * noise.gyro_bias_walk * dt);

    out.cov_ = f * out.cov_ * f.transpose() + g * qd.asDiagonal() * g.transpose();
    full_jac = f * full_jac;

    out.alpha_ = alpha_next;
    out.beta_ = beta_next;
    out.theta_ = theta_next;
    out.dt_ += dt;
  }

  out.cov_ = 0.5 * (out.cov_ + out.cov_.transpose());
  out.j_alpha_ba_ = full_jac.block<3, 3>(kAlpha, kBa);
  out.j_alpha_bg_ = full_jac.block<3, 3>(kAlpha, kBg);
  out.j_beta_ba_ = full_jac.block<3, 3>(kBeta, kBa);
  out.j_beta_bg_ = full_jac.block<3, 3>(kBeta, kBg);
  out.j_theta_bg_ = full_jac.block<3, 3>(kTheta, kBg);
  return out;
}

PreintegratedImu PreintegratedImu::compose(const PreintegratedImu& next) const {
  const Eigen::Matrix3d ra = theta_.matrix();
  const Eigen::Matrix3d rb = next.theta_.matrix();
  const double dt2 = next.dt_;

  PreintegratedImu out;
  out.ba_lin_ = ba_lin_;
  out.bg_lin_ = bg_lin_;
  out.dt_ = dt_ + dt2;
  out.theta_ = theta_ * next.theta_;
  out.beta_ = beta_ + ra * next.beta_;
  out.alpha_ = alpha_ + beta_ * dt2 + ra * next.alpha_;

  // Kinematic transports for errors of the first and second segment.
  Matrix15d t = Matrix15d::Identity();
  t.block<3, 3>(kAlpha, kBeta) = dt2 * Eigen::Matrix3d::Identity();
  t.block<3, 3>(kAlpha, kTheta) = -ra * skew(next.alpha_);
  t.block<3, 3>(kBeta, kTheta) = -ra * skew(next.beta_);
  t.block<3, 3>(kTheta, kTheta) = rb.transpose();

  Matrix15d u = Matrix15d::Zero();
  u.block<3, 3>(kAlpha, kAlpha) = ra;
  u.block<3, 3>(kBeta, kBeta) = ra;
  u.block<3, 3>(kTheta, kTheta) = Eigen::Matrix3d::Identity();

  out.cov_ = t * cov_ * t.transpose() + u * next.cov_ * u.transpose();
  // Bias rows come from the first segment's transport only.
  out.cov_.block<6, 6>(kBa, kBa) = cov_.block<6, 6>(kBa, kBa) +
                                   next.cov_.block<6, 6>(kBa, kBa);
  out.cov_ = 0.5 * (out.cov_ + out.cov_.transpose());

  // J_tot = T_kin * J_A + U_kin * J_B on the bias columns.
  out.j_alpha_ba_ = j_alpha_ba_ + dt2 * j_beta_ba_ + ra * next.j_alpha_ba_;
  out.j_beta_ba_ = j_beta_ba_ + ra * next.j_beta_ba_;
  out.j_alpha_bg_ = j_alpha_bg_ + dt2 * j_beta_bg_ - ra * skew(next.alpha_) * j_theta_bg_ +
                    ra * next.j_alpha_bg_;
  out.j_beta_bg_ = j_beta_bg_ - ra * skew(next.beta_) * j_theta_bg_ + ra * next.j_beta_bg_;
  out.j_theta_bg_ = rb.transpose() * j_theta_bg_ + next.j_theta_bg_;
  return out;
}

Eigen::Vector3d PreintegratedImu::alpha(const Eigen::Vector3d& ba,
                                        const Eigen::Vector3d& bg) const {
  return alpha_ + j_alpha_ba_ * (ba - ba_lin_) + j_alpha_bg_ * (bg - bg_lin_);
}

Eigen::Vector3d PreintegratedImu::beta(const Eigen::Vector3d& ba,
                                       const Eigen::Vector3d& bg) const {
  return beta_ + j_beta_ba_ * (ba - ba_lin_) + j_beta_bg_ * (bg - bg_lin_);
}

Rotation PreintegratedImu::theta(const Eigen::Vector3d& bg) const {
  return theta_.plus(j_theta_bg_ * (bg - bg_lin_));
}

const Matrix15d& PreintegratedImu::sqrt_info() const {
  if (!sqrt_info_valid_) {
    Eigen::LLT<Matrix15d> llt(cov_);
    if (llt.info() != Eigen::Success) {
      // Jitter fallback for segments too short to excite every block.
      Matrix15d padded = cov_ + 1e-16 * Matrix15d::Identity();
      llt.compute(padded);
      if (llt.info() != Eigen::Success) {
        throw std::runtime_error("PreintegratedImu: covariance not positive definite");
      }
    }
    sqrt_info_ = Matrix15d(llt.matrixL())
                     .triangularView<Eigen::Lower>()
                     .solve(Matrix15d::Identity());
    sqrt_info_valid_ = true;
  }
  return sqrt_info_;
}

Vector15d preint_residual(const PreintegratedImu& p, const ImuState& state_k,
                          const ImuState& state_k1, const Eigen::Vector3d& gravity) {
  const double dt = p.dt();
  const Eigen::Matrix3d rwb = state_k.q.matrix().transpose();  // w -> b_k

  Vector15d r;
  r.segment<3>(PreintegratedImu::kAlpha) =
      rwb * (state_k1.p - state_k.p - state_k.v * dt - 0.5 * gravity * dt * dt) -
      p.alpha(state_k.ba, state_k.bg);
  r.segment<3>(PreintegratedImu::kBeta) =
      rwb * (state_k1.v - state_k.v - gravity * dt) - p.beta(state_k.ba, state_k.bg);
  r.segment<3>(PreintegratedImu::kTheta) =
      (p.theta(state_k.bg).inverse() * (state_k.q.inverse() * state_k1.q)).log();
  r.segment<3>(PreintegratedImu::kBa) = state_k1.ba - state_k.ba;
  r.segment<3>(PreintegratedImu::kBg) = state_k1.bg - state_k.bg;
  return r;
}

Eigen::Matrix3d so3_right_jacobian_inverse(const Eigen::Vector3d& phi) {
  const double angle = phi.norm();
  const Eigen::Matrix3d s = skew(phi);
  if (angle < 1e-8) {
    return Eigen::Matrix3d::Identity() + 0.5 * s + s * s / 12.0;
  }
  const double c = 1.0 / (angle * angle) -
                   (1.0 + std::cos(angle)) / (2.0 * angle * std::sin(angle));
  return Eigen::Matrix3d::Identity() + 0.5 * s + c * s * s;
}

Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& phi) {
  const double angle = phi.norm();
  const Eigen::Matrix3d s = skew(phi);
  if (angle < 1e-8) {
    return Eigen::Matrix3d::Identity() - 0.5 * s + s * s / 6.0;
  }
  const double a2 = angle * angle;
  return Eigen::Matrix3d::Identity() - (1.0 - std::cos(angle)) / a2 * s +
         (angle - std::sin(angle)) / (a2 * angle) * s * s;
}

PreintJacobian preint_jacobian(const PreintegratedImu& p, const ImuState& state_k,
                               const ImuState& state_k1, const Eigen::Vector3d& gravity) {
  constexpr int kP = ImuState::kP;
  constexpr int kV = ImuState::kV;
  constexpr int kTh = ImuState::kTheta;
  constexpr int kBa = ImuState::kBa;
  constexpr int kBg = ImuState::kBg;

  const double dt = p.dt();
  const Eigen::Matrix3d rwb = state_k.q.matrix().transpose();
  const Vector15d r = preint_residual(p, state_k, state_k1, gravity);

  PreintJacobian jac;
  jac.d_state_k.setZero();
  jac.d_state_k1.setZero();

  const Eigen::Vector3d alpha_pred = r.segment<3>(PreintegratedImu::kAlpha) +
                                     p.alpha(state_k.ba, state_k.bg);
  const Eigen::Vector3d beta_pred = r.segment<3>(PreintegratedImu::kBeta) +
                                    p.beta(state_k.ba, state_k.bg);

  // alpha block
  jac.d_state_k.block<3, 3>(PreintegratedImu::kAlpha, kP) = -rwb;
  jac.d_state_k.block<3, 3>(PreintegratedImu::kAlpha, kV) = -rwb * dt;
  jac.d_state_k.block<3, 3>(PreintegratedImu::kAlpha, kTh) = skew(alpha_pred);
  jac.d_state_k.block<3, 3>(PreintegratedImu::kAlpha, kBa) = -p.d_alpha_d_ba();
  jac.d_state_k.block<3, 3>(PreintegratedImu::kAlpha, kBg) = -p.d_alpha_d_bg();
  jac.d_state_k1.block<3, 3>(PreintegratedImu::kAlpha, kP) = rwb;

  // beta block
  jac.d_state_k.block<3, 3>(PreintegratedImu::kBeta, kV) = -rwb;
  jac.d_state_k.block<3, 3>(PreintegratedImu::kBeta, kTh) = skew(beta_pred);
  jac.d_state_k.block<3, 3>(PreintegratedImu::kBeta, kBa) = -p.d_beta_d_ba();
  jac.d_state_k.block<3, 3>(PreintegratedImu::kBeta, kBg) = -p.d_beta_d_bg();
  jac.d_state_k1.block<3, 3>(PreintegratedImu::kBeta, kV) = rwb;

  // theta block
  const Eigen::Vector3d r_theta = r.segment<3>(PreintegratedImu::kTheta);
  const Eigen::Matrix3d jr_inv = so3_right_jacobian_inverse(r_theta);
  const Eigen::Matrix3d jl_inv = jr_inv.transpose();
  const Eigen::Matrix3d r_rel = (state_k.q.inverse() * state_k1.q).matrix();
  jac.d_state_k.block<3, 3>(PreintegratedImu::kTheta, kTh) = -jr_inv * r_rel.transpose();
  // The bias correction applies through Exp(J_theta_bg * dbg); its own right
  // Jacobian enters once the accumulated correction is finite.
  const Eigen::Vector3d bias_corr = p.d_theta_d_bg() * (state_k.bg - p.bg_lin());
  jac.d_state_k.block<3, 3>(PreintegratedImu::kTheta, kBg) =
      -jl_inv * so3_right_jacobian(bias_corr) * p.d_theta_d_bg();
  jac.d_state_k1.block<3, 3>(PreintegratedImu::kTheta, kTh) = jr_inv;

  // bias blocks
  jac.d_state_k.block<3, 3>(PreintegratedImu::kBa, kBa) = -Eigen::Matrix3d::Identity();
  jac.d_state_k.block<3, 3>(PreintegratedImu::kBg, kBg) = -Eigen::Matrix3d::Identity();
  jac.d_state_k1.block<3, 3>(PreintegratedImu::kBa, kBa) = Eigen::Matrix3d::Identity();
  jac.d_state_k1.block<3, 3>(PreintegratedImu::kBg, kBg) = Eigen::Matrix3d::Identity();

  return jac;
}

}  // namespace navim
