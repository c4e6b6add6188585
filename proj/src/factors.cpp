#include "navim/factors.hpp"

#include <cmath>
#include <stdexcept>

namespace navim {

namespace {

Eigen::Matrix<double, 2, 3> pinhole_jacobian(const CameraModel& cam,
                                             const Eigen::Vector3d& x_c) {
  const double iz = 1.0 / x_c.z();
  Eigen::Matrix<double, 2, 3> p;
  p << cam.fx * iz, 0.0, -cam.fx * x_c.x() * iz * iz,
       0.0, cam.fy * iz, -cam.fy * x_c.y() * iz * iz;
  return p;
}

}  // namespace

std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& x_w, const ImuState& state,
                                       const CameraModel& cam) {
  return cam.pinhole(cam.to_camera(x_w, state.p, state.q));
}

Eigen::Vector3d feature_world_point(const FeatureParam& f, const ImuState& anchor_state,
                                    const CameraModel& cam) {
  const Eigen::Vector3d x_ci = f.point_in_anchor_camera();
  const Eigen::Vector3d x_bi = cam.r_bc.inverse() * (x_ci - cam.t_bc);
  return anchor_state.q * x_bi + anchor_state.p;
}

std::optional<Eigen::Vector2d> project(const FeatureParam& f, const ImuState& anchor_state,
                                       const ImuState& state, const CameraModel& cam) {
  return project(feature_world_point(f, anchor_state, cam), state, cam);
}

VisualResidual visual_residual(const Eigen::Vector2d& obs_px, const FeatureParam& f,
                               const ImuState& state_i, const ImuState& state_j,
                               const CameraModel& cam) {
  VisualResidual out;
  if (!(f.inv_depth > 0.0)) return out;

  const Eigen::Matrix3d r_bc = cam.r_bc.matrix();
  const Eigen::Matrix3d r_i = state_i.q.matrix();
  const Eigen::Matrix3d r_j = state_j.q.matrix();

  const Eigen::Vector3d x_ci = f.point_in_anchor_camera();
  const Eigen::Vector3d x_bi = r_bc.transpose() * (x_ci - cam.t_bc);
  const Eigen::Vector3d x_w = r_i * x_bi + state_i.p;
  const Eigen::Vector3d x_bj = r_j.transpose() * (x_w - state_j.p);
  const Eigen::Vector3d x_cj = r_bc * x_bj + cam.t_bc;

  const auto px = cam.pinhole(x_cj);
  if (!px) return out;

  out.valid = true;
  out.r = obs_px - *px;

  const Eigen::Matrix<double, 2, 3> p = pinhole_jacobian(cam, x_cj);
  const Eigen::Matrix3d m_j = r_bc * r_j.transpose();  // d x_cj / d x_w

  out.d_p_j = p * m_j;
  out.d_theta_j = -p * r_bc * skew(x_bj);
  out.d_p_i = -p * m_j;
  out.d_theta_i = p * m_j * r_i * skew(x_bi);
  out.d_rho = p * m_j * r_i * r_bc.transpose() * f.bearing_c / (f.inv_depth * f.inv_depth);
  return out;
}

PseudorangeResidual pseudorange_residual(const SatelliteObservation& obs,
                                         const ImuState& state, double psi,
                                         const AnchorGeodesy& anchor) {
  const FrameRotation r_ne = ecef_from_enu(anchor);
  const Rotation r_wn = rotation_from_yaw(psi);
  const Eigen::Matrix3d rot_we = r_ne.rotation().matrix() * r_wn.matrix();

  const Eigen::Vector3d p_rcv_e = anchor.p_anc_e + rot_we * state.p;
  const Eigen::Vector3d u = obs.p_sat_e - p_rcv_e;
  const double range = u.norm();
  const Eigen::Vector3d e_los = u / range;
  const int c = static_cast<int>(obs.constellation);

  PseudorangeResidual out;
  out.r = range + state.clk[c] - kSpeedOfLight * obs.sat_clock_s + obs.tropo_m + obs.iono_m +
          obs.sagnac_m - obs.pseudorange_m;
  out.d_p = -(e_los.transpose() * rot_we).transpose();
  out.d_clk.setZero();
  out.d_clk[c] = 1.0;

  const double s = std::sin(psi), co = std::cos(psi);
  Eigen::Matrix3d dr_wn;
  dr_wn << -s, -co, 0.0,
            co, -s, 0.0,
           0.0, 0.0, 0.0;
  out.d_psi = -e_los.dot(r_ne.rotation().matrix() * (dr_wn * state.p));
  return out;
}

const char* residual_source_name(ResidualSource s) {
  switch (s) {
    case ResidualSource::Imu: return "imu";
    case ResidualSource::Gnss: return "gnss";
    case ResidualSource::Vision: return "vision";
  }
  return "?";
}

WhitenedResidual whiten(const Eigen::VectorXd& raw, const Eigen::VectorXd& sigma,
                        ResidualSource source, int epoch_index,
                        std::vector<std::string> labels) {
  if (raw.size() != sigma.size()) {
    throw std::invalid_argument("whiten: raw/sigma size mismatch");
  }
  if (static_cast<Eigen::Index>(labels.size()) != raw.size()) {
    throw std::invalid_argument("whiten: label count mismatch");
  }
  if ((sigma.array() <= 0.0).any()) {
    throw std::invalid_argument("whiten: sigmas must be positive");
  }
  WhitenedResidual out;
  out.raw = raw;
  out.sigma = sigma;
  out.whitened = raw.cwiseQuotient(sigma);
  out.source = source;
  out.epoch_index = epoch_index;
  out.labels = std::move(labels);
  return out;
}

std::string sat_label(int sat_id) {
  const auto c = static_cast<Constellation>(sat_id / 100);
  return std::string(1, constellation_letter(c)) + std::to_string(sat_id % 100);
}

}  // namespace navim
