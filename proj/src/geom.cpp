#include "navim/geom.hpp"

namespace navim {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

Rotation Rotation::exp(const Eigen::Vector3d& rotvec) {
  if (!rotvec.allFinite()) {
    throw std::invalid_argument("Rotation::exp: non-finite rotation vector");
  }
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    // First-order expansion; renormalized by the constructor.
    return Rotation(1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(), 0.5 * rotvec.z());
  }
  const double half = 0.5 * angle;
  const Eigen::Vector3d axis = rotvec / angle;
  const double s = std::sin(half);
  return Rotation(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

Rotation Rotation::from_yaw(double psi) {
  if (!std::isfinite(psi)) {
    throw std::invalid_argument("Rotation::from_yaw: non-finite angle");
  }
  return exp(Eigen::Vector3d(0.0, 0.0, psi));
}

Eigen::Vector3d Rotation::log() const {
  const double w = q_.w();
  const Eigen::Vector3d v = q_.vec();
  const double vnorm = v.norm();
  if (vnorm < 1e-12) {
    return 2.0 * v;  // small-angle
  }
  const double angle = 2.0 * std::atan2(vnorm, w);
  return (angle / vnorm) * v;
}

const char* frame_name(Frame f) {
  switch (f) {
    case Frame::Ecef: return "e";
    case Frame::Enu: return "n";
    case Frame::World: return "w";
    case Frame::Body: return "b";
    case Frame::Camera: return "c";
  }
  return "?";
}

AnchorGeodesy AnchorGeodesy::from_lat_lon(double lat_rad, double lon_rad, double radius) {
  AnchorGeodesy a;
  a.lat_rad = lat_rad;
  a.lon_rad = lon_rad;
  a.p_anc_e = radius * Eigen::Vector3d(std::cos(lat_rad) * std::cos(lon_rad),
                                       std::cos(lat_rad) * std::sin(lon_rad),
                                       std::sin(lat_rad));
  return a;
}

void AnchorGeodesy::validate() const {
  const double n = p_anc_e.norm();
  if (!(n >= 6.3e6 && n <= 6.5e6)) {
    throw std::invalid_argument("AnchorGeodesy: anchor norm outside Earth-surface band");
  }
}

Rotation rotation_from_yaw(double psi) { return Rotation::from_yaw(psi); }

FrameRotation ecef_from_enu(const AnchorGeodesy& anchor) {
  anchor.validate();
  const double sl = std::sin(anchor.lat_rad), cl = std::cos(anchor.lat_rad);
  const double so = std::sin(anchor.lon_rad), co = std::cos(anchor.lon_rad);
  Eigen::Matrix3d m;
  // Columns: East, North, Up expressed in ECEF.
  m << -so, -sl * co, cl * co,
        co, -sl * so, cl * so,
       0.0,       cl,      sl;
  return FrameRotation(Rotation(m), Frame::Enu, Frame::Ecef);
}

char constellation_letter(Constellation c) {
  switch (c) {
    case Constellation::Gps: return 'G';
    case Constellation::Glonass: return 'R';
    case Constellation::Galileo: return 'E';
    case Constellation::Beidou: return 'C';
  }
  return '?';
}

Constellation constellation_from_letter(char c) {
  switch (c) {
    case 'G': return Constellation::Gps;
    case 'R': return Constellation::Glonass;
    case 'E': return Constellation::Galileo;
    case 'C': return Constellation::Beidou;
    default: throw std::invalid_argument("unknown constellation letter");
  }
}

bool ImuState::all_finite() const {
  return p.allFinite() && v.allFinite() && ba.allFinite() && bg.allFinite() &&
         clk.allFinite() && std::isfinite(clk_drift) && std::isfinite(time) &&
         q.wxyz().allFinite();
}

ImuState manifold_plus(const ImuState& state, const Eigen::Ref<const Eigen::VectorXd>& delta) {
  if (delta.size() != ImuState::kErrorDim) {
    throw std::invalid_argument("manifold_plus: delta dimension mismatch");
  }
  ImuState out = state;
  out.p += delta.segment<3>(ImuState::kP);
  out.v += delta.segment<3>(ImuState::kV);
  out.q = state.q.plus(delta.segment<3>(ImuState::kTheta));
  out.ba += delta.segment<3>(ImuState::kBa);
  out.bg += delta.segment<3>(ImuState::kBg);
  out.clk += delta.segment<4>(ImuState::kClk);
  out.clk_drift += delta(ImuState::kClkDrift);
  return out;
}

}  // namespace navim
