#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>
#include <string>

namespace navim {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kEarthRadius = 6.371e6;       // m, spherical model

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

/// Unit quaternion, scalar-first Hamilton convention.
///
/// A Rotation r with r = q_b^w maps body-frame vectors into the world frame:
/// x^w = r * x^b. Error-state perturbations are right-multiplicative,
/// r.plus(dtheta) = r * Exp(dtheta), with dtheta expressed in the rotated
/// (body) frame. Every constructor and operation renormalizes.
class Rotation {
 public:
  Rotation() : q_(1.0, 0.0, 0.0, 0.0) {}
  Rotation(double w, double x, double y, double z) : q_(w, x, y, z) { normalize(); }
  explicit Rotation(const Eigen::Quaterniond& q) : q_(q) { normalize(); }
  explicit Rotation(const Eigen::Matrix3d& m) : q_(m) { normalize(); }

  /// Exponential map: rotation vector (axis * angle, radians) to Rotation.
  static Rotation exp(const Eigen::Vector3d& rotvec);

  /// Rotation about the Up (z) axis by psi radians.
  static Rotation from_yaw(double psi);

  /// Logarithm map: rotation vector in (-pi, pi].
  Eigen::Vector3d log() const;

  Rotation inverse() const { return Rotation(q_.conjugate()); }

  Rotation operator*(const Rotation& rhs) const { return Rotation(q_ * rhs.q_); }
  Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return q_ * v; }

  /// Right-multiplicative manifold increment.
  Rotation plus(const Eigen::Vector3d& dtheta) const { return *this * exp(dtheta); }

  Eigen::Matrix3d matrix() const { return q_.toRotationMatrix(); }

  double w() const { return q_.w(); }
  Eigen::Vector3d vec() const { return q_.vec(); }
  Eigen::Vector4d wxyz() const { return {q_.w(), q_.x(), q_.y(), q_.z()}; }

  /// Angle of the relative rotation this^-1 * other, in [0, pi].
  double angle_to(const Rotation& other) const { return (inverse() * other).log().norm(); }

  double norm_error() const { return std::abs(q_.norm() - 1.0); }

  bool approx_equal(const Rotation& other, double tol) const {
    return angle_to(other) <= tol;
  }

 private:
  void normalize() {
    if (!q_.coeffs().allFinite()) {
      throw std::invalid_argument("Rotation: non-finite quaternion");
    }
    q_.normalize();
    if (q_.w() < 0.0) q_.coeffs() = -q_.coeffs();  // canonical hemisphere
  }

  Eigen::Quaterniond q_;
};

enum class Frame { Ecef, Enu, World, Body, Camera };

const char* frame_name(Frame f);

/// Rotation tagged with its (from, to) frames. compose() enforces that
/// chains only join on matching inner tags.
class FrameRotation {
 public:
  FrameRotation(const Rotation& r, Frame from, Frame to) : r_(r), from_(from), to_(to) {}

  /// (b->c) composed after (a->b) gives (a->c); throws on tag mismatch.
  FrameRotation compose(const FrameRotation& inner) const {
    if (from_ != inner.to_) {
      throw std::invalid_argument(std::string("FrameRotation: cannot chain ") +
                                  frame_name(inner.from_) + "->" + frame_name(inner.to_) +
                                  " with " + frame_name(from_) + "->" + frame_name(to_));
    }
    return FrameRotation(r_ * inner.r_, inner.from_, to_);
  }

  FrameRotation inverse() const { return FrameRotation(r_.inverse(), to_, from_); }

  Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return r_ * v; }

  const Rotation& rotation() const { return r_; }
  Frame from() const { return from_; }
  Frame to() const { return to_; }

 private:
  Rotation r_;
  Frame from_;
  Frame to_;
};

/// Anchor point of the local ENU frame, on a spherical Earth.
struct AnchorGeodesy {
  Eigen::Vector3d p_anc_e = Eigen::Vector3d::Zero();  // m, ECEF
  double lat_rad = 0.0;
  double lon_rad = 0.0;

  static AnchorGeodesy from_lat_lon(double lat_rad, double lon_rad,
                                    double radius = kEarthRadius);

  /// Earth-surface sanity band on the anchor norm.
  void validate() const;
};

/// Yaw offset rotation: maps w-frame vectors into the n-frame (R_w^n).
Rotation rotation_from_yaw(double psi);

/// ENU-to-ECEF rotation at the anchor (R_n^e); Up column is the geodetic
/// up direction at the anchor.
FrameRotation ecef_from_enu(const AnchorGeodesy& anchor);

enum class Constellation : int { Gps = 0, Glonass = 1, Galileo = 2, Beidou = 3 };
inline constexpr int kNumConstellations = 4;

char constellation_letter(Constellation c);
Constellation constellation_from_letter(char c);

/// One keyframe's navigation state. Receiver clock terms are carried in
/// meters (l_s * bias) and meters/second so that all Jacobian columns are
/// of comparable scale.
struct ImuState {
  double time = 0.0;                              // s
  Eigen::Vector3d p = Eigen::Vector3d::Zero();    // m, w-frame
  Eigen::Vector3d v = Eigen::Vector3d::Zero();    // m/s, w-frame
  Rotation q;                                     // q_b^w
  Eigen::Vector3d ba = Eigen::Vector3d::Zero();   // m/s^2
  Eigen::Vector3d bg = Eigen::Vector3d::Zero();   // rad/s
  Eigen::Vector4d clk = Eigen::Vector4d::Zero();  // m, per constellation (G,R,E,C)
  double clk_drift = 0.0;                         // m/s

  // Error-state layout: [dp dv dtheta dba dbg dclk(4) dclk_drift]
  static constexpr int kErrorDim = 20;
  static constexpr int kP = 0;
  static constexpr int kV = 3;
  static constexpr int kTheta = 6;
  static constexpr int kBa = 9;
  static constexpr int kBg = 12;
  static constexpr int kClk = 15;
  static constexpr int kClkDrift = 19;

  bool all_finite() const;
};

/// Applies an error-state increment; attitude by right-multiplicative
/// quaternion composition, everything else additively.
ImuState manifold_plus(const ImuState& state, const Eigen::Ref<const Eigen::VectorXd>& delta);

}  // namespace navim
