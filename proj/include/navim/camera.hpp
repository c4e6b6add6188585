#pragma once

#include <Eigen/Core>

#include <optional>
#include <stdexcept>

#include "navim/geom.hpp"

namespace navim {

/// Pinhole camera with rigid body-to-camera extrinsics {R_b^c, t_b^c}.
struct CameraModel {
  double fx = 400.0, fy = 400.0;   // px
  double cx = 320.0, cy = 240.0;   // px
  double width = 640.0, height = 480.0;
  Rotation r_bc = forward_extrinsics();            // body -> camera
  Eigen::Vector3d t_bc = Eigen::Vector3d::Zero();  // m

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw std::invalid_argument("CameraModel: focal <= 0");
    if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height)) {
      throw std::invalid_argument("CameraModel: principal point outside image");
    }
  }

  /// Body->camera transform of a w-frame point given the body pose.
  Eigen::Vector3d to_camera(const Eigen::Vector3d& x_w, const Eigen::Vector3d& p_bw,
                            const Rotation& q_bw) const {
    const Eigen::Vector3d x_b = q_bw.inverse() * (x_w - p_bw);
    return r_bc * x_b + t_bc;
  }

  std::optional<Eigen::Vector2d> pinhole(const Eigen::Vector3d& x_c) const {
    if (!(x_c.z() > 0.0)) return std::nullopt;
    return Eigen::Vector2d(fx * x_c.x() / x_c.z() + cx, fy * x_c.y() / x_c.z() + cy);
  }

  bool in_bounds(const Eigen::Vector2d& px) const {
    return px.x() >= 0.0 && px.x() < width && px.y() >= 0.0 && px.y() < height;
  }

  /// Forward-looking default: camera z along body x, camera x along -body y.
  static Rotation forward_extrinsics() {
    Eigen::Matrix3d m;
    m << 0, -1, 0,
         0, 0, -1,
         1, 0, 0;
    return Rotation(m);
  }
};

}  // namespace navim
