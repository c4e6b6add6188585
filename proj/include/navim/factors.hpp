#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "navim/camera.hpp"
#include "navim/geom.hpp"
#include "navim/scenario.hpp"

namespace navim {

/// Inverse-depth feature anchored in the camera frame of its first observation.
struct FeatureParam {
  int feature_id = 0;
  int anchor_frame = 0;                                   // keyframe index
  double inv_depth = 0.05;                                // 1/m
  Eigen::Vector3d bearing_c = Eigen::Vector3d::UnitZ();   // unit, anchor camera frame

  Eigen::Vector3d point_in_anchor_camera() const { return bearing_c / inv_depth; }
};

/// Pinhole projection of a w-frame point seen from the given body state.
std::optional<Eigen::Vector2d> project(const Eigen::Vector3d& x_w, const ImuState& state,
                                       const CameraModel& cam);

/// World position of an anchored feature.
Eigen::Vector3d feature_world_point(const FeatureParam& f, const ImuState& anchor_state,
                                    const CameraModel& cam);

std::optional<Eigen::Vector2d> project(const FeatureParam& f, const ImuState& anchor_state,
                                       const ImuState& state, const CameraModel& cam);

struct VisualResidual {
  bool valid = false;  // false when the point projects behind either camera
  Eigen::Vector2d r = Eigen::Vector2d::Zero();  // observed - predicted, px
  Eigen::Matrix<double, 2, 3> d_p_i = Eigen::Matrix<double, 2, 3>::Zero();
  Eigen::Matrix<double, 2, 3> d_theta_i = Eigen::Matrix<double, 2, 3>::Zero();
  Eigen::Matrix<double, 2, 3> d_p_j = Eigen::Matrix<double, 2, 3>::Zero();
  Eigen::Matrix<double, 2, 3> d_theta_j = Eigen::Matrix<double, 2, 3>::Zero();
  Eigen::Vector2d d_rho = Eigen::Vector2d::Zero();
};

/// Reprojection residual of a feature anchored in frame i, observed in frame j.
VisualResidual visual_residual(const Eigen::Vector2d& obs_px, const FeatureParam& f,
                               const ImuState& state_i, const ImuState& state_j,
                               const CameraModel& cam);

struct PseudorangeResidual {
  double r = 0.0;  // m
  Eigen::Vector3d d_p = Eigen::Vector3d::Zero();   // w-frame position
  Eigen::Vector4d d_clk = Eigen::Vector4d::Zero(); // one-hot by constellation (clock in m)
  double d_psi = 0.0;
};

PseudorangeResidual pseudorange_residual(const SatelliteObservation& obs,
                                         const ImuState& state, double psi,
                                         const AnchorGeodesy& anchor);

enum class ResidualSource { Imu, Gnss, Vision };

const char* residual_source_name(ResidualSource s);

struct WhitenedResidual {
  Eigen::VectorXd raw;
  Eigen::VectorXd sigma;
  Eigen::VectorXd whitened;  // raw / sigma, componentwise
  ResidualSource source = ResidualSource::Gnss;
  int epoch_index = 0;
  std::vector<std::string> labels;
};

WhitenedResidual whiten(const Eigen::VectorXd& raw, const Eigen::VectorXd& sigma,
                        ResidualSource source, int epoch_index,
                        std::vector<std::string> labels);

/// "G3", "R12", ... for satellite component labels.
std::string sat_label(int sat_id);

}  // namespace navim
