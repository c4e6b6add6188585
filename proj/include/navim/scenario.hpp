#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "navim/camera.hpp"
#include "navim/geom.hpp"
#include "navim/preint.hpp"

namespace navim {

inline const Eigen::Vector3d kGravityW{0.0, 0.0, -9.81};  // m/s^2, w-frame

struct TruthSample {
  double t = 0.0;
  Eigen::Vector3d p = Eigen::Vector3d::Zero();        // m, w
  Eigen::Vector3d v = Eigen::Vector3d::Zero();        // m/s, w
  Rotation q;                                         // b -> w
  Eigen::Vector3d omega_b = Eigen::Vector3d::Zero();  // rad/s, body
  Eigen::Vector3d sf_b = Eigen::Vector3d::Zero();     // specific force, body
};

struct TruthTrajectory {
  std::vector<TruthSample> samples;
  double rate_hz = 0.0;
};

enum class TrajectoryProfile { Straight, Circle, FigureEight };

TrajectoryProfile profile_from_string(const std::string& name);
std::string profile_to_string(TrajectoryProfile p);

struct TrajectoryConfig {
  TrajectoryProfile profile = TrajectoryProfile::Circle;
  double duration_s = 120.0;
  double sample_rate_hz = 200.0;
  double height_m = 1.5;
  double circle_radius_m = 50.0;
  double circle_speed_mps = 5.0;
  double straight_speed_mps = 3.0;
  double fig8_half_length_m = 60.0;
  double fig8_half_width_m = 25.0;
  double fig8_period_s = 80.0;
};

TruthTrajectory generate_trajectory(const TrajectoryConfig& cfg);
TruthTrajectory generate_trajectory(TrajectoryProfile profile, double duration_s,
                                    double sample_rate_hz);

struct ImuSpec {
  double accel_noise_density = 0.02;  // m/s^2/sqrt(Hz)
  double gyro_noise_density = 0.002;  // rad/s/sqrt(Hz)
  Eigen::Vector3d accel_bias = Eigen::Vector3d::Zero();  // m/s^2
  Eigen::Vector3d gyro_bias = Eigen::Vector3d::Zero();   // rad/s
  double rate_hz = 200.0;
  bool noiseless = false;  // keep densities for whitening, skip the draws

  void validate(double keyframe_hz) const;
};

std::vector<ImuSample> synthesize_imu(const TruthTrajectory& truth, const ImuSpec& spec,
                                      std::uint64_t seed);

struct SatelliteObservation {
  int sat_id = 0;
  Constellation constellation = Constellation::Gps;
  Eigen::Vector3d p_sat_e = Eigen::Vector3d::Zero();  // m, ECEF
  double sat_clock_s = 0.0;                           // satellite clock offset
  double tropo_m = 0.0, iono_m = 0.0, multipath_m = 0.0, sagnac_m = 0.0;
  double pseudorange_m = 0.0;
  double sigma_m = 1.5;
};

/// Static hemisphere constellation; positions from a golden-angle spiral so the
/// spread is deterministic and well-conditioned (PDOP ~ 1.5-2.5).
struct ConstellationConfig {
  std::array<int, kNumConstellations> counts{10, 0, 10, 10};  // G,R,E,C
  double min_elevation_rad = 15.0 * M_PI / 180.0;
  double range_m = 2.2e7;             // anchor-to-satellite distance
  double sat_clock_spread_s = 5.0e-5; // uniform +- spread, seeded per satellite
  double sigma_pr_m = 1.5;
  double tropo_m = 0.0, iono_m = 0.0, multipath_m = 0.0, sagnac_m = 0.0;
  int min_visible = 5;
  bool noiseless = false;

  int total() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
};

struct ReceiverClockModel {
  Eigen::Vector4d bias_s = Eigen::Vector4d::Zero();  // per constellation, s
  double drift_sps = 0.0;                            // shared oscillator drift, s/s

  Eigen::Vector4d bias_m_at(double t) const {
    return (bias_s.array() + drift_sps * t).matrix() * kSpeedOfLight;
  }
};

struct WorldFrameConfig {
  AnchorGeodesy anchor = AnchorGeodesy::from_lat_lon(0.698, 2.03);
  double psi_true = 0.15;  // rad, w -> n yaw offset
};

struct SatellitePlacement {
  int sat_id;
  Constellation constellation;
  Eigen::Vector3d p_sat_e;
  double sat_clock_s;
};

std::vector<SatellitePlacement> place_satellites(const ConstellationConfig& cfg,
                                                 const WorldFrameConfig& frame,
                                                 std::uint64_t seed);

std::vector<std::vector<SatelliteObservation>> synthesize_pseudoranges(
    const TruthTrajectory& truth, const ConstellationConfig& cfg,
    const WorldFrameConfig& frame, const ReceiverClockModel& clock, double keyframe_hz,
    std::uint64_t seed);

struct FeatureTrack {
  int feature_id = 0;
  int anchor_frame = 0;
  std::vector<std::pair<int, Eigen::Vector2d>> observations;  // (keyframe, pixel)
  Eigen::Vector3d landmark_w = Eigen::Vector3d::Zero();       // truth, m
  double sigma_px = 1.0;
};

struct LandmarkFieldConfig {
  int count = 160;
  double margin_m = 45.0;       // horizontal inflation of the trajectory bounds
  double min_height_m = -2.0;
  double max_height_m = 16.0;
  double min_depth_m = 2.0;
  double max_depth_m = 90.0;
  double sigma_px = 1.0;
  int min_features_per_frame = 8;
  bool noiseless = false;
};

struct SyntheticFeatures {
  std::vector<FeatureTrack> tracks;
  std::vector<int> sparse_frames;  // keyframes that fell below the feature floor
};

SyntheticFeatures synthesize_features(const TruthTrajectory& truth,
                                      const LandmarkFieldConfig& cfg,
                                      const CameraModel& camera, double keyframe_hz,
                                      std::uint64_t seed);

enum class FaultSensor { Imu, Gnss, Vision };

struct FaultEvent {
  FaultSensor sensor = FaultSensor::Gnss;
  double start_s = 0.0;
  double end_s = 0.0;
  Eigen::Vector3d accel_step = Eigen::Vector3d::Zero();  // m/s^2, all axes
  Eigen::Vector3d gyro_step = Eigen::Vector3d::Zero();   // rad/s, all axes
  double pr_step_m = 0.0;
  int target_sat = -1;  // -1: all satellites
  double px_step = 0.0; // added to both pixel coordinates, all features

  void validate() const;
};

struct FeatureObservation {
  int feature_id = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
};

struct EpochFaultLabels {
  bool imu = false;
  bool vision = false;
  std::vector<int> gnss_sats;

  bool any() const { return imu || vision || !gnss_sats.empty(); }
};

struct MeasurementEpoch {
  int index = 0;
  double t = 0.0;
  std::vector<SatelliteObservation> sats;
  std::vector<FeatureObservation> feats;
  std::vector<ImuSample> imu;  // covers [t_prev, t], endpoints included; empty at epoch 0
  ImuState truth;              // evaluation only
  EpochFaultLabels faults;
};

std::vector<MeasurementEpoch> inject_faults(const std::vector<MeasurementEpoch>& epochs,
                                            const std::vector<FaultEvent>& schedule);

struct ScenarioConfig {
  TrajectoryConfig trajectory;
  ImuSpec imu;
  ConstellationConfig gnss;
  ReceiverClockModel clock;
  LandmarkFieldConfig landmarks;
  CameraModel camera;
  WorldFrameConfig frame;
  double keyframe_hz = 1.0;
  std::vector<FaultEvent> faults;
  std::uint64_t seed = 1;
  bool noiseless = false;  // propagated into every sensor synthesis
};

struct Scenario {
  ScenarioConfig config;
  std::vector<MeasurementEpoch> epochs;
  std::vector<int> sparse_frames;
};

Scenario generate_scenario(const ScenarioConfig& cfg);

/// Line-delimited dump of the epochs plus the estimation-relevant header
/// (anchor, camera, rates, seed). Replays byte-identically.
void write_scenario_dump(const Scenario& scenario, const std::string& path);
Scenario load_scenario_dump(const std::string& path);

}  // namespace navim
