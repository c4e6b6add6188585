#include "navim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace navim {

namespace {

constexpr int kDumpSchemaVersion = 1;
constexpr double kGoldenAngle = 2.399963229728653;

struct KinematicSample {
  Eigen::Vector3d p, v, a;
  double yaw, yaw_rate;
};

KinematicSample eval_profile(const TrajectoryConfig& cfg, double t) {
  KinematicSample k;
  switch (cfg.profile) {
    case TrajectoryProfile::Straight: {
      const double s = cfg.straight_speed_mps;
      k.p = Eigen::Vector3d(s * t, 0.0, cfg.height_m);
      k.v = Eigen::Vector3d(s, 0.0, 0.0);
      k.a = Eigen::Vector3d::Zero();
      k.yaw = 0.0;
      k.yaw_rate = 0.0;
      break;
    }
    case TrajectoryProfile::Circle: {
      const double r = cfg.circle_radius_m;
      const double w = cfg.circle_speed_mps / r;
      const double th = w * t;
      k.p = Eigen::Vector3d(r * std::cos(th), r * std::sin(th), cfg.height_m);
      k.v = r * w * Eigen::Vector3d(-std::sin(th), std::cos(th), 0.0);
      k.a = -r * w * w * Eigen::Vector3d(std::cos(th), std::sin(th), 0.0);
      k.yaw = th + M_PI / 2.0;
      k.yaw_rate = w;
      break;
    }
    case TrajectoryProfile::FigureEight: {
      const double w = 2.0 * M_PI / cfg.fig8_period_s;
      const double ax = cfg.fig8_half_length_m, by = cfg.fig8_half_width_m;
      k.p = Eigen::Vector3d(ax * std::sin(w * t), by * std::sin(2.0 * w * t), cfg.height_m);
      k.v = Eigen::Vector3d(ax * w * std::cos(w * t), 2.0 * by * w * std::cos(2.0 * w * t), 0.0);
      k.a = Eigen::Vector3d(-ax * w * w * std::sin(w * t),
                            -4.0 * by * w * w * std::sin(2.0 * w * t), 0.0);
      const double v2 = k.v.head<2>().squaredNorm();
      k.yaw = std::atan2(k.v.y(), k.v.x());
      k.yaw_rate = (k.v.x() * k.a.y() - k.v.y() * k.a.x()) / v2;
      break;
    }
  }
  return k;
}

int keyframe_stride(const TruthTrajectory& truth, double keyframe_hz) {
  const double ratio = truth.rate_hz / keyframe_hz;
  const int stride = static_cast<int>(std::lround(ratio));
  if (std::abs(ratio - stride) > 1e-9 || stride < 1) {
    throw std::invalid_argument("sample rate must be an integer multiple of keyframe rate");
  }
  return stride;
}

}  // namespace

TrajectoryProfile profile_from_string(const std::string& name) {
  if (name == "straight") return TrajectoryProfile::Straight;
  if (name == "circle") return TrajectoryProfile::Circle;
  if (name == "figure-eight" || name == "figure8") return TrajectoryProfile::FigureEight;
  throw std::invalid_argument("unknown trajectory profile: " + name);
}

std::string profile_to_string(TrajectoryProfile p) {
  switch (p) {
    case TrajectoryProfile::Straight: return "straight";
    case TrajectoryProfile::Circle: return "circle";
    case TrajectoryProfile::FigureEight: return "figure-eight";
  }
  return "?";
}

TruthTrajectory generate_trajectory(const TrajectoryConfig& cfg) {
  if (!(cfg.duration_s > 0.0)) throw std::invalid_argument("duration must be positive");
  if (!(cfg.sample_rate_hz > 0.0)) throw std::invalid_argument("rate must be positive");

  const long n = std::lround(cfg.duration_s * cfg.sample_rate_hz);
  TruthTrajectory out;
  out.rate_hz = cfg.sample_rate_hz;
  out.samples.resize(n + 1);
  for (long i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / cfg.sample_rate_hz;
    const KinematicSample k = eval_profile(cfg, t);
    TruthSample& s = out.samples[i];
    s.t = t;
    s.p = k.p;
    s.v = k.v;
    s.q = Rotation::from_yaw(k.yaw);
    s.omega_b = Eigen::Vector3d(0.0, 0.0, k.yaw_rate);
    s.sf_b = s.q.inverse() * (k.a - kGravityW);
  }
  return out;
}

TruthTrajectory generate_trajectory(TrajectoryProfile profile, double duration_s,
                                    double sample_rate_hz) {
  TrajectoryConfig cfg;
  cfg.profile = profile;
  cfg.duration_s = duration_s;
  cfg.sample_rate_hz = sample_rate_hz;
  return generate_trajectory(cfg);
}

void ImuSpec::validate(double keyframe_hz) const {
  if (!(accel_noise_density > 0.0 && gyro_noise_density > 0.0)) {
    throw std::invalid_argument("ImuSpec: noise densities must be positive");
  }
  if (rate_hz < 10.0 * keyframe_hz) {
    throw std::invalid_argument("ImuSpec: rate must be >= 10x keyframe rate");
  }
}

std::vector<ImuSample> synthesize_imu(const TruthTrajectory& truth, const ImuSpec& spec,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sa = spec.accel_noise_density * std::sqrt(spec.rate_hz);
  const double sg = spec.gyro_noise_density * std::sqrt(spec.rate_hz);

  std::vector<ImuSample> out(truth.samples.size());
  for (size_t i = 0; i < truth.samples.size(); ++i) {
    const TruthSample& s = truth.samples[i];
    ImuSample& m = out[i];
    m.t = s.t;
    for (int a = 0; a < 3; ++a) {
      m.accel[a] = s.sf_b[a] + spec.accel_bias[a] + (spec.noiseless ? 0.0 : sa * gauss(rng));
    }
    for (int a = 0; a < 3; ++a) {
      m.gyro[a] = s.omega_b[a] + spec.gyro_bias[a] + (spec.noiseless ? 0.0 : sg * gauss(rng));
    }
  }
  return out;
}

std::vector<SatellitePlacement> place_satellites(const ConstellationConfig& cfg,
                                                 const WorldFrameConfig& frame,
                                                 std::uint64_t seed) {
  const int n = cfg.total();
  if (n <= 0) throw std::invalid_argument("no satellites configured");

  std::mt19937_64 rng(seed ^ 0x7f4a7c159e3779b9ULL);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const FrameRotation r_ne = ecef_from_enu(frame.anchor);

  // Round-robin constellation assignment over the spiral keeps each system
  // spread across the sky.
  std::array<int, kNumConstellations> remaining = cfg.counts;
  std::array<int, kNumConstellations> issued{0, 0, 0, 0};
  std::vector<SatellitePlacement> out;
  out.reserve(n);

  const double s_min = std::sin(cfg.min_elevation_rad);
  int c_rr = 0;
  for (int i = 0; i < n; ++i) {
    while (remaining[c_rr] == 0) c_rr = (c_rr + 1) % kNumConstellations;
    const double f = (i + 0.5) / n;
    const double sin_el = s_min + (1.0 - s_min) * f;
    const double cos_el = std::sqrt(std::max(0.0, 1.0 - sin_el * sin_el));
    const double az = i * kGoldenAngle;
    const Eigen::Vector3d u_n(cos_el * std::sin(az), cos_el * std::cos(az), sin_el);

    SatellitePlacement sp;
    sp.constellation = static_cast<Constellation>(c_rr);
    sp.sat_id = c_rr * 100 + (++issued[c_rr]);
    sp.p_sat_e = frame.anchor.p_anc_e + r_ne * (cfg.range_m * u_n);
    sp.sat_clock_s = cfg.sat_clock_spread_s * uni(rng);
    out.push_back(sp);

    --remaining[c_rr];
    c_rr = (c_rr + 1) % kNumConstellations;
  }
  return out;
}

std::vector<std::vector<SatelliteObservation>> synthesize_pseudoranges(
    const TruthTrajectory& truth, const ConstellationConfig& cfg,
    const WorldFrameConfig& frame, const ReceiverClockModel& clock, double keyframe_hz,
    std::uint64_t seed) {
  if (cfg.total() < cfg.min_visible) {
    throw std::invalid_argument("fewer satellites than the minimum visible count");
  }
  if (!(cfg.sigma_pr_m > 0.0)) throw std::invalid_argument("pseudorange sigma must be > 0");

  const auto sats = place_satellites(cfg, frame, seed);
  const int stride = keyframe_stride(truth, keyframe_hz);
  const FrameRotation r_ne = ecef_from_enu(frame.anchor);
  const Rotation r_wn = rotation_from_yaw(frame.psi_true);

  std::mt19937_64 rng(seed ^ 0x2545f4914f6cdd1dULL);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::vector<SatelliteObservation>> epochs;
  for (size_t idx = 0; idx < truth.samples.size(); idx += stride) {
    const TruthSample& s = truth.samples[idx];
    const Eigen::Vector3d p_rcv_e = frame.anchor.p_anc_e + r_ne * (r_wn * s.p);
    const Eigen::Vector4d clk_m = clock.bias_m_at(s.t);

    std::vector<SatelliteObservation> obs;
    obs.reserve(sats.size());
    for (const auto& sp : sats) {
      SatelliteObservation o;
      o.sat_id = sp.sat_id;
      o.constellation = sp.constellation;
      o.p_sat_e = sp.p_sat_e;
      o.sat_clock_s = sp.sat_clock_s;
      o.tropo_m = cfg.tropo_m;
      o.iono_m = cfg.iono_m;
      o.multipath_m = cfg.multipath_m;
      o.sagnac_m = cfg.sagnac_m;
      o.sigma_m = cfg.sigma_pr_m;
      const double range = (sp.p_sat_e - p_rcv_e).norm();
      o.pseudorange_m = range + clk_m[static_cast<int>(sp.constellation)] -
                        kSpeedOfLight * sp.sat_clock_s + o.tropo_m + o.iono_m +
                        o.multipath_m + o.sagnac_m +
                        (cfg.noiseless ? 0.0 : cfg.sigma_pr_m * gauss(rng));
      obs.push_back(o);
    }
    epochs.push_back(std::move(obs));
  }
  return epochs;
}

SyntheticFeatures synthesize_features(const TruthTrajectory& truth,
                                      const LandmarkFieldConfig& cfg,
                                      const CameraModel& camera, double keyframe_hz,
                                      std::uint64_t seed) {
  if (cfg.count <= 0) throw std::invalid_argument("landmark field is empty");
  camera.validate();

  const int stride = keyframe_stride(truth, keyframe_hz);

  // Landmark box: horizontal bounds of the trajectory inflated by the margin.
  Eigen::Vector2d lo(1e300, 1e300), hi(-1e300, -1e300);
  for (const auto& s : truth.samples) {
    lo = lo.cwiseMin(s.p.head<2>());
    hi = hi.cwiseMax(s.p.head<2>());
  }
  lo.array() -= cfg.margin_m;
  hi.array() += cfg.margin_m;

  std::mt19937_64 rng(seed ^ 0xda3e39cb94b95bdbULL);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<Eigen::Vector3d> landmarks(cfg.count);
  for (auto& lm : landmarks) {
    lm.x() = lo.x() + (hi.x() - lo.x()) * uni(rng);
    lm.y() = lo.y() + (hi.y() - lo.y()) * uni(rng);
    lm.z() = cfg.min_height_m + (cfg.max_height_m - cfg.min_height_m) * uni(rng);
  }

  SyntheticFeatures out;
  std::map<int, int> open_track;  // landmark index -> track index
  int next_track_id = 0;

  const int n_frames = static_cast<int>((truth.samples.size() - 1) / stride) + 1;
  for (int kf = 0; kf < n_frames; ++kf) {
    const TruthSample& s = truth.samples[static_cast<size_t>(kf) * stride];
    int kept = 0;
    for (int li = 0; li < cfg.count; ++li) {
      const Eigen::Vector3d x_c = camera.to_camera(landmarks[li], s.p, s.q);
      bool visible = false;
      Eigen::Vector2d noisy;
      if (x_c.z() >= cfg.min_depth_m && x_c.z() <= cfg.max_depth_m) {
        if (auto px = camera.pinhole(x_c); px && camera.in_bounds(*px)) {
          noisy = *px;
          if (!cfg.noiseless) noisy += cfg.sigma_px * Eigen::Vector2d(gauss(rng), gauss(rng));
          visible = camera.in_bounds(noisy);
        }
      }
      if (visible) {
        auto it = open_track.find(li);
        if (it == open_track.end()) {
          FeatureTrack tr;
          tr.feature_id = next_track_id++;
          tr.anchor_frame = kf;
          tr.landmark_w = landmarks[li];
          tr.sigma_px = cfg.sigma_px;
          out.tracks.push_back(std::move(tr));
          it = open_track.emplace(li, static_cast<int>(out.tracks.size()) - 1).first;
        }
        out.tracks[it->second].observations.emplace_back(kf, noisy);
        ++kept;
      } else {
        open_track.erase(li);
      }
    }
    if (kept < cfg.min_features_per_frame) out.sparse_frames.push_back(kf);
  }

  // Tracks must span at least two frames to constrain inverse depth.
  std::erase_if(out.tracks, [](const FeatureTrack& t) { return t.observations.size() < 2; });
  return out;
}

void FaultEvent::validate() const {
  if (!(start_s < end_s)) throw std::invalid_argument("FaultEvent: start must precede end");
  if (!accel_step.allFinite() || !gyro_step.allFinite() || !std::isfinite(pr_step_m) ||
      !std::isfinite(px_step)) {
    throw std::invalid_argument("FaultEvent: non-finite magnitude");
  }
}

std::vector<MeasurementEpoch> inject_faults(const std::vector<MeasurementEpoch>& epochs,
                                            const std::vector<FaultEvent>& schedule) {
  if (epochs.empty()) return {};
  const double t_end = epochs.back().t;
  for (const auto& ev : schedule) {
    ev.validate();
    if (ev.start_s < 0.0 || ev.start_s > t_end) {
      throw std::invalid_argument("FaultEvent outside the scenario time span");
    }
  }
  for (size_t a = 0; a < schedule.size(); ++a) {
    for (size_t b = a + 1; b < schedule.size(); ++b) {
      if (schedule[a].sensor != schedule[b].sensor) continue;
      if (schedule[a].start_s < schedule[b].end_s && schedule[b].start_s < schedule[a].end_s) {
        throw std::invalid_argument("overlapping fault events on the same sensor");
      }
    }
  }

  auto in_window = [](const FaultEvent& ev, double t) {
    return t >= ev.start_s && t < ev.end_s;
  };

  std::vector<MeasurementEpoch> out = epochs;
  for (auto& ep : out) {
    for (const auto& ev : schedule) {
      switch (ev.sensor) {
        case FaultSensor::Gnss:
          if (in_window(ev, ep.t)) {
            for (auto& o : ep.sats) {
              if (ev.target_sat >= 0 && o.sat_id != ev.target_sat) continue;
              o.pseudorange_m += ev.pr_step_m;
              ep.faults.gnss_sats.push_back(o.sat_id);
            }
          }
          break;
        case FaultSensor::Vision:
          if (in_window(ev, ep.t) && !ep.feats.empty()) {
            for (auto& f : ep.feats) f.pixel.array() += ev.px_step;
            ep.faults.vision = true;
          }
          break;
        case FaultSensor::Imu:
          for (auto& m : ep.imu) {
            if (in_window(ev, m.t)) {
              m.accel += ev.accel_step;
              m.gyro += ev.gyro_step;
              ep.faults.imu = true;
            }
          }
          break;
      }
    }
    std::sort(ep.faults.gnss_sats.begin(), ep.faults.gnss_sats.end());
  }
  return out;
}

Scenario generate_scenario(const ScenarioConfig& cfg) {
  cfg.imu.validate(cfg.keyframe_hz);
  ScenarioConfig eff = cfg;
  if (cfg.noiseless) {
    eff.imu.noiseless = true;
    eff.gnss.noiseless = true;
    eff.landmarks.noiseless = true;
  }
  const TruthTrajectory truth = generate_trajectory(eff.trajectory);
  const auto imu = synthesize_imu(truth, eff.imu, eff.seed);
  const auto prs = synthesize_pseudoranges(truth, eff.gnss, eff.frame, eff.clock,
                                           eff.keyframe_hz, eff.seed);
  const auto feats = synthesize_features(truth, eff.landmarks, eff.camera,
                                         eff.keyframe_hz, eff.seed);
  const int stride = keyframe_stride(truth, cfg.keyframe_hz);

  // Per-frame feature observations from the track set.
  std::map<int, std::vector<FeatureObservation>> frame_feats;
  for (const auto& tr : feats.tracks) {
    for (const auto& [kf, px] : tr.observations) {
      frame_feats[kf].push_back(FeatureObservation{tr.feature_id, px});
    }
  }

  Scenario sc;
  sc.config = cfg;
  sc.sparse_frames = feats.sparse_frames;
  const int n_epochs = static_cast<int>(prs.size());
  sc.epochs.resize(n_epochs);
  for (int k = 0; k < n_epochs; ++k) {
    MeasurementEpoch& ep = sc.epochs[k];
    ep.index = k;
    const size_t idx = static_cast<size_t>(k) * stride;
    const TruthSample& ts = truth.samples[idx];
    ep.t = ts.t;
    ep.sats = prs[k];
    if (auto it = frame_feats.find(k); it != frame_feats.end()) ep.feats = it->second;
    if (k > 0) {
      const size_t lo = static_cast<size_t>(k - 1) * stride;
      ep.imu.assign(imu.begin() + lo, imu.begin() + idx + 1);
    }
    ep.truth.time = ts.t;
    ep.truth.p = ts.p;
    ep.truth.v = ts.v;
    ep.truth.q = ts.q;
    ep.truth.ba = cfg.imu.accel_bias;
    ep.truth.bg = cfg.imu.gyro_bias;
    ep.truth.clk = cfg.clock.bias_m_at(ts.t);
    ep.truth.clk_drift = cfg.clock.drift_sps * kSpeedOfLight;
  }
  sc.epochs = inject_faults(sc.epochs, cfg.faults);
  return sc;
}

namespace {

using nlohmann::json;

json vec_to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec_from_json(const json& j) {
  return Eigen::Vector3d(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

}  // namespace

void write_scenario_dump(const Scenario& scenario, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open dump file for writing: " + path);

  const ScenarioConfig& cfg = scenario.config;
  json header = {
      {"schema", kDumpSchemaVersion},
      {"seed", cfg.seed},
      {"keyframe_hz", cfg.keyframe_hz},
      {"anchor_lat", cfg.frame.anchor.lat_rad},
      {"anchor_lon", cfg.frame.anchor.lon_rad},
      {"psi_true", cfg.frame.psi_true},
      {"imu_accel_density", cfg.imu.accel_noise_density},
      {"imu_gyro_density", cfg.imu.gyro_noise_density},
      {"imu_rate_hz", cfg.imu.rate_hz},
      {"sigma_px", cfg.landmarks.sigma_px},
      {"camera",
       {{"fx", cfg.camera.fx},
        {"fy", cfg.camera.fy},
        {"cx", cfg.camera.cx},
        {"cy", cfg.camera.cy},
        {"width", cfg.camera.width},
        {"height", cfg.camera.height},
        {"q_bc", {cfg.camera.r_bc.wxyz()[0], cfg.camera.r_bc.wxyz()[1],
                  cfg.camera.r_bc.wxyz()[2], cfg.camera.r_bc.wxyz()[3]}},
        {"t_bc", vec_to_json(cfg.camera.t_bc)}}},
      {"n_epochs", scenario.epochs.size()},
  };
  out << header.dump() << '\n';

  for (const auto& ep : scenario.epochs) {
    json sats = json::array();
    for (const auto& o : ep.sats) {
      sats.push_back(json::array({o.sat_id, std::string(1, constellation_letter(o.constellation)),
                                  o.p_sat_e.x(), o.p_sat_e.y(), o.p_sat_e.z(), o.sat_clock_s,
                                  o.tropo_m, o.iono_m, o.multipath_m, o.sagnac_m,
                                  o.pseudorange_m, o.sigma_m}));
    }
    json feats = json::array();
    for (const auto& f : ep.feats) {
      feats.push_back(json::array({f.feature_id, f.pixel.x(), f.pixel.y()}));
    }
    json imu = json::array();
    for (const auto& m : ep.imu) {
      imu.push_back(json::array({m.t, m.accel.x(), m.accel.y(), m.accel.z(), m.gyro.x(),
                                 m.gyro.y(), m.gyro.z()}));
    }
    const Eigen::Vector4d q = ep.truth.q.wxyz();
    json line = {
        {"i", ep.index},
        {"t", ep.t},
        {"sats", sats},
        {"feats", feats},
        {"imu", imu},
        {"truth",
         {{"p", vec_to_json(ep.truth.p)},
          {"v", vec_to_json(ep.truth.v)},
          {"q", {q[0], q[1], q[2], q[3]}},
          {"ba", vec_to_json(ep.truth.ba)},
          {"bg", vec_to_json(ep.truth.bg)},
          {"clk", {ep.truth.clk[0], ep.truth.clk[1], ep.truth.clk[2], ep.truth.clk[3]}},
          {"drift", ep.truth.clk_drift}}},
        {"flt", {{"imu", ep.faults.imu}, {"cam", ep.faults.vision}, {"gnss", ep.faults.gnss_sats}}},
    };
    out << line.dump() << '\n';
  }
}

Scenario load_scenario_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dump file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty scenario dump");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed dump header: ") + e.what());
  }
  if (!header.contains("schema") || header.at("schema").get<int>() != kDumpSchemaVersion) {
    throw std::runtime_error("scenario dump schema mismatch");
  }

  Scenario sc;
  ScenarioConfig& cfg = sc.config;
  cfg.seed = header.at("seed").get<std::uint64_t>();
  cfg.keyframe_hz = header.at("keyframe_hz").get<double>();
  cfg.frame.anchor = AnchorGeodesy::from_lat_lon(header.at("anchor_lat").get<double>(),
                                                 header.at("anchor_lon").get<double>());
  cfg.frame.psi_true = header.at("psi_true").get<double>();
  cfg.imu.accel_noise_density = header.at("imu_accel_density").get<double>();
  cfg.imu.gyro_noise_density = header.at("imu_gyro_density").get<double>();
  cfg.imu.rate_hz = header.at("imu_rate_hz").get<double>();
  cfg.landmarks.sigma_px = header.at("sigma_px").get<double>();
  const json& cam = header.at("camera");
  cfg.camera.fx = cam.at("fx").get<double>();
  cfg.camera.fy = cam.at("fy").get<double>();
  cfg.camera.cx = cam.at("cx").get<double>();
  cfg.camera.cy = cam.at("cy").get<double>();
  cfg.camera.width = cam.at("width").get<double>();
  cfg.camera.height = cam.at("height").get<double>();
  const json& qbc = cam.at("q_bc");
  cfg.camera.r_bc = Rotation(qbc.at(0).get<double>(), qbc.at(1).get<double>(),
                             qbc.at(2).get<double>(), qbc.at(3).get<double>());
  cfg.camera.t_bc = vec_from_json(cam.at("t_bc"));

  const size_t n_epochs = header.at("n_epochs").get<size_t>();
  sc.epochs.reserve(n_epochs);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(std::string("malformed dump record: ") + e.what());
    }
    MeasurementEpoch ep;
    ep.index = j.at("i").get<int>();
    ep.t = j.at("t").get<double>();
    for (const auto& s : j.at("sats")) {
      SatelliteObservation o;
      o.sat_id = s.at(0).get<int>();
      o.constellation = constellation_from_letter(s.at(1).get<std::string>().at(0));
      o.p_sat_e = Eigen::Vector3d(s.at(2).get<double>(), s.at(3).get<double>(),
                                  s.at(4).get<double>());
      o.sat_clock_s = s.at(5).get<double>();
      o.tropo_m = s.at(6).get<double>();
      o.iono_m = s.at(7).get<double>();
      o.multipath_m = s.at(8).get<double>();
      o.sagnac_m = s.at(9).get<double>();
      o.pseudorange_m = s.at(10).get<double>();
      o.sigma_m = s.at(11).get<double>();
      ep.sats.push_back(o);
    }
    for (const auto& f : j.at("feats")) {
      ep.feats.push_back(FeatureObservation{
          f.at(0).get<int>(), Eigen::Vector2d(f.at(1).get<double>(), f.at(2).get<double>())});
    }
    for (const auto& m : j.at("imu")) {
      ImuSample s;
      s.t = m.at(0).get<double>();
      s.accel = Eigen::Vector3d(m.at(1).get<double>(), m.at(2).get<double>(),
                                m.at(3).get<double>());
      s.gyro = Eigen::Vector3d(m.at(4).get<double>(), m.at(5).get<double>(),
                               m.at(6).get<double>());
      ep.imu.push_back(s);
    }
    const json& tr = j.at("truth");
    ep.truth.time = ep.t;
    ep.truth.p = vec_from_json(tr.at("p"));
    ep.truth.v = vec_from_json(tr.at("v"));
    const json& q = tr.at("q");
    ep.truth.q = Rotation(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                          q.at(3).get<double>());
    ep.truth.ba = vec_from_json(tr.at("ba"));
    ep.truth.bg = vec_from_json(tr.at("bg"));
    const json& clk = tr.at("clk");
    for (int c = 0; c < 4; ++c) ep.truth.clk[c] = clk.at(c).get<double>();
    ep.truth.clk_drift = tr.at("drift").get<double>();
    const json& flt = j.at("flt");
    ep.faults.imu = flt.at("imu").get<bool>();
    ep.faults.vision = flt.at("cam").get<bool>();
    for (const auto& g : flt.at("gnss")) ep.faults.gnss_sats.push_back(g.get<int>());
    sc.epochs.push_back(std::move(ep));
  }
  if (sc.epochs.size() != n_epochs) {
    throw std::runtime_error("scenario dump truncated: epoch count mismatch");
  }
  return sc;
}

}  // namespace navim
