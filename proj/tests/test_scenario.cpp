#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "navim/factors.hpp"
#include "navim/scenario.hpp"

using namespace navim;

namespace {

ScenarioConfig small_config() {
  ScenarioConfig cfg;
  cfg.trajectory.duration_s = 20.0;
  cfg.trajectory.sample_rate_hz = 100.0;
  cfg.imu.rate_hz = 100.0;
  cfg.landmarks.count = 120;
  cfg.seed = 42;
  return cfg;
}

}  // namespace

TEST_CASE("trajectory static case: specific force is -g, rate zero") {
  TrajectoryConfig tc;
  tc.profile = TrajectoryProfile::Straight;
  tc.straight_speed_mps = 0.0;
  tc.duration_s = 2.0;
  tc.sample_rate_hz = 50.0;
  const auto truth = generate_trajectory(tc);
  for (const auto& s : truth.samples) {
    CHECK((s.sf_b - Eigen::Vector3d(0, 0, 9.81)).norm() < 1e-12);
    CHECK(s.omega_b.norm() == 0.0);
    CHECK(s.v.norm() == 0.0);
  }
}

TEST_CASE("trajectory circle: centripetal acceleration closed form") {
  TrajectoryConfig tc;
  tc.profile = TrajectoryProfile::Circle;
  tc.circle_radius_m = 50.0;
  tc.circle_speed_mps = 5.0;
  tc.duration_s = 10.0;
  tc.sample_rate_hz = 100.0;
  const auto truth = generate_trajectory(tc);
  for (size_t i = 0; i < truth.samples.size(); i += 97) {
    const auto& s = truth.samples[i];
    const Eigen::Vector3d a_w = s.q * s.sf_b + kGravityW;
    CHECK(a_w.norm() == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(s.v.norm() == doctest::Approx(5.0).epsilon(1e-9));
  }
}

TEST_CASE("trajectory sample count arithmetic") {
  const auto truth = generate_trajectory(TrajectoryProfile::Circle, 1200.0, 200.0);
  CHECK(truth.samples.size() == 240001);
  CHECK_THROWS_AS(generate_trajectory(TrajectoryProfile::Circle, -1.0, 100.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(profile_from_string("zigzag"), std::invalid_argument);
}

TEST_CASE("trajectory velocity is the numerical derivative of position") {
  TrajectoryConfig tc;
  tc.profile = TrajectoryProfile::FigureEight;
  tc.duration_s = 10.0;
  tc.sample_rate_hz = 200.0;
  const auto truth = generate_trajectory(tc);
  const double dt = 1.0 / tc.sample_rate_hz;
  for (size_t i = 1; i + 1 < truth.samples.size(); i += 53) {
    const Eigen::Vector3d v_num =
        (truth.samples[i + 1].p - truth.samples[i - 1].p) / (2.0 * dt);
    CHECK((v_num - truth.samples[i].v).norm() < 1e-3 * dt);  // O(dt^2)
  }
}

TEST_CASE("synthesize_imu noiseless and bias cases") {
  TrajectoryConfig tc;
  tc.profile = TrajectoryProfile::Circle;
  tc.duration_s = 3.0;
  tc.sample_rate_hz = 100.0;
  const auto truth = generate_trajectory(tc);

  ImuSpec spec;
  spec.accel_noise_density = 1e-300;  // effectively zero but valid
  spec.gyro_noise_density = 1e-300;
  spec.rate_hz = 100.0;
  const auto clean = synthesize_imu(truth, spec, 1);
  for (size_t i = 0; i < clean.size(); i += 31) {
    CHECK((clean[i].accel - truth.samples[i].sf_b).norm() < 1e-12);
    CHECK((clean[i].gyro - truth.samples[i].omega_b).norm() < 1e-12);
  }

  spec.accel_bias = Eigen::Vector3d(0.1, 0, 0);
  const auto biased = synthesize_imu(truth, spec, 1);
  for (size_t i = 0; i < biased.size(); i += 31) {
    CHECK((biased[i].accel - clean[i].accel - Eigen::Vector3d(0.1, 0, 0)).norm() < 1e-12);
  }

  spec.accel_noise_density = 0.02;
  spec.gyro_noise_density = 0.002;
  const auto a = synthesize_imu(truth, spec, 99);
  const auto b = synthesize_imu(truth, spec, 99);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].accel == b[i].accel);  // bit-identical per seed
    CHECK(a[i].gyro == b[i].gyro);
  }
}

TEST_CASE("imu spec validation") {
  ImuSpec spec;
  spec.rate_hz = 5.0;
  CHECK_THROWS_AS(spec.validate(1.0), std::invalid_argument);
  spec.rate_hz = 100.0;
  spec.accel_noise_density = 0.0;
  CHECK_THROWS_AS(spec.validate(1.0), std::invalid_argument);
}

TEST_CASE("satellite placement bands and clock shifts") {
  ScenarioConfig cfg = small_config();
  const auto sats = place_satellites(cfg.gnss, cfg.frame, cfg.seed);
  CHECK(static_cast<int>(sats.size()) == cfg.gnss.total());
  for (const auto& s : sats) {
    CHECK(s.p_sat_e.norm() > 2.0e7);
    CHECK(s.p_sat_e.norm() < 3.0e7);
  }

  const auto truth = generate_trajectory(cfg.trajectory);

  // Zero noise, zero clocks, zero delays -> pseudorange equals range.
  ConstellationConfig g = cfg.gnss;
  g.sigma_pr_m = 1e-300;
  g.sat_clock_spread_s = 0.0;
  ReceiverClockModel clk;
  const auto obs = synthesize_pseudoranges(truth, g, cfg.frame, clk, 1.0, cfg.seed);
  const FrameRotation r_ne = ecef_from_enu(cfg.frame.anchor);
  const Rotation r_wn = rotation_from_yaw(cfg.frame.psi_true);
  const Eigen::Vector3d p0 =
      cfg.frame.anchor.p_anc_e + r_ne * (r_wn * truth.samples[0].p);
  for (const auto& o : obs[0]) {
    CHECK(o.pseudorange_m == doctest::Approx((o.p_sat_e - p0).norm()).epsilon(1e-12));
  }

  // Receiver clock bias of 1e-6 s shifts every pseudorange by ~299.792 m.
  ReceiverClockModel clk2;
  clk2.bias_s = Eigen::Vector4d::Constant(1e-6);
  const auto obs2 = synthesize_pseudoranges(truth, g, cfg.frame, clk2, 1.0, cfg.seed);
  for (size_t j = 0; j < obs2[0].size(); ++j) {
    CHECK(obs2[0][j].pseudorange_m - obs[0][j].pseudorange_m ==
          doctest::Approx(299.792458).epsilon(1e-9));
  }

  // Distinct per-constellation biases shift by exactly l_s * (dt_G - dt_C).
  ReceiverClockModel clk3;
  clk3.bias_s = Eigen::Vector4d(3e-6, 0, 0, 1e-6);
  const auto obs3 = synthesize_pseudoranges(truth, g, cfg.frame, clk3, 1.0, cfg.seed);
  double shift_g = 0, shift_c = 0;
  for (size_t j = 0; j < obs3[0].size(); ++j) {
    const double d = obs3[0][j].pseudorange_m - obs[0][j].pseudorange_m;
    if (obs3[0][j].constellation == Constellation::Gps) shift_g = d;
    if (obs3[0][j].constellation == Constellation::Beidou) shift_c = d;
  }
  CHECK(shift_g - shift_c == doctest::Approx(kSpeedOfLight * 2e-6).epsilon(1e-9));
}

TEST_CASE("pseudorange synthesis rejects starved constellations") {
  ScenarioConfig cfg = small_config();
  cfg.gnss.counts = {2, 0, 0, 0};
  cfg.gnss.min_visible = 5;
  const auto truth = generate_trajectory(cfg.trajectory);
  CHECK_THROWS_AS(
      synthesize_pseudoranges(truth, cfg.gnss, cfg.frame, cfg.clock, 1.0, cfg.seed),
      std::invalid_argument);
}

TEST_CASE("pinhole projection cases") {
  CameraModel cam;
  const auto px = cam.pinhole(Eigen::Vector3d(0, 0, 1));
  REQUIRE(px.has_value());
  CHECK((*px - Eigen::Vector2d(320, 240)).norm() < 1e-12);

  const auto px2 = cam.pinhole(Eigen::Vector3d(0.1, 0, 1));
  REQUIRE(px2.has_value());
  CHECK((*px2 - Eigen::Vector2d(360, 240)).norm() < 1e-9);

  CHECK(!cam.pinhole(Eigen::Vector3d(0, 0, -1.0)).has_value());
}

TEST_CASE("feature tracks: bounds, floors, two-frame rule, noiseless reprojection") {
  ScenarioConfig cfg = small_config();
  cfg.landmarks.sigma_px = 1e-300;
  const auto truth = generate_trajectory(cfg.trajectory);
  const auto feats = synthesize_features(truth, cfg.landmarks, cfg.camera, 1.0, cfg.seed);
  REQUIRE(!feats.tracks.empty());
  CHECK(feats.sparse_frames.empty());  // default field is dense enough
  for (const auto& tr : feats.tracks) {
    CHECK(tr.observations.size() >= 2);
    for (const auto& [kf, px] : tr.observations) {
      CHECK(px.x() >= 0.0);
      CHECK(px.x() < cfg.camera.width);
      CHECK(px.y() >= 0.0);
      CHECK(px.y() < cfg.camera.height);
      const auto& s = truth.samples[static_cast<size_t>(kf) * 100];
      const auto proj = cfg.camera.pinhole(cfg.camera.to_camera(tr.landmark_w, s.p, s.q));
      REQUIRE(proj.has_value());
      CHECK((px - *proj).norm() < 1e-9);
    }
  }
}

TEST_CASE("fault injection is exactly additive and annotated") {
  ScenarioConfig cfg = small_config();
  Scenario clean = generate_scenario(cfg);

  // Empty schedule: identity.
  const auto same = inject_faults(clean.epochs, {});
  REQUIRE(same.size() == clean.epochs.size());
  for (size_t i = 0; i < same.size(); ++i) {
    for (size_t j = 0; j < same[i].sats.size(); ++j) {
      CHECK(same[i].sats[j].pseudorange_m == clean.epochs[i].sats[j].pseudorange_m);
    }
    CHECK(!same[i].faults.any());
  }

  // 15 m step on one satellite.
  FaultEvent ev;
  ev.sensor = FaultSensor::Gnss;
  ev.start_s = 8.0;
  ev.end_s = 12.0;
  ev.pr_step_m = 15.0;
  ev.target_sat = clean.epochs[0].sats[2].sat_id;
  const auto faulted = inject_faults(clean.epochs, {ev});
  for (size_t i = 0; i < faulted.size(); ++i) {
    for (size_t j = 0; j < faulted[i].sats.size(); ++j) {
      const double delta =
          faulted[i].sats[j].pseudorange_m - clean.epochs[i].sats[j].pseudorange_m;
      const bool hit = faulted[i].t >= 8.0 && faulted[i].t < 12.0 &&
                       faulted[i].sats[j].sat_id == ev.target_sat;
      CHECK(std::abs(delta - (hit ? 15.0 : 0.0)) < 1e-7);  // fp addition at 2e7 m scale
    }
    CHECK(faulted[i].faults.gnss_sats.empty() ==
          !(faulted[i].t >= 8.0 && faulted[i].t < 12.0));
    CHECK((faulted[i].truth.p - clean.epochs[i].truth.p).norm() == 0.0);
  }

  // Vision step offsets both pixel coordinates of every feature.
  FaultEvent vv;
  vv.sensor = FaultSensor::Vision;
  vv.start_s = 5.0;
  vv.end_s = 7.0;
  vv.px_step = 5.0;
  const auto vis = inject_faults(clean.epochs, {vv});
  for (size_t i = 0; i < vis.size(); ++i) {
    for (size_t j = 0; j < vis[i].feats.size(); ++j) {
      const Eigen::Vector2d delta = vis[i].feats[j].pixel - clean.epochs[i].feats[j].pixel;
      if (vis[i].t >= 5.0 && vis[i].t < 7.0) {
        CHECK((delta - Eigen::Vector2d(5, 5)).norm() < 1e-12);
      } else {
        CHECK(delta.norm() == 0.0);
      }
    }
  }

  // IMU steps hit raw samples inside the window only.
  FaultEvent iv;
  iv.sensor = FaultSensor::Imu;
  iv.start_s = 5.0;
  iv.end_s = 7.0;
  iv.accel_step = Eigen::Vector3d::Constant(0.15);
  iv.gyro_step = Eigen::Vector3d::Constant(0.02);
  const auto imu = inject_faults(clean.epochs, {iv});
  for (size_t i = 0; i < imu.size(); ++i) {
    for (size_t j = 0; j < imu[i].imu.size(); ++j) {
      const Eigen::Vector3d da = imu[i].imu[j].accel - clean.epochs[i].imu[j].accel;
      const bool hit = imu[i].imu[j].t >= 5.0 && imu[i].imu[j].t < 7.0;
      CHECK((da - (hit ? Eigen::Vector3d::Constant(0.15) : Eigen::Vector3d::Zero())).norm() <
            1e-12);
    }
  }

  // Overlapping same-sensor events rejected; out-of-span events too.
  FaultEvent overlap = ev;
  overlap.start_s = 10.0;
  overlap.end_s = 14.0;
  CHECK_THROWS_AS(inject_faults(clean.epochs, {ev, overlap}), std::invalid_argument);
  FaultEvent outside = ev;
  outside.start_s = 1e4;
  outside.end_s = 1e4 + 5;
  CHECK_THROWS_AS(inject_faults(clean.epochs, {outside}), std::invalid_argument);
}

TEST_CASE("scenario determinism and epoch structure") {
  ScenarioConfig cfg = small_config();
  const Scenario a = generate_scenario(cfg);
  const Scenario b = generate_scenario(cfg);
  REQUIRE(a.epochs.size() == b.epochs.size());
  CHECK(a.epochs.size() == 21);  // 20 s at 1 Hz inclusive
  for (size_t i = 0; i < a.epochs.size(); ++i) {
    CHECK(a.epochs[i].t == b.epochs[i].t);
    for (size_t j = 0; j < a.epochs[i].sats.size(); ++j) {
      CHECK(a.epochs[i].sats[j].pseudorange_m == b.epochs[i].sats[j].pseudorange_m);
    }
    for (size_t j = 0; j < a.epochs[i].feats.size(); ++j) {
      CHECK(a.epochs[i].feats[j].pixel == b.epochs[i].feats[j].pixel);
    }
    if (i > 0) {
      // IMU segment covers the inter-epoch interval, endpoints included.
      CHECK(a.epochs[i].imu.front().t == doctest::Approx(a.epochs[i - 1].t));
      CHECK(a.epochs[i].imu.back().t == doctest::Approx(a.epochs[i].t));
    } else {
      CHECK(a.epochs[i].imu.empty());
    }
  }
}

TEST_CASE("scenario dump round trip") {
  ScenarioConfig cfg = small_config();
  FaultEvent ev;
  ev.sensor = FaultSensor::Gnss;
  ev.start_s = 8.0;
  ev.end_s = 12.0;
  ev.pr_step_m = 15.0;
  ev.target_sat = 1;
  cfg.faults.push_back(ev);
  const Scenario a = generate_scenario(cfg);

  const std::string path = "/tmp/navim_test_dump.jsonl";
  write_scenario_dump(a, path);
  const Scenario b = load_scenario_dump(path);
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (size_t i = 0; i < a.epochs.size(); ++i) {
    CHECK(a.epochs[i].t == b.epochs[i].t);
    REQUIRE(a.epochs[i].sats.size() == b.epochs[i].sats.size());
    for (size_t j = 0; j < a.epochs[i].sats.size(); ++j) {
      CHECK(a.epochs[i].sats[j].pseudorange_m == b.epochs[i].sats[j].pseudorange_m);
      CHECK(a.epochs[i].sats[j].p_sat_e == b.epochs[i].sats[j].p_sat_e);
    }
    REQUIRE(a.epochs[i].imu.size() == b.epochs[i].imu.size());
    CHECK(a.epochs[i].faults.gnss_sats == b.epochs[i].faults.gnss_sats);
    CHECK((a.epochs[i].truth.p - b.epochs[i].truth.p).norm() == 0.0);
  }

  // Truncated dump is a schema error.
  {
    std::ifstream in(path);
    std::stringstream all;
    all << in.rdbuf();
    std::string text = all.str();
    text.resize(text.size() / 2);
    std::ofstream out("/tmp/navim_test_dump_trunc.jsonl");
    out << text;
  }
  CHECK_THROWS(load_scenario_dump("/tmp/navim_test_dump_trunc.jsonl"));
  std::remove(path.c_str());
  std::remove("/tmp/navim_test_dump_trunc.jsonl");
}
