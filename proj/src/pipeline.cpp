#include "navim/pipeline.hpp"

#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace navim {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

FaultEvent parse_fault_line(const std::string& line) {
  std::istringstream ss(line);
  std::string sensor;
  double start = 0, end = 0;
  if (!(ss >> sensor >> start >> end)) {
    throw ConfigError("malformed fault line (want '<sensor> <start> <end> k=v...'): " + line);
  }
  FaultEvent ev;
  ev.start_s = start;
  ev.end_s = end;
  if (sensor == "gnss") ev.sensor = FaultSensor::Gnss;
  else if (sensor == "imu") ev.sensor = FaultSensor::Imu;
  else if (sensor == "vision") ev.sensor = FaultSensor::Vision;
  else throw ConfigError("unknown fault sensor: " + sensor);

  std::string tok;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed fault token: " + tok);
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "step") {
      ev.pr_step_m = std::stod(val);
    } else if (key == "sat") {
      const Constellation c = constellation_from_letter(val.at(0));
      ev.target_sat = static_cast<int>(c) * 100 + std::stoi(val.substr(1));
    } else if (key == "accel") {
      ev.accel_step.setConstant(std::stod(val));
    } else if (key == "gyro") {
      ev.gyro_step.setConstant(std::stod(val));
    } else if (key == "px") {
      ev.px_step = std::stod(val);
    } else {
      throw ConfigError("unknown fault parameter: " + key);
    }
  }
  return ev;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  return run_config_from(Config::parse_file(path));
}

RunConfig run_config_from(const Config& c) {
  RunConfig rc;
  rc.raw_text = c.raw_text();

  ScenarioConfig& sc = rc.scenario;
  sc.trajectory.profile = profile_from_string(c.get_str("scenario", "profile", "circle"));
  sc.trajectory.duration_s = c.get_num("scenario", "duration_s", 120.0);
  sc.trajectory.sample_rate_hz = c.get_num("scenario", "imu_rate_hz", 200.0);
  sc.trajectory.height_m = c.get_num("scenario", "height_m", 1.5);
  sc.trajectory.circle_radius_m = c.get_num("scenario", "circle_radius_m", 50.0);
  sc.trajectory.circle_speed_mps = c.get_num("scenario", "circle_speed_mps", 5.0);
  sc.trajectory.straight_speed_mps = c.get_num("scenario", "straight_speed_mps", 3.0);
  sc.trajectory.fig8_half_length_m = c.get_num("scenario", "fig8_half_length_m", 60.0);
  sc.trajectory.fig8_half_width_m = c.get_num("scenario", "fig8_half_width_m", 25.0);
  sc.trajectory.fig8_period_s = c.get_num("scenario", "fig8_period_s", 80.0);
  sc.keyframe_hz = c.get_num("scenario", "keyframe_hz", 1.0);
  sc.seed = static_cast<std::uint64_t>(c.get_int("scenario", "seed", 1));

  sc.imu.accel_noise_density = c.get_num("imu", "accel_noise_density", 0.02);
  sc.imu.gyro_noise_density = c.get_num("imu", "gyro_noise_density", 0.002);
  sc.imu.rate_hz = sc.trajectory.sample_rate_hz;
  {
    const auto ba = c.get_nums("imu", "accel_bias", {0.05, -0.02, 0.03});
    const auto bg = c.get_nums("imu", "gyro_bias", {0.002, -0.001, 0.0015});
    if (ba.size() != 3 || bg.size() != 3) throw ConfigError("imu biases need 3 components");
    sc.imu.accel_bias = Eigen::Vector3d(ba[0], ba[1], ba[2]);
    sc.imu.gyro_bias = Eigen::Vector3d(bg[0], bg[1], bg[2]);
  }

  sc.gnss.counts[0] = static_cast<int>(c.get_int("gnss", "count_gps", 10));
  sc.gnss.counts[1] = static_cast<int>(c.get_int("gnss", "count_glonass", 0));
  sc.gnss.counts[2] = static_cast<int>(c.get_int("gnss", "count_galileo", 10));
  sc.gnss.counts[3] = static_cast<int>(c.get_int("gnss", "count_beidou", 10));
  sc.gnss.min_elevation_rad = c.get_num("gnss", "min_elevation_deg", 15.0) * M_PI / 180.0;
  sc.gnss.sigma_pr_m = c.get_num("gnss", "sigma_pr_m", 1.5);
  sc.gnss.range_m = c.get_num("gnss", "range_m", 2.2e7);
  sc.gnss.sat_clock_spread_s = c.get_num("gnss", "sat_clock_spread_s", 5.0e-5);
  sc.gnss.tropo_m = c.get_num("gnss", "tropo_m", 0.0);
  sc.gnss.iono_m = c.get_num("gnss", "iono_m", 0.0);
  sc.gnss.multipath_m = c.get_num("gnss", "multipath_m", 0.0);
  sc.gnss.sagnac_m = c.get_num("gnss", "sagnac_m", 0.0);

  sc.clock.bias_s[0] = c.get_num("clock", "bias_gps_s", 2.0e-6);
  sc.clock.bias_s[1] = c.get_num("clock", "bias_glonass_s", 1.5e-6);
  sc.clock.bias_s[2] = c.get_num("clock", "bias_galileo_s", 2.4e-6);
  sc.clock.bias_s[3] = c.get_num("clock", "bias_beidou_s", 1.1e-6);
  sc.clock.drift_sps = c.get_num("clock", "drift_sps", 3.0e-9);

  sc.camera.fx = c.get_num("camera", "fx", 400.0);
  sc.camera.fy = c.get_num("camera", "fy", 400.0);
  sc.camera.cx = c.get_num("camera", "cx", 320.0);
  sc.camera.cy = c.get_num("camera", "cy", 240.0);
  sc.camera.width = c.get_num("camera", "width", 640.0);
  sc.camera.height = c.get_num("camera", "height", 480.0);
  sc.camera.r_bc = CameraModel::forward_extrinsics();
  {
    const auto t = c.get_nums("camera", "t_bc", {0.06, 0.0, 0.02});
    if (t.size() != 3) throw ConfigError("camera t_bc needs 3 components");
    sc.camera.t_bc = Eigen::Vector3d(t[0], t[1], t[2]);
  }

  sc.landmarks.count = static_cast<int>(c.get_int("landmarks", "count", 160));
  sc.landmarks.margin_m = c.get_num("landmarks", "margin_m", 45.0);
  sc.landmarks.min_height_m = c.get_num("landmarks", "min_height_m", -2.0);
  sc.landmarks.max_height_m = c.get_num("landmarks", "max_height_m", 16.0);
  sc.landmarks.max_depth_m = c.get_num("landmarks", "max_depth_m", 90.0);
  sc.landmarks.min_depth_m = c.get_num("landmarks", "min_depth_m", 2.0);
  sc.landmarks.sigma_px = c.get_num("camera", "sigma_px", 1.0);
  sc.landmarks.min_features_per_frame =
      static_cast<int>(c.get_int("landmarks", "min_features", 8));

  sc.frame.anchor = AnchorGeodesy::from_lat_lon(
      c.get_num("frame", "anchor_lat_deg", 40.0) * M_PI / 180.0,
      c.get_num("frame", "anchor_lon_deg", 116.3) * M_PI / 180.0);
  sc.frame.psi_true = c.get_num("frame", "psi_true_rad", 0.15);

  for (const std::string& line : c.get_all("faults", "fault")) {
    sc.faults.push_back(parse_fault_line(line));
  }

  SolverConfig& so = rc.solver;
  so.window_capacity = static_cast<int>(c.get_int("estimator", "window_capacity", 10));
  so.max_iterations = static_cast<int>(c.get_int("estimator", "max_iterations", 30));
  so.sigma_px = sc.landmarks.sigma_px;
  so.camera = sc.camera;
  so.imu_noise.accel_density = sc.imu.accel_noise_density;
  so.imu_noise.gyro_density = sc.imu.gyro_noise_density;
  so.imu_noise.accel_bias_walk = c.get_num("estimator", "accel_bias_walk", 1e-4);
  so.imu_noise.gyro_bias_walk = c.get_num("estimator", "gyro_bias_walk", 1e-5);
  so.clk_walk_m = c.get_num("estimator", "clk_walk_m", 0.02);
  so.clk_drift_walk_mps = c.get_num("estimator", "clk_drift_walk_mps", 0.005);

  InitialPriorConfig& pr = rc.prior;
  pr.p_sigma = c.get_num("estimator", "prior_p_sigma", 0.3);
  pr.v_sigma = c.get_num("estimator", "prior_v_sigma", 0.05);
  pr.theta_sigma = c.get_num("estimator", "prior_theta_sigma", 0.01);
  pr.ba_sigma = c.get_num("estimator", "prior_ba_sigma", 0.02);
  pr.bg_sigma = c.get_num("estimator", "prior_bg_sigma", 0.002);
  pr.clk_sigma = c.get_num("estimator", "prior_clk_sigma", 5.0);
  pr.clk_drift_sigma = c.get_num("estimator", "prior_clk_drift_sigma", 0.1);
  pr.psi_sigma = c.get_num("estimator", "prior_psi_sigma", 0.01);

  ImConfig& im = rc.im;
  im.detection.window_m = static_cast<int>(c.get_int("im", "window_m", 10));
  im.detection.p_fa = c.get_num("im", "p_fa", 1e-5);
  im.detection.p_md = c.get_num("im", "p_md", 1e-3);
  im.detection.exposure_interval_s = c.get_num("im", "exposure_interval_s", 0.0);
  im.budget.p_hmi_total = c.get_num("im", "p_hmi_total", 1e-7);
  im.budget.horizontal_share = c.get_num("im", "horizontal_share", 0.5);
  im.budget.p_g = c.get_num("im", "p_g", 1e-5);
  im.budget.p_i = c.get_num("im", "p_i", 1e-3);
  im.budget.p_v = c.get_num("im", "p_v", 1e-4);
  im.budget.exclusion_cutoff = c.get_num("im", "exclusion_cutoff", 1e-9);
  im.alert_limit_m = c.get_num("im", "al_m", 6.0);
  if (!(im.alert_limit_m > 0.0)) throw ConfigError("[im] al_m must be positive");

  rc.fde = c.get_bool("run", "fde", true);
  rc.plots = c.get_bool("run", "plots", false);
  rc.init_perturb = c.get_bool("estimator", "init_perturb", true);
  rc.out_dir = c.get_str("run", "out_dir", "out");
  return rc;
}

RunResult run_pipeline(const Scenario& scenario, const RunConfig& cfg) {
  if (scenario.epochs.empty()) throw ConfigError("scenario has no epochs");
  cfg.im.detection.validate();

  RunResult out;
  out.budget = allocate_integrity_risk(cfg.im.budget);

  SlidingWindow window(cfg.solver, cfg.prior, scenario.config.frame.anchor);

  // Initialize from the truth snapshot; when enabled, perturb by a draw from
  // the initial prior so the covariance is statistically meaningful.
  ImuState x0 = scenario.epochs.front().truth;
  double psi0 = scenario.config.frame.psi_true;
  if (cfg.init_perturb) {
    std::mt19937_64 rng(scenario.config.seed ^ 0x1b873593c2b2ae35ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd delta(ImuState::kErrorDim);
    const Eigen::VectorXd sig = cfg.prior.state_sigmas();
    for (int i = 0; i < ImuState::kErrorDim; ++i) delta(i) = sig(i) * gauss(rng);
    x0 = manifold_plus(x0, delta);
    psi0 += cfg.prior.psi_sigma * gauss(rng);
  }
  window.init(x0, psi0);

  DetectionState history;
  out.reports.reserve(scenario.epochs.size());
  double hpe_sum = 0.0;
  for (const MeasurementEpoch& epoch : scenario.epochs) {
    window.add_keyframe(epoch);
    window.optimize();
    PebReport rep = integrity_report(window, history, cfg.im.detection, out.budget, cfg.fde,
                                     epoch.truth);
    out.continuity_alert = out.continuity_alert || rep.continuity_alert;
    hpe_sum += rep.hpe;
    out.estimates.push_back(window.newest().state);
    out.truths.push_back(epoch.truth);
    out.reports.push_back(std::move(rep));
  }
  out.avg_hpe = hpe_sum / static_cast<double>(out.reports.size());
  return out;
}

namespace {

void write_epochs_csv(const std::string& path, const RunResult& result,
                      const Scenario& scenario, double alert_limit) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);

  std::vector<std::string> mode_keys;
  for (const auto& m : result.budget.modes) mode_keys.push_back(m.mode.key());

  out << "# navim epoch records: t [s]; truth_*/est_* positions [m, w-frame]; hpe [m]; "
         "t_* test statistics with thr_* thresholds [unitless]; excl_sats "
         "(semicolon-separated ids, '-' if none); *_excl flags; fault_* ground-truth "
         "labels; peb_h_<mode> horizontal position error bounding [m]; avail_<mode> = "
         "(peb_h <= AL); mode keys use uppercase for the faulted sensors\n";
  out << "t,truth_x,truth_y,truth_z,est_x,est_y,est_z,hpe,t_gnss,thr_gnss,t_imu,thr_imu,"
         "t_cam,thr_cam,excl_sats,imu_excl,cam_excl,fault_gnss,fault_imu,fault_cam";
  for (const auto& k : mode_keys) out << ",peb_h_" << k;
  for (const auto& k : mode_keys) out << ",avail_" << k;
  out << "\n";

  for (size_t i = 0; i < result.reports.size(); ++i) {
    const PebReport& r = result.reports[i];
    const ImuState& tr = result.truths[i];
    const ImuState& es = result.estimates[i];
    const EpochFaultLabels& fl = scenario.epochs[i].faults;
    out << fmt(r.t) << ',' << fmt(tr.p.x()) << ',' << fmt(tr.p.y()) << ',' << fmt(tr.p.z())
        << ',' << fmt(es.p.x()) << ',' << fmt(es.p.y()) << ',' << fmt(es.p.z()) << ','
        << fmt(r.hpe) << ',' << fmt(r.gnss.statistic) << ',' << fmt(r.gnss.threshold) << ','
        << fmt(r.imu.statistic) << ',' << fmt(r.imu.threshold) << ',' << fmt(r.vision.statistic)
        << ',' << fmt(r.vision.threshold) << ',';
    if (r.excluded_sats.empty()) {
      out << '-';
    } else {
      for (size_t k = 0; k < r.excluded_sats.size(); ++k) {
        if (k) out << ';';
        out << sat_label(r.excluded_sats[k]);
      }
    }
    out << ',' << (r.imu_excluded ? 1 : 0) << ',' << (r.vision_excluded ? 1 : 0) << ','
        << (fl.gnss_sats.empty() ? 0 : 1) << ',' << (fl.imu ? 1 : 0) << ','
        << (fl.vision ? 1 : 0);
    for (const auto& m : r.modes) out << ',' << fmt(m.peb_h);
    for (const auto& m : r.modes) out << ',' << (m.peb_h <= alert_limit ? 1 : 0);
    out << "\n";
  }
}

void write_summary(const std::string& path, const RunResult& result, double alert_limit) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const BudgetConfig& b = result.budget.config;

  out << "summary of results - position error bounding and availability\n";
  out << "P_HMI_Total = " << b.p_hmi_total << " (" << 100.0 * b.horizontal_share
      << "% horizontal), AL = " << alert_limit << " m\n\n";

  std::vector<std::vector<double>> peb_series(result.budget.modes.size());
  for (const PebReport& r : result.reports) {
    for (size_t m = 0; m < r.modes.size(); ++m) peb_series[m].push_back(r.modes[m].peb_h);
  }

  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %14s %22s %16s\n", "fault_mode", "avg_error_m",
                "avg_peb_h_m", "availability_pct");
  out << line;
  for (size_t m = 0; m < result.budget.modes.size(); ++m) {
    const AvailabilityStat st = availability(peb_series[m], alert_limit);
    std::snprintf(line, sizeof(line), "%-12s %14.3f %22.3f %16.2f\n",
                  result.budget.modes[m].mode.key().c_str(), result.avg_hpe, st.avg_peb_h,
                  st.availability_pct);
    out << line;
  }
}

void write_plots(const std::string& dir, const RunResult& result, double alert_limit) {
  const int w = 900, h = 360, ml = 60, mb = 40;
  for (size_t m = 0; m < result.budget.modes.size(); ++m) {
    const std::string key = result.budget.modes[m].mode.key();
    std::ofstream out(dir + "/plot_" + key + ".svg");
    double tmax = 1.0, ymax = alert_limit * 1.3;
    for (const auto& r : result.reports) {
      tmax = std::max(tmax, r.t);
      ymax = std::max({ymax, r.modes[m].peb_h * 1.1, r.hpe * 1.1});
    }
    auto px = [&](double t) { return ml + (w - ml - 20) * t / tmax; };
    auto py = [&](double y) { return h - mb - (h - mb - 20) * y / ymax; };
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    auto polyline = [&](const char* color, auto getter) {
      out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.2' points='";
      for (const auto& r : result.reports) out << px(r.t) << ',' << py(getter(r)) << ' ';
      out << "'/>\n";
    };
    polyline("#c62828", [&](const PebReport& r) { return r.hpe; });
    polyline("#1565c0", [&](const PebReport& r) { return r.modes[m].peb_h; });
    out << "<line x1='" << px(0) << "' y1='" << py(alert_limit) << "' x2='" << px(tmax)
        << "' y2='" << py(alert_limit) << "' stroke='#555' stroke-dasharray='6,4'/>\n";
    out << "<text x='" << ml << "' y='16' font-size='13'>mode " << key
        << ": HPE (red), horizontal PEB (blue), AL (dashed) vs time [s]</text>\n</svg>\n";
  }
}

}  // namespace

void write_outputs(const Scenario& scenario, const RunConfig& cfg, const RunResult& result,
                   const std::string& extra_manifest_note) {
  fs::create_directories(cfg.out_dir);
  write_epochs_csv(cfg.out_dir + "/epochs.csv", result, scenario, cfg.im.alert_limit_m);
  write_summary(cfg.out_dir + "/summary.txt", result, cfg.im.alert_limit_m);
  write_scenario_dump(scenario, cfg.out_dir + "/scenario.jsonl");
  if (cfg.plots) write_plots(cfg.out_dir, result, cfg.im.alert_limit_m);

  nlohmann::json manifest = {
      {"version", kVersion},
      {"schema", 1},
      {"seed", scenario.config.seed},
      {"config_hash", hash_hex(fnv1a_hash(cfg.raw_text))},
      {"fde", cfg.fde},
      {"continuity_alert", result.continuity_alert},
      {"avg_hpe_m", result.avg_hpe},
  };
  if (!extra_manifest_note.empty()) manifest["note"] = extra_manifest_note;
  std::ofstream mf(cfg.out_dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
}

int run_command(const std::string& config_path, std::optional<std::uint64_t> seed_override,
                std::optional<std::string> out_override, bool no_fde, int montecarlo,
                bool plots) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (seed_override) cfg.scenario.seed = *seed_override;
  if (out_override) cfg.out_dir = *out_override;
  if (no_fde) cfg.fde = false;
  if (plots) cfg.plots = true;

  auto one_run = [&](const RunConfig& rc) -> int {
    try {
      const Scenario scenario = generate_scenario(rc.scenario);
      const RunResult result = run_pipeline(scenario, rc);
      write_outputs(scenario, rc, result);
      return result.continuity_alert ? kExitContinuityAlert : kExitOk;
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfig;
    } catch (const ObservabilityError& e) {
      std::cerr << "observability failure: " << e.what() << "\n";
      return kExitObservability;
    } catch (const std::invalid_argument& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfig;
    }
  };

  if (montecarlo <= 1) return one_run(cfg);

  // Independent seeded runs, fanned out over the available cores.
  std::vector<int> codes(montecarlo, kExitOk);
  const unsigned workers =
      std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), montecarlo));
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (unsigned wi = 0; wi < workers; ++wi) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < montecarlo; i = next.fetch_add(1)) {
        RunConfig rc = cfg;
        rc.scenario.seed = cfg.scenario.seed + static_cast<std::uint64_t>(i);
        char sub[32];
        std::snprintf(sub, sizeof(sub), "/run%04d", i);
        rc.out_dir = cfg.out_dir + sub;
        codes[i] = one_run(rc);
      }
    });
  }
  for (auto& t : pool) t.join();
  int rc = kExitOk;
  for (int c : codes) rc = std::max(rc, c);
  return rc;
}

int replay_command(const std::string& dump_path, const std::string& config_path,
                   std::optional<std::string> out_override, bool no_fde) {
  RunConfig cfg;
  Scenario scenario;
  try {
    cfg = load_run_config(config_path);
    scenario = load_scenario_dump(dump_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::runtime_error& e) {
    std::cerr << "replay error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (out_override) cfg.out_dir = *out_override;
  if (no_fde) cfg.fde = false;

  // Estimation-relevant scenario fields come from the dump so the replay
  // reproduces the original run bit for bit.
  cfg.scenario.seed = scenario.config.seed;
  cfg.scenario.keyframe_hz = scenario.config.keyframe_hz;
  cfg.scenario.frame = scenario.config.frame;
  cfg.scenario.camera = scenario.config.camera;
  cfg.scenario.imu.accel_noise_density = scenario.config.imu.accel_noise_density;
  cfg.scenario.imu.gyro_noise_density = scenario.config.imu.gyro_noise_density;
  cfg.scenario.imu.rate_hz = scenario.config.imu.rate_hz;
  cfg.scenario.landmarks.sigma_px = scenario.config.landmarks.sigma_px;
  cfg.solver.camera = scenario.config.camera;
  cfg.solver.sigma_px = scenario.config.landmarks.sigma_px;
  cfg.solver.imu_noise.accel_density = scenario.config.imu.accel_noise_density;
  cfg.solver.imu_noise.gyro_density = scenario.config.imu.gyro_noise_density;
  scenario.config = cfg.scenario;

  try {
    const RunResult result = run_pipeline(scenario, cfg);
    std::ifstream dump_in(dump_path, std::ios::binary);
    std::stringstream dump_bytes;
    dump_bytes << dump_in.rdbuf();
    write_outputs(scenario, cfg, result,
                  "replay dump_hash=" + hash_hex(fnv1a_hash(dump_bytes.str())));
    return result.continuity_alert ? kExitContinuityAlert : kExitOk;
  } catch (const ObservabilityError& e) {
    std::cerr << "observability failure: " << e.what() << "\n";
    return kExitObservability;
  }
}

std::vector<EpochRow> read_epoch_rows(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open " + csv_path);
  std::string line;
  std::vector<std::string> header;
  std::vector<EpochRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (header.empty()) {
      header = cells;
      continue;
    }
    EpochRow row;
    for (size_t i = 0; i < header.size() && i < cells.size(); ++i) {
      const std::string& h = header[i];
      if (h == "t") row.t = std::stod(cells[i]);
      else if (h == "hpe") row.hpe = std::stod(cells[i]);
      else if (h == "fault_gnss" || h == "fault_imu" || h == "fault_cam") {
        row.fault_any = row.fault_any || cells[i] == "1";
      } else if (h.rfind("peb_h_", 0) == 0) {
        row.peb_h.push_back(std::stod(cells[i]));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

CompareResult compare_runs(const std::string& dir_a, const std::string& dir_b) {
  const auto a = read_epoch_rows(dir_a + "/epochs.csv");
  const auto b = read_epoch_rows(dir_b + "/epochs.csv");
  if (a.size() != b.size()) throw std::runtime_error("epoch count mismatch between runs");

  CompareResult out;
  out.epochs = static_cast<int>(a.size());
  double sum_a = 0.0, sum_b = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].t != b[i].t) throw std::runtime_error("epoch time mismatch between runs");
    const double d = b[i].hpe - a[i].hpe;
    out.max_hpe_delta = std::max(out.max_hpe_delta, std::abs(d));
    if (std::abs(d) > 0.0) out.identical = false;
    for (size_t m = 0; m < a[i].peb_h.size() && m < b[i].peb_h.size(); ++m) {
      if (a[i].peb_h[m] != b[i].peb_h[m]) out.identical = false;
    }
    if (a[i].fault_any || b[i].fault_any) {
      ++out.infault_epochs;
      sum_a += a[i].hpe;
      sum_b += b[i].hpe;
      out.max_infault_hpe_delta = std::max(out.max_infault_hpe_delta, d);
    }
  }
  if (out.infault_epochs > 0) {
    out.mean_infault_hpe_a = sum_a / out.infault_epochs;
    out.mean_infault_hpe_b = sum_b / out.infault_epochs;
  }
  return out;
}

int compare_command(const std::string& dir_a, const std::string& dir_b) {
  try {
    const CompareResult r = compare_runs(dir_a, dir_b);
    std::cout << "epochs compared: " << r.epochs << "\n";
    std::cout << "max |hpe delta|: " << r.max_hpe_delta << " m\n";
    std::cout << "in-fault epochs: " << r.infault_epochs << "\n";
    if (r.infault_epochs > 0) {
      std::cout << "mean in-fault hpe: A=" << r.mean_infault_hpe_a
                << " m, B=" << r.mean_infault_hpe_b << " m\n";
      std::cout << "max in-fault hpe delta (B-A): " << r.max_infault_hpe_delta << " m\n";
    }
    std::cout << (r.identical ? "runs are identical\n" : "runs differ\n");
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "compare error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace navim
