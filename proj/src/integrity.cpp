#include "navim/integrity.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace navim {

namespace {

double scale_rate(double p, double exposure_s, double reference_s) {
  if (exposure_s <= 0.0) return p;
  return std::min(1.0 - 1e-12, p * exposure_s / reference_s);
}

}  // namespace

double DetectionConfig::effective_p_fa() const {
  return scale_rate(p_fa, exposure_interval_s, rate_reference_s);
}

double DetectionConfig::effective_p_md() const {
  return scale_rate(p_md, exposure_interval_s, rate_reference_s);
}

void DetectionConfig::validate() const {
  if (!(p_fa > 0.0 && p_fa < 1.0)) throw std::invalid_argument("P_FA out of (0,1)");
  if (!(p_md > 0.0 && p_md < 1.0)) throw std::invalid_argument("P_MD out of (0,1)");
  if (window_m < 1) throw std::invalid_argument("detection window must be >= 1");
}

double test_statistic(const Eigen::VectorXd& stacked) { return stacked.squaredNorm(); }

double detection_threshold(int dof, double p_fa) {
  if (dof < 1) throw std::invalid_argument("detection_threshold: dof must be >= 1");
  boost::math::chi_squared dist(dof);
  return boost::math::quantile(boost::math::complement(dist, p_fa));
}

double min_detectable_noncentrality(int dof, double p_fa, double p_md) {
  if (dof < 1) throw std::invalid_argument("min_detectable_noncentrality: dof >= 1");
  const double thr = detection_threshold(dof, p_fa);

  auto md_prob = [&](double lambda) {
    boost::math::non_central_chi_squared dist(dof, lambda);
    return boost::math::cdf(dist, thr);
  };

  double lo = 0.0;
  double hi = std::max(4.0 * dof, 64.0);
  int guard = 0;
  while (md_prob(hi) > p_md) {
    hi *= 2.0;
    if (++guard > 80) throw std::runtime_error("lambda_a bracket expansion failed");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (md_prob(mid) > p_md) {
      lo = mid;
    } else {
      hi = mid;
    }
    if ((hi - lo) <= 1e-8 * hi) return 0.5 * (lo + hi);
  }
  throw std::runtime_error("lambda_a bisection did not converge in 200 steps");
}

double bilateral_normal_quantile(double p) {
  boost::math::normal dist;
  return boost::math::quantile(boost::math::complement(dist, p / 2.0));
}

StackedResidual stack_window_residuals(const std::deque<WhitenedResidual>& history,
                                       int window_m) {
  if (window_m < 1) throw std::invalid_argument("stack_window_residuals: window >= 1");
  const size_t take = std::min<size_t>(window_m, history.size());
  StackedResidual out;
  Eigen::Index total = 0;
  for (size_t i = history.size() - take; i < history.size(); ++i) {
    total += history[i].whitened.size();
  }
  out.values.resize(total);
  Eigen::Index at = 0;
  for (size_t i = history.size() - take; i < history.size(); ++i) {
    const WhitenedResidual& e = history[i];
    out.values.segment(at, e.whitened.size()) = e.whitened;
    at += e.whitened.size();
    out.labels.insert(out.labels.end(), e.labels.begin(), e.labels.end());
    out.epoch_of.insert(out.epoch_of.end(), e.whitened.size(), e.epoch_index);
  }
  return out;
}

const std::array<FaultMode, 8>& FaultMode::all() {
  static const std::array<FaultMode, 8> modes = {{
      {false, false, false},
      {true, false, false},
      {false, true, false},
      {true, true, false},
      {false, false, true},
      {true, false, true},
      {false, true, true},
      {true, true, true},
  }};
  return modes;
}

std::string FaultMode::key() const {
  std::string k;
  k += gnss ? 'G' : 'g';
  k += imu ? 'I' : 'i';
  k += vision ? 'V' : 'v';
  return k;
}

std::array<std::pair<FaultMode, double>, 8> fault_mode_priors(double p_g, double p_i,
                                                              double p_v) {
  for (double p : {p_g, p_i, p_v}) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("fault priors must be in (0,1)");
  }
  std::array<std::pair<FaultMode, double>, 8> out;
  int i = 0;
  for (const FaultMode& m : FaultMode::all()) {
    const double p = (m.gnss ? p_g : 1.0 - p_g) * (m.imu ? p_i : 1.0 - p_i) *
                     (m.vision ? p_v : 1.0 - p_v);
    out[i++] = {m, p};
  }
  return out;
}

const AllocatedMode* IntegrityBudget::find(const FaultMode& mode) const {
  for (const auto& m : modes) {
    if (m.mode == mode) return &m;
  }
  return nullptr;
}

IntegrityBudget allocate_integrity_risk(const BudgetConfig& cfg) {
  if (!(cfg.horizontal_share > 0.0 && cfg.horizontal_share <= 1.0)) {
    throw std::invalid_argument("horizontal share out of (0,1]");
  }
  const auto priors = fault_mode_priors(cfg.p_g, cfg.p_i, cfg.p_v);

  IntegrityBudget out;
  out.config = cfg;
  out.horizontal_budget = cfg.p_hmi_total * cfg.horizontal_share;

  std::vector<std::pair<FaultMode, double>> allocated;
  for (const auto& [mode, prior] : priors) {
    if (prior >= cfg.exclusion_cutoff) allocated.emplace_back(mode, prior);
  }
  if (allocated.empty()) {
    throw std::invalid_argument("every fault mode fell below the allocation cutoff");
  }
  out.per_mode_risk = out.horizontal_budget / static_cast<double>(allocated.size());
  for (const auto& [mode, prior] : allocated) {
    AllocatedMode am;
    am.mode = mode;
    am.prior = prior;
    am.p_hmi_given_fault = out.per_mode_risk / prior;
    am.k_md = bilateral_normal_quantile(am.p_hmi_given_fault);
    out.modes.push_back(am);
  }
  return out;
}

Eigen::MatrixXd sensitivity_matrix(const Eigen::MatrixXd& j, const Eigen::MatrixXd& w,
                                   bool* pinv_flag) {
  const Eigen::MatrixXd jtw = j.transpose() * w;
  const Eigen::MatrixXd h = jtw * j;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  bool deficient = smax <= 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > smax * 1e-12 && smax / s(i) < 1e12) {
      inv(i) = 1.0 / s(i);
    } else {
      deficient = true;
    }
  }
  if (pinv_flag) *pinv_flag = deficient;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * jtw;
}

SlopeAnalysis slopes(ResidualSource sensor, const Eigen::MatrixXd& b,
                     const Eigen::VectorXd& tau_diag, double lambda_a) {
  if (tau_diag.size() != b.cols()) {
    throw std::invalid_argument("slopes: tau length must match residual components");
  }
  if ((tau_diag.array() <= 0.0).any()) {
    throw std::invalid_argument("slopes: tau diagonal must be positive");
  }
  SlopeAnalysis out;
  out.sensor = sensor;
  out.b = b;
  out.lambda_a = lambda_a;
  out.slope = b.cwiseAbs() * tau_diag.cwiseSqrt().cwiseInverse().asDiagonal();
  out.max_slope = Eigen::VectorXd::Zero(b.rows());
  if (b.cols() > 0) out.max_slope = out.slope.rowwise().maxCoeff();
  return out;
}

PebMode position_error_bounding(const FaultMode& mode, const Eigen::Matrix3d& p_cov,
                                const SlopeSet& slope_set, const IntegrityBudget& budget) {
  const AllocatedMode* am = budget.find(mode);
  if (!am) throw std::invalid_argument("position_error_bounding: mode not allocated");

  PebMode out;
  out.mode = mode;
  out.k_md = am->k_md;
  const Eigen::Vector3d xi = p_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.peb_axes = am->k_md * xi;

  auto add_term = [&](const std::optional<SlopeAnalysis>& sa, const char* name) {
    if (!sa) {
      throw std::invalid_argument(std::string("missing slope analysis for faulted sensor ") +
                                  name);
    }
    if (sa->max_slope.size() == 0) return;  // sensor excluded this epoch
    for (int q = 0; q < 3 && q < sa->max_slope.size(); ++q) {
      out.peb_axes(q) += sa->max_slope(q) * std::sqrt(sa->lambda_a);
    }
  };
  if (mode.gnss) add_term(slope_set.gnss, "gnss");
  if (mode.imu) add_term(slope_set.imu, "imu");
  if (mode.vision) add_term(slope_set.vision, "vision");

  out.peb_h = std::hypot(out.peb_axes(0), out.peb_axes(1));
  return out;
}

AvailabilityStat availability(const std::vector<double>& peb_h_series, double alert_limit) {
  if (!(alert_limit > 0.0)) throw std::invalid_argument("alert limit must be positive");
  if (peb_h_series.empty()) throw std::invalid_argument("availability of an empty series");
  AvailabilityStat out;
  out.epochs = static_cast<int>(peb_h_series.size());
  double sum = 0.0;
  for (double p : peb_h_series) {
    if (p <= alert_limit) ++out.available;
    sum += p;
  }
  out.availability_pct = 100.0 * out.available / out.epochs;
  out.avg_peb_h = sum / out.epochs;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

ClassStat evaluate_class(const std::deque<WhitenedResidual>& history,
                         const WhitenedResidual& current, const DetectionConfig& cfg) {
  std::deque<WhitenedResidual> win = history;
  win.push_back(current);
  const StackedResidual stacked = stack_window_residuals(win, cfg.window_m);
  ClassStat st;
  st.dof = static_cast<int>(stacked.values.size());
  st.statistic = test_statistic(stacked.values);
  if (st.dof > 0) {
    st.threshold = detection_threshold(st.dof, cfg.effective_p_fa());
    st.over = st.statistic > st.threshold;
  }
  return st;
}

int parse_sat_label(const std::string& label) {
  const Constellation c = constellation_from_letter(label.at(0));
  return static_cast<int>(c) * 100 + std::stoi(label.substr(1));
}

int largest_windowed_satellite(const std::deque<WhitenedResidual>& history,
                               const WhitenedResidual& current, const DetectionConfig& cfg) {
  // Only satellites still included in the current epoch are candidates.
  std::set<int> candidates;
  for (const auto& l : current.labels) candidates.insert(parse_sat_label(l));
  if (candidates.empty()) return -1;

  std::deque<WhitenedResidual> win = history;
  win.push_back(current);
  const StackedResidual stacked = stack_window_residuals(win, cfg.window_m);
  std::map<int, double> sums;
  for (Eigen::Index i = 0; i < stacked.values.size(); ++i) {
    const int id = parse_sat_label(stacked.labels[i]);
    if (candidates.count(id)) sums[id] += stacked.values(i) * stacked.values(i);
  }
  int best = -1;
  double best_sum = -1.0;
  for (const auto& [id, s] : sums) {
    if (s > best_sum) {
      best = id;
      best_sum = s;
    }
  }
  return best;
}

}  // namespace

FdeOutcome run_detection(SlidingWindow& window, DetectionState& history,
                         const DetectionConfig& cfg, bool fde_enabled) {
  cfg.validate();
  FdeOutcome out;

  WhitenedResidual cur_gnss = window.epoch_residual(ResidualSource::Gnss);
  WhitenedResidual cur_imu = window.epoch_residual(ResidualSource::Imu);
  WhitenedResidual cur_vis = window.epoch_residual(ResidualSource::Vision);

  const int max_actions = static_cast<int>(window.newest().epoch.sats.size()) + 3;
  for (int action = 0;; ++action) {
    out.gnss = evaluate_class(history.gnss, cur_gnss, cfg);
    out.imu = evaluate_class(history.imu, cur_imu, cfg);
    out.vision = evaluate_class(history.vision, cur_vis, cfg);
    if (!fde_enabled || action >= max_actions) break;
    if (!(out.gnss.over || out.imu.over || out.vision.over)) break;

    // One exclusion per pass, in class priority order; stop when no
    // over-threshold class has an action left (exhausted).
    bool acted = false;
    if (out.gnss.over && cur_gnss.whitened.size() > 0) {
      const int sat = largest_windowed_satellite(history.gnss, cur_gnss, cfg);
      if (sat >= 0) {
        window.exclude_satellite(sat);
        out.excluded_sats.push_back(sat);
        acted = true;
      }
    }
    if (!acted && out.imu.over && !out.imu_excluded && cur_imu.whitened.size() > 0) {
      window.exclude_imu_current();
      out.imu_excluded = true;
      acted = true;
    }
    if (!acted && out.vision.over && !out.vision_excluded && cur_vis.whitened.size() > 0) {
      window.exclude_vision_current();
      out.vision_excluded = true;
      acted = true;
    }
    if (!acted) break;

    window.optimize();
    ++out.resolve_count;
    cur_gnss = window.epoch_residual(ResidualSource::Gnss);
    cur_imu = window.epoch_residual(ResidualSource::Imu);
    cur_vis = window.epoch_residual(ResidualSource::Vision);
  }

  if (!window.newest().epoch.sats.empty() && cur_gnss.whitened.size() == 0) {
    out.continuity_alert = true;  // every satellite excluded this epoch
  }

  auto push = [&](std::deque<WhitenedResidual>& dq, WhitenedResidual r) {
    dq.push_back(std::move(r));
    while (dq.size() > static_cast<size_t>(cfg.window_m)) dq.pop_front();
  };
  push(history.gnss, std::move(cur_gnss));
  push(history.imu, std::move(cur_imu));
  push(history.vision, std::move(cur_vis));
  return out;
}

const PebMode* PebReport::find_mode(const std::string& key) const {
  for (const auto& m : modes) {
    if (m.mode.key() == key) return &m;
  }
  return nullptr;
}

PebReport integrity_report(SlidingWindow& window, DetectionState& history,
                           const DetectionConfig& det_cfg, const IntegrityBudget& budget,
                           bool fde_enabled, const ImuState& truth) {
  PebReport rep;
  rep.epoch_index = window.newest().epoch.index;
  rep.t = window.newest().epoch.t;

  const FdeOutcome fde = run_detection(window, history, det_cfg, fde_enabled);
  rep.gnss = fde.gnss;
  rep.imu = fde.imu;
  rep.vision = fde.vision;
  rep.excluded_sats = fde.excluded_sats;
  rep.imu_excluded = fde.imu_excluded;
  rep.vision_excluded = fde.vision_excluded;
  rep.continuity_alert = fde.continuity_alert;

  rep.covariances = window.state_covariance();
  const EpochClassJacobians jac = window.epoch_jacobians();

  auto make_slopes = [&](ResidualSource src, const Eigen::MatrixXd& j, int dof) {
    SlopeAnalysis sa;
    if (j.rows() == 0) {
      sa.sensor = src;
      sa.max_slope = Eigen::VectorXd::Zero(3);
      sa.lambda_a = 0.0;
      return sa;
    }
    const Eigen::MatrixXd w = Eigen::MatrixXd::Identity(j.rows(), j.rows());
    const Eigen::MatrixXd b = sensitivity_matrix(j, w);
    const double lambda_a =
        dof > 0 ? min_detectable_noncentrality(dof, det_cfg.effective_p_fa(),
                                               det_cfg.effective_p_md())
                : 0.0;
    return slopes(src, b.topRows(3), Eigen::VectorXd::Ones(j.rows()), lambda_a);
  };

  SlopeSet slope_set;
  slope_set.gnss = make_slopes(ResidualSource::Gnss, jac.gnss, fde.gnss.dof);
  slope_set.imu = make_slopes(ResidualSource::Imu, jac.imu, fde.imu.dof);
  slope_set.vision = make_slopes(ResidualSource::Vision, jac.vision, fde.vision.dof);

  for (const AllocatedMode& am : budget.modes) {
    rep.modes.push_back(
        position_error_bounding(am.mode, rep.covariances.combined, slope_set, budget));
  }

  rep.position_error = window.newest().state.p - truth.p;
  rep.hpe = rep.position_error.head<2>().norm();
  return rep;
}

}  // namespace navim
