#include "navim/solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace navim {

namespace {

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

Eigen::Vector3d pixel_ray(const CameraModel& cam, const Eigen::Vector2d& px) {
  Eigen::Vector3d r((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy, 1.0);
  return r.normalized();
}

const char* kImuComponentLabels[15] = {
    "alpha:x", "alpha:y", "alpha:z", "beta:x", "beta:y", "beta:z",
    "theta:x", "theta:y", "theta:z", "dba:x",  "dba:y",  "dba:z",
    "dbg:x",   "dbg:y",   "dbg:z"};

}  // namespace

Eigen::VectorXd InitialPriorConfig::state_sigmas() const {
  Eigen::VectorXd s(ImuState::kErrorDim);
  s.segment<3>(ImuState::kP).setConstant(p_sigma);
  s.segment<3>(ImuState::kV).setConstant(v_sigma);
  s.segment<3>(ImuState::kTheta).setConstant(theta_sigma);
  s.segment<3>(ImuState::kBa).setConstant(ba_sigma);
  s.segment<3>(ImuState::kBg).setConstant(bg_sigma);
  s.segment<4>(ImuState::kClk).setConstant(clk_sigma);
  s(ImuState::kClkDrift) = clk_drift_sigma;
  return s;
}

Eigen::MatrixXd normal_covariance(const Eigen::MatrixXd& j_whitened, bool* used_pinv) {
  const Eigen::MatrixXd h = j_whitened.transpose() * j_whitened;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  const double tol = smax * 1e-12;
  bool deficient = false;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > tol && smax / s(i) < 1e12) {
      inv(i) = 1.0 / s(i);
    } else {
      deficient = true;
    }
  }
  if (used_pinv) *used_pinv = deficient || smax == 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// ---------------------------------------------------------------------------

struct SlidingWindow::Assembly {
  Eigen::MatrixXd h;
  Eigen::VectorXd g;
  double cost = 0.0;
  double cost_imu = 0.0;
  double cost_gnss = 0.0;
  double cost_vision = 0.0;
  double cost_prior = 0.0;
};

SlidingWindow::SlidingWindow(const SolverConfig& cfg, const InitialPriorConfig& prior,
                             const AnchorGeodesy& anchor)
    : cfg_(cfg), prior_cfg_(prior), anchor_(anchor) {
  anchor_.validate();
  cfg_.camera.validate();
}

void SlidingWindow::init(const ImuState& x0, double psi0) {
  if (!x0.all_finite()) throw std::invalid_argument("init: non-finite state");
  prior_center_ = x0;
  prior_sigmas_ = prior_cfg_.state_sigmas();
  psi_ = wrap_angle(psi0);
  psi_prior_center_ = psi_;
  psi_prior_sigma_ = prior_cfg_.psi_sigma;
  initialized_ = true;
}

void SlidingWindow::add_keyframe(const MeasurementEpoch& epoch,
                                 std::optional<PreintegratedImu> preint) {
  if (!initialized_) throw std::logic_error("add_keyframe: window not initialized");
  cached_hessian_.reset();

  Keyframe kf;
  kf.epoch = epoch;

  if (frames_.empty()) {
    kf.state = prior_center_;
    kf.state.time = epoch.t;
    frames_.push_back(std::move(kf));
    refresh_features();
    return;
  }

  const Keyframe& last = frames_.back();
  if (!(epoch.t > last.state.time)) {
    throw std::invalid_argument("add_keyframe: epoch time does not advance");
  }
  if (size() == cfg_.window_capacity) slide();

  const ImuState& xp = frames_.back().state;
  if (!preint) {
    preint = PreintegratedImu::integrate(epoch.imu, xp.ba, xp.bg, cfg_.imu_noise);
  }
  const double dt = preint->dt();
  const Eigen::Matrix3d r = xp.q.matrix();
  ImuState xn = xp;
  xn.time = epoch.t;
  xn.p = xp.p + xp.v * dt + 0.5 * cfg_.gravity * dt * dt + r * preint->alpha(xp.ba, xp.bg);
  xn.v = xp.v + cfg_.gravity * dt + r * preint->beta(xp.ba, xp.bg);
  xn.q = xp.q * preint->theta(xp.bg);
  xn.clk = xp.clk + Eigen::Vector4d::Constant(xp.clk_drift * dt);
  kf.state = xn;
  kf.preint = std::move(preint);
  frames_.push_back(std::move(kf));
  refresh_features();
}

int SlidingWindow::feature_col(int feature_id) const {
  int rank = 0;
  for (const auto& [id, f] : features_) {
    if (id == feature_id) return size() * ImuState::kErrorDim + rank;
    ++rank;
  }
  throw std::logic_error("feature_col: unknown feature");
}

int SlidingWindow::psi_col() const {
  return size() * ImuState::kErrorDim + static_cast<int>(features_.size());
}

int SlidingWindow::total_cols() const { return psi_col() + 1; }

void SlidingWindow::refresh_features() {
  cached_hessian_.reset();

  // Usable observations per feature over the current window.
  std::map<int, std::vector<std::pair<int, Eigen::Vector2d>>> obs;  // abs kf -> px
  for (const auto& kf : frames_) {
    if (kf.vision_excluded) continue;
    for (const auto& fo : kf.epoch.feats) {
      obs[fo.feature_id].emplace_back(kf.epoch.index, fo.pixel);
    }
  }

  auto ordinal_of = [&](int abs_index) -> int {
    for (int i = 0; i < size(); ++i) {
      if (frames_[i].epoch.index == abs_index) return i;
    }
    return -1;
  };

  // Drop params that lost their support; re-anchor ones whose anchor
  // observation disappeared (point-preserving, so residuals elsewhere are
  // untouched).
  for (auto it = features_.begin(); it != features_.end();) {
    auto o = obs.find(it->first);
    if (o == obs.end() || o->second.size() < 2) {
      it = features_.erase(it);
      continue;
    }
    FeatureParam& f = it->second;
    const bool anchor_alive =
        std::any_of(o->second.begin(), o->second.end(),
                    [&](const auto& p) { return p.first == f.anchor_frame; });
    if (!anchor_alive) {
      const int old_ord = ordinal_of(f.anchor_frame);
      const int new_abs = o->second.front().first;
      const int new_ord = ordinal_of(new_abs);
      if (old_ord < 0 || new_ord < 0) {
        it = features_.erase(it);
        continue;
      }
      const Eigen::Vector3d x_w = feature_world_point(f, frames_[old_ord].state, cfg_.camera);
      const Eigen::Vector3d x_c =
          cfg_.camera.to_camera(x_w, frames_[new_ord].state.p, frames_[new_ord].state.q);
      if (x_c.z() < 1.0 / 200.0 || x_c.norm() < 1e-6) {
        it = features_.erase(it);
        continue;
      }
      f.anchor_frame = new_abs;
      f.bearing_c = x_c.normalized();
      f.inv_depth = std::max(1.0 / x_c.norm(), cfg_.min_inv_depth);
    }
    ++it;
  }

  // Create params for features that have gathered two usable observations.
  for (const auto& [id, olist] : obs) {
    if (olist.size() < 2 || features_.count(id)) continue;
    const int anchor_abs = olist.front().first;
    const int anchor_ord = ordinal_of(anchor_abs);
    const int second_ord = ordinal_of(olist[1].first);
    if (anchor_ord < 0 || second_ord < 0) continue;

    FeatureParam f;
    f.feature_id = id;
    f.anchor_frame = anchor_abs;
    f.bearing_c = pixel_ray(cfg_.camera, olist.front().second);

    // Two-view triangulation along the anchor ray; falls back to the default
    // depth in degenerate geometry.
    const ImuState& xi = frames_[anchor_ord].state;
    const ImuState& xj = frames_[second_ord].state;
    const Eigen::Matrix3d r_bc = cfg_.camera.r_bc.matrix();
    const Eigen::Matrix3d rj_t = xj.q.matrix().transpose();
    const Eigen::Vector3d ray_j = pixel_ray(cfg_.camera, olist[1].second);
    const Eigen::Vector3d a_dir =
        r_bc * rj_t * xi.q.matrix() * r_bc.transpose() * f.bearing_c;
    const Eigen::Vector3d c_off =
        r_bc * (rj_t * (xi.q.matrix() * (r_bc.transpose() * (-cfg_.camera.t_bc)) + xi.p - xj.p)) +
        cfg_.camera.t_bc;
    const Eigen::Vector3d a = skew(ray_j) * a_dir;
    const Eigen::Vector3d b = skew(ray_j) * c_off;
    double depth = cfg_.default_depth_m;
    if (a.squaredNorm() > 1e-10) {
      const double d = -a.dot(b) / a.squaredNorm();
      if (d > 0.5 && d < 500.0) depth = d;
    }
    f.inv_depth = std::max(1.0 / depth, cfg_.min_inv_depth);
    features_.emplace(id, f);
  }
}

void SlidingWindow::reanchor_or_drop(int dropped_ordinal) {
  const int dropped_abs = frames_[dropped_ordinal].epoch.index;
  for (auto it = features_.begin(); it != features_.end();) {
    FeatureParam& f = it->second;
    if (f.anchor_frame != dropped_abs) {
      ++it;
      continue;
    }
    // Earliest usable observation after the dropped frame.
    int new_ord = -1;
    for (int i = dropped_ordinal + 1; i < size(); ++i) {
      if (frames_[i].vision_excluded) continue;
      const auto& feats = frames_[i].epoch.feats;
      if (std::any_of(feats.begin(), feats.end(),
                      [&](const FeatureObservation& fo) { return fo.feature_id == it->first; })) {
        new_ord = i;
        break;
      }
    }
    if (new_ord < 0) {
      it = features_.erase(it);
      continue;
    }
    const Eigen::Vector3d x_w =
        feature_world_point(f, frames_[dropped_ordinal].state, cfg_.camera);
    const Eigen::Vector3d x_c =
        cfg_.camera.to_camera(x_w, frames_[new_ord].state.p, frames_[new_ord].state.q);
    if (x_c.z() < 1.0 / 200.0) {
      it = features_.erase(it);
      continue;
    }
    f.anchor_frame = frames_[new_ord].epoch.index;
    f.bearing_c = x_c.normalized();
    f.inv_depth = std::max(1.0 / x_c.norm(), cfg_.min_inv_depth);
    ++it;
  }
}

void SlidingWindow::slide() {
  if (frames_.empty()) return;
  cached_hessian_.reset();

  if (size() == 1) {
    frames_.clear();
    features_.clear();
    return;
  }

  // Marginal sigmas of the next-oldest state's position/attitude before the
  // drop; they become the anchor prior preserving gauge continuity.
  Eigen::Matrix<double, 6, 1> sig;
  {
    const Assembly a = assemble(true);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a.h);
    const int c0 = state_col(1);
    for (int i = 0; i < 6; ++i) {
      const int col = c0 + (i < 3 ? ImuState::kP + i : ImuState::kTheta + (i - 3));
      Eigen::VectorXd e = Eigen::VectorXd::Zero(a.h.rows());
      e(col) = 1.0;
      const Eigen::VectorXd x = ldlt.solve(e);
      sig(i) = std::sqrt(std::max(x(col), 1e-12));
    }
  }

  reanchor_or_drop(0);
  frames_.erase(frames_.begin());

  prior_center_ = frames_.front().state;
  prior_sigmas_ = Eigen::VectorXd::Constant(ImuState::kErrorDim, -1.0);
  prior_sigmas_.segment<3>(ImuState::kP) = sig.head<3>();
  prior_sigmas_.segment<3>(ImuState::kTheta) = sig.tail<3>();

  refresh_features();
}

// ---------------------------------------------------------------------------
// Factor assembly

namespace {

struct FactorBlock {
  int col = 0;
  Eigen::MatrixXd jac;
};

void scatter(Eigen::MatrixXd& h, Eigen::VectorXd& g, const Eigen::VectorXd& r,
             const std::vector<FactorBlock>& blocks) {
  for (const auto& a : blocks) {
    g.segment(a.col, a.jac.cols()).noalias() += a.jac.transpose() * r;
    for (const auto& b : blocks) {
      h.block(a.col, b.col, a.jac.cols(), b.jac.cols()).noalias() +=
          a.jac.transpose() * b.jac;
    }
  }
}

}  // namespace

SlidingWindow::Assembly SlidingWindow::assemble(bool with_jacobians) const {
  Assembly out;
  const int cols = total_cols();
  if (with_jacobians) {
    out.h = Eigen::MatrixXd::Zero(cols, cols);
    out.g = Eigen::VectorXd::Zero(cols);
  }

  std::map<int, int> feat_col;
  {
    int rank = 0;
    for (const auto& [id, f] : features_) {
      feat_col[id] = size() * ImuState::kErrorDim + rank;
      ++rank;
    }
  }
  const int col_psi = psi_col();

  auto ordinal_of = [&](int abs_index) -> int {
    for (int i = 0; i < size(); ++i) {
      if (frames_[i].epoch.index == abs_index) return i;
    }
    return -1;
  };

  auto add_factor = [&](const Eigen::VectorXd& r, const std::vector<FactorBlock>& blocks,
                        double& cost_bucket) {
    out.cost += r.squaredNorm();
    cost_bucket += r.squaredNorm();
    if (with_jacobians) scatter(out.h, out.g, r, blocks);
  };

  // Prior on frame 0.
  if (!frames_.empty()) {
    const ImuState& x = frames_[0].state;
    Eigen::Vector3d e_th = (prior_center_.q.inverse() * x.q).log();
    for (int i = 0; i < ImuState::kErrorDim; ++i) {
      if (prior_sigmas_(i) <= 0.0) continue;
      double e = 0.0;
      Eigen::MatrixXd jrow = Eigen::MatrixXd::Zero(1, ImuState::kErrorDim);
      if (i >= ImuState::kTheta && i < ImuState::kTheta + 3) {
        const int k = i - ImuState::kTheta;
        e = e_th(k);
        const Eigen::Matrix3d jr = so3_right_jacobian_inverse(e_th);
        jrow.block<1, 3>(0, ImuState::kTheta) = jr.row(k);
      } else if (i < ImuState::kTheta) {
        e = (i < 3) ? (x.p - prior_center_.p)(i) : (x.v - prior_center_.v)(i - 3);
        jrow(0, i) = 1.0;
      } else if (i < ImuState::kClk) {
        e = (i < ImuState::kBg) ? (x.ba - prior_center_.ba)(i - ImuState::kBa)
                                : (x.bg - prior_center_.bg)(i - ImuState::kBg);
        jrow(0, i) = 1.0;
      } else if (i < ImuState::kClkDrift) {
        e = (x.clk - prior_center_.clk)(i - ImuState::kClk);
        jrow(0, i) = 1.0;
      } else {
        e = x.clk_drift - prior_center_.clk_drift;
        jrow(0, i) = 1.0;
      }
      Eigen::VectorXd r(1);
      r(0) = e / prior_sigmas_(i);
      add_factor(r, {{state_col(0), jrow / prior_sigmas_(i)}}, out.cost_prior);
    }
  }

  // Psi prior.
  if (psi_prior_sigma_ > 0.0) {
    Eigen::VectorXd r(1);
    r(0) = wrap_angle(psi_ - psi_prior_center_) / psi_prior_sigma_;
    Eigen::MatrixXd j(1, 1);
    j(0, 0) = 1.0 / psi_prior_sigma_;
    add_factor(r, {{col_psi, j}}, out.cost_prior);
  }

  for (int i = 1; i < size(); ++i) {
    const Keyframe& kf = frames_[i];
    const ImuState& xa = frames_[i - 1].state;
    const ImuState& xb = kf.state;
    const double dt = xb.time - xa.time;

    if (!kf.imu_excluded && kf.preint) {
      const PreintegratedImu& p = *kf.preint;
      const Matrix15d& li = p.sqrt_info();
      const Vector15d r = li * preint_residual(p, xa, xb, cfg_.gravity);
      std::vector<FactorBlock> blocks;
      if (with_jacobians) {
        const PreintJacobian pj = preint_jacobian(p, xa, xb, cfg_.gravity);
        blocks.push_back({state_col(i - 1), li * pj.d_state_k});
        blocks.push_back({state_col(i), li * pj.d_state_k1});
      }
      add_factor(r, blocks, out.cost_imu);
    } else if (kf.imu_excluded) {
      // Constant-velocity bridge in place of the excluded pre-integration.
      Eigen::VectorXd r(15);
      const Eigen::Vector3d e_th = (xa.q.inverse() * xb.q).log();
      const double s_ba = cfg_.imu_noise.accel_bias_walk * std::sqrt(dt);
      const double s_bg = cfg_.imu_noise.gyro_bias_walk * std::sqrt(dt);
      r.segment<3>(0) = (xb.p - xa.p - xa.v * dt) / cfg_.bridge_pos_sigma_m;
      r.segment<3>(3) = (xb.v - xa.v) / cfg_.bridge_vel_sigma_mps;
      r.segment<3>(6) = e_th / cfg_.bridge_att_sigma_rad;
      r.segment<3>(9) = (xb.ba - xa.ba) / s_ba;
      r.segment<3>(12) = (xb.bg - xa.bg) / s_bg;
      std::vector<FactorBlock> blocks;
      if (with_jacobians) {
        Eigen::MatrixXd ja = Eigen::MatrixXd::Zero(15, ImuState::kErrorDim);
        Eigen::MatrixXd jb = Eigen::MatrixXd::Zero(15, ImuState::kErrorDim);
        const Eigen::Matrix3d i3 = Eigen::Matrix3d::Identity();
        ja.block<3, 3>(0, ImuState::kP) = -i3 / cfg_.bridge_pos_sigma_m;
        ja.block<3, 3>(0, ImuState::kV) = -dt * i3 / cfg_.bridge_pos_sigma_m;
        jb.block<3, 3>(0, ImuState::kP) = i3 / cfg_.bridge_pos_sigma_m;
        ja.block<3, 3>(3, ImuState::kV) = -i3 / cfg_.bridge_vel_sigma_mps;
        jb.block<3, 3>(3, ImuState::kV) = i3 / cfg_.bridge_vel_sigma_mps;
        const Eigen::Matrix3d jr = so3_right_jacobian_inverse(e_th);
        const Eigen::Matrix3d r_rel = (xa.q.inverse() * xb.q).matrix();
        ja.block<3, 3>(6, ImuState::kTheta) =
            -jr * r_rel.transpose() / cfg_.bridge_att_sigma_rad;
        jb.block<3, 3>(6, ImuState::kTheta) = jr / cfg_.bridge_att_sigma_rad;
        ja.block<3, 3>(9, ImuState::kBa) = -i3 / s_ba;
        jb.block<3, 3>(9, ImuState::kBa) = i3 / s_ba;
        ja.block<3, 3>(12, ImuState::kBg) = -i3 / s_bg;
        jb.block<3, 3>(12, ImuState::kBg) = i3 / s_bg;
        blocks.push_back({state_col(i - 1), ja});
        blocks.push_back({state_col(i), jb});
      }
      add_factor(r, blocks, out.cost_prior);
    }

    // Receiver clock process: constant drift between epochs.
    {
      const double s_c = cfg_.clk_walk_m * std::sqrt(dt);
      const double s_d = cfg_.clk_drift_walk_mps * std::sqrt(dt);
      Eigen::VectorXd r(5);
      r.segment<4>(0) =
          (xb.clk - xa.clk - Eigen::Vector4d::Constant(xa.clk_drift * dt)) / s_c;
      r(4) = (xb.clk_drift - xa.clk_drift) / s_d;
      std::vector<FactorBlock> blocks;
      if (with_jacobians) {
        Eigen::MatrixXd ja = Eigen::MatrixXd::Zero(5, ImuState::kErrorDim);
        Eigen::MatrixXd jb = Eigen::MatrixXd::Zero(5, ImuState::kErrorDim);
        for (int c = 0; c < 4; ++c) {
          ja(c, ImuState::kClk + c) = -1.0 / s_c;
          ja(c, ImuState::kClkDrift) = -dt / s_c;
          jb(c, ImuState::kClk + c) = 1.0 / s_c;
        }
        ja(4, ImuState::kClkDrift) = -1.0 / s_d;
        jb(4, ImuState::kClkDrift) = 1.0 / s_d;
        blocks.push_back({state_col(i - 1), ja});
        blocks.push_back({state_col(i), jb});
      }
      add_factor(r, blocks, out.cost_prior);
    }
  }

  // Pseudorange factors.
  for (int i = 0; i < size(); ++i) {
    const Keyframe& kf = frames_[i];
    for (const auto& obs : kf.epoch.sats) {
      if (kf.excluded_sats.count(obs.sat_id)) continue;
      const PseudorangeResidual pr = pseudorange_residual(obs, kf.state, psi_, anchor_);
      Eigen::VectorXd r(1);
      r(0) = pr.r / obs.sigma_m;
      std::vector<FactorBlock> blocks;
      if (with_jacobians) {
        Eigen::MatrixXd js = Eigen::MatrixXd::Zero(1, ImuState::kErrorDim);
        js.block<1, 3>(0, ImuState::kP) = pr.d_p.transpose() / obs.sigma_m;
        js.block<1, 4>(0, ImuState::kClk) = pr.d_clk.transpose() / obs.sigma_m;
        Eigen::MatrixXd jp(1, 1);
        jp(0, 0) = pr.d_psi / obs.sigma_m;
        blocks.push_back({state_col(i), js});
        blocks.push_back({col_psi, jp});
      }
      add_factor(r, blocks, out.cost_gnss);
    }
  }

  // Visual factors: every usable non-anchor observation of every feature.
  for (const auto& [id, f] : features_) {
    const int anchor_ord = ordinal_of(f.anchor_frame);
    if (anchor_ord < 0) continue;
    const ImuState& xi = frames_[anchor_ord].state;
    for (int j = 0; j < size(); ++j) {
      if (j == anchor_ord || frames_[j].vision_excluded) continue;
      const auto& feats = frames_[j].epoch.feats;
      const auto fo = std::find_if(feats.begin(), feats.end(),
                                   [&](const FeatureObservation& o) { return o.feature_id == id; });
      if (fo == feats.end()) continue;
      const VisualResidual vr = visual_residual(fo->pixel, f, xi, frames_[j].state, cfg_.camera);
      if (!vr.valid) continue;
      Eigen::VectorXd r = vr.r / cfg_.sigma_px;
      std::vector<FactorBlock> blocks;
      if (with_jacobians) {
        Eigen::MatrixXd ji = Eigen::MatrixXd::Zero(2, ImuState::kErrorDim);
        ji.block<2, 3>(0, ImuState::kP) = vr.d_p_i / cfg_.sigma_px;
        ji.block<2, 3>(0, ImuState::kTheta) = vr.d_theta_i / cfg_.sigma_px;
        Eigen::MatrixXd jj = Eigen::MatrixXd::Zero(2, ImuState::kErrorDim);
        jj.block<2, 3>(0, ImuState::kP) = vr.d_p_j / cfg_.sigma_px;
        jj.block<2, 3>(0, ImuState::kTheta) = vr.d_theta_j / cfg_.sigma_px;
        Eigen::MatrixXd jf = vr.d_rho / cfg_.sigma_px;
        blocks.push_back({state_col(anchor_ord), ji});
        blocks.push_back({state_col(j), jj});
        blocks.push_back({feat_col.at(id), jf});
      }
      add_factor(r, blocks, out.cost_vision);
    }
  }

  return out;
}

double SlidingWindow::evaluate_cost(const std::vector<ImuState>& states,
                                    const std::map<int, FeatureParam>& feats, double psi,
                                    SolveReport* report) const {
  // Swap in the candidate values, run a jacobian-free assembly, swap back.
  auto* self = const_cast<SlidingWindow*>(this);
  std::vector<ImuState> saved_states(size());
  for (int i = 0; i < size(); ++i) saved_states[i] = frames_[i].state;
  const std::map<int, FeatureParam> saved_feats = features_;
  const double saved_psi = psi_;

  for (int i = 0; i < size(); ++i) self->frames_[i].state = states[i];
  self->features_ = feats;
  self->psi_ = psi;
  const Assembly a = assemble(false);
  for (int i = 0; i < size(); ++i) self->frames_[i].state = saved_states[i];
  self->features_ = saved_feats;
  self->psi_ = saved_psi;

  if (report) {
    report->cost_imu = a.cost_imu;
    report->cost_gnss = a.cost_gnss;
    report->cost_vision = a.cost_vision;
    report->cost_prior = a.cost_prior;
  }
  return a.cost;
}

SolveReport SlidingWindow::optimize() {
  if (!initialized_ || frames_.empty()) {
    throw std::logic_error("optimize: window is empty");
  }

  // Re-linearize pre-integrations whose bias moved too far.
  for (int i = 1; i < size(); ++i) {
    Keyframe& kf = frames_[i];
    if (!kf.preint || kf.imu_excluded) continue;
    const ImuState& xa = frames_[i - 1].state;
    if ((xa.ba - kf.preint->ba_lin()).cwiseAbs().maxCoeff() > cfg_.relin_accel_bias ||
        (xa.bg - kf.preint->bg_lin()).cwiseAbs().maxCoeff() > cfg_.relin_gyro_bias) {
      kf.preint = PreintegratedImu::integrate(kf.epoch.imu, xa.ba, xa.bg, cfg_.imu_noise);
    }
  }

  SolveReport report;
  Assembly a = assemble(true);
  double cost = a.cost;
  report.initial_cost = cost;
  double lambda = cfg_.init_damping;

  std::vector<ImuState> cand_states(size());
  bool converged = false;

  for (int iter = 0; iter < cfg_.max_iterations && !converged; ++iter) {
    ++report.iterations;
    report.damping_trace.push_back(lambda);

    Eigen::MatrixXd hd = a.h;
    hd.diagonal() += lambda * a.h.diagonal().cwiseMax(1e-12);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hd);
    Eigen::VectorXd delta;
    bool ok = ldlt.info() == Eigen::Success;
    if (ok) {
      delta = ldlt.solve(-a.g);
      ok = delta.allFinite();
    }
    if (!ok) {
      check_observability();
      lambda = std::min(lambda * 10.0, 1e8);
      continue;
    }

    // Candidate manifold update.
    for (int i = 0; i < size(); ++i) {
      cand_states[i] =
          manifold_plus(frames_[i].state, delta.segment<ImuState::kErrorDim>(state_col(i)));
    }
    std::map<int, FeatureParam> cand_feats = features_;
    {
      int rank = 0;
      for (auto& [id, f] : cand_feats) {
        f.inv_depth = std::max(f.inv_depth + delta(size() * ImuState::kErrorDim + rank),
                               cfg_.min_inv_depth);
        ++rank;
      }
    }
    const double cand_psi = wrap_angle(psi_ + delta(psi_col()));

    const double cand_cost = evaluate_cost(cand_states, cand_feats, cand_psi, nullptr);
    if (cand_cost < cost) {
      for (int i = 0; i < size(); ++i) frames_[i].state = cand_states[i];
      features_ = std::move(cand_feats);
      psi_ = cand_psi;
      const double rel = (cost - cand_cost) / std::max(cost, 1e-300);
      cost = cand_cost;
      lambda = std::max(lambda / 10.0, 1e-12);
      if (rel < cfg_.cost_decrease_tol || delta.norm() < cfg_.step_norm_tol) {
        converged = true;
      } else {
        a = assemble(true);
      }
    } else {
      lambda = std::min(lambda * 10.0, 1e8);
      if (lambda >= 1e8) break;
    }
  }

  report.converged = converged;
  const Assembly final_a = assemble(true);
  report.final_cost = final_a.cost;
  report.cost_imu = final_a.cost_imu;
  report.cost_gnss = final_a.cost_gnss;
  report.cost_vision = final_a.cost_vision;
  report.cost_prior = final_a.cost_prior;
  cached_hessian_ = final_a.h;
  return report;
}

void SlidingWindow::exclude_satellite(int sat_id) {
  if (frames_.empty()) return;
  frames_.back().excluded_sats.insert(sat_id);
  cached_hessian_.reset();
}

void SlidingWindow::exclude_imu_current() {
  if (frames_.empty()) return;
  frames_.back().imu_excluded = true;
  cached_hessian_.reset();
}

void SlidingWindow::exclude_vision_current() {
  if (frames_.empty()) return;
  frames_.back().vision_excluded = true;
  refresh_features();
}

WhitenedResidual SlidingWindow::epoch_residual(ResidualSource source) const {
  if (frames_.empty()) {
    return whiten(Eigen::VectorXd(0), Eigen::VectorXd(0), source, 0, {});
  }
  const Keyframe& kf = frames_.back();
  const int epoch = kf.epoch.index;

  switch (source) {
    case ResidualSource::Gnss: {
      std::vector<double> vals;
      std::vector<std::string> labels;
      for (const auto& obs : kf.epoch.sats) {
        if (kf.excluded_sats.count(obs.sat_id)) continue;
        vals.push_back(pseudorange_residual(obs, kf.state, psi_, anchor_).r);
        labels.push_back(sat_label(obs.sat_id));
      }
      Eigen::VectorXd raw = Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size());
      Eigen::VectorXd sigma(vals.size());
      {
        int k = 0;
        for (const auto& obs : kf.epoch.sats) {
          if (kf.excluded_sats.count(obs.sat_id)) continue;
          sigma(k++) = obs.sigma_m;
        }
      }
      return whiten(raw, sigma, source, epoch, std::move(labels));
    }
    case ResidualSource::Imu: {
      if (size() < 2 || kf.imu_excluded || !kf.preint) {
        return whiten(Eigen::VectorXd(0), Eigen::VectorXd(0), source, epoch, {});
      }
      const Vector15d r = kf.preint->sqrt_info() *
                          preint_residual(*kf.preint, frames_[size() - 2].state, kf.state,
                                          cfg_.gravity);
      std::vector<std::string> labels(kImuComponentLabels, kImuComponentLabels + 15);
      // Residual is already decorrelated by the sqrt information transform.
      return whiten(r, Eigen::VectorXd::Ones(15), source, epoch, std::move(labels));
    }
    case ResidualSource::Vision: {
      std::vector<double> vals;
      std::vector<std::string> labels;
      if (!kf.vision_excluded) {
        auto ordinal_of = [&](int abs_index) -> int {
          for (int i = 0; i < size(); ++i) {
            if (frames_[i].epoch.index == abs_index) return i;
          }
          return -1;
        };
        for (const auto& [id, f] : features_) {
          if (f.anchor_frame == kf.epoch.index) continue;
          const auto fo =
              std::find_if(kf.epoch.feats.begin(), kf.epoch.feats.end(),
                           [&](const FeatureObservation& o) { return o.feature_id == id; });
          if (fo == kf.epoch.feats.end()) continue;
          const int ai = ordinal_of(f.anchor_frame);
          if (ai < 0) continue;
          const VisualResidual vr =
              visual_residual(fo->pixel, f, frames_[ai].state, kf.state, cfg_.camera);
          if (!vr.valid) continue;
          vals.push_back(vr.r.x());
          vals.push_back(vr.r.y());
          labels.push_back("f" + std::to_string(id) + ":u");
          labels.push_back("f" + std::to_string(id) + ":v");
        }
      }
      Eigen::VectorXd raw = Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size());
      return whiten(raw, Eigen::VectorXd::Constant(vals.size(), cfg_.sigma_px), source, epoch,
                    std::move(labels));
    }
  }
  return whiten(Eigen::VectorXd(0), Eigen::VectorXd(0), source, epoch, {});
}

EpochClassJacobians SlidingWindow::epoch_jacobians() const {
  EpochClassJacobians out;
  if (frames_.empty()) return out;
  const Keyframe& kf = frames_.back();

  // IMU class: active inertial factor with respect to the newest state.
  if (size() >= 2 && kf.preint && !kf.imu_excluded) {
    const PreintJacobian pj =
        preint_jacobian(*kf.preint, frames_[size() - 2].state, kf.state, cfg_.gravity);
    out.imu = kf.preint->sqrt_info() * pj.d_state_k1.leftCols<15>();
  } else if (size() >= 2 && kf.imu_excluded) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(15, 15);
    const ImuState& xa = frames_[size() - 2].state;
    const double dt = kf.state.time - xa.time;
    const Eigen::Vector3d e_th = (xa.q.inverse() * kf.state.q).log();
    j.block<3, 3>(0, 0) = Eigen::Matrix3d::Identity() / cfg_.bridge_pos_sigma_m;
    j.block<3, 3>(3, 3) = Eigen::Matrix3d::Identity() / cfg_.bridge_vel_sigma_mps;
    j.block<3, 3>(6, 6) = so3_right_jacobian_inverse(e_th) / cfg_.bridge_att_sigma_rad;
    j.block<3, 3>(9, 9) =
        Eigen::Matrix3d::Identity() / (cfg_.imu_noise.accel_bias_walk * std::sqrt(dt));
    j.block<3, 3>(12, 12) =
        Eigen::Matrix3d::Identity() / (cfg_.imu_noise.gyro_bias_walk * std::sqrt(dt));
    out.imu = j;
  } else {
    // First epoch: the initial prior is the only inertial information.
    const Eigen::VectorXd sig = prior_cfg_.state_sigmas();
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(15, 15);
    for (int i = 0; i < 15; ++i) j(i, i) = 1.0 / sig(i);
    out.imu = j;
  }

  // GNSS class over [p, active clocks, psi].
  {
    std::vector<const SatelliteObservation*> included;
    std::set<int> consts;
    for (const auto& obs : kf.epoch.sats) {
      if (kf.excluded_sats.count(obs.sat_id)) continue;
      included.push_back(&obs);
      consts.insert(static_cast<int>(obs.constellation));
    }
    std::map<int, int> const_col;
    int cc = 3;
    for (int c : consts) const_col[c] = cc++;
    out.gnss = Eigen::MatrixXd::Zero(included.size(), 3 + consts.size() + 1);
    for (size_t m = 0; m < included.size(); ++m) {
      const PseudorangeResidual pr = pseudorange_residual(*included[m], kf.state, psi_, anchor_);
      out.gnss.block<1, 3>(m, 0) = pr.d_p.transpose() / included[m]->sigma_m;
      out.gnss(m, const_col[static_cast<int>(included[m]->constellation)]) =
          1.0 / included[m]->sigma_m;
      out.gnss(m, out.gnss.cols() - 1) = pr.d_psi / included[m]->sigma_m;
    }
  }

  // Vision class with respect to the newest position only.
  {
    std::vector<Eigen::Matrix<double, 2, 3>> rows;
    if (!kf.vision_excluded) {
      auto ordinal_of = [&](int abs_index) -> int {
        for (int i = 0; i < size(); ++i) {
          if (frames_[i].epoch.index == abs_index) return i;
        }
        return -1;
      };
      for (const auto& [id, f] : features_) {
        if (f.anchor_frame == kf.epoch.index) continue;
        const auto fo =
            std::find_if(kf.epoch.feats.begin(), kf.epoch.feats.end(),
                         [&](const FeatureObservation& o) { return o.feature_id == id; });
        if (fo == kf.epoch.feats.end()) continue;
        const int ai = ordinal_of(f.anchor_frame);
        if (ai < 0) continue;
        const VisualResidual vr =
            visual_residual(fo->pixel, f, frames_[ai].state, kf.state, cfg_.camera);
        if (!vr.valid) continue;
        rows.push_back(vr.d_p_j / cfg_.sigma_px);
      }
    }
    out.vision = Eigen::MatrixXd::Zero(2 * rows.size(), 3);
    for (size_t i = 0; i < rows.size(); ++i) out.vision.block<2, 3>(2 * i, 0) = rows[i];
  }

  return out;
}

SensorCovariances SlidingWindow::state_covariance() const {
  const EpochClassJacobians j = epoch_jacobians();
  SensorCovariances out;

  const Eigen::MatrixXd c_imu_full = normal_covariance(j.imu, &out.imu_pinv);
  out.c_imu = c_imu_full.topLeftCorner<3, 3>();

  if (j.gnss.rows() > 0) {
    const Eigen::MatrixXd c_gnss_full = normal_covariance(j.gnss, &out.gnss_pinv);
    out.c_gnss = c_gnss_full.topLeftCorner<3, 3>();
  }

  out.vision_present = j.vision.rows() > 0;
  if (out.vision_present) {
    const Eigen::MatrixXd c_vis = normal_covariance(j.vision, &out.vision_pinv);
    out.c_vision = c_vis.topLeftCorner<3, 3>();
  }

  out.combined = out.c_imu + out.c_vision + out.c_gnss;
  return out;
}

Eigen::Matrix3d SlidingWindow::marginal_position_covariance() const {
  if (frames_.empty()) throw std::logic_error("marginal covariance of empty window");
  Eigen::MatrixXd h;
  if (cached_hessian_) {
    h = *cached_hessian_;
  } else {
    h = assemble(true).h;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  const int c0 = state_col(size() - 1) + ImuState::kP;
  Eigen::Matrix3d cov;
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(h.rows());
    e(c0 + i) = 1.0;
    const Eigen::VectorXd x = ldlt.solve(e);
    for (int k = 0; k < 3; ++k) cov(k, i) = x(c0 + k);
  }
  return 0.5 * (cov + cov.transpose());
}

void SlidingWindow::check_observability() const {
  const Assembly a = assemble(true);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a.h);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double emax = ev(ev.size() - 1);
  const double emin = ev(0);
  if (emin > 0.0 && emax / emin <= cfg_.condition_limit) return;

  // Name the weakest direction's dominant block.
  const Eigen::VectorXd v = eig.eigenvectors().col(0).cwiseAbs();
  int idx = 0;
  v.maxCoeff(&idx);
  std::ostringstream what;
  what << "normal matrix condition exceeds limit (cond=";
  what << (emin > 0 ? emax / emin : std::numeric_limits<double>::infinity()) << "): weak block ";
  const int n_state_cols = size() * ImuState::kErrorDim;
  if (idx < n_state_cols) {
    const int frame = idx / ImuState::kErrorDim;
    const int comp = idx % ImuState::kErrorDim;
    const char* name = "clk_drift";
    if (comp < 3) name = "position";
    else if (comp < 6) name = "velocity";
    else if (comp < 9) name = "attitude";
    else if (comp < 12) name = "accel_bias";
    else if (comp < 15) name = "gyro_bias";
    else if (comp < 19) name = "clock";
    what << name << " of keyframe " << frames_[frame].epoch.index;
  } else if (idx < n_state_cols + static_cast<int>(features_.size())) {
    what << "feature inverse depth";
  } else {
    what << "yaw offset psi";
  }
  throw ObservabilityError(what.str());
}

}  // namespace navim
