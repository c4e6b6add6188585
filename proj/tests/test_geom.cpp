#include <doctest.h>

#include <random>

#include "navim/geom.hpp"

using namespace navim;

TEST_CASE("rotation_from_yaw basics") {
  CHECK(rotation_from_yaw(0.0).angle_to(Rotation()) == doctest::Approx(0.0).epsilon(1e-12));

  const Eigen::Vector3d x = rotation_from_yaw(M_PI / 2.0) * Eigen::Vector3d(1, 0, 0);
  CHECK((x - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);

  const Rotation roundtrip = rotation_from_yaw(0.3) * rotation_from_yaw(-0.3);
  CHECK(roundtrip.angle_to(Rotation()) < 1e-12);

  CHECK_THROWS_AS(rotation_from_yaw(std::nan("")), std::invalid_argument);
}

TEST_CASE("rotation algebra invariants") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d v(g(rng), g(rng), g(rng));
    const Rotation r = Rotation::exp(v);
    CHECK(r.norm_error() < 1e-12);
    CHECK((r * r.inverse()).angle_to(Rotation()) < 1e-12);
    // log/exp round trip (angle may wrap for |v| > pi)
    const Rotation r2 = Rotation::exp(r.log());
    CHECK(r.angle_to(r2) < 1e-9);
  }
}

TEST_CASE("ecef_from_enu geometry") {
  {
    const auto a = AnchorGeodesy::from_lat_lon(0.0, 0.0);
    const Eigen::Vector3d up = ecef_from_enu(a).rotation().matrix().col(2);
    CHECK((up - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
  }
  {
    const auto a = AnchorGeodesy::from_lat_lon(M_PI / 2.0, 0.0);
    const Eigen::Vector3d up = ecef_from_enu(a).rotation().matrix().col(2);
    CHECK((up - Eigen::Vector3d(0, 0, 1)).norm() < 1e-12);
  }
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ulat(-1.4, 1.4), ulon(-M_PI, M_PI);
  for (int i = 0; i < 1000; ++i) {
    const auto a = AnchorGeodesy::from_lat_lon(ulat(rng), ulon(rng));
    const Eigen::Matrix3d r = ecef_from_enu(a).rotation().matrix();
    CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    // Up column points along the anchor radial for the spherical model.
    CHECK((r.col(2) - a.p_anc_e.normalized()).norm() < 1e-12);
  }
}

TEST_CASE("frame tag composition checks inner tags") {
  const FrameRotation r_ne(Rotation::from_yaw(0.2), Frame::Enu, Frame::Ecef);
  const FrameRotation r_wn(Rotation::from_yaw(0.1), Frame::World, Frame::Enu);
  const FrameRotation r_we = r_ne.compose(r_wn);
  CHECK(r_we.from() == Frame::World);
  CHECK(r_we.to() == Frame::Ecef);
  CHECK_THROWS_AS(r_wn.compose(r_ne), std::invalid_argument);
}

TEST_CASE("anchor validation band") {
  AnchorGeodesy bad;
  bad.p_anc_e = Eigen::Vector3d(1e5, 0, 0);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_NOTHROW(AnchorGeodesy::from_lat_lon(0.7, 2.0).validate());
}

TEST_CASE("manifold_plus identity and inverse") {
  ImuState s;
  s.p = Eigen::Vector3d(1, 2, 3);
  s.v = Eigen::Vector3d(0.1, -0.2, 0.05);
  s.q = Rotation::exp(Eigen::Vector3d(0.2, -0.1, 0.4));
  s.ba = Eigen::Vector3d(0.05, 0, -0.02);
  s.bg = Eigen::Vector3d(0.001, 0.002, -0.001);
  s.clk = Eigen::Vector4d(10, -5, 3, 0.5);
  s.clk_drift = 0.2;

  const ImuState same = manifold_plus(s, Eigen::VectorXd::Zero(ImuState::kErrorDim));
  CHECK((same.p - s.p).norm() == 0.0);
  CHECK(same.q.angle_to(s.q) < 1e-15);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 3e-3);
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd d(ImuState::kErrorDim);
    for (int k = 0; k < d.size(); ++k) d(k) = g(rng);
    const ImuState fwd = manifold_plus(s, d);
    const ImuState back = manifold_plus(fwd, -d);
    CHECK((back.p - s.p).norm() < 1e-10);
    CHECK((back.v - s.v).norm() < 1e-10);
    CHECK(back.q.angle_to(s.q) < 1e-10);  // right-perturbation round trip
    CHECK((back.clk - s.clk).norm() < 1e-10);
  }

  CHECK_THROWS_AS(manifold_plus(s, Eigen::VectorXd::Zero(7)), std::invalid_argument);
}

TEST_CASE("manifold_plus attitude delta matches axis-angle composition") {
  ImuState s;
  s.q = Rotation::exp(Eigen::Vector3d(0.3, 0.1, -0.2));
  Eigen::VectorXd d = Eigen::VectorXd::Zero(ImuState::kErrorDim);
  d(ImuState::kTheta) = 1e-3;
  const ImuState out = manifold_plus(s, d);
  // Exact oracle: right multiplication by the axis-angle exponential.
  const Rotation expect = s.q * Rotation::exp(Eigen::Vector3d(1e-3, 0, 0));
  CHECK(out.q.angle_to(expect) < 1e-15);
  CHECK(out.q.angle_to(s.q) == doctest::Approx(1e-3).epsilon(1e-9));
}
