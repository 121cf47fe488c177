#include <gtest/gtest.h>

#include <random>

#include "glopro/projection.hpp"
#include "test_util.hpp"

using namespace glopro;

namespace {

CameraModel cam500() {
  CameraModel c;
  c.fx = c.fy = 500.0;
  c.cx = c.cy = 0.0;
  c.width = c.height = 1000;
  return c;
}

CameraModel cam_skew() {
  CameraModel c;
  c.fx = 820.0;
  c.fy = 790.0;
  c.cx = 315.5;
  c.cy = 241.0;
  c.width = 640;
  c.height = 480;
  return c;
}

PointCloudGaussian single(const Vec3& mean, const Mat3& cov) {
  PointCloudGaussian p;
  p.means = mean.transpose();
  p.cov_blocks = {cov};
  return p;
}

}  // namespace

TEST(Project, OpticalAxisHitsPrincipalPoint) {
  EXPECT_EQ(project(cam500(), Vec3(0, 0, 2)), Vec2(0, 0));
}

TEST(Project, OffAxisPoint) {
  EXPECT_EQ(project(cam500(), Vec3(0.2, 0, 2)), Vec2(50, 0));
}

TEST(Project, ScaleInvariantAlongRays) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1), lam(0.2, 5);
  for (int i = 0; i < 100; ++i) {
    const Vec3 p(u(rng), u(rng), 2.0 + u(rng));
    const double l = lam(rng);
    EXPECT_LT((project(cam_skew(), l * p) - project(cam_skew(), p)).norm(), 1e-12 * 1e3);
  }
}

TEST(Project, BehindCameraThrows) {
  EXPECT_THROW(project(cam500(), Vec3(0, 0, 0.05)), BehindCameraError);
  EXPECT_THROW(project(cam500(), Vec3(0, 0, -1)), BehindCameraError);
  EXPECT_THROW(project_jacobian(cam500(), Vec3(1, 0, 0.0)), BehindCameraError);
}

TEST(ProjectJacobian, MatchesCentralDifferences) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const Vec3 p(u(rng), u(rng), 2.5 + u(rng));
    Mat23 num;
    for (int c = 0; c < 3; ++c) {
      Vec3 d = Vec3::Zero();
      d[c] = h;
      num.col(c) = (project(cam_skew(), p + d) - project(cam_skew(), p - d)) / (2 * h);
    }
    const Mat23 ana = project_jacobian(cam_skew(), p);
    EXPECT_LT((ana - num).norm() / ana.norm(), 1e-6);
  }
}

TEST(ProjectGaussian, ZeroBlockGivesZeroCovariance) {
  const auto out = project_gaussian(cam500(), single(Vec3(0.1, 0.2, 3), Mat3::Zero()));
  EXPECT_EQ(out[0].cov, Mat2::Zero());
  EXPECT_TRUE(out[0].valid);
}

TEST(ProjectGaussian, IsotropicBlockOnAxis) {
  const double s2 = 1e-4, z = 4.0;
  const auto out = project_gaussian(cam_skew(), single(Vec3(0, 0, z), s2 * Mat3::Identity()));
  const CameraModel c = cam_skew();
  EXPECT_NEAR(out[0].cov(0, 0), c.fx * c.fx * s2 / (z * z), 1e-12);
  EXPECT_NEAR(out[0].cov(1, 1), c.fy * c.fy * s2 / (z * z), 1e-12);
  EXPECT_EQ(out[0].cov(0, 1), 0.0);
}

TEST(ProjectGaussian, CovarianceShrinksQuadraticallyWithDepth) {
  const Mat3 block = (Mat3() << 2e-4, 1e-5, 0, 1e-5, 1e-4, 2e-5, 0, 2e-5, 3e-4).finished();
  const Vec3 p(0.3, -0.2, 2.0);
  const Mat2 near = project_gaussian(cam_skew(), single(p, block))[0].cov;
  const Mat2 far = project_gaussian(cam_skew(), single(2.0 * p, block))[0].cov;
  EXPECT_LT((far * 4.0 - near).cwiseAbs().maxCoeff() / near.norm(), 1e-9);
}

TEST(ProjectGaussian, BehindCameraJointMarkedInvalid) {
  PointCloudGaussian p;
  p.means.resize(2, 3);
  p.means << 0, 0, 2, 0, 0, -1;
  p.cov_blocks = {Mat3::Identity() * 1e-4, Mat3::Identity() * 1e-4};
  const auto out = project_gaussian(cam500(), p);
  EXPECT_TRUE(out[0].valid);
  EXPECT_FALSE(out[1].valid);
}

TEST(ProjectGaussian, MatchesMonteCarlo) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.01);
  const Vec3 p(0.4, -0.3, 2.5);
  const Mat3 block = 1e-4 * Mat3::Identity();
  const Mat2 ana = project_gaussian(cam_skew(), single(p, block))[0].cov;
  const int samples = 100000;
  Vec2 mean = Vec2::Zero();
  Mat2 m2 = Mat2::Zero();
  for (int k = 1; k <= samples; ++k) {
    const Vec2 x = project(cam_skew(), p + Vec3(n(rng), n(rng), n(rng)));
    const Vec2 d = x - mean;
    mean += d / k;
    m2 += d * (x - mean).transpose();
  }
  m2 /= samples - 1;
  EXPECT_LT((ana - m2).norm() / m2.norm(), 0.05);
}

TEST(Canonicalize, PrincipalPointMapsToOrigin) {
  const CameraModel c = cam_skew();
  EXPECT_EQ(canonicalize(c, Vec2(c.cx, c.cy)), Vec2(0, 0));
}

TEST(Canonicalize, RoundTrip) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-500, 1500);
  for (int i = 0; i < 50; ++i) {
    const Vec2 px(u(rng), u(rng));
    EXPECT_LT((decanonicalize(cam_skew(), canonicalize(cam_skew(), px)) - px).norm(), 1e-12 * 1e3);
  }
}

TEST(Canonicalize, SameRayThroughDifferentIntrinsicsAgrees) {
  const Vec3 ray(0.21, -0.13, 1.0);
  const Vec2 a = canonicalize(cam500(), project(cam500(), 3.0 * ray));
  const Vec2 b = canonicalize(cam_skew(), project(cam_skew(), 1.7 * ray));
  EXPECT_LT((a - b).norm(), 1e-9);
  EXPECT_LT((a - kCanonicalFocal * ray.head<2>()).norm(), 1e-9);
}

TEST(CameraModel, RejectsNonPositiveFocal) {
  CameraModel c;
  c.fx = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}
