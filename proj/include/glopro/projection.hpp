#pragma once

// Pinhole projection of 3D joint Gaussians into image-space Gaussians.

#include <Eigen/Core>

#include <vector>

#include "glopro/errors.hpp"
#include "glopro/geometry.hpp"
#include "glopro/prob_state.hpp"

namespace glopro {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Focal length (pixels) of the canonical virtual camera.
inline constexpr double kCanonicalFocal = 1000.0;

struct CameraModel {
  double fx = 1000.0, fy = 1000.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  double z_min = 0.05;  ///< metres; points at or in front of this depth are rejected

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera: fx and fy must be positive");
  }
};

struct Joint2DGaussian {
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Zero();
  bool valid = true;  ///< false when the 3D point was behind the camera
};

inline void check_depth(const CameraModel& cam, const Vec3& p) {
  if (!(p.z() > cam.z_min)) throw BehindCameraError("project: point depth below z_min");
}

inline Vec2 project(const CameraModel& cam, const Vec3& p) {
  check_depth(cam, p);
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

inline Mat23 project_jacobian(const CameraModel& cam, const Vec3& p) {
  check_depth(cam, p);
  const double iz = 1.0 / p.z();
  Mat23 j;
  j << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz,
       0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  return j;
}

/// Per-joint projection; joints behind the camera come back with valid = false.
inline std::vector<Joint2DGaussian> project_gaussian(const CameraModel& cam, const PointCloudGaussian& joints) {
  std::vector<Joint2DGaussian> out(joints.size());
  for (int i = 0; i < joints.size(); ++i) {
    const Vec3 p = joints.means.row(i).transpose();
    if (!(p.z() > cam.z_min)) {
      out[i].valid = false;
      continue;
    }
    const Mat23 j = project_jacobian(cam, p);
    out[i].mean = project(cam, p);
    const Mat2 c = j * joints.cov_blocks[i] * j.transpose();
    out[i].cov = 0.5 * (c + c.transpose());
  }
  return out;
}

/// Pixel coordinates re-expressed in a centred virtual camera with focal f0.
inline Vec2 canonicalize(const CameraModel& cam, const Vec2& px, double f0 = kCanonicalFocal) {
  return {f0 * (px.x() - cam.cx) / cam.fx, f0 * (px.y() - cam.cy) / cam.fy};
}

inline Vec2 decanonicalize(const CameraModel& cam, const Vec2& canon, double f0 = kCanonicalFocal) {
  return {canon.x() * cam.fx / f0 + cam.cx, canon.y() * cam.fy / f0 + cam.cy};
}

}  // namespace glopro
