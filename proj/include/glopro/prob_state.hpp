#pragma once

// Gaussian body state with diagonal error-state covariance, and linear
// propagation of that uncertainty to camera-frame vertices and joints.

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <random>
#include <thread>
#include <vector>

#include "glopro/body_model.hpp"

namespace glopro {

struct GaussianBodyState {
  HumanState mean;
  ErrorVec var = ErrorVec::Ones();  ///< error-state variances, all > 0

  bool valid() const { return var.allFinite() && (var.array() > 0.0).all(); }
};

/// Per-point Gaussians; only the 3x3 diagonal blocks of the full covariance.
struct PointCloudGaussian {
  Points means;
  std::vector<Mat3> cov_blocks;

  int size() const { return static_cast<int>(means.rows()); }
};

/// J diag(var) J^T for one 3x85 block, symmetric by construction.
inline Mat3 propagate_block(const PointJacobian& j, const ErrorVec& var) {
  const Eigen::Matrix<double, 3, kErrorDims> jw = j * var.asDiagonal();
  Mat3 c;
  for (int r = 0; r < 3; ++r)
    for (int s = r; s < 3; ++s) {
      c(r, s) = jw.row(r).dot(j.row(s));
      c(s, r) = c(r, s);
    }
  return c;
}

/// Vertex distribution in the camera frame. With threads > 1 the vertex range
/// is split into contiguous chunks; each block is independent, so the result
/// is identical for any thread count.
inline PointCloudGaussian propagate_vertices(const BodyModel& model, const GaussianBodyState& s,
                                             int threads = 1) {
  const Kinematics kin = model.kinematics(s.mean);
  const int n = model.num_vertices();
  PointCloudGaussian out;
  out.means.resize(n, 3);
  out.cov_blocks.resize(n);
  const Mat3 r_ch = s.mean.q_CH.matrix();
  for (int v = 0; v < n; ++v) out.means.row(v) = (r_ch * model.posed_vertex(kin, v) + s.mean.r_CH).transpose();

  threads = std::max(1, threads);
  if (threads == 1) {
    for_each_vertex_jacobian(model, s.mean, kin,
                             [&](int v, const PointJacobian& j) { out.cov_blocks[v] = propagate_block(j, s.var); });
    return out;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      const int lo = t * chunk;
      const int hi = std::min(n, lo + chunk);
      for_each_vertex_jacobian_range(model, s.mean, kin, lo, hi, [&](int v, const PointJacobian& j) {
        out.cov_blocks[v] = propagate_block(j, s.var);
      });
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

/// Kinematic joint distribution in the camera frame.
inline PointCloudGaussian propagate_joints(const BodyModel& model, const GaussianBodyState& s) {
  const Jacobian j = joint_jacobian(model, s.mean);
  PointCloudGaussian out;
  out.means = joints_camera(model, s.mean);
  out.cov_blocks.resize(model.num_joints());
  for (int k = 0; k < model.num_joints(); ++k) out.cov_blocks[k] = propagate_block(j.middleRows<3>(3 * k), s.var);
  return out;
}

/// Extended joint set distribution (requires an extra regressor).
inline PointCloudGaussian propagate_extra_joints(const BodyModel& model, const GaussianBodyState& s) {
  const Jacobian j = extra_joint_jacobian(model, s.mean);
  PointCloudGaussian out;
  out.means = extra_joints_camera(model, s.mean);
  out.cov_blocks.resize(model.num_extra_joints());
  for (int k = 0; k < model.num_extra_joints(); ++k)
    out.cov_blocks[k] = propagate_block(j.middleRows<3>(3 * k), s.var);
  return out;
}

/// Draws one error vector from N(0, diag(var)). Rotation triplets landing
/// outside the retraction domain (|e| >= 1) are redrawn.
template <typename Rng>
ErrorVec sample_error(const ErrorVec& var, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ErrorVec d;
  for (int i = 0; i < kErrorDims; ++i) d[i] = std::sqrt(var[i]) * normal(rng);
  auto redraw_rotation = [&](int offset) {
    while (d.segment<3>(offset).squaredNorm() >= 1.0)
      for (int c = 0; c < 3; ++c) d[offset + c] = std::sqrt(var[offset + c]) * normal(rng);
  };
  for (int j = 0; j < kPostureJoints; ++j) redraw_rotation(ec::theta(j));
  redraw_rotation(ec::kRootRot);
  return d;
}

/// n states drawn in error coordinates and retracted onto the manifold.
inline std::vector<HumanState> sample(const GaussianBodyState& s, std::uint64_t seed, int n) {
  if (n < 1) throw ConfigError("sample: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<HumanState> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(boxplus(s.mean, sample_error(s.var, rng)));
  return out;
}

}  // namespace glopro
