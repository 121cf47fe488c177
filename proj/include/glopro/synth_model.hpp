#pragma once

// Procedural capsule-limb body with SMPL topology (24 joints). Used whenever
// no licensed model asset is available.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "glopro/body_model.hpp"

namespace glopro {

/// SMPL kinematic tree.
inline const std::vector<int>& smpl_parents() {
  static const std::vector<int> parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8,
                                           9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
  return parents;
}

namespace detail {

// Uniform in [0, 1) from raw mt19937_64 output; avoids the implementation-defined
// distributions so generated models are identical across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

struct Segment {
  int owner;      // joint whose frame carries the segment
  int end_joint;  // child joint at the far end, or -1 for a tip
  Vec3 start;
  Vec3 end;
  double radius;
};

}  // namespace detail

/// Deterministic synthetic body model with `n_vertices` vertices (>= 24).
/// `extra_joints` > 0 adds an extended regressor: the 24 kinematic joints
/// regressed from posed vertices followed by single-vertex landmarks.
inline BodyModel synth_model(int n_vertices, std::uint64_t seed, int extra_joints = 0) {
  if (n_vertices < kJoints) throw ConfigError("synth_model: n_vertices must be >= 24");
  const auto& parents = smpl_parents();

  // Rest joint locations in metres, y up, pelvis at the origin.
  const std::array<Vec3, kJoints> joints = {
      Vec3(0.0, 0.0, 0.0),      Vec3(0.08, -0.08, 0.0),   Vec3(-0.08, -0.08, 0.0),  Vec3(0.0, 0.10, -0.02),
      Vec3(0.10, -0.48, 0.0),   Vec3(-0.10, -0.48, 0.0),  Vec3(0.0, 0.23, -0.02),   Vec3(0.10, -0.88, -0.03),
      Vec3(-0.10, -0.88, -0.03), Vec3(0.0, 0.29, -0.01),  Vec3(0.11, -0.94, 0.10),  Vec3(-0.11, -0.94, 0.10),
      Vec3(0.0, 0.50, -0.02),   Vec3(0.07, 0.40, -0.02),  Vec3(-0.07, 0.40, -0.02), Vec3(0.0, 0.60, 0.03),
      Vec3(0.18, 0.42, -0.02),  Vec3(-0.18, 0.42, -0.02), Vec3(0.44, 0.42, -0.03),  Vec3(-0.44, 0.42, -0.03),
      Vec3(0.68, 0.42, -0.02),  Vec3(-0.68, 0.42, -0.02), Vec3(0.76, 0.42, -0.02),  Vec3(-0.76, 0.42, -0.02)};
  auto radius_of = [](int joint) {
    switch (joint) {
      case 0: case 3: case 6: case 9: return 0.12;
      case 1: case 2: return 0.08;
      case 4: case 5: return 0.06;
      case 12: case 15: return 0.08;
      case 13: case 14: return 0.06;
      case 7: case 8: case 10: case 11: return 0.045;
      default: return 0.04;
    }
  };

  std::vector<detail::Segment> segments;
  for (int j = 1; j < kJoints; ++j) {
    const int p = parents[j];
    segments.push_back({p, j, joints[p], joints[j], radius_of(p)});
  }
  // Leaf tips so every joint carries vertices.
  segments.push_back({15, -1, joints[15], joints[15] + Vec3(0.0, 0.18, 0.0), 0.09});
  segments.push_back({22, -1, joints[22], joints[22] + Vec3(0.08, 0.0, 0.0), 0.035});
  segments.push_back({23, -1, joints[23], joints[23] + Vec3(-0.08, 0.0, 0.0), 0.035});
  segments.push_back({10, -1, joints[10], joints[10] + Vec3(0.0, -0.02, 0.09), 0.035});
  segments.push_back({11, -1, joints[11], joints[11] + Vec3(0.0, -0.02, 0.09), 0.035});

  std::mt19937_64 rng(seed);
  const int n = n_vertices;
  const int n_seg = static_cast<int>(segments.size());
  Points tmpl(n, 3);
  Eigen::MatrixXd skin = Eigen::MatrixXd::Zero(n, kJoints);
  std::vector<Vec3> radial(n);
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);

  for (int v = 0; v < n; ++v) {
    const auto& seg = segments[v % n_seg];
    const int m = v / n_seg;
    const double t = std::fmod((m + 0.5) * golden + 0.13 * (v % n_seg), 1.0);
    const double phi = 2.0 * std::numbers::pi * std::fmod(m * golden * golden + detail::unit_uniform(rng) * 0.05, 1.0);
    const double r = seg.radius * (0.9 + 0.2 * detail::unit_uniform(rng));

    const Vec3 axis = (seg.end - seg.start).normalized();
    Vec3 u = axis.cross(Vec3::UnitZ());
    if (u.norm() < 1e-6) u = axis.cross(Vec3::UnitX());
    u.normalize();
    const Vec3 w = axis.cross(u);
    radial[v] = std::cos(phi) * u + std::sin(phi) * w;
    tmpl.row(v) = (seg.start + t * (seg.end - seg.start) + r * radial[v]).transpose();

    double w_end = 0.0, w_parent = 0.0;
    if (seg.end_joint >= 0) w_end = 0.5 * detail::smoothstep((t - 0.8) / 0.2);
    if (parents[seg.owner] >= 0) w_parent = 0.5 * detail::smoothstep((0.2 - t) / 0.2);
    if (w_end > 0.0) skin(v, seg.end_joint) += w_end;
    if (w_parent > 0.0) skin(v, parents[seg.owner]) += w_parent;
    skin(v, seg.owner) += 1.0 - w_end - w_parent;
  }

  // Shape directions: 0 = overall size, 1 = girth, 2..9 smooth random fields.
  Eigen::MatrixXd shape_dirs(3 * n, kShapeDims);
  std::array<Vec3, kShapeDims> freq{};
  std::array<Vec3, kShapeDims> phase{};
  for (int d = 0; d < kShapeDims; ++d)
    for (int c = 0; c < 3; ++c) {
      freq[d][c] = 2.0 + 6.0 * detail::unit_uniform(rng);
      phase[d][c] = 2.0 * std::numbers::pi * detail::unit_uniform(rng);
    }
  for (int v = 0; v < n; ++v) {
    const Vec3 p = tmpl.row(v).transpose();
    shape_dirs.block<3, 1>(3 * v, 0) = 0.05 * p;
    shape_dirs.block<3, 1>(3 * v, 1) = 0.01 * radial[v];
    for (int d = 2; d < kShapeDims; ++d)
      for (int c = 0; c < 3; ++c)
        shape_dirs(3 * v + c, d) = 0.004 * std::sin(freq[d][c] * p[(c + d) % 3] + phase[d][c]);
  }

  // Joint regressor: Gaussian-weighted neighbourhood of each rest joint.
  Eigen::MatrixXd regressor = Eigen::MatrixXd::Zero(kJoints, n);
  for (int j = 0; j < kJoints; ++j) {
    double total = 0.0;
    int nearest = 0;
    double best = 1e300;
    for (int v = 0; v < n; ++v) {
      const double d2 = (tmpl.row(v).transpose() - joints[j]).squaredNorm();
      if (d2 < best) {
        best = d2;
        nearest = v;
      }
      if (d2 < 0.12 * 0.12) {
        const double w = std::exp(-d2 / (2.0 * 0.05 * 0.05));
        regressor(j, v) = w;
        total += w;
      }
    }
    if (total <= 0.0) {
      regressor(j, nearest) = 1.0;
    } else {
      regressor.row(j) /= total;
    }
  }

  Eigen::MatrixXd extra;
  if (extra_joints > 0) {
    extra = Eigen::MatrixXd::Zero(kJoints + extra_joints, n);
    extra.topRows(kJoints) = regressor;
    for (int e = 0; e < extra_joints; ++e) {
      const auto v = static_cast<Eigen::Index>((static_cast<long long>(e) * 7919 + 13) % n);
      extra(kJoints + e, v) = 1.0;
    }
  }
  return BodyModel(std::move(tmpl), std::move(shape_dirs), std::move(regressor), parents, std::move(skin),
                   std::move(extra));
}

}  // namespace glopro
