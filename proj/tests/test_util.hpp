#pragma once

// Shared generators and finite-difference oracles for the test suites.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "glopro/body_model.hpp"
#include "glopro/geometry.hpp"
#include "glopro/prob_state.hpp"

namespace glopro::testing {

inline Quat random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Quat(Vec3(n(rng), n(rng), n(rng)), n(rng));
}

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline RigidTransform random_transform(std::mt19937_64& rng, double scale = 2.0) {
  return {random_vec(rng, scale), random_quat(rng)};
}

/// Random plausible body state: moderate joint rotations, arbitrary root.
inline HumanState random_state(std::mt19937_64& rng, double joint_angle = 0.6) {
  std::normal_distribution<double> n(0.0, 1.0);
  HumanState s;
  for (int i = 0; i < kShapeDims; ++i) s.beta[i] = n(rng);
  for (auto& q : s.theta) q = Quat::from_rotation_vector(joint_angle * Vec3(n(rng), n(rng), n(rng)) / std::sqrt(3.0));
  s.r_CH = Vec3(0.3 * n(rng), 0.3 * n(rng), 3.0 + 0.3 * n(rng));
  s.q_CH = random_quat(rng);
  return s;
}

/// Central differences of a point-valued map on the 85-dim error state.
inline Jacobian numeric_jacobian(const std::function<Eigen::VectorXd(const HumanState&)>& f, const HumanState& x,
                                 double step = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Jacobian j(f0.size(), kErrorDims);
  for (int i = 0; i < kErrorDims; ++i) {
    ErrorVec d = ErrorVec::Zero();
    d[i] = step;
    j.col(i) = (f(boxplus(x, d)) - f(boxplus(x, -d))) / (2.0 * step);
  }
  return j;
}

inline Eigen::VectorXd flatten(const Points& p) {
  return Eigen::Map<const Eigen::VectorXd>(p.data(), p.size());
}

/// ||a - b|| / max(||b||, floor).
inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-12) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

/// Empirical 3x3 covariance blocks of points across samples.
inline std::vector<Mat3> empirical_blocks(const std::vector<Points>& samples) {
  const auto m = samples.front().rows();
  std::vector<Mat3> cov(m, Mat3::Zero());
  std::vector<Vec3> mean(m, Vec3::Zero());
  for (const auto& s : samples)
    for (Eigen::Index i = 0; i < m; ++i) mean[i] += s.row(i).transpose();
  for (auto& v : mean) v /= static_cast<double>(samples.size());
  for (const auto& s : samples)
    for (Eigen::Index i = 0; i < m; ++i) {
      const Vec3 d = s.row(i).transpose() - mean[i];
      cov[i] += d * d.transpose();
    }
  for (auto& c : cov) c /= static_cast<double>(samples.size() - 1);
  return cov;
}

/// Streaming Monte-Carlo covariance blocks of f(mean [+] delta), delta ~ N(0, var).
/// Welford accumulation, so n can be large without storing samples.
inline std::vector<Mat3> monte_carlo_blocks(const std::function<Points(const HumanState&)>& f,
                                            const GaussianBodyState& s, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Points first = f(s.mean);
  const auto m = first.rows();
  std::vector<Vec3> mean(m, Vec3::Zero());
  std::vector<Mat3> m2(m, Mat3::Zero());
  for (int k = 1; k <= n; ++k) {
    const Points p = f(boxplus(s.mean, sample_error(s.var, rng)));
    for (Eigen::Index i = 0; i < m; ++i) {
      const Vec3 x = p.row(i).transpose();
      const Vec3 d = x - mean[i];
      mean[i] += d / k;
      m2[i] += d * (x - mean[i]).transpose();
    }
  }
  for (auto& c : m2) c /= static_cast<double>(n - 1);
  return m2;
}

/// Largest per-block relative Frobenius error, ignoring blocks whose
/// reference norm is below `floor` times the largest reference norm.
inline double max_block_rel_err(const std::vector<Mat3>& got, const std::vector<Mat3>& ref, double floor = 1e-3) {
  double top = 0.0;
  for (const auto& r : ref) top = std::max(top, r.norm());
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (ref[i].norm() > floor * top) worst = std::max(worst, (got[i] - ref[i]).norm() / ref[i].norm());
  return worst;
}

}  // namespace glopro::testing
