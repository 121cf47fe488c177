#pragma once

// Evaluation metrics (positions in metres in, millimetres out), per-joint
// chi-square consistency, and the posture correlation diagnostic.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "glopro/body_model.hpp"
#include "glopro/errors.hpp"
#include "glopro/prob_state.hpp"

namespace glopro {

inline constexpr double kMillimetres = 1000.0;

/// Two-decimal millimetre formatting used in reports ("114.48").
inline std::string format_mm(double mm) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", mm);
  return buf;
}

/// Mean Euclidean distance between corresponding points, in mm.
inline double mean_point_error_mm(const Points& pred, const Points& gt) {
  if (pred.rows() != gt.rows() || pred.rows() == 0) throw ConfigError("metric: point counts differ or are zero");
  return (pred - gt).rowwise().norm().mean() * kMillimetres;
}

inline double g_mpjpe(const Points& pred_joints_w, const Points& gt_joints_w) {
  return mean_point_error_mm(pred_joints_w, gt_joints_w);
}

inline double g_pve(const Points& pred_vertices_w, const Points& gt_vertices_w) {
  return mean_point_error_mm(pred_vertices_w, gt_vertices_w);
}

/// Optimal similarity (or rigid, with_scale = false) alignment of pred onto gt.
inline Points procrustes_align(const Points& pred, const Points& gt, bool with_scale = true) {
  if (pred.rows() != gt.rows()) throw AlignmentError("procrustes: point counts differ");
  if (pred.rows() < 3) throw AlignmentError("procrustes: need at least 3 points");
  const Eigen::Matrix3Xd src = pred.transpose();
  const Eigen::Matrix3Xd dst = gt.transpose();
  for (const auto* m : {&src, &dst}) {
    const Eigen::Matrix3Xd centred = m->colwise() - m->rowwise().mean();
    const Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centred);
    const Vec3 sv = svd.singularValues();
    if (!(sv[0] > 0.0) || sv[1] <= 1e-9 * sv[0]) throw AlignmentError("procrustes: degenerate (collinear) points");
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, with_scale);
  const Eigen::Matrix3Xd aligned = (t.topLeftCorner<3, 3>() * src).colwise() + t.topRightCorner<3, 1>();
  return aligned.transpose();
}

inline double pa_mpjpe(const Points& pred_joints, const Points& gt_joints, bool with_scale = true) {
  return mean_point_error_mm(procrustes_align(pred_joints, gt_joints, with_scale), gt_joints);
}

/// Mean norm of the second difference over interior frames and joints, mm/s^2.
inline double g_accel(std::span<const Points> joints_w, double dt) {
  if (joints_w.size() < 3) throw ConfigError("g_accel: need at least 3 frames");
  if (!(dt > 0.0)) throw ConfigError("g_accel: dt must be positive");
  double sum = 0.0;
  long count = 0;
  for (std::size_t k = 1; k + 1 < joints_w.size(); ++k) {
    const Points acc = (joints_w[k + 1] - 2.0 * joints_w[k] + joints_w[k - 1]) / (dt * dt);
    sum += acc.rowwise().norm().sum();
    count += acc.rows();
  }
  return sum / static_cast<double>(count) * kMillimetres;
}

struct Chi2Samples {
  std::vector<double> values;  ///< one per evaluated joint
  int skipped = 0;             ///< joints whose regularized block was not PD
};

/// Per-joint NEES with 3 DOF: e^T (S + 1e-9 I)^-1 e.
inline Chi2Samples chi2_consistency(const PointCloudGaussian& pred, const Points& gt) {
  if (pred.means.rows() != gt.rows()) throw ConfigError("chi2: joint counts differ");
  Chi2Samples out;
  out.values.reserve(gt.rows());
  for (Eigen::Index i = 0; i < gt.rows(); ++i) {
    const Eigen::LLT<Mat3> llt(pred.cov_blocks[i] + 1e-9 * Mat3::Identity());
    if (llt.info() != Eigen::Success) {
      ++out.skipped;
      continue;
    }
    const Vec3 e = (pred.means.row(i) - gt.row(i)).transpose();
    out.values.push_back(e.dot(llt.solve(e)));
  }
  return out;
}

struct Chi2Histogram {
  std::vector<double> bin_edges;  ///< counts.size() + 1 edges; the last bin also takes values beyond its upper edge
  std::vector<long> counts;
  std::vector<double> expected;   ///< chi^2(dof) expected counts per bin
};

struct Chi2Summary {
  double mean_nees = 0.0;
  long samples = 0;
  int skipped = 0;
  Chi2Histogram histogram;
};

inline Chi2Summary summarize_chi2(std::span<const double> values, int skipped = 0, int dof = 3, double max_edge = 15.0,
                                  int bins = 30) {
  Chi2Summary s;
  s.samples = static_cast<long>(values.size());
  s.skipped = skipped;
  for (double v : values) s.mean_nees += v;
  if (!values.empty()) s.mean_nees /= static_cast<double>(values.size());
  auto& h = s.histogram;
  const double width = max_edge / bins;
  for (int b = 0; b <= bins; ++b) h.bin_edges.push_back(b * width);
  h.counts.assign(bins, 0);
  for (double v : values) {
    const int b = std::min(bins - 1, std::max(0, static_cast<int>(v / width)));
    ++h.counts[b];
  }
  const boost::math::chi_squared dist(dof);
  for (int b = 0; b < bins; ++b) {
    const double lo = boost::math::cdf(dist, h.bin_edges[b]);
    const double hi = b + 1 == bins ? 1.0 : boost::math::cdf(dist, h.bin_edges[b + 1]);
    h.expected.push_back((hi - lo) * static_cast<double>(values.size()));
  }
  return s;
}

/// Chordal mean of unit quaternions (sign-aligned to the first sample).
inline Quat mean_rotation(std::span<const Quat> qs) {
  Eigen::Vector4d acc = Eigen::Vector4d::Zero();
  const Eigen::Vector4d ref = qs.front().coeffs();
  for (const auto& q : qs) {
    const Eigen::Vector4d c = q.coeffs();
    acc += c.dot(ref) < 0.0 ? Eigen::Vector4d(-c) : c;
  }
  return Quat(acc.head<3>(), acc[3]);
}

/// Absolute Pearson correlation of the 69 posture error coordinates, taken
/// about the per-joint mean rotation. Constant coordinates get zero
/// off-diagonal entries; the diagonal is always 1.
inline Eigen::MatrixXd posture_correlation(std::span<const HumanState> states) {
  if (states.size() < 2) throw ConfigError("posture_correlation: need at least 2 samples");
  const int d = 3 * kPostureJoints;
  const auto n = static_cast<Eigen::Index>(states.size());
  std::array<Quat, kPostureJoints> mean{};
  std::vector<Quat> buf(states.size());
  for (int j = 0; j < kPostureJoints; ++j) {
    for (std::size_t i = 0; i < states.size(); ++i) buf[i] = states[i].theta[j];
    mean[j] = mean_rotation(buf);
  }
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < kPostureJoints; ++j) x.block<1, 3>(i, 3 * j) = quat_error(mean[j], states[i].theta[j]).transpose();
  const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n - 1);
  Eigen::MatrixXd corr = Eigen::MatrixXd::Zero(d, d);
  for (int a = 0; a < d; ++a) {
    corr(a, a) = 1.0;
    for (int b = a + 1; b < d; ++b) {
      const double denom = std::sqrt(cov(a, a) * cov(b, b));
      const double c = denom > 0.0 ? std::min(1.0, std::abs(cov(a, b)) / denom) : 0.0;
      corr(a, b) = corr(b, a) = c;
    }
  }
  return corr;
}

/// Aggregate evaluation for one tracked sequence.
struct MetricsReport {
  double g_mpjpe = 0.0;   ///< mm
  double pa_mpjpe = 0.0;  ///< mm
  double g_pve = 0.0;     ///< mm
  double g_accel = 0.0;   ///< mm/s^2
  double mean_nees = 0.0;
  Chi2Histogram nees_histogram;
  long nees_samples = 0;
  int nees_skipped = 0;
  std::vector<int> frames;
  std::vector<double> frame_g_mpjpe;
  std::vector<double> frame_pa_mpjpe;
  std::vector<double> frame_g_pve;
  std::vector<double> frame_nees;
};

}  // namespace glopro
