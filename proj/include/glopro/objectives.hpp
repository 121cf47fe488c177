#pragma once

// Training-objective terms as plain evaluatable functions.
//
// Conventions: nll drops the 1/2 factor and the normalising constant, i.e.
// sum_i e_i^2 / var_i + log var_i. The KL term is the exact Gaussian KL
// divergence (it keeps its 1/2), so identical distributions give 0 and unit
// covariances 1 px apart give 0.5.

#include <Eigen/Core>
#include <Eigen/Cholesky>

#include <cmath>
#include <span>
#include <vector>

#include "glopro/body_model.hpp"
#include "glopro/errors.hpp"
#include "glopro/projection.hpp"
#include "glopro/prob_state.hpp"

namespace glopro {

struct LossWeights {
  double kl = 1.0;
  double rp = 1.0;
  double beta = 0.001;

  void validate() const {
    for (double w : {kl, rp, beta})
      if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and >= 0");
  }
};

/// Gaussian surrogate for a keypoint density.
struct Joint2DTarget {
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity();
};

inline double nll(const GaussianBodyState& s, const HumanState& gt) {
  const ErrorVec e = boxminus(gt, s.mean);
  return (e.array().square() / s.var.array() + s.var.array().log()).sum();
}

/// KL(N(mu_p, S_p) || N(mu_q, S_q)) in 2D.
inline double gaussian_kl(const Vec2& mu_p, const Mat2& cov_p, const Vec2& mu_q, const Mat2& cov_q) {
  const Eigen::LLT<Mat2> q(cov_q);
  if (q.info() != Eigen::Success || !(cov_q.determinant() > 0.0)) throw LossError("KL: singular target covariance");
  const double det_p = cov_p.determinant();
  if (!(det_p > 0.0)) throw LossError("KL: singular predicted covariance");
  const Vec2 d = mu_q - mu_p;
  const double trace = q.solve(cov_p).trace();
  const double maha = d.dot(q.solve(d));
  return 0.5 * (trace + maha - 2.0 + std::log(cov_q.determinant() / det_p));
}

/// Sum over valid joints of KL(predicted || target).
inline double kl_reprojection(std::span<const Joint2DGaussian> pred, std::span<const Joint2DTarget> tgt) {
  if (pred.size() != tgt.size()) throw LossError("kl_reprojection: joint count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i].valid) sum += gaussian_kl(pred[i].mean, pred[i].cov, tgt[i].mean, tgt[i].cov);
  return sum;
}

/// Sum over valid joints of squared pixel distance between means.
inline double rp(std::span<const Joint2DGaussian> pred, std::span<const Joint2DTarget> tgt) {
  if (pred.size() != tgt.size()) throw LossError("rp: joint count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i].valid) sum += (pred[i].mean - tgt[i].mean).squaredNorm();
  return sum;
}

inline double beta_reg(const ShapeVec& beta) { return beta.squaredNorm(); }

inline double total(const GaussianBodyState& s, const HumanState& gt, std::span<const Joint2DGaussian> pred2d,
                    std::span<const Joint2DTarget> tgt2d, const LossWeights& w = {}) {
  w.validate();
  return nll(s, gt) + w.kl * kl_reprojection(pred2d, tgt2d) + w.rp * rp(pred2d, tgt2d) + w.beta * beta_reg(s.mean.beta);
}

/// Targets centred on projected ground-truth joints with isotropic sigma_px.
inline std::vector<Joint2DTarget> gaussian_targets(const CameraModel& cam, const Points& gt_joints_camera,
                                                   double sigma_px = 5.0) {
  std::vector<Joint2DTarget> out(gt_joints_camera.rows());
  for (Eigen::Index i = 0; i < gt_joints_camera.rows(); ++i) {
    out[i].mean = project(cam, gt_joints_camera.row(i).transpose());
    out[i].cov = sigma_px * sigma_px * Mat2::Identity();
  }
  return out;
}

}  // namespace glopro
