#pragma once

// Fusion of image- and motion-based priors: an elementwise information-form
// Kalman update in error coordinates, plus a pluggable residual on the mean.

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <optional>
#include <utility>

#include "glopro/body_model.hpp"
#include "glopro/errors.hpp"
#include "glopro/nn.hpp"
#include "glopro/prob_state.hpp"

namespace glopro {

/// Residual on the fused mean: (image prior, motion prior, Kalman mean) -> correction.
using ResidualFn = std::function<ErrorVec(const GaussianBodyState&, const GaussianBodyState&, const HumanState&)>;

enum class LinearizationPoint { kImage, kMotion };

struct FusionConfig {
  ResidualFn residual;                   ///< empty means zero residual
  std::optional<double> gate_threshold;  ///< Mahalanobis gate; unset disables it
  LinearizationPoint linearize_at = LinearizationPoint::kImage;
};

struct GateResult {
  bool accept = true;
  double statistic = 0.0;
};

/// statistic = sum_i d_i^2 / (var_I,i + var_M,i) with d = mot [-] img.
inline GateResult mahalanobis_gate(const GaussianBodyState& img, const GaussianBodyState& mot, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("mahalanobis_gate: threshold must be > 0");
  const ErrorVec d = boxminus(mot.mean, img.mean);
  const double stat = (d.array().square() / (img.var + mot.var).array()).sum();
  return {stat <= threshold, stat};
}

namespace detail {

inline void check_finite(const GaussianBodyState& s, const char* which) {
  bool ok = s.var.allFinite() && s.mean.beta.allFinite() && s.mean.r_CH.allFinite() &&
            s.mean.q_CH.coeffs().allFinite();
  for (const auto& q : s.mean.theta) ok = ok && q.coeffs().allFinite();
  if (!ok) throw FusionError(std::string("fuse: non-finite ") + which + " prior");
  if (!(s.var.array() > 0.0).all()) throw FusionError(std::string("fuse: non-positive variance in ") + which + " prior");
}

}  // namespace detail

inline GaussianBodyState fuse(const GaussianBodyState& img, const GaussianBodyState& mot, const FusionConfig& cfg = {}) {
  detail::check_finite(img, "image");
  detail::check_finite(mot, "motion");
  if (cfg.gate_threshold && !mahalanobis_gate(img, mot, *cfg.gate_threshold).accept) return img;

  const bool at_image = cfg.linearize_at == LinearizationPoint::kImage;
  const GaussianBodyState& base = at_image ? img : mot;
  const GaussianBodyState& other = at_image ? mot : img;

  const ErrorVec d = boxminus(other.mean, base.mean);
  const ErrorVec info = img.var.cwiseInverse() + mot.var.cwiseInverse();
  GaussianBodyState out;
  out.var = info.cwiseInverse();
  const ErrorVec step = out.var.cwiseProduct(other.var.cwiseInverse()).cwiseProduct(d);
  out.mean = boxplus(base.mean, step);
  if (cfg.residual) {
    const ErrorVec r = cfg.residual(img, mot, out.mean);
    if (!r.allFinite()) throw FusionError("fuse: residual returned non-finite values");
    out.mean = boxplus(base.mean, step + r);
  }
  return out;
}

/// Residual backed by an MLP on [kalman step from image mean (85) | log var_I (85) | log var_M (85)].
inline ResidualFn mlp_residual(Mlp mlp) {
  if (mlp.input_dim() != 3 * kErrorDims || mlp.output_dim() != kErrorDims)
    throw WeightsError("residual MLP must map 255 inputs to 85 outputs");
  return [net = std::move(mlp)](const GaussianBodyState& img, const GaussianBodyState& mot, const HumanState& fused) {
    Eigen::VectorXd x(3 * kErrorDims);
    x.head<kErrorDims>() = boxminus(fused, img.mean);
    x.segment<kErrorDims>(kErrorDims) = img.var.array().log().matrix();
    x.tail<kErrorDims>() = mot.var.array().log().matrix();
    return ErrorVec(net(x));
  };
}

}  // namespace glopro
