#pragma once

// Camera/body motion disentanglement. Camera-frame body states are re-expressed
// relative to the most recent human frame H_{k-1}; a predictor extrapolates the
// next state there, and the prediction is mapped back into camera frame C_k.

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "glopro/body_model.hpp"
#include "glopro/errors.hpp"
#include "glopro/geometry.hpp"
#include "glopro/nn.hpp"
#include "glopro/prob_state.hpp"

namespace glopro {

/// One tracked frame: camera pose in the world and the body state in that camera.
struct CameraFrameState {
  double t = 0.0;
  RigidTransform T_WC;
  GaussianBodyState state;

  RigidTransform T_WH() const { return T_WC * state.mean.root(); }
};

/// Body state whose root pose is expressed relative to H_{k-1}, with the full
/// 6x6 root covariance (position, rotation error) in H_{k-1} coordinates.
/// state.var's root entries always equal root_cov's diagonal.
struct BodyFrameState {
  double t = 0.0;
  GaussianBodyState state;
  Mat6 root_cov = Mat6::Identity();

  RigidTransform rel() const { return state.mean.root(); }
};

/// Entries are chronological; the last one (j = 1) is H_{k-1} itself, i.e. the
/// identity transform carrying its transported covariance.
struct BodyFrameHistory {
  std::vector<BodyFrameState> entries;
  RigidTransform T_WH_last;  ///< pose of H_{k-1} in the world

  int size() const { return static_cast<int>(entries.size()); }
  const BodyFrameState& last() const { return entries.back(); }
};

namespace detail {

inline Mat6 diag_root_cov(const ErrorVec& var) {
  Mat6 c = Mat6::Zero();
  c.diagonal() = var.segment<6>(ec::kRootPos);
  return c;
}

/// Covariance of X * T given covariance of T, for a known transform X.
inline Mat6 transport_root_cov(const RigidTransform& x, const Mat6& cov) {
  Mat6 j = Mat6::Zero();
  const Mat3 r = x.q.matrix();
  j.topLeftCorner<3, 3>() = r;
  j.bottomRightCorner<3, 3>() = r;
  Mat6 out = j * cov * j.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace detail

/// Re-expresses a chronological camera-frame history (M >= 2) in H_{k-1}.
/// Camera poses are treated as exact; each entry's root covariance is its own
/// camera-frame covariance transported through the known frame chain.
inline BodyFrameHistory to_body_frame(std::span<const CameraFrameState> history) {
  if (history.size() < 2) throw InsufficientHistoryError("to_body_frame: need at least 2 frames");
  BodyFrameHistory out;
  out.T_WH_last = history.back().T_WH();
  const RigidTransform T_HW = out.T_WH_last.inverse();
  out.entries.reserve(history.size());
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& f = history[i];
    const bool newest = i + 1 == history.size();
    BodyFrameState e;
    e.t = f.t;
    e.state = f.state;
    // T_{H_{k-1} H_{k-j}} = T_{W H_{k-1}}^-1 T_{W C_{k-j}} T_{C_{k-j} H_{k-j}}
    const RigidTransform x = T_HW * f.T_WC;
    e.state.mean.set_root(newest ? RigidTransform::identity() : x * f.state.mean.root());
    e.root_cov = detail::transport_root_cov(x, detail::diag_root_cov(f.state.var));
    e.state.var.segment<6>(ec::kRootPos) = e.root_cov.diagonal();
    out.entries.push_back(std::move(e));
  }
  return out;
}

/// Maps a prediction made in H_{k-1} into camera frame C_k. Cross terms of the
/// transported root covariance are dropped (the state covariance is diagonal).
inline GaussianBodyState to_camera_frame(const BodyFrameState& prediction, const RigidTransform& T_WC_k,
                                         const RigidTransform& T_WH_prev) {
  const RigidTransform x = T_WC_k.inverse() * T_WH_prev;
  GaussianBodyState out = prediction.state;
  out.mean.set_root(x * prediction.rel());
  out.var.segment<6>(ec::kRootPos) = detail::transport_root_cov(x, prediction.root_cov).diagonal();
  return out;
}

/// Default process noise: shape 1e-6, posture 1e-4, root position 1e-3 m^2,
/// root rotation 1e-4.
inline ErrorVec default_process_noise() {
  ErrorVec q;
  q.segment<kShapeDims>(ec::kBeta).setConstant(1e-6);
  q.segment<3 * kPostureJoints>(ec::kTheta).setConstant(1e-4);
  q.segment<3>(ec::kRootPos).setConstant(1e-3);
  q.segment<3>(ec::kRootRot).setConstant(1e-4);
  return q;
}

/// Constant-velocity prediction in H_{k-1}: the next relative root transform
/// repeats the last inter-frame delta (scaled by dt_next / last dt when
/// given); shape and posture carry forward; variances grow by Q.
inline BodyFrameState predict_const_velocity(const BodyFrameHistory& h, const ErrorVec& q,
                                             std::optional<double> dt_next = std::nullopt) {
  if (h.size() < 2) throw InsufficientHistoryError("predict_const_velocity: need at least 2 frames");
  const BodyFrameState& last = h.last();
  const BodyFrameState& prev = h.entries[h.entries.size() - 2];
  RigidTransform delta = prev.rel().inverse();  // T_{H_{k-2} H_{k-1}}
  const double dt_last = last.t - prev.t;
  double dt = dt_last;
  if (dt_next && dt_last > 0.0 && *dt_next != dt_last) {
    const double s = *dt_next / dt_last;
    delta = {s * delta.r, Quat::from_rotation_vector(s * delta.q.rotation_vector())};
    dt = *dt_next;
  }
  BodyFrameState out = last;
  out.t = last.t + dt;
  out.state.mean.set_root(delta);
  out.state.var = last.state.var + q;
  out.root_cov = last.root_cov;
  out.root_cov.diagonal() += q.segment<6>(ec::kRootPos);
  out.state.var.segment<6>(ec::kRootPos) = out.root_cov.diagonal();
  return out;
}

/// GRU feature layout per history step (170 entries, chronological):
///   [ beta (10) | Im(theta_j) canonical (69) | rel position (3) |
///     Im(rel rotation) canonical (3) | log var (85) ]
/// Decoder output (170): [ mean delta in error coordinates (85) | log var (85) ],
/// applied at the newest entry (identity root).
inline constexpr int kGruFeatureDims = 2 * kErrorDims;

inline Eigen::VectorXd gru_features(const BodyFrameState& e) {
  Eigen::VectorXd x(kGruFeatureDims);
  const HumanState& m = e.state.mean;
  x.segment<kShapeDims>(ec::kBeta) = m.beta;
  for (int j = 0; j < kPostureJoints; ++j) x.segment<3>(ec::theta(j)) = m.theta[j].canonical().a();
  x.segment<3>(ec::kRootPos) = m.r_CH;
  x.segment<3>(ec::kRootRot) = m.q_CH.canonical().a();
  x.segment<kErrorDims>(kErrorDims) = e.state.var.array().log().matrix();
  return x;
}

inline BodyFrameState predict_gru(const BodyFrameHistory& h, GruNetwork& net,
                                  std::optional<double> dt_next = std::nullopt) {
  const auto& w = net.weights();
  if (w.input_dim != kGruFeatureDims || w.output_dim() != kGruFeatureDims)
    throw WeightsError("predict_gru: weights must map 170 features to 170 outputs");
  if (h.size() < 1) throw InsufficientHistoryError("predict_gru: empty history");
  std::vector<Eigen::VectorXd> seq;
  seq.reserve(h.entries.size());
  for (const auto& e : h.entries) seq.push_back(gru_features(e));
  const Eigen::VectorXd y = net.run(seq);

  const BodyFrameState& last = h.last();
  const double dt = h.size() >= 2 ? last.t - h.entries[h.entries.size() - 2].t : 0.0;
  BodyFrameState out;
  out.t = last.t + dt_next.value_or(dt);
  ErrorVec delta = y.head<kErrorDims>();
  // Keep decoded rotation errors inside the retraction domain.
  auto clamp_rotation = [&](int offset) {
    const double n = delta.segment<3>(offset).norm();
    if (n >= 1.0) delta.segment<3>(offset) *= 0.999 / n;
  };
  for (int j = 0; j < kPostureJoints; ++j) clamp_rotation(ec::theta(j));
  clamp_rotation(ec::kRootRot);
  out.state.mean = boxplus(last.state.mean, delta);
  out.state.var = y.tail<kErrorDims>().array().exp().matrix();
  out.root_cov = detail::diag_root_cov(out.state.var);
  return out;
}

/// Pluggable predictor; instances may keep recurrent state and are driven by
/// one tracker at a time.
class MotionPredictor {
 public:
  virtual ~MotionPredictor() = default;
  virtual BodyFrameState predict(const BodyFrameHistory& h, std::optional<double> dt_next) = 0;
};

class ConstVelocityPredictor final : public MotionPredictor {
 public:
  explicit ConstVelocityPredictor(ErrorVec q = default_process_noise()) : q_(q) {}
  BodyFrameState predict(const BodyFrameHistory& h, std::optional<double> dt_next) override {
    return predict_const_velocity(h, q_, dt_next);
  }
  const ErrorVec& process_noise() const { return q_; }

 private:
  ErrorVec q_;
};

class GruPredictor final : public MotionPredictor {
 public:
  explicit GruPredictor(GruWeights w) : net_(std::move(w)) {
    if (net_.weights().input_dim != kGruFeatureDims || net_.weights().output_dim() != kGruFeatureDims)
      throw WeightsError("GruPredictor: weights must map 170 features to 170 outputs");
  }
  BodyFrameState predict(const BodyFrameHistory& h, std::optional<double> dt_next) override {
    return predict_gru(h, net_, dt_next);
  }

 private:
  GruNetwork net_;
};

}  // namespace glopro
