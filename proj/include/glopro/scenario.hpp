#pragma once

// Synthetic sequences: ground-truth body and camera trajectories plus a
// pseudo-detector that emits noisy Gaussian observations of the body state.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "glopro/body_model.hpp"
#include "glopro/errors.hpp"
#include "glopro/geometry.hpp"
#include "glopro/prob_state.hpp"

namespace glopro {

enum class BodyTrajectory { kStatic, kWalk, kSinusoidalJoints };
enum class CameraTrajectory { kStatic, kOrbit, kLinear };
enum class OcclusionMode { kFull, kPartial };

struct OcclusionWindow {
  int first = 0;  ///< inclusive frame index
  int last = 0;   ///< inclusive frame index
  OcclusionMode mode = OcclusionMode::kFull;
  std::vector<int> dims;  ///< masked error dimensions (partial mode)
};

/// Default observation noise: shape 1e-2, posture 1e-3, root position 1e-4 m^2,
/// root rotation 1e-4.
inline ErrorVec default_observation_noise() {
  ErrorVec r;
  r.segment<kShapeDims>(ec::kBeta).setConstant(1e-2);
  r.segment<3 * kPostureJoints>(ec::kTheta).setConstant(1e-3);
  r.segment<3>(ec::kRootPos).setConstant(1e-4);
  r.segment<3>(ec::kRootRot).setConstant(1e-4);
  return r;
}

struct ScenarioConfig {
  BodyTrajectory body = BodyTrajectory::kWalk;
  CameraTrajectory camera = CameraTrajectory::kOrbit;
  int frames = 120;
  double frame_rate = 30.0;
  double walk_speed = 1.2;            ///< m/s
  ErrorVec noise = default_observation_noise();  ///< R, drawn noise variances
  double reported_var_scale = 1.0;    ///< detector reports var = scale * R (1 = calibrated)
  std::vector<OcclusionWindow> occlusions;
  double kappa = 10.0;                ///< variance inflation on partially occluded dims
  std::uint64_t seed = 0;
  std::uint64_t sequence_index = 0;   ///< RNG stream is seed ^ sequence_index

  void validate() const {
    if (frames < 1) throw ConfigError("scenario: frames must be >= 1");
    if (!(frame_rate > 0.0)) throw ConfigError("scenario: frame_rate must be > 0");
    if (!(kappa >= 1.0)) throw ConfigError("scenario: kappa must be >= 1");
    if (!(reported_var_scale > 0.0)) throw ConfigError("scenario: reported_var_scale must be > 0");
    if (!(noise.array() >= 0.0).all() || !noise.allFinite()) throw ConfigError("scenario: noise must be finite and >= 0");
    for (const auto& w : occlusions) {
      if (w.first < 0 || w.last < w.first || w.last >= frames)
        throw ConfigError("scenario: occlusion window outside the sequence");
      for (int d : w.dims)
        if (d < 0 || d >= kErrorDims) throw ConfigError("scenario: occlusion dim out of range");
    }
  }
};

/// Per-error-dimension visibility (1 = visible).
using VisibilityMask = Eigen::Matrix<std::uint8_t, kErrorDims, 1>;

struct SequenceFrame {
  int index = 0;
  double t = 0.0;
  RigidTransform T_WC;
  std::optional<GaussianBodyState> observation;  ///< absent under full occlusion
  std::optional<HumanState> gt;                  ///< camera frame
  VisibilityMask visibility = VisibilityMask::Ones();
};

/// Camera pose looking from `eye` at `target` (camera z forward, y down, world y up).
inline RigidTransform look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(Vec3::UnitY());
  if (x.norm() < 1e-9) x = Vec3::UnitX();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return {eye, Quat::from_matrix(r)};
}

/// Ground-truth world pose and posture of the body at time t.
struct BodySample {
  RigidTransform T_WH;
  HumanState posture;  ///< root fields unused
};

inline BodySample body_at(const ScenarioConfig& cfg, const ShapeVec& beta, double t) {
  BodySample s;
  s.posture.beta = beta;
  const double duration = cfg.frames / cfg.frame_rate;
  // Mild fixed stance so "static" is not the rest pose.
  s.posture.theta[12] = Quat::from_axis_angle(Vec3::UnitZ(), -0.3);  // left shoulder (joint 16)
  s.posture.theta[13] = Quat::from_axis_angle(Vec3::UnitZ(), 0.3);   // right shoulder (joint 17)
  switch (cfg.body) {
    case BodyTrajectory::kStatic:
      s.T_WH = {Vec3(0.0, 0.0, 0.0), Quat::identity()};
      break;
    case BodyTrajectory::kWalk: {
      // Facing +x (body +z axis turned onto world +x), straight line at constant speed.
      const Quat heading = Quat::from_axis_angle(Vec3::UnitY(), std::numbers::pi / 2);
      s.T_WH = {Vec3(cfg.walk_speed * (t - 0.5 * duration), 0.0, 0.0), heading};
      const double w = 2.0 * std::numbers::pi * 0.9;  // stride frequency
      const double swing = 0.45 * std::sin(w * t);
      s.posture.theta[0] = Quat::from_axis_angle(Vec3::UnitX(), -swing);  // left hip
      s.posture.theta[1] = Quat::from_axis_angle(Vec3::UnitX(), swing);   // right hip
      s.posture.theta[3] = Quat::from_axis_angle(Vec3::UnitX(), 0.35 * (1.0 + std::sin(w * t - 1.2)));  // left knee
      s.posture.theta[4] = Quat::from_axis_angle(Vec3::UnitX(), 0.35 * (1.0 - std::sin(w * t - 1.2)));  // right knee
      s.posture.theta[12] = Quat::from_axis_angle(Vec3::UnitX(), 0.6 * swing) * s.posture.theta[12];
      s.posture.theta[13] = Quat::from_axis_angle(Vec3::UnitX(), -0.6 * swing) * s.posture.theta[13];
      break;
    }
    case BodyTrajectory::kSinusoidalJoints:
      s.T_WH = {Vec3(0.0, 0.0, 0.0), Quat::from_axis_angle(Vec3::UnitY(), 0.4)};
      for (int j = 0; j < kPostureJoints; ++j) {
        const Vec3 axis(std::sin(1.3 * j), std::cos(0.7 * j), std::sin(0.4 * j + 1.0));
        const double angle = 0.25 * std::sin(2.0 * std::numbers::pi * (0.4 + 0.05 * j) * t + 0.9 * j);
        s.posture.theta[j] = Quat::from_axis_angle(axis, angle) * s.posture.theta[j];
      }
      break;
  }
  return s;
}

inline RigidTransform camera_at(const ScenarioConfig& cfg, const Vec3& body_position, double t) {
  const double duration = cfg.frames / cfg.frame_rate;
  switch (cfg.camera) {
    case CameraTrajectory::kStatic:
      return look_at(Vec3(0.0, 0.2, -5.0), Vec3::Zero());
    case CameraTrajectory::kOrbit: {
      const double a = 0.35 * t;
      return look_at(Vec3(-5.0 * std::sin(a), 0.3 + 0.1 * std::sin(0.5 * t), -5.0 * std::cos(a)), body_position);
    }
    case CameraTrajectory::kLinear:
      return {Vec3(0.6 * (t - 0.5 * duration), 0.2, -5.0), look_at(Vec3::Zero(), Vec3::UnitZ()).q};
  }
  return {};
}

/// Stateful stand-in for the image regressor. Noise is drawn for every frame,
/// occluded or not, so occlusion windows never shift later draws.
class PseudoDetector {
 public:
  explicit PseudoDetector(const ScenarioConfig& cfg)
      : cfg_(cfg), rng_(cfg.seed ^ cfg.sequence_index), reported_(cfg.noise * cfg.reported_var_scale) {
    cfg_.validate();
    // Variances must stay positive even when the drawn noise is zero.
    reported_ = reported_.cwiseMax(1e-18);
  }

  struct Detection {
    std::optional<GaussianBodyState> observation;
    VisibilityMask visibility = VisibilityMask::Ones();
  };

  Detection detect(const HumanState& gt, int frame) {
    const ErrorVec noise = sample_error(cfg_.noise, rng_);
    Detection out;
    const OcclusionWindow* window = nullptr;
    for (const auto& w : cfg_.occlusions)
      if (frame >= w.first && frame <= w.last) window = &w;
    if (window && window->mode == OcclusionMode::kFull) {
      out.visibility.setZero();
      return out;
    }
    GaussianBodyState obs;
    obs.mean = boxplus(gt, noise);
    obs.var = reported_;
    if (window) {
      for (int d : window->dims) out.visibility[d] = 0;
      freeze_masked(obs, out.visibility);
      for (int d = 0; d < kErrorDims; ++d)
        if (!out.visibility[d]) obs.var[d] *= cfg_.kappa;
    }
    remember_visible(obs.mean, out.visibility);
    out.observation = obs;
    return out;
  }

 private:
  // A rotation is frozen/remembered as a whole if any of its three dims is masked.
  static bool rotation_visible(const VisibilityMask& v, int offset) {
    return v[offset] && v[offset + 1] && v[offset + 2];
  }

  void freeze_masked(GaussianBodyState& obs, VisibilityMask& vis) const {
    if (!last_visible_) return;
    const HumanState& last = *last_visible_;
    for (int i = 0; i < kShapeDims; ++i)
      if (!vis[ec::kBeta + i]) obs.mean.beta[i] = last.beta[i];
    for (int j = 0; j < kPostureJoints; ++j)
      if (!rotation_visible(vis, ec::theta(j))) {
        obs.mean.theta[j] = last.theta[j];
        vis.segment<3>(ec::theta(j)).setZero();
      }
    for (int c = 0; c < 3; ++c)
      if (!vis[ec::kRootPos + c]) obs.mean.r_CH[c] = last.r_CH[c];
    if (!rotation_visible(vis, ec::kRootRot)) {
      obs.mean.q_CH = last.q_CH;
      vis.segment<3>(ec::kRootRot).setZero();
    }
  }

  void remember_visible(const HumanState& mean, const VisibilityMask& vis) {
    if (!last_visible_) {
      last_visible_ = mean;
      return;
    }
    HumanState& last = *last_visible_;
    for (int i = 0; i < kShapeDims; ++i)
      if (vis[ec::kBeta + i]) last.beta[i] = mean.beta[i];
    for (int j = 0; j < kPostureJoints; ++j)
      if (rotation_visible(vis, ec::theta(j))) last.theta[j] = mean.theta[j];
    for (int c = 0; c < 3; ++c)
      if (vis[ec::kRootPos + c]) last.r_CH[c] = mean.r_CH[c];
    if (rotation_visible(vis, ec::kRootRot)) last.q_CH = mean.q_CH;
  }

  ScenarioConfig cfg_;
  std::mt19937_64 rng_;
  ErrorVec reported_;
  std::optional<HumanState> last_visible_;
};

/// Deterministic sequence for the configured scenario.
inline std::vector<SequenceFrame> generate(const ScenarioConfig& cfg) {
  cfg.validate();
  std::mt19937_64 shape_rng(cfg.seed ^ cfg.sequence_index ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 0.5);
  ShapeVec beta;
  for (int i = 0; i < kShapeDims; ++i) beta[i] = normal(shape_rng);

  PseudoDetector detector(cfg);
  std::vector<SequenceFrame> frames;
  frames.reserve(cfg.frames);
  for (int k = 0; k < cfg.frames; ++k) {
    SequenceFrame f;
    f.index = k;
    f.t = k / cfg.frame_rate;
    const BodySample body = body_at(cfg, beta, f.t);
    f.T_WC = camera_at(cfg, body.T_WH.r, f.t);
    HumanState gt = body.posture;
    gt.set_root(f.T_WC.inverse() * body.T_WH);
    auto det = detector.detect(gt, k);
    f.gt = gt;
    f.observation = std::move(det.observation);
    f.visibility = det.visibility;
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace glopro
