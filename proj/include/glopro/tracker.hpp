#pragma once

// End-to-end tracker: motion prior from the posterior history, fused with the
// per-frame observation when one is available.

#include <deque>
#include <memory>
#include <optional>
#include <vector>

#include "glopro/errors.hpp"
#include "glopro/fusion.hpp"
#include "glopro/motion.hpp"
#include "glopro/scenario.hpp"

namespace glopro {

enum class PredictorKind {
  kConstVelocity,
  kGru,
  kNone,  ///< image-only: observations pass through, occlusions hold the last world pose
};

struct TrackerConfig {
  int history = 4;
  PredictorKind predictor = PredictorKind::kConstVelocity;
  ErrorVec process_noise = default_process_noise();
  FusionConfig fusion;
  std::optional<GruWeights> gru;

  void validate() const {
    if (history < 2) throw ConfigError("tracker: history must be >= 2");
    if (!process_noise.allFinite() || (process_noise.array() < 0.0).any())
      throw ConfigError("tracker: process noise must be finite and >= 0");
    if (predictor == PredictorKind::kGru && !gru) throw ConfigError("tracker: gru predictor needs weights");
  }
};

enum class PosteriorSource { kObservation, kFused, kPredicted, kHeld };

inline const char* to_string(PosteriorSource s) {
  switch (s) {
    case PosteriorSource::kObservation: return "observation";
    case PosteriorSource::kFused: return "fused";
    case PosteriorSource::kPredicted: return "predicted";
    case PosteriorSource::kHeld: return "held";
  }
  return "?";
}

struct TrackOutput {
  int index = 0;
  double t = 0.0;
  GaussianBodyState posterior;  ///< camera frame C_k
  RigidTransform T_WC;
  RigidTransform T_WH;          ///< posterior root in the world
  PosteriorSource source = PosteriorSource::kObservation;
  /// Per-dimension normalized innovation d_i^2 / (var_I,i + var_M,i), set on fused frames.
  std::optional<ErrorVec> innovation;
};

class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    switch (cfg_.predictor) {
      case PredictorKind::kConstVelocity:
        predictor_ = std::make_unique<ConstVelocityPredictor>(cfg_.process_noise);
        break;
      case PredictorKind::kGru:
        predictor_ = std::make_unique<GruPredictor>(*cfg_.gru);
        break;
      case PredictorKind::kNone:
        break;
    }
  }

  bool initialized() const { return !history_.empty(); }
  const TrackerConfig& config() const { return cfg_; }

  /// Returns nothing while waiting for the first observation.
  std::optional<TrackOutput> step(const SequenceFrame& frame) {
    if (initialized() && !(frame.t > history_.back().t))
      throw ConfigError("tracker: timestamps must be strictly increasing");
    if (!initialized()) {
      if (!frame.observation) return std::nullopt;
      return commit(frame, *frame.observation, PosteriorSource::kObservation);
    }
    if (!predictor_) {
      if (frame.observation) return commit(frame, *frame.observation, PosteriorSource::kObservation);
      return commit(frame, held(frame), PosteriorSource::kHeld);
    }
    const GaussianBodyState prior = motion_prior(frame);
    if (!frame.observation) return commit(frame, prior, PosteriorSource::kPredicted);
    const GaussianBodyState& obs = *frame.observation;
    const ErrorVec d = boxminus(prior.mean, obs.mean);
    TrackOutput out = commit(frame, fuse(obs, prior, cfg_.fusion), PosteriorSource::kFused);
    out.innovation = ErrorVec(d.array().square() / (obs.var + prior.var).array());
    return out;
  }

  /// Motion prior for the given frame's camera pose and timestamp.
  GaussianBodyState motion_prior(const SequenceFrame& frame) {
    if (!initialized()) throw InsufficientHistoryError("tracker: not initialized");
    std::vector<CameraFrameState> window(history_.begin(), history_.end());
    if (window.size() == 1) {
      // A lone frame carries no velocity; duplicating it one step back yields a static prediction.
      CameraFrameState twin = window.front();
      twin.t -= frame.t - window.front().t;
      window.insert(window.begin(), twin);
    }
    const BodyFrameHistory h = to_body_frame(window);
    const BodyFrameState pred = predictor_->predict(h, frame.t - window.back().t);
    return to_camera_frame(pred, frame.T_WC, h.T_WH_last);
  }

 private:
  GaussianBodyState held(const SequenceFrame& frame) const {
    const CameraFrameState& last = history_.back();
    GaussianBodyState out = last.state;
    out.mean.set_root(frame.T_WC.inverse() * last.T_WH());
    return out;
  }

  TrackOutput commit(const SequenceFrame& frame, const GaussianBodyState& posterior, PosteriorSource src) {
    if (!posterior.valid()) throw FusionError("tracker: posterior variance is not positive and finite");
    history_.push_back({frame.t, frame.T_WC, posterior});
    while (static_cast<int>(history_.size()) > cfg_.history) history_.pop_front();
    TrackOutput out;
    out.index = frame.index;
    out.t = frame.t;
    out.posterior = posterior;
    out.T_WC = frame.T_WC;
    out.T_WH = frame.T_WC * posterior.mean.root();
    out.source = src;
    return out;
  }

  TrackerConfig cfg_;
  std::unique_ptr<MotionPredictor> predictor_;
  std::deque<CameraFrameState> history_;
};

/// Runs a fresh tracker over a whole sequence; entry k is empty while waiting.
inline std::vector<std::optional<TrackOutput>> track_sequence(const TrackerConfig& cfg,
                                                              const std::vector<SequenceFrame>& frames) {
  Tracker tr(cfg);
  std::vector<std::optional<TrackOutput>> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(tr.step(f));
  return out;
}

}  // namespace glopro
