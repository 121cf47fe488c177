#pragma once

// Process-noise tuning from innovations alone (no ground truth): each Q_i is
// chosen so the mean normalized innovation d_i^2 / (var_I,i + var_M,i) over the
// training sequences is 1, its expectation for a consistent filter.

#include <cmath>
#include <vector>

#include "glopro/errors.hpp"
#include "glopro/tracker.hpp"

namespace glopro {

struct QCalibrationOptions {
  double q_min = 1e-12;
  double q_max = 1e-1;
  int iterations = 30;            ///< bisection steps per round
  int rounds = 3;                 ///< later rounds re-open the brackets
  double refine_halfwidth = 3.0;  ///< natural-log half-width around dims already on target
  double tolerance = 0.02;        ///< |mean innovation - 1| counted as on target
};

struct QCalibrationResult {
  ErrorVec process_noise;
  ErrorVec mean_innovation;  ///< per-dimension mean normalized innovation at the returned Q
  long fused_frames = 0;
};

/// Mean normalized innovation per dimension over all fused frames.
inline ErrorVec mean_normalized_innovation(const TrackerConfig& cfg,
                                           const std::vector<std::vector<SequenceFrame>>& sequences,
                                           long* fused_frames = nullptr) {
  ErrorVec sum = ErrorVec::Zero();
  long n = 0;
  for (const auto& seq : sequences)
    for (const auto& out : track_sequence(cfg, seq))
      if (out && out->innovation) {
        sum += *out->innovation;
        ++n;
      }
  if (n == 0) throw ConfigError("calibrate: no fused frames in the training sequences");
  if (fused_frames) *fused_frames = n;
  return sum / static_cast<double>(n);
}

/// Simultaneous per-dimension bisection in log Q. The normalized innovation of
/// a dimension falls as its own Q grows, but root dims are coupled through the
/// camera rotation: early steps taken while the other Q values are far off can
/// lock a bracket away from the answer. Later rounds re-open off-target dims to
/// the full range and keep settled ones near their previous value.
inline QCalibrationResult calibrate_process_noise(TrackerConfig cfg,
                                                  const std::vector<std::vector<SequenceFrame>>& sequences,
                                                  const QCalibrationOptions& opt = {}) {
  if (cfg.predictor == PredictorKind::kNone) throw ConfigError("calibrate: image-only tracking has no process noise");
  if (!(opt.q_min > 0.0) || !(opt.q_max > opt.q_min) || opt.iterations < 1 || opt.rounds < 1 ||
      !(opt.refine_halfwidth > 0.0) || !(opt.tolerance > 0.0))
    throw ConfigError("calibrate: need 0 < q_min < q_max, iterations >= 1, rounds >= 1, positive refine_halfwidth and tolerance");
  const double floor = std::log(opt.q_min), ceil = std::log(opt.q_max);
  ErrorVec lo = ErrorVec::Constant(floor);
  ErrorVec hi = ErrorVec::Constant(ceil);
  QCalibrationResult res;
  for (int round = 0; round < opt.rounds; ++round) {
    if (round > 0) {
      const ErrorVec x = cfg.process_noise.array().log().matrix();
      for (int i = 0; i < kErrorDims; ++i) {
        const bool settled = std::abs(res.mean_innovation[i] - 1.0) <= opt.tolerance;
        lo[i] = settled ? std::max(floor, x[i] - opt.refine_halfwidth) : floor;
        hi[i] = settled ? std::min(ceil, x[i] + opt.refine_halfwidth) : ceil;
      }
    }
    for (int it = 0; it < opt.iterations; ++it) {
      cfg.process_noise = (0.5 * (lo + hi)).array().exp().matrix();
      res.mean_innovation = mean_normalized_innovation(cfg, sequences, &res.fused_frames);
      for (int i = 0; i < kErrorDims; ++i) {
        const double x = std::log(cfg.process_noise[i]);
        (res.mean_innovation[i] > 1.0 ? lo[i] : hi[i]) = x;
      }
    }
  }
  res.process_noise = cfg.process_noise;
  return res;
}

}  // namespace glopro
