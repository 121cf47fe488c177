#pragma once

// Per-stage latency of one tracking step on a model of a given size.

#include <algorithm>
#include <chrono>
#include <vector>

#include "glopro/prob_state.hpp"
#include "glopro/scenario.hpp"
#include "glopro/synth_model.hpp"
#include "glopro/tracker.hpp"

namespace glopro {

struct StageTimings {
  int n_vertices = 0;
  int repeats = 0;
  int threads = 1;
  double motion_ms = 0.0;       ///< median, to_body_frame -> predict -> to_camera_frame
  double fusion_ms = 0.0;       ///< median
  double propagation_ms = 0.0;  ///< median, per-vertex 3x3 blocks
  double step_ms = 0.0;         ///< median of the three stages run back to back
  double step_p90_ms = 0.0;
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))];
}

}  // namespace detail

inline StageTimings bench_track_step(int n_vertices, int repeats = 50, int threads = 1, std::uint64_t seed = 0) {
  if (repeats < 1) throw ConfigError("bench: repeats must be >= 1");
  const BodyModel model = synth_model(n_vertices, seed);
  ScenarioConfig sc;
  sc.frames = 8;
  sc.seed = seed;
  const std::vector<SequenceFrame> frames = generate(sc);

  Tracker tracker(TrackerConfig{});
  for (int k = 0; k < 4; ++k) tracker.step(frames[k]);
  const SequenceFrame& next = frames[4];
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double, std::milli>(b - a).count(); };

  std::vector<double> motion, fusion, prop, step;
  double sink = 0.0;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = clock::now();
    const GaussianBodyState prior = tracker.motion_prior(next);
    const auto t1 = clock::now();
    const GaussianBodyState post = fuse(*next.observation, prior);
    const auto t2 = clock::now();
    const PointCloudGaussian verts = propagate_vertices(model, post, threads);
    const auto t3 = clock::now();
    sink += verts.cov_blocks.back()(0, 0);
    motion.push_back(ms(t0, t1));
    fusion.push_back(ms(t1, t2));
    prop.push_back(ms(t2, t3));
    step.push_back(ms(t0, t3));
  }
  StageTimings s;
  s.n_vertices = n_vertices;
  s.repeats = repeats;
  s.threads = threads;
  s.motion_ms = detail::median(motion);
  s.fusion_ms = detail::median(fusion);
  s.propagation_ms = detail::median(prop);
  s.step_ms = detail::median(step);
  s.step_p90_ms = detail::quantile(step, 0.9);
  if (!(sink == sink)) throw FusionError("bench: non-finite propagation result");
  return s;
}

}  // namespace glopro
