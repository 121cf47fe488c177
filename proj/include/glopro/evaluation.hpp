#pragma once

// Scores tracker output against sequence ground truth.

#include <algorithm>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

#include "glopro/metrics.hpp"
#include "glopro/tracker.hpp"

namespace glopro {

struct EvaluationOptions {
  bool vertices = true;  ///< G-PVE needs a full forward pass per frame
  bool nees = true;
  int threads = 1;       ///< frames are scored in parallel and reduced in order
  /// Restricts scoring to frames for which this returns true (all frames when empty).
  std::function<bool(const SequenceFrame&)> include;
};

namespace detail {

struct FrameScore {
  double g_mpjpe = 0.0, pa_mpjpe = 0.0, g_pve = 0.0, nees = 0.0;
  Chi2Samples chi2;
  Points pred_world;
};

inline FrameScore score_frame(const BodyModel& model, const SequenceFrame& f, const TrackOutput& out,
                              const EvaluationOptions& opt) {
  FrameScore s;
  const Points gt_j = joints_camera(model, *f.gt);
  const Points pred_j = joints_camera(model, out.posterior.mean);
  s.pred_world = transform_points(f.T_WC, pred_j);
  s.g_mpjpe = g_mpjpe(s.pred_world, transform_points(f.T_WC, gt_j));
  s.pa_mpjpe = pa_mpjpe(pred_j, gt_j);
  // A shared rigid map leaves point distances unchanged, so vertices stay in C.
  if (opt.vertices) s.g_pve = g_pve(to_camera(model, out.posterior.mean), to_camera(model, *f.gt));
  if (opt.nees) {
    s.chi2 = chi2_consistency(propagate_joints(model, out.posterior), gt_j);
    double sum = 0.0;
    for (double v : s.chi2.values) sum += v;
    s.nees = s.chi2.values.empty() ? 0.0 : sum / static_cast<double>(s.chi2.values.size());
  }
  return s;
}

}  // namespace detail

/// Frames with both a posterior and ground truth are scored. G-Accel uses the
/// longest run of consecutive scored frames (needs >= 3, else reported as 0).
inline MetricsReport evaluate(const BodyModel& model, const std::vector<SequenceFrame>& frames,
                              const std::vector<std::optional<TrackOutput>>& outputs,
                              const EvaluationOptions& opt = {}) {
  if (frames.size() != outputs.size()) throw ConfigError("evaluate: frame and posterior counts differ");
  if (opt.threads < 1) throw ConfigError("evaluate: threads must be >= 1");
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < frames.size(); ++i)
    if (outputs[i] && frames[i].gt && (!opt.include || opt.include(frames[i]))) picked.push_back(i);

  std::vector<detail::FrameScore> scores(picked.size());
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t p = lo; p < hi; ++p) scores[p] = detail::score_frame(model, frames[picked[p]], *outputs[picked[p]], opt);
  };
  const auto nt = std::min<std::size_t>(static_cast<std::size_t>(opt.threads), std::max<std::size_t>(picked.size(), 1));
  if (nt <= 1) {
    work(0, picked.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (picked.size() + nt - 1) / nt;
    for (std::size_t t = 0; t < nt; ++t)
      pool.emplace_back(work, std::min(picked.size(), t * chunk), std::min(picked.size(), (t + 1) * chunk));
    for (auto& th : pool) th.join();
  }

  MetricsReport rep;
  std::vector<double> nees;
  int skipped = 0;
  std::vector<Points> run, best_run;
  double dt = 0.0;
  int prev_index = -2;
  for (std::size_t p = 0; p < picked.size(); ++p) {
    const SequenceFrame& f = frames[picked[p]];
    detail::FrameScore& s = scores[p];
    rep.frames.push_back(f.index);
    rep.frame_g_mpjpe.push_back(s.g_mpjpe);
    rep.frame_pa_mpjpe.push_back(s.pa_mpjpe);
    if (opt.vertices) rep.frame_g_pve.push_back(s.g_pve);
    if (opt.nees) {
      rep.frame_nees.push_back(s.nees);
      skipped += s.chi2.skipped;
      nees.insert(nees.end(), s.chi2.values.begin(), s.chi2.values.end());
    }
    if (f.index != prev_index + 1) {
      if (run.size() > best_run.size()) best_run = std::move(run);
      run.clear();
    } else if (dt == 0.0) {
      dt = f.t - frames[picked[p - 1]].t;
    }
    run.push_back(std::move(s.pred_world));
    prev_index = f.index;
  }
  if (run.size() > best_run.size()) best_run = std::move(run);

  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  rep.g_mpjpe = mean(rep.frame_g_mpjpe);
  rep.pa_mpjpe = mean(rep.frame_pa_mpjpe);
  rep.g_pve = mean(rep.frame_g_pve);
  if (best_run.size() >= 3 && dt > 0.0) rep.g_accel = g_accel(best_run, dt);
  if (opt.nees) {
    const Chi2Summary s = summarize_chi2(nees, skipped);
    rep.mean_nees = s.mean_nees;
    rep.nees_histogram = s.histogram;
    rep.nees_samples = s.samples;
    rep.nees_skipped = s.skipped;
  }
  return rep;
}

}  // namespace glopro
