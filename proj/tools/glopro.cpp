// glopro command-line front end: simulate, track, evaluate, chi2, corr, bench, calibrate.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "glopro/bench.hpp"
#include "glopro/calibration.hpp"
#include "glopro/evaluation.hpp"
#include "glopro/io.hpp"
#include "glopro/metrics.hpp"

namespace {

using namespace glopro;
using io::json;

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 2;
constexpr int kExitNumerical = 3;

void write_json(const std::string& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

struct Common {
  std::string model = "synth:6890:0";
  std::string out;
  int threads = 1;
};

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string scenario = "default";
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> sequence_index;
  std::optional<int> frames;
};

int run_simulate(const SimulateArgs& a, const Common& c) {
  ScenarioConfig cfg = io::load_scenario(a.scenario);
  if (a.seed) cfg.seed = *a.seed;
  if (a.sequence_index) cfg.sequence_index = *a.sequence_index;
  if (a.frames) cfg.frames = *a.frames;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    if (!a.frames) throw;
    throw ConfigError(std::string(e.what()) + " (with --frames " + std::to_string(*a.frames) + ")");
  }
  io::write_text(c.out, io::sequence_to_jsonl(generate(cfg)));
  return kExitOk;
}

// ---------------------------------------------------------------- track

struct TrackArgs {
  std::string in;
  std::string config;
  std::string predictor;
  std::string gru_weights;
  bool joints = false;
};

TrackerConfig tracker_config(const TrackArgs& a) {
  TrackerConfig cfg = a.config.empty() ? TrackerConfig{} : io::tracker_config_from_json(io::read_json(a.config));
  if (!a.predictor.empty()) cfg.predictor = io::predictor_from_string(a.predictor);
  if (!a.gru_weights.empty()) cfg.gru = io::gru_from_json(io::read_json(a.gru_weights));
  cfg.validate();
  return cfg;
}

int run_track(const TrackArgs& a, const Common& c) {
  const TrackerConfig cfg = tracker_config(a);
  const std::vector<SequenceFrame> frames = io::read_sequence(a.in);
  std::optional<BodyModel> model;
  if (a.joints) model = io::load_model(c.model);
  Tracker tracker(cfg);
  std::string out;
  for (const auto& f : frames) {
    const auto o = tracker.step(f);
    std::optional<PointCloudGaussian> joints;
    if (o && model) joints = propagate_joints(*model, o->posterior);
    out += io::track_output_to_json(f, o, joints ? &*joints : nullptr).dump() + "\n";
  }
  io::write_text(c.out, out);
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate / chi2

struct EvalArgs {
  std::string sequence;
  std::string in;
  std::string csv;
  std::string frames = "all";
  int bins = 30;
  double max_edge = 15.0;
};

EvaluationOptions eval_options(const EvalArgs& a, int threads) {
  EvaluationOptions opt;
  opt.threads = threads;
  if (a.frames == "occluded") opt.include = [](const SequenceFrame& f) { return !f.observation.has_value(); };
  else if (a.frames == "visible") opt.include = [](const SequenceFrame& f) { return f.observation.has_value(); };
  else if (a.frames != "all") throw LoadError("frames", "expected all, occluded or visible");
  return opt;
}

int run_evaluate(const EvalArgs& a, const Common& c) {
  const BodyModel model = io::load_model(c.model);
  const auto frames = io::read_sequence(a.sequence);
  const auto posts = io::align_posteriors(frames, io::read_posteriors(a.in));
  const MetricsReport rep = evaluate(model, frames, posts, eval_options(a, c.threads));
  write_json(c.out, io::to_json(rep));
  if (!a.csv.empty()) io::write_text(a.csv, io::report_csv(rep));
  return kExitOk;
}

int run_chi2(const EvalArgs& a, const Common& c) {
  const BodyModel model = io::load_model(c.model);
  const auto frames = io::read_sequence(a.sequence);
  const auto posts = io::align_posteriors(frames, io::read_posteriors(a.in));
  EvaluationOptions opt = eval_options(a, c.threads);
  opt.vertices = false;
  const MetricsReport rep = evaluate(model, frames, posts, opt);
  if (a.bins < 1 || !(a.max_edge > 0.0)) throw LoadError("bins", "need bins >= 1 and max > 0");
  std::vector<double> all;
  // Re-bin from per-joint samples so custom bin settings apply.
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (!posts[i] || !frames[i].gt || (opt.include && !opt.include(frames[i]))) continue;
    const auto s = chi2_consistency(propagate_joints(model, posts[i]->posterior), joints_camera(model, *frames[i].gt));
    all.insert(all.end(), s.values.begin(), s.values.end());
  }
  const Chi2Summary s = summarize_chi2(all, rep.nees_skipped, 3, a.max_edge, a.bins);
  write_json(c.out, {{"dof", 3},
                     {"mean_nees", s.mean_nees},
                     {"samples", s.samples},
                     {"skipped", s.skipped},
                     {"bin_edges", s.histogram.bin_edges},
                     {"counts", s.histogram.counts},
                     {"expected", s.histogram.expected}});
  return kExitOk;
}

// ---------------------------------------------------------------- corr

struct CorrArgs {
  std::string in;
  std::string source = "auto";
};

int run_corr(const CorrArgs& a, const Common& c) {
  std::vector<HumanState> states;
  io::read_jsonl(a.in, [&](const json& j, int) {
    std::string src = a.source;
    if (src == "auto") src = j.contains("status") ? "posterior" : "gt";
    if (src == "posterior") {
      const auto r = io::posterior_from_json(j);
      if (r.output) states.push_back(r.output->posterior.mean);
    } else if (src == "gt" || src == "observation") {
      const SequenceFrame f = io::frame_from_json(j);
      if (src == "gt" && f.gt) states.push_back(*f.gt);
      if (src == "observation" && f.observation) states.push_back(f.observation->mean);
    } else {
      throw LoadError("source", "expected auto, gt, observation or posterior");
    }
  });
  if (states.size() < 2) throw LoadError(a.in, "need at least 2 states for a correlation matrix");
  const Eigen::MatrixXd corr = posture_correlation(states);
  double off = 0.0;
  for (int i = 0; i < corr.rows(); ++i)
    for (int j = 0; j < corr.cols(); ++j)
      if (i != j) off += corr(i, j);
  write_json(c.out, {{"samples", states.size()},
                     {"dims", corr.rows()},
                     {"mean_abs_offdiag", off / static_cast<double>(corr.rows() * (corr.rows() - 1))},
                     {"matrix", io::detail::from_matrix(corr)}});
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::vector<int> sizes{600, 2000, 6890};
  int repeats = 50;
  std::uint64_t seed = 0;
};

int run_bench(const BenchArgs& a, const Common& c) {
  json rows = json::array();
  for (int n : a.sizes) {
    StageTimings t;
    try {
      t = bench_track_step(n, a.repeats, c.threads, a.seed);
    } catch (const ConfigError& e) {
      throw LoadError("sizes", e.what());
    }
    rows.push_back({{"n_vertices", t.n_vertices},
                    {"repeats", t.repeats},
                    {"threads", t.threads},
                    {"median_ms", {{"motion", t.motion_ms}, {"fusion", t.fusion_ms}, {"propagation", t.propagation_ms},
                                   {"track_step", t.step_ms}}},
                    {"p90_ms", {{"track_step", t.step_p90_ms}}}});
    std::fprintf(stderr, "N=%d track_step median %.3f ms (motion %.3f, fusion %.3f, propagation %.3f)\n", n, t.step_ms,
                 t.motion_ms, t.fusion_ms, t.propagation_ms);
  }
  write_json(c.out, {{"budget_ms", 50.0}, {"results", rows}});
  return kExitOk;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateArgs {
  std::string scenario = "walk";
  std::uint64_t seed = 100;
  int sequences = 4;
  std::string predictor = "constvel";
};

int run_calibrate(const CalibrateArgs& a, const Common& c) {
  if (a.sequences < 1) throw LoadError("sequences", "must be >= 1");
  ScenarioConfig base = io::load_scenario(a.scenario);
  base.seed = a.seed;
  std::vector<std::vector<SequenceFrame>> train;
  for (int i = 0; i < a.sequences; ++i) {
    ScenarioConfig s = base;
    s.sequence_index = static_cast<std::uint64_t>(i);
    train.push_back(generate(s));
  }
  TrackerConfig cfg;
  cfg.predictor = io::predictor_from_string(a.predictor);
  const QCalibrationResult r = calibrate_process_noise(cfg, train);
  write_json(c.out, {{"predictor", a.predictor},
                     {"process_noise", io::detail::from_vector(r.process_noise)},
                     {"mean_innovation", io::detail::from_vector(r.mean_innovation)},
                     {"fused_frames", r.fused_frames}});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic human mesh tracking toolkit"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub, bool model, bool threads) {
    sub->add_option("--out", common.out, "Output file")->required();
    if (model) sub->add_option("--model", common.model, "Body model: synth[:N[:seed]], *.json or *.bin");
    if (threads) sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
  };

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic sequence (JSONL)");
  simulate->add_option("--scenario", sim.scenario, "Preset name or scenario JSON file");
  simulate->add_option("--seed", sim.seed, "RNG seed (overrides the scenario)");
  simulate->add_option("--sequence-index", sim.sequence_index, "Sequence index mixed into the seed");
  simulate->add_option("--frames", sim.frames, "Number of frames (overrides the scenario)");
  add_common(simulate, false, false);

  TrackArgs trk;
  auto* track = app.add_subcommand("track", "Track a sequence and write posteriors (JSONL)");
  track->add_option("--in", trk.in, "Sequence JSONL")->required();
  track->add_option("--config", trk.config, "Tracker config JSON");
  track->add_option("--predictor", trk.predictor, "Motion predictor")->check(CLI::IsMember({"constvel", "gru", "none"}));
  track->add_option("--gru-weights", trk.gru_weights, "GRU weights JSON");
  track->add_flag("--joints", trk.joints, "Also emit propagated 3D joint Gaussians (needs --model)");
  add_common(track, true, false);

  EvalArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score posteriors against ground truth");
  evaluate_cmd->add_option("--sequence", ev.sequence, "Sequence JSONL with ground truth")->required();
  evaluate_cmd->add_option("--in", ev.in, "Posterior JSONL")->required();
  evaluate_cmd->add_option("--csv", ev.csv, "Per-frame CSV dump");
  evaluate_cmd->add_option("--frames", ev.frames, "all, occluded or visible");
  add_common(evaluate_cmd, true, true);

  EvalArgs cv;
  auto* chi2 = app.add_subcommand("chi2", "Per-joint NEES histogram");
  chi2->add_option("--sequence", cv.sequence, "Sequence JSONL with ground truth")->required();
  chi2->add_option("--in", cv.in, "Posterior JSONL")->required();
  chi2->add_option("--frames", cv.frames, "all, occluded or visible");
  chi2->add_option("--bins", cv.bins, "Histogram bins");
  chi2->add_option("--max", cv.max_edge, "Upper edge of the last closed bin");
  add_common(chi2, true, true);

  CorrArgs co;
  auto* corr = app.add_subcommand("corr", "Posture correlation matrix (69 x 69)");
  corr->add_option("--in", co.in, "Sequence or posterior JSONL")->required();
  corr->add_option("--source", co.source, "auto, gt, observation or posterior");
  add_common(corr, false, false);

  BenchArgs be;
  auto* bench = app.add_subcommand("bench", "Per-stage latency of one tracking step");
  bench->add_option("--sizes", be.sizes, "Model vertex counts")->delimiter(',');
  bench->add_option("--repeats", be.repeats, "Timed repetitions per size");
  bench->add_option("--seed", be.seed, "Model and scenario seed");
  add_common(bench, false, true);

  CalibrateArgs ca;
  auto* calibrate = app.add_subcommand("calibrate", "Tune process noise from innovations (writes tracker config)");
  calibrate->add_option("--scenario", ca.scenario, "Preset name or scenario JSON file");
  calibrate->add_option("--seed", ca.seed, "Base seed of the training sequences");
  calibrate->add_option("--sequences", ca.sequences, "Number of training sequences");
  calibrate->add_option("--predictor", ca.predictor, "Motion predictor")->check(CLI::IsMember({"constvel", "gru"}));
  add_common(calibrate, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (*simulate) return run_simulate(sim, common);
    if (*track) return run_track(trk, common);
    if (*evaluate_cmd) return run_evaluate(ev, common);
    if (*chi2) return run_chi2(cv, common);
    if (*corr) return run_corr(co, common);
    if (*bench) return run_bench(be, common);
    if (*calibrate) return run_calibrate(ca, common);
  } catch (const LoadError& e) {
    std::cerr << "glopro: bad input: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const ConfigError& e) {
    std::cerr << "glopro: bad input: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const WeightsError& e) {
    std::cerr << "glopro: bad input: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "glopro: bad input: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const Error& e) {
    std::cerr << "glopro: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "glopro: error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
