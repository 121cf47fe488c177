#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "glopro/calibration.hpp"
#include "glopro/evaluation.hpp"
#include "glopro/io.hpp"
#include "glopro/scenario.hpp"
#include "glopro/synth_model.hpp"
#include "glopro/tracker.hpp"
#include "test_util.hpp"

using namespace glopro;

namespace {

ScenarioConfig quiet(BodyTrajectory body, CameraTrajectory cam, int frames = 60) {
  ScenarioConfig c;
  c.body = body;
  c.camera = cam;
  c.frames = frames;
  c.noise = ErrorVec::Zero();
  c.seed = 11;
  return c;
}

Vec3 world_root(const SequenceFrame& f) { return (f.T_WC * f.gt->root()).r; }

/// Root under a fixed per-frame screw increment, posture fixed, orbiting camera,
/// observations exact with the given reported variance.
std::vector<SequenceFrame> screw_sequence(int frames, double var) {
  std::mt19937_64 rng(5);
  const HumanState posture = glopro::testing::random_state(rng, 0.4);
  const RigidTransform inc{Vec3(0.03, 0.0, 0.01), Quat::from_axis_angle(Vec3(0.2, 1.0, 0.1).normalized(), 0.05)};
  RigidTransform T_WH{Vec3(0.5, 0.0, -0.3), Quat::from_axis_angle(Vec3::UnitY(), 0.7)};
  std::vector<SequenceFrame> out;
  for (int k = 0; k < frames; ++k) {
    SequenceFrame f;
    f.index = k;
    f.t = k / 30.0;
    const double a = 0.35 * f.t;
    f.T_WC = look_at(Vec3(-5.0 * std::sin(a), 0.4, -5.0 * std::cos(a)), T_WH.r);
    HumanState gt = posture;
    gt.set_root(f.T_WC.inverse() * T_WH);
    f.gt = gt;
    f.observation = GaussianBodyState{gt, ErrorVec::Constant(var)};
    out.push_back(f);
    T_WH = T_WH * inc;
  }
  return out;
}

double max_err(const HumanState& a, const HumanState& b) { return boxminus(a, b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Scenario, StaticBodyStaticCameraGivesConstantTruth) {
  const auto seq = generate(quiet(BodyTrajectory::kStatic, CameraTrajectory::kStatic));
  for (const auto& f : seq) {
    EXPECT_EQ(boxminus(*f.gt, *seq.front().gt), ErrorVec::Zero());
    EXPECT_EQ(f.T_WC.r, seq.front().T_WC.r);
  }
}

TEST(Scenario, SameSeedIsByteIdentical) {
  ScenarioConfig c;
  c.seed = 42;
  c.frames = 30;
  EXPECT_EQ(io::sequence_to_jsonl(generate(c)), io::sequence_to_jsonl(generate(c)));
  ScenarioConfig d = c;
  d.seed = 43;
  EXPECT_NE(io::sequence_to_jsonl(generate(c)), io::sequence_to_jsonl(generate(d)));
  d = c;
  d.sequence_index = 1;
  EXPECT_NE(io::sequence_to_jsonl(generate(c)), io::sequence_to_jsonl(generate(d)));
}

TEST(Scenario, WalkAdvancesAtConfiguredSpeed) {
  auto cfg = quiet(BodyTrajectory::kWalk, CameraTrajectory::kOrbit);
  cfg.walk_speed = 1.4;
  const auto seq = generate(cfg);
  for (std::size_t k = 1; k < seq.size(); ++k) {
    const Vec3 d = world_root(seq[k]) - world_root(seq[k - 1]);
    EXPECT_NEAR(d.x(), 1.4 / 30.0, 1e-6);
    EXPECT_NEAR(d.y(), 0.0, 1e-6);
    EXPECT_NEAR(d.z(), 0.0, 1e-6);
  }
}

TEST(Scenario, ZeroNoiseObservesTruth) {
  const auto seq = generate(quiet(BodyTrajectory::kSinusoidalJoints, CameraTrajectory::kLinear));
  for (const auto& f : seq) {
    ASSERT_TRUE(f.observation);
    EXPECT_LT(max_err(f.observation->mean, *f.gt), 1e-12);
    EXPECT_TRUE((f.observation->var.array() > 0.0).all());
  }
}

TEST(Scenario, ReportedVarianceScalesNoise) {
  ScenarioConfig c;
  c.frames = 3;
  c.reported_var_scale = 0.25;
  const auto seq = generate(c);
  EXPECT_LT((seq[1].observation->var - 0.25 * c.noise).cwiseAbs().maxCoeff(), 1e-18);
}

TEST(Scenario, FullOcclusionDropsObservation) {
  auto cfg = quiet(BodyTrajectory::kWalk, CameraTrajectory::kOrbit, 30);
  cfg.occlusions.push_back({10, 14, OcclusionMode::kFull, {}});
  const auto seq = generate(cfg);
  for (const auto& f : seq) {
    const bool occluded = f.index >= 10 && f.index <= 14;
    EXPECT_EQ(f.observation.has_value(), !occluded);
    EXPECT_EQ(f.visibility.cast<int>().sum(), occluded ? 0 : kErrorDims);
    EXPECT_TRUE(f.gt.has_value());
  }
}

TEST(Scenario, OcclusionDoesNotShiftLaterNoise) {
  ScenarioConfig a;
  a.frames = 40;
  a.seed = 3;
  ScenarioConfig b = a;
  b.occlusions.push_back({5, 20, OcclusionMode::kFull, {}});
  const auto sa = generate(a), sb = generate(b);
  for (int k = 21; k < 40; ++k) EXPECT_EQ(boxminus(sa[k].observation->mean, sb[k].observation->mean), ErrorVec::Zero());
}

TEST(Scenario, NoiseMatchesConfiguredVariance) {
  ScenarioConfig c;
  c.body = BodyTrajectory::kStatic;
  c.camera = CameraTrajectory::kStatic;
  c.frames = 10000;
  c.seed = 7;
  const auto seq = generate(c);
  ErrorVec mean = ErrorVec::Zero(), m2 = ErrorVec::Zero();
  int n = 0;
  for (const auto& f : seq) {
    const ErrorVec e = boxminus(f.observation->mean, *f.gt);
    ++n;
    const ErrorVec d = e - mean;
    mean += d / n;
    m2 += d.cwiseProduct(e - mean);
  }
  const ErrorVec var = m2 / (n - 1);
  const ErrorVec se = (c.noise / n).cwiseSqrt();
  // Five standard errors per dimension; 85 dims at that level essentially never fail by chance.
  EXPECT_TRUE((mean.cwiseAbs().array() < 5.0 * se.array()).all());
  // Sample variance of a normal has relative standard error sqrt(2/n) ~ 1.4%.
  EXPECT_LT(((var - c.noise).array() / c.noise.array()).abs().maxCoeff(), 0.08);
}

TEST(Scenario, PartialOcclusionFreezesAndInflates) {
  ScenarioConfig c;
  c.frames = 20;
  c.kappa = 10.0;
  OcclusionWindow w{8, 12, OcclusionMode::kPartial, {ec::theta(2) + 1, ec::kRootPos + 0}};
  c.occlusions.push_back(w);
  const auto seq = generate(c);
  const auto& before = *seq[7].observation;
  for (int k = 8; k <= 12; ++k) {
    const auto& o = *seq[k].observation;
    // The whole rotation of joint 2 is masked even though one of its dims was listed.
    EXPECT_EQ(o.mean.theta[2].coeffs(), before.mean.theta[2].coeffs());
    EXPECT_EQ(o.mean.r_CH.x(), before.mean.r_CH.x());
    EXPECT_NE(o.mean.r_CH.y(), before.mean.r_CH.y());
    for (int d = 0; d < 3; ++d) {
      EXPECT_EQ(seq[k].visibility[ec::theta(2) + d], 0);
      EXPECT_NEAR(o.var[ec::theta(2) + d], c.kappa * c.noise[ec::theta(2) + d], 1e-18);
    }
    EXPECT_NEAR(o.var[ec::kRootPos], c.kappa * c.noise[ec::kRootPos], 1e-18);
    EXPECT_EQ(o.var[ec::kRootPos + 1], c.noise[ec::kRootPos + 1]);
    EXPECT_EQ(seq[k].visibility.cast<int>().sum(), kErrorDims - 4);
  }
  EXPECT_NE(seq[13].observation->mean.theta[2].coeffs(), before.mean.theta[2].coeffs());
}

TEST(Scenario, ValidateRejectsBadWindows) {
  ScenarioConfig c;
  c.frames = 10;
  c.occlusions.push_back({5, 10, OcclusionMode::kFull, {}});
  EXPECT_THROW(generate(c), ConfigError);
  c.occlusions = {{2, 3, OcclusionMode::kPartial, {85}}};
  EXPECT_THROW(generate(c), ConfigError);
  c.occlusions.clear();
  c.kappa = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Tracker, ExactScrewMotionIsPredictedExactly) {
  const auto seq = screw_sequence(30, 1e-12);
  TrackerConfig cfg;
  Tracker tr(cfg);
  for (int k = 0; k < 30; ++k) {
    SequenceFrame f = seq[k];
    if (k >= 4) {
      // After M frames of history the prior alone lands on the truth.
      EXPECT_LT(max_err(tr.motion_prior(f).mean, *f.gt), 1e-6) << "frame " << k;
    }
    if (k >= 10) f.observation.reset();
    const auto out = tr.step(f);
    ASSERT_TRUE(out);
    EXPECT_LT(max_err(out->posterior.mean, *f.gt), 1e-6) << "frame " << k;
    EXPECT_EQ(out->source, k == 0 ? PosteriorSource::kObservation
                           : k < 10 ? PosteriorSource::kFused
                                    : PosteriorSource::kPredicted);
  }
}

TEST(Tracker, FusedFramesReportNormalizedInnovation) {
  const auto seq = screw_sequence(6, 1e-12);
  const auto out = track_sequence(TrackerConfig{}, seq);
  EXPECT_FALSE(out[0]->innovation);
  for (int k = 1; k < 6; ++k) {
    ASSERT_TRUE(out[k]->innovation);
    EXPECT_TRUE((out[k]->innovation->array() >= 0.0).all());
  }
  // Exact observations of a screw motion: no innovation once the velocity is known.
  EXPECT_LT(out[5]->innovation->maxCoeff(), 1e-6);
}

TEST(Tracker, VarianceGrowsThroughOcclusion) {
  auto cfg = quiet(BodyTrajectory::kWalk, CameraTrajectory::kOrbit);
  cfg.noise = default_observation_noise();
  cfg.occlusions.push_back({20, 39, OcclusionMode::kFull, {}});
  const auto out = track_sequence(TrackerConfig{}, generate(cfg));
  for (int k = 21; k <= 39; ++k) {
    const ErrorVec& a = out[k - 1]->posterior.var;
    const ErrorVec& b = out[k]->posterior.var;
    EXPECT_TRUE((b.head<ec::kRootPos>().array() >= a.head<ec::kRootPos>().array()).all()) << k;
    // Root blocks rotate with the camera; their traces cannot shrink.
    EXPECT_GE(b.segment<3>(ec::kRootPos).sum(), a.segment<3>(ec::kRootPos).sum() - 1e-15);
    EXPECT_GE(b.segment<3>(ec::kRootRot).sum(), a.segment<3>(ec::kRootRot).sum() - 1e-15);
    EXPECT_EQ(out[k]->source, PosteriorSource::kPredicted);
  }
  EXPECT_EQ(out[40]->source, PosteriorSource::kFused);
}

TEST(Tracker, StaticBodyDoesNotDriftUnderOrbitingCamera) {
  auto cfg = quiet(BodyTrajectory::kStatic, CameraTrajectory::kOrbit, 90);
  cfg.occlusions.push_back({30, 74, OcclusionMode::kFull, {}});
  const auto seq = generate(cfg);
  const auto out = track_sequence(TrackerConfig{}, seq);
  for (int k = 30; k <= 74; ++k) EXPECT_LT((out[k]->T_WH.r - world_root(seq[k])).norm(), 1e-6) << k;
}

TEST(Tracker, WaitsForFirstObservation) {
  auto cfg = quiet(BodyTrajectory::kWalk, CameraTrajectory::kOrbit, 20);
  cfg.occlusions.push_back({0, 4, OcclusionMode::kFull, {}});
  const auto out = track_sequence(TrackerConfig{}, generate(cfg));
  for (int k = 0; k < 5; ++k) EXPECT_FALSE(out[k]);
  EXPECT_TRUE(out[5]);
  EXPECT_EQ(out[5]->source, PosteriorSource::kObservation);
  Tracker tr(TrackerConfig{});
  EXPECT_THROW(tr.motion_prior(generate(cfg)[0]), InsufficientHistoryError);
}

TEST(Tracker, IsCausal) {
  ScenarioConfig cfg;
  cfg.frames = 40;
  cfg.seed = 9;
  const auto seq = generate(cfg);
  auto mutated = seq;
  for (int k = 25; k < 40; ++k) {
    mutated[k].observation->mean.r_CH += Vec3(1.0, -2.0, 0.5);
    mutated[k].observation->var *= 3.0;
  }
  const auto a = track_sequence(TrackerConfig{}, seq);
  const auto b = track_sequence(TrackerConfig{}, mutated);
  for (int k = 0; k < 25; ++k) {
    EXPECT_EQ(boxminus(a[k]->posterior.mean, b[k]->posterior.mean), ErrorVec::Zero());
    EXPECT_EQ(a[k]->posterior.var, b[k]->posterior.var);
  }
  EXPECT_NE(a[30]->posterior.mean.r_CH, b[30]->posterior.mean.r_CH);
}

TEST(Tracker, RejectsNonIncreasingTime) {
  const auto seq = screw_sequence(3, 1e-4);
  Tracker tr(TrackerConfig{});
  tr.step(seq[0]);
  tr.step(seq[1]);
  EXPECT_THROW(tr.step(seq[1]), ConfigError);
}

TEST(Tracker, ImageOnlyPassesThroughAndHoldsWorldPose) {
  auto cfg = quiet(BodyTrajectory::kWalk, CameraTrajectory::kOrbit, 30);
  cfg.noise = default_observation_noise();
  cfg.occlusions.push_back({10, 19, OcclusionMode::kFull, {}});
  const auto seq = generate(cfg);
  TrackerConfig tc;
  tc.predictor = PredictorKind::kNone;
  const auto out = track_sequence(tc, seq);
  for (int k = 0; k < 10; ++k) {
    EXPECT_EQ(out[k]->source, PosteriorSource::kObservation);
    EXPECT_EQ(boxminus(out[k]->posterior.mean, seq[k].observation->mean), ErrorVec::Zero());
  }
  for (int k = 10; k < 20; ++k) {
    EXPECT_EQ(out[k]->source, PosteriorSource::kHeld);
    EXPECT_LT((out[k]->T_WH.r - out[9]->T_WH.r).norm(), 1e-12);
  }
}

TEST(Tracker, GruPredictorRuns) {
  TrackerConfig tc;
  tc.predictor = PredictorKind::kGru;
  EXPECT_THROW(Tracker{tc}, ConfigError);
  tc.gru = GruWeights::zeros(kGruFeatureDims, 8, kGruFeatureDims);
  ScenarioConfig cfg;
  cfg.frames = 10;
  const auto out = track_sequence(tc, generate(cfg));
  for (const auto& o : out) {
    ASSERT_TRUE(o);
    EXPECT_TRUE(o->posterior.valid());
  }
}

TEST(Tracker, ConfigValidation) {
  TrackerConfig tc;
  tc.history = 1;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc.history = 4;
  tc.process_noise[3] = -1.0;
  EXPECT_THROW(tc.validate(), ConfigError);
}

class EvaluationTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { model_ = new BodyModel(synth_model(300, 1)); }
  static void TearDownTestSuite() { delete model_; }
  static BodyModel* model_;
};
BodyModel* EvaluationTest::model_ = nullptr;

TEST_F(EvaluationTest, PerfectPosteriorScoresZero) {
  ScenarioConfig cfg;
  cfg.frames = 20;
  const auto seq = generate(cfg);
  std::vector<std::optional<TrackOutput>> outs;
  for (const auto& f : seq) {
    TrackOutput o;
    o.index = f.index;
    o.t = f.t;
    o.T_WC = f.T_WC;
    o.posterior = {*f.gt, ErrorVec::Constant(1e-4)};
    outs.push_back(o);
  }
  const auto rep = evaluate(*model_, seq, outs);
  EXPECT_LT(rep.g_mpjpe, 1e-9);
  EXPECT_LT(rep.pa_mpjpe, 1e-6);
  EXPECT_LT(rep.g_pve, 1e-9);
  EXPECT_LT(rep.mean_nees, 1e-12);
  EXPECT_EQ(rep.frames.size(), 20u);
  EXPECT_EQ(rep.nees_samples, 20 * kJoints);
  EXPECT_GT(rep.g_accel, 0.0);
}

TEST_F(EvaluationTest, ThreadCountDoesNotChangeResults) {
  ScenarioConfig cfg;
  cfg.frames = 30;
  cfg.occlusions.push_back({10, 14, OcclusionMode::kFull, {}});
  const auto seq = generate(cfg);
  const auto outs = track_sequence(TrackerConfig{}, seq);
  EvaluationOptions one, four;
  four.threads = 4;
  const auto a = evaluate(*model_, seq, outs, one);
  const auto b = evaluate(*model_, seq, outs, four);
  EXPECT_EQ(a.g_mpjpe, b.g_mpjpe);
  EXPECT_EQ(a.pa_mpjpe, b.pa_mpjpe);
  EXPECT_EQ(a.g_pve, b.g_pve);
  EXPECT_EQ(a.g_accel, b.g_accel);
  EXPECT_EQ(a.mean_nees, b.mean_nees);
  EXPECT_EQ(a.frame_nees, b.frame_nees);
}

TEST_F(EvaluationTest, FilterAndWaitingFramesAreSkipped) {
  ScenarioConfig cfg;
  cfg.frames = 30;
  cfg.occlusions.push_back({0, 2, OcclusionMode::kFull, {}});
  cfg.occlusions.push_back({15, 19, OcclusionMode::kFull, {}});
  const auto seq = generate(cfg);
  const auto outs = track_sequence(TrackerConfig{}, seq);
  EvaluationOptions opt;
  opt.vertices = false;
  EXPECT_EQ(evaluate(*model_, seq, outs, opt).frames.size(), 27u);
  opt.include = [](const SequenceFrame& f) { return !f.observation.has_value(); };
  const auto occ = evaluate(*model_, seq, outs, opt);
  EXPECT_EQ(occ.frames, (std::vector<int>{15, 16, 17, 18, 19}));
  EXPECT_EQ(occ.g_pve, 0.0);
  EXPECT_THROW(evaluate(*model_, seq, std::vector<std::optional<TrackOutput>>(3), opt), ConfigError);
}

TEST(Calibration, DrivesMeanInnovationToOne) {
  std::vector<std::vector<SequenceFrame>> train;
  for (std::uint64_t s = 0; s < 2; ++s) {
    ScenarioConfig c;
    c.frames = 60;
    c.seed = 100;
    c.sequence_index = s;
    train.push_back(generate(c));
  }
  const QCalibrationOptions opt;
  const auto res = calibrate_process_noise(TrackerConfig{}, train, opt);
  EXPECT_EQ(res.fused_frames, 2 * 59);
  EXPECT_TRUE((res.process_noise.array() >= opt.q_min).all());
  EXPECT_TRUE((res.process_noise.array() <= opt.q_max).all());
  TrackerConfig probe;
  probe.process_noise = res.process_noise;
  int on_target = 0;
  for (int i = 0; i < kErrorDims; ++i) {
    if (std::abs(res.mean_innovation[i] - 1.0) <= opt.tolerance) {
      ++on_target;
      continue;
    }
    // Off target only when no Q in range reaches 1: check the range end on the same side.
    TrackerConfig edge = probe;
    const bool too_small = res.mean_innovation[i] < 1.0;
    edge.process_noise[i] = too_small ? opt.q_min : opt.q_max;
    const double at_edge = mean_normalized_innovation(edge, train)[i];
    EXPECT_TRUE(too_small ? at_edge < 1.0 : at_edge > 1.0) << "dim " << i << " edge innovation " << at_edge;
  }
  EXPECT_GT(on_target, 40);
  TrackerConfig none;
  none.predictor = PredictorKind::kNone;
  EXPECT_THROW(calibrate_process_noise(none, train), ConfigError);
}
