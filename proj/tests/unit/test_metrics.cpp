#include <random>

#include <gtest/gtest.h>

#include "dpmclp/metrics.hpp"
#include "dpmclp/scenario.hpp"
#include "oracles.hpp"

using namespace dpmclp;

namespace {

Eigen::VectorXd gauss(Eigen::Index n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST(SiSnr, IdenticalSignalsHitTheGuard) {
  const Eigen::VectorXd r = gauss(4000, 1);
  EXPECT_GE(si_snr(EvalPair(r, r, 16000.0)), 100.0);
}

TEST(SiSnr, ScaleInvariant) {
  const Eigen::VectorXd r = gauss(4000, 2), e = r + 0.3 * gauss(4000, 3);
  const double base = si_snr(EvalPair(e, r, 16000.0));
  for (double s : {2.0, 0.01, 1e3}) EXPECT_NEAR(si_snr(EvalPair(s * e, r, 16000.0)), base, 1e-9);
  EXPECT_GE(si_snr(EvalPair(2.0 * r, r, 16000.0)), 100.0);
}

TEST(SiSnr, OrthogonalNoiseAtTenDb) {
  const Eigen::VectorXd r = gauss(8000, 4);
  Eigen::VectorXd n = gauss(8000, 5);
  n -= (n.dot(r) / r.squaredNorm()) * r;  // exactly orthogonal
  n *= std::sqrt(r.squaredNorm() / 10.0) / n.norm();
  EXPECT_NEAR(si_snr(EvalPair(r + n, r, 16000.0)), 10.0, 0.01);
}

TEST(SiSnr, DependsOnlyOnTheCosine) {
  const Eigen::VectorXd r = gauss(3000, 6), e = 0.5 * r + gauss(3000, 7);
  const double c2 = std::pow(e.dot(r), 2) / (e.squaredNorm() * r.squaredNorm());
  const double oracle = 10.0 * std::log10(c2 / (1.0 - c2));
  EXPECT_NEAR(si_snr(EvalPair(e, r, 16000.0)), oracle, 1e-9);
  EXPECT_NEAR(si_snr(EvalPair(r, e, 16000.0)), oracle, 1e-9);
}

TEST(EvalPair, TruncatesAndRejects) {
  const EvalPair p(gauss(100, 8), gauss(80, 9), 16000.0);
  EXPECT_EQ(p.estimate.size(), 80);
  EXPECT_THROW(EvalPair(gauss(10, 1), Eigen::VectorXd::Zero(10), 16000.0), Error);
  Eigen::VectorXd bad = gauss(10, 2);
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(EvalPair(bad, gauss(10, 3), 16000.0), Error);
  EXPECT_THROW(EvalPair(TimeSignal::mono(gauss(10, 1), 8000.0), TimeSignal::mono(gauss(10, 1), 16000.0)), Error);
}

TEST(Lsd, IdenticalIsZeroAndDoublingIsSixDb) {
  const Eigen::VectorXd r = gauss(8000, 10);
  const StftConfig c;
  EXPECT_EQ(lsd(EvalPair(r, r, 16000.0), c), 0.0);
  // |2X| + eps vs |X| + eps: the floor is negligible against unit-variance noise.
  EXPECT_NEAR(lsd(EvalPair(2.0 * r, r, 16000.0), c), 20.0 * std::log10(2.0), 1e-4);
}

TEST(Lsd, SilentReferenceStaysFinite) {
  Eigen::VectorXd ref = Eigen::VectorXd::Zero(8000);
  ref[4000] = 1e-3;  // not all zero, but nearly silent
  const double d = lsd(EvalPair(gauss(8000, 11), ref, 16000.0), StftConfig{});
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_GT(d, 50.0);
}

TEST(Lsd, NonNegativeAndDeterministic) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const EvalPair p(gauss(5000, 20 + s), gauss(5000, 40 + s), 16000.0);
    const double a = lsd(p, StftConfig{}), b = lsd(p, StftConfig{});
    EXPECT_GE(a, 0.0);
    EXPECT_EQ(a, b);
    EXPECT_EQ(si_snr(p), si_snr(p));
  }
}

TEST(EvalTarget, AnechoicIsDelayedAttenuatedSource) {
  SceneTemplate tpl;
  tpl.array = ArrayGeometry::ula(2, 0.03, Point3(3, 3, 1.5));
  tpl.duration = 0.5;
  const SceneDraw s = synthesize_scene(tpl, 0.0, std::numeric_limits<double>::infinity(), 1);
  const TimeSignal ref = eval_target(s.sources, s.rirs, 0);
  const Eigen::Index d = s.rirs[0].direct_delay[0];
  const double g = s.rirs[0].taps(0, d);
  const Eigen::VectorXd src = s.sources[0].channel(0);
  for (Eigen::Index t = 0; t < src.size(); ++t) ASSERT_NEAR(ref.samples(0, t + d), g * src[t], 1e-12);
  EXPECT_LE(ref.samples.row(0).head(d).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EvalTarget, FullLengthSplitIsTheNoiselessMicSignal) {
  SceneTemplate tpl;
  tpl.array = ArrayGeometry::ula(2, 0.03, Point3(3, 3, 1.5));
  tpl.duration = 0.5;
  const SceneDraw s = synthesize_scene(tpl, 0.3, std::numeric_limits<double>::infinity(), 2);
  const double full_ms = 1e3 * double(s.rirs[0].length()) / tpl.sample_rate;
  const TimeSignal ref = eval_target(s.sources, s.rirs, 1, full_ms);
  const Eigen::VectorXd mic = s.mics.channel(1);
  EXPECT_LE((ref.samples.row(0).head(mic.size()).transpose() - mic).norm(), 1e-10 * mic.norm());
}

TEST(EvalTarget, EarlyPlusLateRebuildsTheReverberantSignal) {
  SceneTemplate tpl;
  tpl.array = ArrayGeometry::ula(2, 0.03, Point3(3, 3, 1.5));
  tpl.duration = 1.0;
  const SceneDraw s = synthesize_scene(tpl, 0.5, std::numeric_limits<double>::infinity(), 3);
  const auto early_len = static_cast<Eigen::Index>(std::lround(0.05 * tpl.sample_rate));
  const auto [early, late] = split_rir(s.rirs[0], early_len);
  // Tap energies split exactly (disjoint supports) ...
  const double e_full = s.rirs[0].taps.row(0).squaredNorm();
  EXPECT_NEAR(early.taps.row(0).squaredNorm() + late.taps.row(0).squaredNorm(), e_full, 1e-10 * e_full);
  // ... and the convolved components add back to the full signal.
  const TimeSignal full = convolve_sources(s.sources, s.rirs);
  const TimeSignal e = eval_target(s.sources, s.rirs, 0);
  const TimeSignal l = convolve_sources(s.sources, {late});
  const Eigen::Index n = std::min({full.length(), e.length(), l.length()});
  const Eigen::VectorXd sum = (e.samples.row(0).head(n) + l.samples.row(0).head(n)).transpose();
  const Eigen::VectorXd ref = full.samples.row(0).head(n).transpose();
  EXPECT_LE((sum - ref).norm(), 1e-10 * ref.norm());
}

TEST(EvalTarget, RejectsBadSourceIndex) {
  EXPECT_THROW(eval_target({}, {}, 0), Error);
}
