#pragma once

// Prediction-order selection from Monte Carlo Pearson lag curves.
//
// For a population of I aligned trials y^i(t), rho(0, t) is the Pearson
// correlation across trials between the samples at lag 0 and at lag t. The
// order for a threshold delta is the first lag where rho falls to delta; the
// selected order is the rounded mean of the orders for two thresholds.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "dpmclp/scenario.hpp"
#include "dpmclp/stft.hpp"

namespace dpmclp {

enum class LagUnit { frames, bins };

inline std::string to_string(LagUnit u) { return u == LagUnit::frames ? "time" : "frequency"; }

struct LagCurve {
  std::vector<double> rho;  // rho[t], t = 0 .. t_max
  LagUnit unit = LagUnit::frames;
  std::size_t trials = 0;
  std::vector<std::string> warnings;

  std::size_t t_max() const { return rho.empty() ? 0 : rho.size() - 1; }
};

struct ThresholdPair {
  double delta_1 = 0.15;
  double delta_2 = 0.30;

  void validate() const {
    const double lo = std::min(delta_1, delta_2), hi = std::max(delta_1, delta_2);
    if (!(lo > 0.0) || !(hi < 1.0)) throw Error("ThresholdPair: thresholds must lie in (0, 1)");
  }
};

/// Pearson correlation between the lag-0 and lag-t samples across trials.
/// Lags where either population has zero variance yield NaN and a warning.
inline LagCurve lag_curve(const std::vector<Eigen::VectorXd>& trials, std::size_t t_max,
                          LagUnit unit = LagUnit::frames) {
  if (trials.size() < 2) throw Error("lag_curve: at least two trials required");
  for (const auto& tr : trials)
    if (tr.size() <= static_cast<Eigen::Index>(t_max)) throw Error("lag_curve: every trial must be longer than t_max");

  const auto I = static_cast<double>(trials.size());
  LagCurve c;
  c.unit = unit;
  c.trials = trials.size();
  c.rho.resize(t_max + 1);

  double mean0 = 0.0;
  for (const auto& tr : trials) mean0 += tr[0];
  mean0 /= I;
  double var0 = 0.0;
  for (const auto& tr : trials) var0 += (tr[0] - mean0) * (tr[0] - mean0);

  for (std::size_t t = 0; t <= t_max; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    double mean_t = 0.0;
    for (const auto& tr : trials) mean_t += tr[ti];
    mean_t /= I;
    double cov = 0.0, var_t = 0.0;
    for (const auto& tr : trials) {
      cov += (tr[0] - mean0) * (tr[ti] - mean_t);
      var_t += (tr[ti] - mean_t) * (tr[ti] - mean_t);
    }
    if (!(var0 > 0.0) || !(var_t > 0.0)) {
      c.rho[t] = std::numeric_limits<double>::quiet_NaN();
      c.warnings.push_back("zero variance at lag " + std::to_string(t) + "; correlation undefined");
      continue;
    }
    c.rho[t] = t == 0 ? 1.0 : std::clamp(cov / std::sqrt(var0 * var_t), -1.0, 1.0);
  }
  return c;
}

/// Pointwise mean of curves, skipping NaN entries.
inline LagCurve mean_curve(const std::vector<LagCurve>& curves) {
  if (curves.empty()) throw Error("mean_curve: no curves");
  LagCurve out;
  out.unit = curves.front().unit;
  out.trials = curves.front().trials;
  out.rho.assign(curves.front().rho.size(), 0.0);
  for (std::size_t t = 0; t < out.rho.size(); ++t) {
    double acc = 0.0;
    std::size_t k = 0;
    for (const auto& c : curves) {
      if (c.rho.size() != out.rho.size()) throw Error("mean_curve: curves differ in length");
      if (std::isnan(c.rho[t])) continue;
      acc += c.rho[t];
      ++k;
    }
    out.rho[t] = k > 0 ? acc / static_cast<double>(k) : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

struct OrderChoice {
  std::size_t k_delta1 = 0;
  std::size_t k_delta2 = 0;
  std::size_t k = 0;
};

/// First lag at which rho <= delta.
inline std::size_t crossing_lag(const LagCurve& curve, double delta) {
  for (std::size_t t = 0; t < curve.rho.size(); ++t)
    if (!std::isnan(curve.rho[t]) && curve.rho[t] <= delta) return t;
  throw Error("select_order: correlation never falls to " + std::to_string(delta) + " within " +
              std::to_string(curve.t_max()) + " lags; increase the maximum lag");
}

inline OrderChoice select_order(const LagCurve& curve, const ThresholdPair& th) {
  th.validate();
  OrderChoice c;
  c.k_delta1 = crossing_lag(curve, th.delta_1);
  c.k_delta2 = crossing_lag(curve, th.delta_2);
  c.k = static_cast<std::size_t>(std::lround(0.5 * static_cast<double>(c.k_delta1 + c.k_delta2)));
  return c;
}

struct OrderStudyConfig {
  SceneTemplate scene;
  StftConfig stft;
  std::size_t trials = 20;
  std::uint64_t seed = 1;
  double snr_db = std::numeric_limits<double>::infinity();
  std::size_t max_lag_frames = 40;
  std::size_t max_lag_bins = 16;
  double band_lo_hz = 200.0;  // bins used for the curves
  double band_hi_hz = 4000.0;
  std::size_t freq_frames = 8;  // frames averaged in the frequency-domain curve

  OrderStudyConfig() {
    scene.source = SourceKind::white_noise;
    scene.duration = 1.0;
  }
};

struct OrderStudyRow {
  double t60 = 0.0;
  ThresholdPair thresholds;
  LagUnit domain = LagUnit::frames;
  OrderChoice choice;
  LagCurve curve;
};

namespace detail {

/// Reference-mic STFT magnitudes of one trial, aligned so the direct path
/// arrives at sample 0 and normalised to unit total energy.
inline Eigen::MatrixXd trial_magnitudes(const OrderStudyConfig& cfg, double t60, std::uint64_t seed) {
  const SceneDraw d = synthesize_scene(cfg.scene, t60, cfg.snr_db, seed);
  const auto ref = static_cast<Eigen::Index>(cfg.scene.array.reference_index);
  const Eigen::Index onset = d.rirs.front().direct_delay[static_cast<std::size_t>(ref)];
  const Eigen::VectorXd y = d.mics.channel(ref).tail(d.mics.length() - onset);
  const TfTensor Y = stft(TimeSignal::mono(y, d.mics.sample_rate), cfg.stft);
  Eigen::MatrixXd mag(Y.frames(), Y.bins());
  for (Eigen::Index n = 0; n < Y.frames(); ++n)
    for (Eigen::Index w = 0; w < Y.bins(); ++w) mag(n, w) = std::abs(Y(0, n, w));
  const double e = mag.norm();
  if (e > 0.0) mag /= e;
  return mag;
}

}  // namespace detail

/// Time- and frequency-domain lag curves for one t60 value.
inline std::pair<LagCurve, LagCurve> study_curves(const OrderStudyConfig& cfg, double t60) {
  if (cfg.trials < 2) throw Error("order study: at least two trials required");
  std::vector<Eigen::MatrixXd> mags;
  for (std::size_t i = 0; i < cfg.trials; ++i) mags.push_back(detail::trial_magnitudes(cfg, t60, mix_seed(cfg.seed, i)));

  const Eigen::Index frames = mags.front().rows();
  const Eigen::Index bins = mags.front().cols();
  const auto bin_of = [&](double hz) {
    return static_cast<Eigen::Index>(std::lround(hz * static_cast<double>(cfg.stft.frame_len) / cfg.scene.sample_rate));
  };
  const Eigen::Index lo = std::clamp<Eigen::Index>(bin_of(cfg.band_lo_hz), 0, bins - 1);
  const Eigen::Index hi = std::clamp<Eigen::Index>(bin_of(cfg.band_hi_hz), lo, bins - 1);
  if (static_cast<Eigen::Index>(cfg.max_lag_frames) >= frames) throw Error("order study: max_lag_frames exceeds frames");

  std::vector<LagCurve> time_curves;
  for (Eigen::Index w = lo; w <= hi; ++w) {
    std::vector<Eigen::VectorXd> pop;
    for (const auto& m : mags) pop.push_back(m.col(w).head(static_cast<Eigen::Index>(cfg.max_lag_frames) + 1));
    time_curves.push_back(lag_curve(pop, cfg.max_lag_frames, LagUnit::frames));
  }

  std::vector<LagCurve> freq_curves;
  const auto F = static_cast<Eigen::Index>(cfg.max_lag_bins);
  for (Eigen::Index n = 0; n < std::min<Eigen::Index>(frames, static_cast<Eigen::Index>(cfg.freq_frames)); ++n) {
    for (Eigen::Index w = lo; w <= hi && w + F < bins; ++w) {
      std::vector<Eigen::VectorXd> pop;
      for (const auto& m : mags) pop.push_back(m.row(n).segment(w, F + 1).transpose());
      freq_curves.push_back(lag_curve(pop, cfg.max_lag_bins, LagUnit::bins));
    }
  }
  if (freq_curves.empty()) throw Error("order study: frequency band too narrow for max_lag_bins");
  LagCurve tc = mean_curve(time_curves);
  LagCurve fc = mean_curve(freq_curves);
  tc.trials = fc.trials = cfg.trials;
  return {tc, fc};
}

/// For each t60: Monte Carlo lag curves, then orders for time and frequency.
inline std::vector<OrderStudyRow> order_selection_study(const OrderStudyConfig& cfg, const std::vector<double>& t60s,
                                                        const ThresholdPair& th) {
  th.validate();
  std::vector<OrderStudyRow> rows;
  for (double t60 : t60s) {
    auto [tc, fc] = study_curves(cfg, t60);
    rows.push_back({t60, th, LagUnit::frames, select_order(tc, th), tc});
    rows.push_back({t60, th, LagUnit::bins, select_order(fc, th), fc});
  }
  return rows;
}

inline std::string order_study_csv_header() { return "t60,delta_1,delta_2,K_delta1,K_delta2,K_selected,domain"; }

inline std::string order_study_csv_row(const OrderStudyRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.3f,%.4f,%.4f,%zu,%zu,%zu,%s", r.t60, r.thresholds.delta_1, r.thresholds.delta_2,
                r.choice.k_delta1, r.choice.k_delta2, r.choice.k, to_string(r.domain).c_str());
  return buf;
}

}  // namespace dpmclp
