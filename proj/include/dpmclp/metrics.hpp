#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dpmclp/dsp.hpp"
#include "dpmclp/room.hpp"
#include "dpmclp/stft.hpp"

namespace dpmclp {

/// Mono estimate/reference pair, truncated to the shorter of the two.
struct EvalPair {
  Eigen::VectorXd estimate;
  Eigen::VectorXd reference;
  double sample_rate = 16000.0;

  EvalPair(const TimeSignal& est, const TimeSignal& ref, Eigen::Index est_channel = 0, Eigen::Index ref_channel = 0) {
    if (est.sample_rate != ref.sample_rate) throw Error("EvalPair: sample rates differ");
    const Eigen::Index len = std::min(est.length(), ref.length());
    estimate = est.samples.row(est_channel).head(len).transpose();
    reference = ref.samples.row(ref_channel).head(len).transpose();
    sample_rate = ref.sample_rate;
    check();
  }

  EvalPair(Eigen::VectorXd est, Eigen::VectorXd ref, double fs) : sample_rate(fs) {
    const Eigen::Index len = std::min(est.size(), ref.size());
    estimate = est.head(len);
    reference = ref.head(len);
    check();
  }

 private:
  void check() const {
    if (reference.size() == 0 || reference.squaredNorm() == 0.0) throw Error("EvalPair: reference is all zero");
    if (!estimate.allFinite() || !reference.allFinite()) throw Error("EvalPair: non-finite samples");
  }
};

inline constexpr double kSiSnrGuard = 1e-12;

/// Scale-invariant SNR in dB.
inline double si_snr(const EvalPair& p) {
  const double alpha = p.estimate.dot(p.reference) / p.reference.squaredNorm();
  const Eigen::VectorXd target = alpha * p.reference;
  const Eigen::VectorXd err = p.estimate - target;
  return 10.0 * std::log10(std::max(target.squaredNorm(), kSiSnrGuard) / (err.squaredNorm() + kSiSnrGuard));
}

inline constexpr double kLsdFloor = 1e-8;

/// Log-spectral distance in dB: mean over frames of the RMS over bins of the
/// log-magnitude difference.
inline double lsd(const EvalPair& p, const StftConfig& cfg) {
  const TfTensor E = stft(TimeSignal::mono(p.estimate, p.sample_rate), cfg);
  const TfTensor R = stft(TimeSignal::mono(p.reference, p.sample_rate), cfg);
  double acc = 0.0;
  for (Eigen::Index n = 0; n < R.frames(); ++n) {
    double frame = 0.0;
    for (Eigen::Index w = 0; w < R.bins(); ++w) {
      const double d = 20.0 * std::log10(std::abs(E(0, n, w)) + kLsdFloor) -
                       20.0 * std::log10(std::abs(R(0, n, w)) + kLsdFloor);
      frame += d * d;
    }
    acc += std::sqrt(frame / static_cast<double>(R.bins()));
  }
  return acc / static_cast<double>(R.frames());
}

/// Early reverberant component of source `target` at microphone `mic`: the
/// source convolved with its RIR cut `early_ms` after the direct path. No noise.
inline TimeSignal eval_target(const std::vector<TimeSignal>& sources, const std::vector<Rir>& rirs, Eigen::Index mic,
                              double early_ms = 50.0, std::size_t target = 0) {
  if (target >= sources.size() || sources.size() != rirs.size()) throw Error("eval_target: bad source index");
  const Rir& rir = rirs[target];
  const auto early = static_cast<Eigen::Index>(std::lround(early_ms * 1e-3 * rir.sample_rate));
  const Rir cut = split_rir(rir, early).first;
  const Eigen::VectorXd y = fft_convolve(sources[target].channel(0), cut.taps.row(mic).transpose());
  return TimeSignal::mono(y, rir.sample_rate);
}

}  // namespace dpmclp
