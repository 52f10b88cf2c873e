#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "dpmclp/signal.hpp"

namespace dpmclp {

enum class WindowShape { hann, hamming, rectangular };

inline std::string to_string(WindowShape w) {
  switch (w) {
    case WindowShape::hann: return "hann";
    case WindowShape::hamming: return "hamming";
    case WindowShape::rectangular: return "rectangular";
  }
  return "unknown";
}

inline WindowShape parse_window(const std::string& s) {
  if (s == "hann" || s == "hanning") return WindowShape::hann;
  if (s == "hamming") return WindowShape::hamming;
  if (s == "rectangular" || s == "rect") return WindowShape::rectangular;
  throw Error("unknown window shape '" + s + "'");
}

/// Periodic analysis window of the given length.
inline Eigen::VectorXd make_window(WindowShape shape, std::size_t len) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(len));
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t t = 0; t < len; ++t) {
    const double phase = two_pi * static_cast<double>(t) / static_cast<double>(len);
    switch (shape) {
      case WindowShape::hann: w[t] = 0.5 - 0.5 * std::cos(phase); break;
      case WindowShape::hamming: w[t] = 0.54 - 0.46 * std::cos(phase); break;
      case WindowShape::rectangular: w[t] = 1.0; break;
    }
  }
  return w;
}

/// Framing parameters. FFT length equals frame_len; bins = frame_len/2 + 1.
struct StftConfig {
  std::size_t frame_len = 512;
  std::size_t hop = 256;
  WindowShape window = WindowShape::hann;

  Eigen::Index bins() const { return static_cast<Eigen::Index>(frame_len / 2 + 1); }

  /// Overlap-add gain sum_k w(t - k*hop); constant in t for a COLA pair.
  double cola_gain() const {
    const Eigen::VectorXd w = make_window(window, frame_len);
    double g = 0.0;
    for (std::size_t t = 0; t < frame_len; t += hop) g += w[static_cast<Eigen::Index>(t)];
    return g;
  }

  void validate() const {
    if (frame_len < 2 || frame_len % 2 != 0) throw Error("StftConfig: frame_len must be even and >= 2");
    if (hop == 0 || frame_len % hop != 0) throw Error("StftConfig: hop must divide frame_len");
    const Eigen::VectorXd w = make_window(window, frame_len);
    const double ref = cola_gain();
    for (std::size_t t = 0; t < hop; ++t) {
      double g = 0.0;
      for (std::size_t k = t; k < frame_len; k += hop) g += w[static_cast<Eigen::Index>(k)];
      if (std::abs(g - ref) > 1e-9 * std::max(1.0, std::abs(ref)))
        throw Error("StftConfig: window '" + to_string(window) + "' is not COLA at hop " + std::to_string(hop));
    }
  }

  /// Frame count for a signal of `len` samples; the tail is zero-padded so a
  /// trailing partial frame is still analyzed.
  Eigen::Index frame_count(Eigen::Index len) const {
    const auto L = static_cast<Eigen::Index>(frame_len);
    const auto H = static_cast<Eigen::Index>(hop);
    if (len < L) throw Error("stft: signal shorter than one frame");
    return (len - L + H - 1) / H + 1;
  }

  Eigen::Index synthesis_length(Eigen::Index frames) const {
    return frames * static_cast<Eigen::Index>(hop) + static_cast<Eigen::Index>(frame_len - hop);
  }
};

/// Analysis STFT, one-sided spectrum per frame per channel.
inline TfTensor stft(const TimeSignal& x, const StftConfig& cfg) {
  cfg.validate();
  if (x.empty()) throw Error("stft: empty signal");
  const auto L = static_cast<Eigen::Index>(cfg.frame_len);
  const auto H = static_cast<Eigen::Index>(cfg.hop);
  const Eigen::Index N = cfg.frame_count(x.length());
  const Eigen::Index W = cfg.bins();
  const Eigen::VectorXd win = make_window(cfg.window, cfg.frame_len);

  TfTensor Y(x.channels(), N, W, cfg.frame_len, cfg.hop, x.sample_rate);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buf(static_cast<std::size_t>(L));
  std::vector<cplx> spec;
  for (Eigen::Index m = 0; m < x.channels(); ++m) {
    for (Eigen::Index n = 0; n < N; ++n) {
      const Eigen::Index start = n * H;
      for (Eigen::Index t = 0; t < L; ++t) {
        const Eigen::Index idx = start + t;
        buf[static_cast<std::size_t>(t)] = idx < x.length() ? x.samples(m, idx) * win[t] : 0.0;
      }
      fft.fwd(spec, buf);
      for (Eigen::Index w = 0; w < W; ++w) Y(m, n, w) = spec[static_cast<std::size_t>(w)];
    }
  }
  return Y;
}

/// Overlap-add synthesis normalized by the window's COLA gain.
/// Output length is frames*hop + (frame_len - hop).
inline TimeSignal istft(const TfTensor& Y, const StftConfig& cfg) {
  cfg.validate();
  if (Y.bins() != cfg.bins()) throw Error("istft: tensor bin count does not match frame_len");
  if (Y.frame_len() != 0 && (Y.frame_len() != cfg.frame_len || Y.hop() != cfg.hop))
    throw Error("istft: tensor framing does not match StftConfig");
  const auto L = static_cast<Eigen::Index>(cfg.frame_len);
  const auto H = static_cast<Eigen::Index>(cfg.hop);
  const Eigen::Index N = Y.frames();
  const Eigen::Index W = Y.bins();
  const double gain = cfg.cola_gain();

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(Y.mics(), cfg.synthesis_length(N));
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<cplx> spec(static_cast<std::size_t>(W));
  std::vector<double> frame;
  for (Eigen::Index m = 0; m < Y.mics(); ++m) {
    for (Eigen::Index n = 0; n < N; ++n) {
      for (Eigen::Index w = 0; w < W; ++w) spec[static_cast<std::size_t>(w)] = Y(m, n, w);
      // DC and Nyquist of a real frame are real.
      spec.front().imag(0.0);
      spec.back().imag(0.0);
      fft.inv(frame, spec, static_cast<Eigen::Index>(L));
      const Eigen::Index start = n * H;
      for (Eigen::Index t = 0; t < L; ++t) out(m, start + t) += frame[static_cast<std::size_t>(t)] / gain;
    }
  }
  return TimeSignal(std::move(out), Y.sample_rate());
}

}  // namespace dpmclp
