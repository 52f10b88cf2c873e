#pragma once

// Scene synthesis: array geometry, far-field steering vectors, image-method
// room impulse responses, convolutive mixing with white noise at a target SNR,
// and a deterministic speech-like source generator.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "dpmclp/dsp.hpp"
#include "dpmclp/signal.hpp"
#include "dpmclp/wav.hpp"

namespace dpmclp {

using Point3 = Eigen::Vector3d;

struct ArrayGeometry {
  std::vector<Point3> mic_positions;
  std::size_t reference_index = 0;
  double speed_of_sound = 343.0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(mic_positions.size()); }

  /// Uniform linear array along +x, centered on `center`, reference = first mic.
  static ArrayGeometry ula(std::size_t mics, double spacing, const Point3& center = Point3::Zero(),
                           double c = 343.0) {
    ArrayGeometry g;
    g.speed_of_sound = c;
    const double half = 0.5 * spacing * static_cast<double>(mics - 1);
    for (std::size_t m = 0; m < mics; ++m)
      g.mic_positions.push_back(center + Point3(spacing * static_cast<double>(m) - half, 0.0, 0.0));
    g.validate();
    return g;
  }

  Point3 center() const {
    Point3 c = Point3::Zero();
    for (const auto& p : mic_positions) c += p;
    return c / static_cast<double>(mic_positions.size());
  }

  void validate() const {
    if (mic_positions.empty()) throw Error("ArrayGeometry: at least one microphone required");
    if (reference_index >= mic_positions.size()) throw Error("ArrayGeometry: reference_index out of range");
    if (!(speed_of_sound > 0.0)) throw Error("ArrayGeometry: speed_of_sound must be positive");
    for (std::size_t i = 0; i < mic_positions.size(); ++i)
      for (std::size_t j = i + 1; j < mic_positions.size(); ++j)
        if ((mic_positions[i] - mic_positions[j]).norm() < 1e-9)
          throw Error("ArrayGeometry: microphone positions must be distinct");
  }

  /// Plane-wave arrival delay (s) at mic m relative to the reference mic, for a
  /// far-field source at azimuth `theta` in the x-y plane. Positive = later.
  double relative_delay(Eigen::Index m, double theta) const {
    const Point3 toward_source(std::cos(theta), std::sin(theta), 0.0);
    const Point3 d = mic_positions[static_cast<std::size_t>(m)] - mic_positions[reference_index];
    return -d.dot(toward_source) / speed_of_sound;
  }
};

/// Physical frequency (Hz) of one-sided bin `w` out of `bins`.
inline double bin_frequency(Eigen::Index w, Eigen::Index bins, double sample_rate) {
  if (bins < 2) return 0.0;
  return static_cast<double>(w) * sample_rate / (2.0 * static_cast<double>(bins - 1));
}

/// Far-field steering vector a(theta, w): entry m = exp(-j 2 pi f(w) dt_m(theta)).
inline Eigen::VectorXcd steering_vector(const ArrayGeometry& geom, double theta, Eigen::Index w, Eigen::Index bins,
                                        double sample_rate) {
  if (w < 0 || w >= bins) throw Error("steering_vector: bin index out of range");
  const double f = bin_frequency(w, bins, sample_rate);
  Eigen::VectorXcd a(geom.size());
  for (Eigen::Index m = 0; m < geom.size(); ++m) {
    if (static_cast<std::size_t>(m) == geom.reference_index) {
      a[m] = cplx(1.0, 0.0);
      continue;
    }
    a[m] = std::polar(1.0, -2.0 * std::numbers::pi * f * geom.relative_delay(m, theta));
  }
  return a;
}

struct RoomScene {
  Point3 room_dims{6.0, 6.0, 3.0};
  std::vector<Point3> source_positions;
  std::vector<double> source_doas;  // azimuth (rad) seen from the array center
  double t60 = 0.0;
  double snr_db = std::numeric_limits<double>::infinity();
  double sample_rate = 16000.0;

  std::size_t sources() const { return source_positions.size(); }

  bool inside(const Point3& p) const {
    for (int i = 0; i < 3; ++i)
      if (!(p[i] > 0.0 && p[i] < room_dims[i])) return false;
    return true;
  }

  void validate() const {
    if ((room_dims.array() <= 0.0).any()) throw Error("RoomScene: room dimensions must be positive");
    if (source_positions.empty()) throw Error("RoomScene: at least one source required");
    if (source_doas.size() != source_positions.size()) throw Error("RoomScene: one DOA per source required");
    if (!(t60 >= 0.0)) throw Error("RoomScene: t60 must be >= 0");
    if (!(sample_rate > 0.0)) throw Error("RoomScene: sample_rate must be positive");
    for (const auto& p : source_positions)
      if (!inside(p)) throw Error("RoomScene: source position outside the room");
  }

  /// Uniform wall reflection coefficient from Sabine's formula, 0 for an anechoic room.
  double reflection_coefficient(double c = 343.0) const {
    if (t60 <= 0.0) return 0.0;
    const double V = room_dims.prod();
    const double S = 2.0 * (room_dims[0] * room_dims[1] + room_dims[0] * room_dims[2] + room_dims[1] * room_dims[2]);
    const double alpha = 24.0 * std::log(10.0) * V / (c * S * t60);
    if (alpha >= 1.0) return 0.0;
    return std::sqrt(1.0 - alpha);
  }
};

/// Impulse responses from one source to every microphone (row m = mic m).
struct Rir {
  Eigen::MatrixXd taps;
  double sample_rate = 16000.0;
  std::vector<Eigen::Index> direct_delay;  // samples, per mic

  Eigen::Index mics() const { return taps.rows(); }
  Eigen::Index length() const { return taps.cols(); }
};

struct RirOptions {
  // The response is kept for length_factor * t60 seconds.
  double length_factor = 1.2;
  // 0: nearest-sample delays. Otherwise the odd length of a Hann-windowed sinc
  // that places every image at its exact fractional delay.
  std::size_t sinc_taps = 0;

  void validate() const {
    if (!(length_factor >= 1.0)) throw Error("rir: length_factor must be >= 1");
    if (sinc_taps != 0 && sinc_taps % 2 == 0) throw Error("rir: sinc_taps must be odd");
  }
};

namespace detail {

// Adds amp * delta(t - delay) to row m, band-limited through a windowed sinc
// of half-width `half` when half > 0.
inline void add_image(Eigen::MatrixXd& taps, Eigen::Index m, double delay, double amp, Eigen::Index half) {
  const Eigen::Index len = taps.cols();
  if (half == 0) {
    const auto k = static_cast<Eigen::Index>(std::lround(delay));
    if (k < len) taps(m, k) += amp;
    return;
  }
  const auto centre = static_cast<Eigen::Index>(std::lround(delay));
  const double width = static_cast<double>(half + 1);
  for (Eigen::Index k = std::max<Eigen::Index>(0, centre - half); k <= centre + half && k < len; ++k) {
    const double x = static_cast<double>(k) - delay;
    if (std::abs(x) >= width) continue;
    const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * x / width);
    taps(m, k) += amp * sinc * win;
  }
}

}  // namespace detail

/// Image-method RIR for source q, uniform reflection coefficient, amplitude
/// beta^order / (4 pi d). Delays round to the nearest sample unless
/// opts.sinc_taps asks for fractional placement; then direct_delay marks the
/// first tap of the direct-path kernel.
inline Rir simulate_rir(const RoomScene& scene, const ArrayGeometry& geom, std::size_t q, RirOptions opts = {}) {
  scene.validate();
  geom.validate();
  opts.validate();
  if (q >= scene.sources()) throw Error("simulate_rir: source index out of range");
  for (const auto& p : geom.mic_positions)
    if (!scene.inside(p)) throw Error("simulate_rir: microphone outside the room");

  const double fs = scene.sample_rate;
  const double c = geom.speed_of_sound;
  const double beta = scene.reflection_coefficient(c);
  const Point3& src = scene.source_positions[q];
  const Point3& L = scene.room_dims;

  double max_direct = 0.0;
  for (const auto& p : geom.mic_positions) max_direct = std::max(max_direct, (p - src).norm());
  const auto half = static_cast<Eigen::Index>(opts.sinc_taps / 2);
  const auto direct_len = static_cast<Eigen::Index>(std::ceil(max_direct * fs / c)) + 1 + half;
  const auto reverb_len = static_cast<Eigen::Index>(std::ceil(opts.length_factor * scene.t60 * fs));
  const Eigen::Index len = beta > 0.0 ? std::max(direct_len, reverb_len) : direct_len;
  const double max_dist = static_cast<double>(len) * c / fs;

  Rir rir;
  rir.sample_rate = fs;
  rir.taps = Eigen::MatrixXd::Zero(geom.size(), len);

  // beta^k lookup; 0^0 = 1 keeps the direct path when beta = 0.
  std::vector<double> beta_pow;
  auto power = [&](int k) {
    if (k >= static_cast<int>(beta_pow.size())) {
      const int start = static_cast<int>(beta_pow.size());
      beta_pow.resize(static_cast<std::size_t>(k + 1));
      for (int i = start; i <= k; ++i) beta_pow[static_cast<std::size_t>(i)] = i == 0 ? 1.0 : std::pow(beta, i);
    }
    return beta_pow[static_cast<std::size_t>(k)];
  };

  std::array<int, 3> n_max{};
  for (int i = 0; i < 3; ++i) n_max[static_cast<std::size_t>(i)] = beta > 0.0 ? static_cast<int>(std::ceil(max_dist / (2.0 * L[i]))) + 1 : 0;

  for (Eigen::Index m = 0; m < geom.size(); ++m) {
    const Point3& r = geom.mic_positions[static_cast<std::size_t>(m)];
    const auto direct = static_cast<Eigen::Index>(std::lround((r - src).norm() * fs / c));
    rir.direct_delay.push_back(std::max<Eigen::Index>(0, direct - half));
    for (int u = 0; u < 2; ++u) {
      for (int lx = -n_max[0]; lx <= n_max[0]; ++lx) {
        const double dx = (1 - 2 * u) * src[0] + 2.0 * lx * L[0] - r[0];
        const int ox = std::abs(lx - u) + std::abs(lx);
        if (beta == 0.0 && ox > 0) continue;
        for (int v = 0; v < 2; ++v) {
          for (int ly = -n_max[1]; ly <= n_max[1]; ++ly) {
            const double dy = (1 - 2 * v) * src[1] + 2.0 * ly * L[1] - r[1];
            const int oy = std::abs(ly - v) + std::abs(ly);
            if (beta == 0.0 && oy > 0) continue;
            const double dxy2 = dx * dx + dy * dy;
            if (dxy2 > max_dist * max_dist) continue;
            for (int w = 0; w < 2; ++w) {
              for (int lz = -n_max[2]; lz <= n_max[2]; ++lz) {
                const double dz = (1 - 2 * w) * src[2] + 2.0 * lz * L[2] - r[2];
                const int oz = std::abs(lz - w) + std::abs(lz);
                if (beta == 0.0 && oz > 0) continue;
                const double d = std::sqrt(dxy2 + dz * dz);
                detail::add_image(rir.taps, m, d * fs / c, power(ox + oy + oz) / (4.0 * std::numbers::pi * d), half);
              }
            }
          }
        }
      }
    }
  }
  return rir;
}

/// Early/late split of an RIR: taps up to direct delay + early_samples stay in
/// `early`, the rest go to `late`.
inline std::pair<Rir, Rir> split_rir(const Rir& rir, Eigen::Index early_samples) {
  Rir early = rir, late = rir;
  for (Eigen::Index m = 0; m < rir.mics(); ++m) {
    const Eigen::Index cut = std::min(rir.length(), rir.direct_delay[static_cast<std::size_t>(m)] + early_samples);
    early.taps.row(m).tail(rir.length() - cut).setZero();
    late.taps.row(m).head(cut).setZero();
  }
  return {early, late};
}

inline void write_rir_wav(const std::filesystem::path& path, const Rir& rir) {
  write_wav(path, TimeSignal(rir.taps, rir.sample_rate), WavEncoding::float32);
}

/// Reads an externally generated RIR; direct delays are taken as the first
/// tap whose magnitude reaches half of the channel peak.
inline Rir read_rir_wav(const std::filesystem::path& path) {
  const TimeSignal s = read_wav(path);
  Rir rir;
  rir.taps = s.samples;
  rir.sample_rate = s.sample_rate;
  for (Eigen::Index m = 0; m < rir.mics(); ++m) {
    const double peak = rir.taps.row(m).cwiseAbs().maxCoeff();
    Eigen::Index d = 0;
    while (d < rir.length() && std::abs(rir.taps(m, d)) < 0.5 * peak) ++d;
    rir.direct_delay.push_back(d);
  }
  return rir;
}

/// Sum over sources of source * RIR, per microphone, without noise.
/// Output length is max over sources of len(s_q) + len(h_q) - 1.
inline TimeSignal convolve_sources(const std::vector<TimeSignal>& sources, const std::vector<Rir>& rirs) {
  if (sources.empty()) throw Error("mix_scene: no sources");
  if (sources.size() != rirs.size()) throw Error("mix_scene: one RIR set per source required");
  const double fs = sources.front().sample_rate;
  const Eigen::Index M = rirs.front().mics();
  Eigen::Index out_len = 0;
  for (std::size_t q = 0; q < sources.size(); ++q) {
    if (sources[q].channels() != 1) throw Error("mix_scene: sources must be mono");
    if (sources[q].sample_rate != fs || rirs[q].sample_rate != fs) throw Error("mix_scene: sample rate mismatch");
    if (rirs[q].mics() != M) throw Error("mix_scene: RIR microphone count mismatch");
    if (sources[q].length() == 0 || rirs[q].length() == 0) throw Error("mix_scene: empty source or RIR");
    out_len = std::max(out_len, sources[q].length() + rirs[q].length() - 1);
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(M, out_len);
  for (std::size_t q = 0; q < sources.size(); ++q) {
    const Eigen::VectorXd s = sources[q].channel(0);
    for (Eigen::Index m = 0; m < M; ++m) {
      const Eigen::VectorXd y = fft_convolve(s, rirs[q].taps.row(m).transpose());
      out.row(m).head(y.size()) += y.transpose();
    }
  }
  return TimeSignal(std::move(out), fs);
}

/// Adds white Gaussian noise so that mean-over-mics signal power / noise power
/// equals snr_db. An infinite SNR leaves the signal untouched.
inline TimeSignal add_white_noise(const TimeSignal& clean, double snr_db, std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0) return clean;
  if (!std::isfinite(snr_db)) throw Error("mix_scene: snr_db must be finite or +inf");
  const double p_sig = clean.samples.squaredNorm() / static_cast<double>(clean.samples.size());
  if (!(p_sig > 0.0)) throw Error("mix_scene: cannot set an SNR against a zero-power signal");
  const double sigma = std::sqrt(p_sig / std::pow(10.0, snr_db / 10.0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  TimeSignal out = clean;
  for (Eigen::Index t = 0; t < out.length(); ++t)
    for (Eigen::Index m = 0; m < out.channels(); ++m) out.samples(m, t) += sigma * gauss(rng);
  return out;
}

inline TimeSignal mix_scene(const std::vector<TimeSignal>& sources, const std::vector<Rir>& rirs, double snr_db,
                            std::uint64_t noise_seed) {
  return add_white_noise(convolve_sources(sources, rirs), snr_db, noise_seed);
}

/// Deterministic speech-like source: syllable-rate (about 4 Hz) amplitude
/// envelope with pauses, voiced harmonic or unvoiced noise excitation per
/// syllable, and a -6 dB/octave spectral tilt above 500 Hz.
inline TimeSignal synth_speechlike(double duration, double sample_rate, std::uint64_t seed) {
  if (!(duration > 0.0) || !(sample_rate > 0.0)) throw Error("synth_speechlike: duration and rate must be positive");
  const auto len = static_cast<Eigen::Index>(std::llround(duration * sample_rate));
  std::mt19937_64 rng(mix_seed(seed, 0x5eed));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(len);
  Eigen::Index t0 = 0;
  while (t0 < len) {
    const auto syl = static_cast<Eigen::Index>((0.15 + 0.2 * uni(rng)) * sample_rate);
    const double amp = 0.3 + 0.7 * uni(rng);
    const bool voiced = uni(rng) < 0.75;
    const double f0_start = 90.0 + 130.0 * uni(rng);
    const double f0_end = f0_start * (0.85 + 0.3 * uni(rng));
    const int harmonics = std::max(1, static_cast<int>(0.5 * sample_rate / std::max(f0_start, f0_end)) - 1);
    const double harm_scale = std::sqrt(2.0 / harmonics);
    double phase = two_pi * uni(rng);
    for (Eigen::Index k = 0; k < syl && t0 + k < len; ++k) {
      const double frac = static_cast<double>(k) / static_cast<double>(syl);
      const double env = amp * std::pow(std::sin(std::numbers::pi * frac), 2);
      double e;
      if (voiced) {
        const double f0 = f0_start + (f0_end - f0_start) * frac;
        phase += two_pi * f0 / sample_rate;
        double h = 0.0;
        for (int i = 1; i <= harmonics; ++i) h += std::cos(i * phase);
        e = harm_scale * h + 0.1 * gauss(rng);
      } else {
        e = gauss(rng);
      }
      x[t0 + k] = env * e;
    }
    t0 += syl;
    if (uni(rng) < 0.15) t0 += static_cast<Eigen::Index>((0.05 + 0.2 * uni(rng)) * sample_rate);
  }

  // Spectral tilt: flat below 500 Hz, 1/f magnitude above.
  const std::size_t nfft = next_pow2(static_cast<std::size_t>(len));
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buf(nfft, 0.0);
  std::copy(x.data(), x.data() + len, buf.begin());
  std::vector<cplx> spec;
  fft.fwd(spec, buf);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = static_cast<double>(k) * sample_rate / static_cast<double>(nfft);
    if (f > 500.0) spec[k] *= 500.0 / f;
  }
  fft.inv(buf, spec, static_cast<Eigen::Index>(nfft));
  for (Eigen::Index t = 0; t < len; ++t) x[t] = buf[static_cast<std::size_t>(t)];

  const double peak = x.cwiseAbs().maxCoeff();
  if (peak > 0.0) x *= 0.5 / peak;
  return TimeSignal::mono(x, sample_rate);
}

}  // namespace dpmclp
