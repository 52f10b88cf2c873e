#pragma once

// Random scene drawing shared by the experiment harness and the order-selection
// study: one target source (plus optional interferers) on a circle around the
// array, image-method RIRs, white noise at the requested SNR, and the early
// component at the reference microphone as evaluation target.

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dpmclp/dsp.hpp"
#include "dpmclp/metrics.hpp"
#include "dpmclp/room.hpp"
#include "dpmclp/wav.hpp"

namespace dpmclp {

enum class SourceKind { speechlike, white_noise, wav };

inline SourceKind parse_source_kind(const std::string& s) {
  if (s == "speechlike") return SourceKind::speechlike;
  if (s == "noise" || s == "white_noise") return SourceKind::white_noise;
  if (s == "wav") return SourceKind::wav;
  throw Error("unknown source kind '" + s + "' (expected speechlike, noise or wav)");
}

inline std::string to_string(SourceKind k) {
  switch (k) {
    case SourceKind::speechlike: return "speechlike";
    case SourceKind::white_noise: return "noise";
    case SourceKind::wav: return "wav";
  }
  return "unknown";
}

struct SceneTemplate {
  Point3 room_dims{6.0, 6.0, 3.0};
  ArrayGeometry array = ArrayGeometry::ula(8, 0.03, Point3(3.0, 3.0, 1.5));
  double source_distance = 1.5;
  double azimuth_min = std::numbers::pi / 6.0;
  double azimuth_max = 5.0 * std::numbers::pi / 6.0;
  std::size_t interferers = 0;
  double duration = 3.0;
  double sample_rate = 16000.0;
  SourceKind source = SourceKind::speechlike;
  std::string source_wav;
  double early_ms = 50.0;
  RirOptions rir;

  void validate() const {
    array.validate();
    if (!(source_distance > 0.0)) throw Error("scene: source_distance must be positive");
    if (!(duration > 0.0) || !(sample_rate > 0.0)) throw Error("scene: duration and sample_rate must be positive");
    if (!(azimuth_max >= azimuth_min)) throw Error("scene: azimuth_max must be >= azimuth_min");
    if (source == SourceKind::wav && source_wav.empty()) throw Error("scene: source = wav requires scene.source_wav");
    rir.validate();
  }
};

struct SceneDraw {
  RoomScene scene;
  std::vector<TimeSignal> sources;
  std::vector<Rir> rirs;
  TimeSignal mics;       // noisy reverberant observation, `duration` long
  TimeSignal reference;  // early component of the target at the reference mic, same length
};

inline TimeSignal draw_source(const SceneTemplate& tpl, std::uint64_t seed) {
  const auto len = static_cast<Eigen::Index>(std::llround(tpl.duration * tpl.sample_rate));
  switch (tpl.source) {
    case SourceKind::speechlike: return synth_speechlike(tpl.duration, tpl.sample_rate, seed);
    case SourceKind::white_noise: {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> g(0.0, 0.1);
      Eigen::VectorXd x(len);
      for (Eigen::Index t = 0; t < len; ++t) x[t] = g(rng);
      return TimeSignal::mono(x, tpl.sample_rate);
    }
    case SourceKind::wav: {
      const TimeSignal w = read_wav(tpl.source_wav);
      if (w.sample_rate != tpl.sample_rate)
        throw Error("scene: '" + tpl.source_wav + "' sample rate differs from scene.sample_rate");
      const Eigen::Index n = std::min(len, w.length());
      return TimeSignal::mono(w.channel(0).head(n), w.sample_rate);
    }
  }
  throw Error("scene: unknown source kind");
}

/// Draws one scene. Source azimuths, signals and noise all derive from `seed`,
/// so the same seed at different t60/SNR gives the same geometry and signals.
inline SceneDraw synthesize_scene(const SceneTemplate& tpl, double t60, double snr_db, std::uint64_t seed) {
  tpl.validate();
  std::mt19937_64 rng(mix_seed(seed, 1));
  std::uniform_real_distribution<double> az(tpl.azimuth_min, tpl.azimuth_max);
  std::uniform_real_distribution<double> full(0.0, 2.0 * std::numbers::pi);

  SceneDraw d;
  d.scene.room_dims = tpl.room_dims;
  d.scene.t60 = t60;
  d.scene.snr_db = snr_db;
  d.scene.sample_rate = tpl.sample_rate;
  const Point3 c = tpl.array.center();
  for (std::size_t q = 0; q <= tpl.interferers; ++q) {
    double theta = az(rng);
    if (q > 0) {
      // Interferers anywhere in the horizontal plane at least 30 degrees from the target.
      do theta = full(rng);
      while (std::abs(std::remainder(theta - d.scene.source_doas.front(), 2.0 * std::numbers::pi)) <
             std::numbers::pi / 6.0);
    }
    d.scene.source_doas.push_back(theta);
    d.scene.source_positions.push_back(c + tpl.source_distance * Point3(std::cos(theta), std::sin(theta), 0.0));
  }
  d.scene.validate();

  SceneTemplate src_tpl = tpl;
  for (std::size_t q = 0; q <= tpl.interferers; ++q) {
    if (q > 0 && src_tpl.source == SourceKind::wav) src_tpl.source = SourceKind::speechlike;
    d.sources.push_back(draw_source(src_tpl, mix_seed(seed, 100 + q)));
    d.rirs.push_back(simulate_rir(d.scene, tpl.array, q, tpl.rir));
  }

  const Eigen::Index len = d.sources.front().length();
  TimeSignal clean = convolve_sources(d.sources, d.rirs);
  clean.samples.conservativeResize(Eigen::NoChange, len);
  d.mics = add_white_noise(clean, snr_db, mix_seed(seed, 2));

  TimeSignal ref = eval_target(d.sources, d.rirs, static_cast<Eigen::Index>(tpl.array.reference_index), tpl.early_ms);
  ref.samples.conservativeResize(Eigen::NoChange, len);
  d.reference = std::move(ref);
  return d;
}

}  // namespace dpmclp
