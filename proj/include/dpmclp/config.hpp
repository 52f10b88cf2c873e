#pragma once

// Experiment configuration: flat UTF-8 text, one `key = value` per line, dotted
// section prefixes, '#' starts a comment. Lists are comma separated. Unknown
// keys are rejected.
//
//   scene.room            Lx, Ly, Lz (m)                       6, 6, 3
//   scene.distance        source distance from array centre    1.5
//   scene.azimuth_min/max target azimuth range (degrees)       30 / 150
//   scene.interferers     extra speech-like sources            0
//   scene.duration        seconds                              3
//   scene.sample_rate     Hz                                   16000
//   scene.source          speechlike | noise | wav             speechlike
//   scene.source_wav      path (source = wav)
//   scene.early_ms        early/late split for the target      50
//   scene.rir_length      RIR length as a multiple of t60      1.2
//   scene.rir_sinc_taps   0 = nearest-sample image delays, else odd sinc length   0
//   array.mics, array.spacing, array.center, array.reference, array.speed_of_sound
//   stft.frame_len, stft.hop, stft.window (hann | hamming | rectangular)
//   mclp.k_t, mclp.k_f, mclp.delta_t, mclp.lambda_z_rel, mclp.rho_g, mclp.mu_z,
//   mclp.gamma, mclp.max_iters, mclp.tol, mclp.diag_load,
//   mclp.diag_load_f (frequential filter loading, defaults to diag_load),
//   mclp.guard_f (extra masked bins either side of the centre bin)
//   beam.lambda_w_rel, beam.rho_w, beam.mu_w, beam.gamma_w, beam.rho_1, beam.gamma_1,
//   beam.max_outer, beam.max_inner, beam.tol, beam.constraint_tol, beam.diag_load
//   thresholds.delta_1, thresholds.delta_2
//   orders.auto, orders.trials, orders.max_lag_frames, orders.max_lag_bins, orders.seed
//   sweep.t60             list of seconds
//   sweep.snr_db          list of dB (inf disables noise); points are the product
//   trials, seed, workers
//   pipelines             subset of passthrough, mclp_only, temporal_only, proposed
//   output.save_audio, output.save_filters
//
// lambda_z and lambda_w are given relative to the mean magnitude of the tensor
// they act on. mu_z and mu_w default to 2/rho when not set.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dpmclp/beamformer.hpp"
#include "dpmclp/mclp.hpp"
#include "dpmclp/order_selection.hpp"
#include "dpmclp/scenario.hpp"
#include "dpmclp/stft.hpp"

namespace dpmclp {

enum class Pipeline { passthrough, mclp_only, temporal_only, proposed };

inline std::string to_string(Pipeline p) {
  switch (p) {
    case Pipeline::passthrough: return "passthrough";
    case Pipeline::mclp_only: return "mclp_only";
    case Pipeline::temporal_only: return "temporal_only";
    case Pipeline::proposed: return "proposed";
  }
  return "unknown";
}

inline Pipeline parse_pipeline(const std::string& s) {
  if (s == "passthrough") return Pipeline::passthrough;
  if (s == "mclp_only") return Pipeline::mclp_only;
  if (s == "temporal_only") return Pipeline::temporal_only;
  if (s == "proposed") return Pipeline::proposed;
  throw Error("unknown pipeline '" + s + "'");
}

struct SweepPoint {
  double t60 = 0.0;
  double snr_db = 25.0;
};

struct ExperimentConfig {
  SceneTemplate scene;
  StftConfig stft;
  MclpConfig mclp;
  double lambda_z_rel = 0.01;
  BeamConfig beam;
  double lambda_w_rel = 0.01;
  ThresholdPair thresholds;
  bool auto_orders = false;
  std::size_t order_trials = 20;
  std::size_t order_max_lag_frames = 40;
  std::size_t order_max_lag_bins = 16;
  std::uint64_t order_seed = 1;
  std::vector<double> t60s{0.3};
  std::vector<double> snrs{25.0};
  std::size_t trials = 1;
  std::uint64_t seed = 1;
  std::vector<Pipeline> pipelines{Pipeline::passthrough, Pipeline::temporal_only, Pipeline::proposed};
  std::size_t workers = 1;
  bool save_audio = false;
  bool save_filters = false;

  ExperimentConfig() {
    mclp.k_t = 10;
    mclp.k_f = 1;
  }

  std::vector<SweepPoint> points() const {
    std::vector<SweepPoint> p;
    for (double t : t60s)
      for (double s : snrs) p.push_back({t, s});
    return p;
  }

  OrderStudyConfig order_study() const {
    OrderStudyConfig o;
    o.scene.room_dims = scene.room_dims;
    o.scene.array = scene.array;
    o.scene.source_distance = scene.source_distance;
    o.scene.azimuth_min = scene.azimuth_min;
    o.scene.azimuth_max = scene.azimuth_max;
    o.scene.sample_rate = scene.sample_rate;
    o.scene.rir = scene.rir;
    o.stft = stft;
    o.trials = order_trials;
    o.seed = order_seed;
    o.max_lag_frames = order_max_lag_frames;
    o.max_lag_bins = order_max_lag_bins;
    return o;
  }

  void validate() const {
    scene.validate();
    stft.validate();
    mclp.validate();
    beam.validate();
    thresholds.validate();
    if (trials < 1) throw Error("trials must be >= 1");
    if (t60s.empty() || snrs.empty()) throw Error("sweep must contain at least one point");
    for (double t : t60s)
      if (!(t >= 0.0)) throw Error("sweep.t60 values must be >= 0");
    if (pipelines.empty()) throw Error("pipelines must not be empty");
    if (workers < 1) throw Error("workers must be >= 1");
    if (!(lambda_z_rel >= 0.0) || !(lambda_w_rel >= 0.0)) throw Error("lambda_*_rel must be >= 0");
    if (auto_orders && order_trials < 2) throw Error("orders.trials must be >= 2");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& s) {
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw Error("expected a number, got '" + s + "'");
  return v;
}

inline std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw Error("expected a non-negative integer, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw Error("expected a boolean, got '" + s + "'");
}

inline std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> v;
  for (const auto& x : split_list(s)) v.push_back(parse_double(x));
  if (v.empty()) throw Error("expected a non-empty list");
  return v;
}

inline Point3 parse_point(const std::string& s) {
  const auto v = parse_doubles(s);
  if (v.size() != 3) throw Error("expected three comma-separated values");
  return {v[0], v[1], v[2]};
}

}  // namespace detail

/// Parses config text. `origin` names the source in error messages.
inline ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>") {
  using namespace detail;
  ExperimentConfig c;
  std::size_t mics = 8;
  double spacing = 0.03;
  std::optional<Point3> center;
  std::size_t reference = 0;
  double speed = 343.0;
  std::optional<double> mu_z, mu_w;
  double az_min_deg = 30.0, az_max_deg = 150.0;

  auto sz = [](std::size_t& dst) { return [&dst](const std::string& v) { dst = parse_uint(v); }; };
  auto dbl = [](double& dst) { return [&dst](const std::string& v) { dst = parse_double(v); }; };
  auto bln = [](bool& dst) { return [&dst](const std::string& v) { dst = parse_bool(v); }; };
  auto u64 = [](std::uint64_t& dst) { return [&dst](const std::string& v) { dst = parse_uint(v); }; };

  const std::map<std::string, std::function<void(const std::string&)>> keys = {
      {"scene.room", [&](const std::string& v) { c.scene.room_dims = parse_point(v); }},
      {"scene.distance", dbl(c.scene.source_distance)},
      {"scene.azimuth_min", dbl(az_min_deg)},
      {"scene.azimuth_max", dbl(az_max_deg)},
      {"scene.interferers", sz(c.scene.interferers)},
      {"scene.duration", dbl(c.scene.duration)},
      {"scene.sample_rate", dbl(c.scene.sample_rate)},
      {"scene.source", [&](const std::string& v) { c.scene.source = parse_source_kind(v); }},
      {"scene.source_wav", [&](const std::string& v) { c.scene.source_wav = v; }},
      {"scene.early_ms", dbl(c.scene.early_ms)},
      {"scene.rir_length", dbl(c.scene.rir.length_factor)},
      {"scene.rir_sinc_taps", sz(c.scene.rir.sinc_taps)},
      {"array.mics", sz(mics)},
      {"array.spacing", dbl(spacing)},
      {"array.center", [&](const std::string& v) { center = parse_point(v); }},
      {"array.reference", sz(reference)},
      {"array.speed_of_sound", dbl(speed)},
      {"stft.frame_len", sz(c.stft.frame_len)},
      {"stft.hop", sz(c.stft.hop)},
      {"stft.window", [&](const std::string& v) { c.stft.window = parse_window(v); }},
      {"mclp.k_t", sz(c.mclp.k_t)},
      {"mclp.k_f", sz(c.mclp.k_f)},
      {"mclp.delta_t", sz(c.mclp.delta_t)},
      {"mclp.lambda_z_rel", dbl(c.lambda_z_rel)},
      {"mclp.rho_g", dbl(c.mclp.rho_g)},
      {"mclp.mu_z", [&](const std::string& v) { mu_z = parse_double(v); }},
      {"mclp.gamma", dbl(c.mclp.gamma)},
      {"mclp.max_iters", sz(c.mclp.max_iters)},
      {"mclp.tol", dbl(c.mclp.tol)},
      {"mclp.diag_load", dbl(c.mclp.diag_load)},
      {"mclp.diag_load_f", [&](const std::string& v) { c.mclp.diag_load_f = parse_double(v); }},
      {"mclp.guard_f", sz(c.mclp.guard_f)},
      {"beam.lambda_w_rel", dbl(c.lambda_w_rel)},
      {"beam.rho_w", dbl(c.beam.rho_w)},
      {"beam.mu_w", [&](const std::string& v) { mu_w = parse_double(v); }},
      {"beam.gamma_w", dbl(c.beam.gamma_w)},
      {"beam.rho_1", dbl(c.beam.rho_1)},
      {"beam.gamma_1", dbl(c.beam.gamma_1)},
      {"beam.max_outer", sz(c.beam.max_outer)},
      {"beam.max_inner", sz(c.beam.max_inner)},
      {"beam.tol", dbl(c.beam.tol)},
      {"beam.constraint_tol", dbl(c.beam.constraint_tol)},
      {"beam.diag_load", dbl(c.beam.diag_load)},
      {"thresholds.delta_1", dbl(c.thresholds.delta_1)},
      {"thresholds.delta_2", dbl(c.thresholds.delta_2)},
      {"orders.auto", bln(c.auto_orders)},
      {"orders.trials", sz(c.order_trials)},
      {"orders.max_lag_frames", sz(c.order_max_lag_frames)},
      {"orders.max_lag_bins", sz(c.order_max_lag_bins)},
      {"orders.seed", u64(c.order_seed)},
      {"sweep.t60", [&](const std::string& v) { c.t60s = parse_doubles(v); }},
      {"sweep.snr_db", [&](const std::string& v) { c.snrs = parse_doubles(v); }},
      {"trials", sz(c.trials)},
      {"seed", u64(c.seed)},
      {"workers", sz(c.workers)},
      {"pipelines",
       [&](const std::string& v) {
         c.pipelines.clear();
         for (const auto& p : split_list(v)) c.pipelines.push_back(parse_pipeline(p));
       }},
      {"output.save_audio", bln(c.save_audio)},
      {"output.save_filters", bln(c.save_filters)},
  };

  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = keys.find(key);
    if (it == keys.end()) throw Error(where + "unknown key '" + key + "'");
    if (seen.count(key)) throw Error(where + "duplicate key '" + key + "'");
    seen[key] = lineno;
    if (value.empty()) throw Error(where + "missing value for '" + key + "'");
    try {
      it->second(value);
    } catch (const Error& e) {
      throw Error(where + key + ": " + e.what());
    }
  }

  if (mics < 1) throw Error(origin + ": array.mics must be >= 1");
  c.scene.array = ArrayGeometry::ula(mics, spacing, center.value_or(Point3(0.5 * c.scene.room_dims)), speed);
  c.scene.array.reference_index = reference;
  c.scene.azimuth_min = az_min_deg * std::numbers::pi / 180.0;
  c.scene.azimuth_max = az_max_deg * std::numbers::pi / 180.0;
  c.mclp.mu_z = mu_z.value_or(2.0 / c.mclp.rho_g);
  c.beam.mu_w = mu_w.value_or(2.0 / c.beam.rho_w);
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(origin + ": " + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

}  // namespace dpmclp
