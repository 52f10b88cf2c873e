#pragma once

// Monte Carlo sweeps: scene synthesis -> enhancement pipeline -> metrics,
// executed in a worker pool and written through a single ordered writer.
//
// Output directory layout:
//   trials.csv   one row per (point, trial, pipeline), job order, fixed header
//   summary.csv  median and IQR per (point, pipeline)
//   timing.csv   wall-clock seconds per row (kept apart so trials.csv is
//                byte-identical across reruns)
//   orders.csv   order-selection table when orders.auto is set
//   config.cfg   the config text the sweep was started with (checked on resume)

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dpmclp/beamformer.hpp"
#include "dpmclp/config.hpp"
#include "dpmclp/container.hpp"
#include "dpmclp/mclp.hpp"
#include "dpmclp/metrics.hpp"
#include "dpmclp/order_selection.hpp"
#include "dpmclp/scenario.hpp"
#include "dpmclp/stft.hpp"
#include "dpmclp/wav.hpp"

namespace dpmclp {

struct Orders {
  std::size_t k_t = 0;
  std::size_t k_f = 0;
};

struct TrialResult {
  double t60 = 0.0;
  double snr_db = 0.0;
  std::size_t trial_id = 0;
  Pipeline pipeline = Pipeline::passthrough;
  std::size_t k_t = 0;
  std::size_t k_f = 0;
  double si_snr_in = std::numeric_limits<double>::quiet_NaN();
  double si_snr_out = std::numeric_limits<double>::quiet_NaN();
  double lsd_out = std::numeric_limits<double>::quiet_NaN();
  std::size_t iters_mclp = 0;
  std::size_t iters_beam = 0;
  double wall_time = 0.0;
  std::string failure;  // empty when the trial succeeded

  bool ok() const { return failure.empty(); }
  double improvement() const { return si_snr_out - si_snr_in; }
};

/// Output of one pipeline on one observation.
struct Enhancement {
  TimeSignal output;
  std::size_t iters_mclp = 0;
  std::size_t iters_beam = 0;
  std::optional<DualPathFilters> filters;
  std::optional<BeamWeights> weights;
};

/// Runs `pipeline` on the multichannel observation `mics` with target azimuth theta_s.
inline Enhancement enhance(const TimeSignal& mics, Pipeline pipeline, const ExperimentConfig& cfg, Orders orders,
                           double theta_s) {
  const auto ref = static_cast<Eigen::Index>(cfg.scene.array.reference_index);
  Enhancement e;
  if (pipeline == Pipeline::passthrough) {
    e.output = TimeSignal::mono(mics.channel(ref), mics.sample_rate);
    return e;
  }
  const TfTensor Y = stft(mics, cfg.stft);
  MclpConfig mc = cfg.mclp;
  mc.k_t = orders.k_t;
  mc.k_f = pipeline == Pipeline::temporal_only ? 0 : orders.k_f;
  mc.lambda_z = cfg.lambda_z_rel * Y.mean_abs();
  MclpResult r = estimate_filters(Y, mc);
  e.iters_mclp = r.state.iter;
  e.filters = std::move(r.filters);

  if (pipeline == Pipeline::mclp_only) {
    e.output = istft(r.estimate.channel(ref), cfg.stft);
    return e;
  }
  BeamConfig bc = cfg.beam;
  bc.lambda_w = cfg.lambda_w_rel * r.estimate.mean_abs();
  BeamWeights bw = estimate_weights(r.estimate, theta_s, cfg.scene.array, bc);
  for (const auto& b : bw.bins) e.iters_beam = std::max(e.iters_beam, b.outer_iters);
  e.output = istft(apply_weights(r.estimate, bw), cfg.stft);
  e.weights = std::move(bw);
  return e;
}

inline std::uint64_t trial_seed(const ExperimentConfig& cfg, std::size_t trial_id) {
  return mix_seed(cfg.seed, trial_id);
}

inline std::string trial_stem(const SweepPoint& p, std::size_t trial_id, Pipeline pl) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "t60_%.3f_snr_%g_trial_%zu_%s", p.t60, p.snr_db, trial_id, to_string(pl).c_str());
  return buf;
}

/// Per-trial artefact sink; empty directory disables saving.
struct ArtifactDir {
  std::filesystem::path dir;
};

/// All requested pipelines on one drawn scene. Scene synthesis is shared; every
/// pipeline failure is captured in its own row.
inline std::vector<TrialResult> run_trial_pipelines(const ExperimentConfig& cfg, const SweepPoint& point,
                                                    std::size_t trial_id, const std::vector<Pipeline>& pipelines,
                                                    Orders orders, const ArtifactDir& artifacts = {}) {
  std::vector<TrialResult> rows;
  for (Pipeline p : pipelines) {
    TrialResult r;
    r.t60 = point.t60;
    r.snr_db = point.snr_db;
    r.trial_id = trial_id;
    r.pipeline = p;
    r.k_t = orders.k_t;
    r.k_f = p == Pipeline::temporal_only ? 0 : orders.k_f;
    rows.push_back(r);
  }

  std::optional<SceneDraw> scene;
  try {
    scene = synthesize_scene(cfg.scene, point.t60, point.snr_db, trial_seed(cfg, trial_id));
  } catch (const std::exception& ex) {
    for (auto& r : rows) r.failure = std::string("scene: ") + ex.what();
    return rows;
  }
  const auto ref = static_cast<Eigen::Index>(cfg.scene.array.reference_index);
  const double in = si_snr(EvalPair(scene->mics, scene->reference, ref, 0));
  const double theta_s = scene->scene.source_doas.front();

  for (auto& r : rows) {
    r.si_snr_in = in;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      Enhancement e = enhance(scene->mics, r.pipeline, cfg, orders, theta_s);
      const EvalPair pair(e.output, scene->reference);
      r.si_snr_out = si_snr(pair);
      r.lsd_out = lsd(pair, cfg.stft);
      r.iters_mclp = e.iters_mclp;
      r.iters_beam = e.iters_beam;
      if (!std::isfinite(r.si_snr_out) || !std::isfinite(r.lsd_out)) throw Error("non-finite metric");
      if (!artifacts.dir.empty()) {
        const std::string stem = trial_stem(point, trial_id, r.pipeline);
        if (cfg.save_audio) write_wav(artifacts.dir / "audio" / (stem + ".wav"), e.output, WavEncoding::float32);
        if (cfg.save_filters && e.filters) {
          EnhancerArtifacts a{*e.filters, std::nullopt};
          if (e.weights) {
            WeightSet ws;
            ws.geometry = cfg.scene.array;
            ws.sample_rate = cfg.scene.sample_rate;
            for (const auto& b : e.weights->bins) ws.w.push_back(b.w);
            a.weights = std::move(ws);
          }
          write_container(artifacts.dir / "filters" / (stem + ".dpmc"), a);
        }
      }
    } catch (const std::exception& ex) {
      r.failure = ex.what();
      r.si_snr_out = r.lsd_out = std::numeric_limits<double>::quiet_NaN();
    }
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return rows;
}

/// Single pipeline, single trial.
inline TrialResult run_trial(const ExperimentConfig& cfg, const SweepPoint& point, std::size_t trial_id,
                             Pipeline pipeline, std::optional<Orders> orders = std::nullopt) {
  const Orders o = orders.value_or(Orders{cfg.mclp.k_t, cfg.mclp.k_f});
  return run_trial_pipelines(cfg, point, trial_id, {pipeline}, o).front();
}

// ---------------------------------------------------------------------------
// CSV

inline std::string trials_csv_header() {
  return "t60,snr_db,trial_id,pipeline,k_t,k_f,si_snr_in,si_snr_out,lsd_out,iters_mclp,iters_beam,status";
}

inline std::string summary_csv_header() {
  return "t60,snr_db,pipeline,n_ok,n_failed,si_snr_out_median,si_snr_out_iqr,si_snr_gain_median,si_snr_gain_iqr,"
         "lsd_out_median,lsd_out_iqr";
}

namespace detail {

inline std::string fmt_num(double v, const char* spec = "%.6f") {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string status_text(const TrialResult& r) {
  if (r.ok()) return "ok";
  std::string msg = r.failure;
  for (char& ch : msg)
    if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ';';
  return "failed: " + msg;
}

/// Type-7 (linear interpolation) quantile of a sorted sample.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

struct Stats {
  double median = std::numeric_limits<double>::quiet_NaN();
  double iqr = std::numeric_limits<double>::quiet_NaN();
};

inline Stats median_iqr(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return {detail::quantile_sorted(v, 0.5), detail::quantile_sorted(v, 0.75) - detail::quantile_sorted(v, 0.25)};
}

inline std::string trials_csv_row(const TrialResult& r) {
  using detail::fmt_num;
  std::ostringstream s;
  s << fmt_num(r.t60, "%.3f") << ',' << fmt_num(r.snr_db, "%g") << ',' << r.trial_id << ',' << to_string(r.pipeline)
    << ',' << r.k_t << ',' << r.k_f << ',' << fmt_num(r.si_snr_in) << ',' << fmt_num(r.si_snr_out) << ','
    << fmt_num(r.lsd_out) << ',' << r.iters_mclp << ',' << r.iters_beam << ',' << detail::status_text(r);
  return s.str();
}

inline TrialResult parse_trials_csv_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) f.push_back(item);
  if (f.size() != 12) throw Error("trials.csv: malformed row '" + line + "'");
  auto num = [](const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    return detail::parse_double(s);
  };
  TrialResult r;
  r.t60 = num(f[0]);
  r.snr_db = num(f[1]);
  r.trial_id = detail::parse_uint(f[2]);
  r.pipeline = parse_pipeline(f[3]);
  r.k_t = detail::parse_uint(f[4]);
  r.k_f = detail::parse_uint(f[5]);
  r.si_snr_in = num(f[6]);
  r.si_snr_out = num(f[7]);
  r.lsd_out = num(f[8]);
  r.iters_mclp = detail::parse_uint(f[9]);
  r.iters_beam = detail::parse_uint(f[10]);
  if (f[11] != "ok") r.failure = f[11].rfind("failed: ", 0) == 0 ? f[11].substr(8) : f[11];
  return r;
}

struct SummaryRow {
  double t60 = 0.0;
  double snr_db = 0.0;
  Pipeline pipeline = Pipeline::passthrough;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  Stats si_snr_out, gain, lsd_out;
};

/// Median/IQR per (point, pipeline), in order of first appearance.
inline std::vector<SummaryRow> summarize(const std::vector<TrialResult>& rows) {
  std::vector<SummaryRow> out;
  std::vector<std::vector<double>> snr, gain, lsdv;
  for (const auto& r : rows) {
    std::size_t k = 0;
    while (k < out.size() && !(out[k].t60 == r.t60 && out[k].snr_db == r.snr_db && out[k].pipeline == r.pipeline)) ++k;
    if (k == out.size()) {
      out.push_back({r.t60, r.snr_db, r.pipeline, 0, 0, {}, {}, {}});
      snr.emplace_back();
      gain.emplace_back();
      lsdv.emplace_back();
    }
    if (!r.ok()) {
      ++out[k].n_failed;
      continue;
    }
    ++out[k].n_ok;
    snr[k].push_back(r.si_snr_out);
    gain[k].push_back(r.improvement());
    lsdv[k].push_back(r.lsd_out);
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].si_snr_out = median_iqr(snr[k]);
    out[k].gain = median_iqr(gain[k]);
    out[k].lsd_out = median_iqr(lsdv[k]);
  }
  return out;
}

inline std::string summary_csv_row(const SummaryRow& s) {
  using detail::fmt_num;
  std::ostringstream o;
  o << fmt_num(s.t60, "%.3f") << ',' << fmt_num(s.snr_db, "%g") << ',' << to_string(s.pipeline) << ',' << s.n_ok << ','
    << s.n_failed << ',' << fmt_num(s.si_snr_out.median) << ',' << fmt_num(s.si_snr_out.iqr) << ','
    << fmt_num(s.gain.median) << ',' << fmt_num(s.gain.iqr) << ',' << fmt_num(s.lsd_out.median) << ','
    << fmt_num(s.lsd_out.iqr);
  return o.str();
}

inline const SummaryRow* find_summary(const std::vector<SummaryRow>& rows, double t60, double snr_db, Pipeline p) {
  for (const auto& r : rows)
    if (std::abs(r.t60 - t60) < 1e-9 && r.snr_db == snr_db && r.pipeline == p) return &r;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepOptions {
  std::filesystem::path out_dir;
  std::optional<std::size_t> workers;  // CLI override
  bool resume = false;
  std::string config_text;             // stored for resume checks
  std::ostream* log = nullptr;
};

struct SweepReport {
  std::size_t rows = 0;
  std::size_t failed = 0;
  std::size_t resumed_rows = 0;
  std::vector<TrialResult> results;
  std::vector<SummaryRow> summary;
  std::map<double, Orders> orders;
};

inline constexpr const char* kWorkersEnv = "DPMCLP_WORKERS";

/// CLI flag, then the environment variable, then the config value.
inline std::size_t resolve_workers(const ExperimentConfig& cfg, std::optional<std::size_t> cli) {
  if (cli) {
    if (*cli < 1) throw Error("--workers must be >= 1");
    return *cli;
  }
  if (const char* env = std::getenv(kWorkersEnv); env && *env) {
    try {
      const auto n = detail::parse_uint(env);
      if (n < 1) throw Error("must be >= 1");
      return n;
    } catch (const Error& e) {
      throw Error(std::string(kWorkersEnv) + ": " + e.what());
    }
  }
  return cfg.workers;
}

/// Orders per sweep t60: fixed from config, or from the order-selection study.
inline std::map<double, Orders> resolve_orders(const ExperimentConfig& cfg, std::ostream* log = nullptr,
                                               std::vector<OrderStudyRow>* study_rows = nullptr) {
  std::map<double, Orders> out;
  for (double t60 : cfg.t60s) {
    if (out.count(t60)) continue;
    if (!cfg.auto_orders) {
      out[t60] = {cfg.mclp.k_t, cfg.mclp.k_f};
      continue;
    }
    const auto rows = order_selection_study(cfg.order_study(), {t60}, cfg.thresholds);
    Orders o{rows[0].choice.k, rows[1].choice.k};
    out[t60] = o;
    if (log) *log << "orders: t60 = " << t60 << " s -> K_t = " << o.k_t << ", K_f = " << o.k_f << "\n";
    if (study_rows) study_rows->insert(study_rows->end(), rows.begin(), rows.end());
  }
  return out;
}

namespace detail {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write '" + p.string() + "'");
}

/// Complete rows of an existing trials.csv; a partially written last line is dropped.
inline std::vector<std::string> complete_rows(const std::filesystem::path& p) {
  const std::string text = read_file(p);
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (true) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) break;
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  if (lines.empty() || lines.front() != trials_csv_header())
    throw Error("cannot resume: '" + p.string() + "' has an unexpected header");
  lines.erase(lines.begin());
  return lines;
}

}  // namespace detail

/// Runs every (point x trial x pipeline) combination. Rows are flushed as soon as
/// all earlier jobs have finished, so an interrupted sweep can be resumed.
inline SweepReport run_sweep(const ExperimentConfig& cfg, const SweepOptions& opt) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (opt.out_dir.empty()) throw Error("run_sweep: output directory required");
  fs::create_directories(opt.out_dir);
  if (cfg.save_audio) fs::create_directories(opt.out_dir / "audio");
  if (cfg.save_filters) fs::create_directories(opt.out_dir / "filters");

  const fs::path trials_path = opt.out_dir / "trials.csv";
  const fs::path timing_path = opt.out_dir / "timing.csv";
  const fs::path config_path = opt.out_dir / "config.cfg";

  SweepReport rep;
  std::vector<std::string> done;
  if (opt.resume && fs::exists(trials_path)) {
    if (fs::exists(config_path) && detail::read_file(config_path) != opt.config_text)
      throw Error("cannot resume: config differs from the one in '" + config_path.string() + "'");
    done = detail::complete_rows(trials_path);
  }
  detail::write_file(config_path, opt.config_text);

  std::vector<OrderStudyRow> study;
  rep.orders = resolve_orders(cfg, opt.log, &study);
  if (cfg.auto_orders) {
    std::string t = order_study_csv_header() + "\n";
    for (const auto& r : study) t += order_study_csv_row(r) + "\n";
    detail::write_file(opt.out_dir / "orders.csv", t);
  }

  struct Job {
    SweepPoint point;
    std::size_t trial;
  };
  std::vector<Job> jobs;
  for (const auto& p : cfg.points())
    for (std::size_t t = 0; t < cfg.trials; ++t) jobs.push_back({p, t});
  const std::size_t per_job = cfg.pipelines.size();

  const std::size_t skip = std::min(done.size() / per_job, jobs.size());
  done.resize(skip * per_job);
  for (const auto& line : done) rep.results.push_back(parse_trials_csv_row(line));
  rep.resumed_rows = done.size();

  {
    std::string head = trials_csv_header() + "\n";
    for (const auto& line : done) head += line + "\n";
    detail::write_file(trials_path, head);
    if (!opt.resume || !fs::exists(timing_path)) detail::write_file(timing_path, "t60,snr_db,trial_id,pipeline,wall_time\n");
  }
  std::ofstream trials_out(trials_path, std::ios::binary | std::ios::app);
  std::ofstream timing_out(timing_path, std::ios::binary | std::ios::app);
  if (!trials_out || !timing_out) throw Error("cannot open output files in '" + opt.out_dir.string() + "'");

  const std::size_t workers = std::min(resolve_workers(cfg, opt.workers), std::max<std::size_t>(1, jobs.size() - skip));
  const ArtifactDir art{(cfg.save_audio || cfg.save_filters) ? opt.out_dir : fs::path()};

  std::vector<std::optional<std::vector<TrialResult>>> slots(jobs.size());
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{skip};

  auto work = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      auto rows = run_trial_pipelines(cfg, jobs[j].point, jobs[j].trial, cfg.pipelines,
                                      rep.orders.at(jobs[j].point.t60), art);
      {
        std::lock_guard lk(mu);
        slots[j] = std::move(rows);
      }
      cv.notify_all();
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);

  // Single writer: emit rows strictly in job order.
  for (std::size_t j = skip; j < jobs.size(); ++j) {
    std::vector<TrialResult> rows;
    {
      std::unique_lock lk(mu);
      cv.wait(lk, [&] { return slots[j].has_value(); });
      rows = std::move(*slots[j]);
      slots[j].reset();
    }
    for (const auto& r : rows) {
      trials_out << trials_csv_row(r) << '\n';
      timing_out << detail::fmt_num(r.t60, "%.3f") << ',' << detail::fmt_num(r.snr_db, "%g") << ',' << r.trial_id
                 << ',' << to_string(r.pipeline) << ',' << detail::fmt_num(r.wall_time, "%.3f") << '\n';
      // Keep the in-memory copy identical to what a resumed run would parse back.
      rep.results.push_back(parse_trials_csv_row(trials_csv_row(r)));
      if (!r.ok() && opt.log) *opt.log << "trial failed: " << trials_csv_row(r) << "\n";
    }
    trials_out.flush();
    timing_out.flush();
    if (!trials_out) {
      for (auto& t : pool) t.join();
      throw Error("write to '" + trials_path.string() + "' failed; rerun with --resume");
    }
    if (opt.log) *opt.log << "job " << (j + 1) << "/" << jobs.size() << " done\n";
  }
  for (auto& t : pool) t.join();

  rep.rows = rep.results.size();
  for (const auto& r : rep.results) rep.failed += r.ok() ? 0 : 1;
  rep.summary = summarize(rep.results);
  std::string s = summary_csv_header() + "\n";
  for (const auto& row : rep.summary) s += summary_csv_row(row) + "\n";
  detail::write_file(opt.out_dir / "summary.csv", s);
  return rep;
}

}  // namespace dpmclp
