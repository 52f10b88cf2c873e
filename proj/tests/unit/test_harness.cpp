#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dpmclp/dpmclp.hpp"

using namespace dpmclp;
namespace fs = std::filesystem;

namespace {

// Small enough that a full pipeline run takes well under a second.
const char* kTinyConfig = R"(
scene.duration = 0.6
array.mics = 3
sweep.t60 = 0.3
sweep.snr_db = 20
trials = 1
seed = 5
mclp.k_t = 3
mclp.k_f = 1
mclp.max_iters = 4
beam.max_outer = 6
pipelines = passthrough, temporal_only, proposed
)";

ExperimentConfig tiny(const std::string& extra = "") { return parse_config(std::string(kTinyConfig) + extra); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dpmclp_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) { return detail::read_file(p); }

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

SweepReport sweep(const ExperimentConfig& cfg, const fs::path& dir, const std::string& text, bool resume = false,
                  std::size_t workers = 1) {
  SweepOptions o;
  o.out_dir = dir;
  o.config_text = text;
  o.resume = resume;
  o.workers = workers;
  return run_sweep(cfg, o);
}

struct Cli {
  int code;
  std::string out, err;
};

Cli cli(const std::string& args) {
  const char* exe = std::getenv("DPMCLP_CLI");
  if (!exe) throw std::runtime_error("DPMCLP_CLI not set");
  const fs::path dir = scratch("cli");
  const std::string cmd = std::string("\"") + exe + "\" " + args + " > \"" + (dir / "out").string() + "\" 2> \"" +
                          (dir / "err").string() + "\"";
  const int st = std::system(cmd.c_str());
  Cli r{WIFEXITED(st) ? WEXITSTATUS(st) : -1, slurp(dir / "out"), slurp(dir / "err")};
  fs::remove_all(dir);
  return r;
}

bool have_cli() { return std::getenv("DPMCLP_CLI") != nullptr; }

}  // namespace

// ---------------------------------------------------------------------------
// Trials

TEST(RunTrial, PassthroughKeepsInputScore) {
  const auto cfg = tiny();
  const TrialResult r = run_trial(cfg, {0.3, 20.0}, 0, Pipeline::passthrough);
  ASSERT_TRUE(r.ok()) << r.failure;
  EXPECT_EQ(r.si_snr_out, r.si_snr_in);
  EXPECT_EQ(r.iters_mclp, 0u);
}

TEST(RunTrial, TemporalOnlyIsProposedWithoutFrequentialTaps) {
  const auto cfg = tiny();
  const TrialResult a = run_trial(cfg, {0.3, 20.0}, 1, Pipeline::temporal_only);
  const TrialResult b = run_trial(cfg, {0.3, 20.0}, 1, Pipeline::proposed, Orders{cfg.mclp.k_t, 0});
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_EQ(a.si_snr_out, b.si_snr_out);
  EXPECT_EQ(a.lsd_out, b.lsd_out);
  EXPECT_EQ(a.iters_mclp, b.iters_mclp);
  EXPECT_EQ(a.iters_beam, b.iters_beam);
}

TEST(RunTrial, Deterministic) {
  const auto cfg = tiny();
  const TrialResult a = run_trial(cfg, {0.3, 20.0}, 2, Pipeline::proposed);
  const TrialResult b = run_trial(cfg, {0.3, 20.0}, 2, Pipeline::proposed);
  EXPECT_EQ(trials_csv_row(a), trials_csv_row(b));
  EXPECT_EQ(a.si_snr_out, b.si_snr_out);
  const TrialResult c = run_trial(cfg, {0.3, 20.0}, 3, Pipeline::proposed);
  EXPECT_NE(a.si_snr_in, c.si_snr_in);
}

TEST(RunTrial, SceneFailureBecomesAMarkedRow) {
  auto cfg = tiny("scene.source = wav\nscene.source_wav = /nonexistent/x.wav\n");
  const auto rows = run_trial_pipelines(cfg, {0.3, 20.0}, 0, cfg.pipelines, {3, 1});
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_FALSE(r.ok());
    EXPECT_NE(detail::status_text(r).find("failed: scene"), std::string::npos);
    EXPECT_EQ(detail::status_text(r).find(','), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// CSV

TEST(TrialsCsv, RowRoundTrip) {
  TrialResult r;
  r.t60 = 0.4;
  r.snr_db = std::numeric_limits<double>::infinity();
  r.trial_id = 17;
  r.pipeline = Pipeline::mclp_only;
  r.k_t = 12;
  r.k_f = 2;
  r.si_snr_in = -3.25;
  r.si_snr_out = 4.5;
  r.lsd_out = 1.125;
  r.iters_mclp = 30;
  r.iters_beam = 7;
  const std::string line = trials_csv_row(r);
  EXPECT_EQ(line, "0.400,inf,17,mclp_only,12,2,-3.250000,4.500000,1.125000,30,7,ok");
  EXPECT_EQ(trials_csv_row(parse_trials_csv_row(line)), line);

  r.failure = "diverged, at step 3";
  r.si_snr_out = r.lsd_out = std::numeric_limits<double>::quiet_NaN();
  const std::string bad = trials_csv_row(r);
  const TrialResult back = parse_trials_csv_row(bad);
  EXPECT_FALSE(back.ok());
  EXPECT_TRUE(std::isnan(back.si_snr_out));
  EXPECT_EQ(trials_csv_row(back), bad);
  EXPECT_THROW(parse_trials_csv_row("1,2,3"), Error);
}

TEST(Summary, MedianAndIqr) {
  const Stats s = median_iqr({5.0, 1.0, 3.0, 2.0, 4.0});
  EXPECT_DOUBLE_EQ(s.median, 3.0);
  EXPECT_DOUBLE_EQ(s.iqr, 2.0);
  std::vector<TrialResult> rows(3);
  for (std::size_t i = 0; i < 3; ++i) {
    rows[i].pipeline = Pipeline::proposed;
    rows[i].si_snr_in = 0.0;
    rows[i].si_snr_out = double(i);
    rows[i].lsd_out = 1.0;
  }
  rows[2].failure = "x";
  const auto sum = summarize(rows);
  ASSERT_EQ(sum.size(), 1u);
  EXPECT_EQ(sum[0].n_ok, 2u);
  EXPECT_EQ(sum[0].n_failed, 1u);
  EXPECT_DOUBLE_EQ(sum[0].gain.median, 0.5);
}

// ---------------------------------------------------------------------------
// Sweeps

TEST(Sweep, SingleCombinationGivesSingleRow) {
  std::string cleaned = kTinyConfig;
  cleaned.replace(cleaned.find("passthrough, temporal_only, proposed"), 36, "proposed");
  const auto cfg = parse_config(cleaned);
  const fs::path dir = scratch("single");
  const auto rep = sweep(cfg, dir, cleaned);
  const auto lines = lines_of(slurp(dir / "trials.csv"));
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], trials_csv_header());
  EXPECT_EQ(rep.rows, 1u);
  EXPECT_EQ(lines_of(slurp(dir / "summary.csv")).size(), 2u);
  EXPECT_EQ(lines_of(slurp(dir / "summary.csv"))[0], summary_csv_header());
  EXPECT_EQ(slurp(dir / "config.cfg"), cleaned);
  fs::remove_all(dir);
}

TEST(Sweep, ByteIdenticalAcrossRerunsAndWorkerCounts) {
  std::string t = kTinyConfig;
  t.replace(t.find("trials = 1"), 10, "trials = 3");
  const auto cfg = parse_config(t);
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  sweep(cfg, a, t, false, 1);
  sweep(cfg, b, t, false, 3);
  EXPECT_EQ(slurp(a / "trials.csv"), slurp(b / "trials.csv"));
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
  EXPECT_EQ(lines_of(slurp(a / "trials.csv")).size(), 1u + 9u);
  EXPECT_EQ(lines_of(slurp(a / "timing.csv")).size(), 1u + 9u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Sweep, ResumeCompletesAPartialRun) {
  std::string t = kTinyConfig;
  t.replace(t.find("trials = 1"), 10, "trials = 3");
  const auto cfg = parse_config(t);
  const fs::path full = scratch("res_full"), part = scratch("res_part");
  sweep(cfg, full, t);
  const std::string reference = slurp(full / "trials.csv");

  // Simulate an interruption: one complete job, half of the next and a torn line.
  const auto lines = lines_of(reference);
  std::string torn;
  for (std::size_t i = 0; i < 1 + 3 + 2; ++i) torn += lines[i] + "\n";
  torn += lines[6].substr(0, 5);
  fs::create_directories(part);
  detail::write_file(part / "trials.csv", torn);
  detail::write_file(part / "config.cfg", t);

  const auto rep = sweep(cfg, part, t, true);
  EXPECT_EQ(rep.resumed_rows, 3u);
  EXPECT_EQ(slurp(part / "trials.csv"), reference);
  EXPECT_EQ(slurp(part / "summary.csv"), slurp(full / "summary.csv"));

  EXPECT_THROW(sweep(cfg, part, t + "# edited\n", true), Error);
  fs::remove_all(full);
  fs::remove_all(part);
}

TEST(Sweep, FailedTrialsDoNotStopTheRun) {
  const std::string t = std::string(kTinyConfig) + "scene.source = wav\nscene.source_wav = /nonexistent/x.wav\n";
  const auto cfg = parse_config(t);
  const fs::path dir = scratch("fail");
  const auto rep = sweep(cfg, dir, t);
  EXPECT_EQ(rep.rows, 3u);
  EXPECT_EQ(rep.failed, 3u);
  const auto lines = lines_of(slurp(dir / "trials.csv"));
  ASSERT_EQ(lines.size(), 4u);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    EXPECT_NE(lines[i].find(",failed: "), std::string::npos);
    EXPECT_NO_THROW(parse_trials_csv_row(lines[i]));
  }
  fs::remove_all(dir);
}

TEST(Sweep, AutoOrdersComeFromTheStudy) {
  const std::string t = std::string(kTinyConfig) +
                        "orders.auto = true\norders.trials = 4\norders.max_lag_frames = 20\norders.max_lag_bins = 8\n";
  const auto cfg = parse_config(t);
  const fs::path dir = scratch("auto");
  std::ostringstream log;
  SweepOptions o;
  o.out_dir = dir;
  o.config_text = t;
  o.log = &log;
  const auto rep = run_sweep(cfg, o);
  const auto study = order_selection_study(cfg.order_study(), {0.3}, cfg.thresholds);
  ASSERT_EQ(rep.orders.size(), 1u);
  EXPECT_EQ(rep.orders.at(0.3).k_t, study[0].choice.k);
  EXPECT_EQ(rep.orders.at(0.3).k_f, study[1].choice.k);
  EXPECT_NE(log.str().find("orders: t60 = 0.3"), std::string::npos);
  EXPECT_EQ(lines_of(slurp(dir / "orders.csv")).size(), 3u);
  for (const auto& r : rep.results) EXPECT_EQ(r.k_t, study[0].choice.k);
  fs::remove_all(dir);
}

TEST(Sweep, SavesArtifacts) {
  const std::string t = std::string(kTinyConfig) + "output.save_audio = true\noutput.save_filters = true\n";
  const auto cfg = parse_config(t);
  const fs::path dir = scratch("art");
  sweep(cfg, dir, t);
  const fs::path stem = dir / "filters" / "t60_0.300_snr_20_trial_0_proposed.dpmc";
  ASSERT_TRUE(fs::exists(stem));
  EXPECT_TRUE(fs::exists(dir / "audio" / "t60_0.300_snr_20_trial_0_proposed.wav"));
  const auto a = read_container(stem);
  EXPECT_EQ(a.filters.k_t, 3u);
  EXPECT_EQ(a.filters.k_f, 1u);
  ASSERT_TRUE(a.weights.has_value());
  EXPECT_EQ(a.weights->geometry.size(), 3);
  fs::remove_all(dir);
}

TEST(Workers, FlagThenEnvironmentThenConfig) {
  auto cfg = tiny();
  cfg.workers = 2;
  ::unsetenv(kWorkersEnv);
  EXPECT_EQ(resolve_workers(cfg, std::nullopt), 2u);
  ::setenv(kWorkersEnv, "5", 1);
  EXPECT_EQ(resolve_workers(cfg, std::nullopt), 5u);
  EXPECT_EQ(resolve_workers(cfg, 3), 3u);
  ::setenv(kWorkersEnv, "zero", 1);
  EXPECT_THROW(resolve_workers(cfg, std::nullopt), Error);
  ::unsetenv(kWorkersEnv);
  EXPECT_THROW(resolve_workers(cfg, 0), Error);
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, DefaultsAndDerivedValues) {
  const auto c = parse_config("mclp.rho_g = 4\nbeam.rho_w = 0.5\n");
  EXPECT_EQ(c.scene.array.size(), 8);
  EXPECT_DOUBLE_EQ(c.mclp.mu_z, 0.5);
  EXPECT_DOUBLE_EQ(c.beam.mu_w, 4.0);
  EXPECT_EQ(c.pipelines.size(), 3u);
  const auto d = parse_config("mclp.rho_g = 4\nmclp.mu_z = 7 # explicit\n");
  EXPECT_DOUBLE_EQ(d.mclp.mu_z, 7.0);
  const auto e = parse_config("sweep.snr_db = 5, inf\nsweep.t60 = 0.2,0.4\n");
  EXPECT_EQ(e.points().size(), 4u);
  EXPECT_TRUE(std::isinf(e.snrs[1]));
}

TEST(Config, ErrorsNameTheLine) {
  auto msg = [](const std::string& text) {
    try {
      parse_config(text, "f.cfg");
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(msg("\nmclp.bogus = 1\n").find("f.cfg:2: unknown key 'mclp.bogus'"), std::string::npos);
  EXPECT_NE(msg("trials = 1\ntrials = 2\n").find("f.cfg:2: duplicate key"), std::string::npos);
  EXPECT_NE(msg("trials =\n").find("missing value"), std::string::npos);
  EXPECT_NE(msg("just words\n").find("expected 'key = value'"), std::string::npos);
  EXPECT_NE(msg("mclp.rho_g = abc\n").find("f.cfg:1: mclp.rho_g"), std::string::npos);
  EXPECT_NE(msg("trials = 0\n").find("trials must be >= 1"), std::string::npos);
  EXPECT_NE(msg("pipelines = fastest\n").find("fastest"), std::string::npos);
  EXPECT_THROW(load_config("/nonexistent/cfg.cfg"), Error);
}

TEST(Config, BundledConfigsParse) {
  for (const auto& entry : fs::directory_iterator(fs::path(DPMCLP_SOURCE_DIR) / "configs"))
    if (entry.path().extension() == ".cfg") EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
}

// ---------------------------------------------------------------------------
// Container

TEST(Container, RoundTripIsExact) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  MclpConfig mc;
  mc.k_t = 2;
  mc.k_f = 1;
  mc.delta_t = 3;
  mc.guard_f = 1;
  DualPathFilters f = DualPathFilters::zeros(3, 4, 5, mc);
  for (auto* set : {&f.temporal, &f.frequential})
    for (auto& m : *set)
      for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = cplx(g(rng), g(rng));
  WeightSet ws;
  ws.geometry = ArrayGeometry::ula(3, 0.04, Point3(1, 2, 1));
  ws.geometry.reference_index = 2;
  ws.sample_rate = 8000.0;
  for (int w = 0; w < 5; ++w) ws.w.push_back(Eigen::VectorXcd::Random(3));

  const fs::path dir = scratch("container");
  write_container(dir / "a.dpmc", {f, ws});
  const auto back = read_container(dir / "a.dpmc");
  EXPECT_EQ(back.filters.guard_f, 1u);
  EXPECT_EQ(back.filters.delta_t, 3u);
  ASSERT_EQ(back.filters.temporal.size(), 5u);
  ASSERT_EQ(back.filters.frequential.size(), 4u);
  for (std::size_t w = 0; w < 5; ++w) EXPECT_EQ(back.filters.temporal[w], f.temporal[w]);
  for (std::size_t n = 0; n < 4; ++n) EXPECT_EQ(back.filters.frequential[n], f.frequential[n]);
  ASSERT_TRUE(back.weights);
  EXPECT_EQ(back.weights->geometry.reference_index, 2u);
  EXPECT_EQ(back.weights->sample_rate, 8000.0);
  for (int w = 0; w < 5; ++w) EXPECT_EQ(back.weights->w[std::size_t(w)], ws.w[std::size_t(w)]);
  EXPECT_EQ(back.weights->geometry.mic_positions, ws.geometry.mic_positions);

  // Corruptions.
  std::string bytes = slurp(dir / "a.dpmc");
  detail::write_file(dir / "short.dpmc", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read_container(dir / "short.dpmc"), Error);
  std::string magic = bytes;
  magic[0] = 'X';
  detail::write_file(dir / "magic.dpmc", magic);
  EXPECT_THROW(read_container(dir / "magic.dpmc"), Error);
  std::string ver = bytes;
  ver[4] = 9;
  detail::write_file(dir / "ver.dpmc", ver);
  EXPECT_THROW(read_container(dir / "ver.dpmc"), Error);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// CLI

TEST(Cli, Version) {
  if (!have_cli()) GTEST_SKIP() << "DPMCLP_CLI not set";
  const Cli r = cli("version");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, std::string("dpmclp ") + kVersion + "\n");
}

TEST(Cli, UsageErrorsExitTwo) {
  if (!have_cli()) GTEST_SKIP() << "DPMCLP_CLI not set";
  EXPECT_EQ(cli("run --config x --out y --frobnicate").code, 2);
  EXPECT_EQ(cli("").code, 2);
  const Cli r = cli("orders");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, MissingConfigExitsOneNamingThePath) {
  if (!have_cli()) GTEST_SKIP() << "DPMCLP_CLI not set";
  const fs::path dir = scratch("cli_missing");
  const Cli r = cli("run --config /nonexistent/sweep.cfg --out " + (dir / "o").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("/nonexistent/sweep.cfg"), std::string::npos);
  detail::write_file(dir / "bad.cfg", "mclp.k_t = -1\n");
  const Cli b = cli("run --config " + (dir / "bad.cfg").string() + " --out " + (dir / "o").string());
  EXPECT_EQ(b.code, 1);
  EXPECT_NE(b.err.find("bad.cfg:1"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, RunWritesCsvAndBeampatternReadsIt) {
  if (!have_cli()) GTEST_SKIP() << "DPMCLP_CLI not set";
  const fs::path dir = scratch("cli_run");
  const std::string text = std::string(kTinyConfig) + "output.save_filters = true\n";
  detail::write_file(dir / "c.cfg", text);
  const Cli r = cli("run --quiet --config " + (dir / "c.cfg").string() + " --out " + (dir / "o").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(slurp(dir / "o" / "trials.csv"));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], trials_csv_header());

  // Same rows as the library call.
  const fs::path lib = dir / "lib";
  SweepOptions o;
  o.out_dir = lib;
  o.config_text = text;
  run_sweep(parse_config(text), o);
  EXPECT_EQ(slurp(dir / "o" / "trials.csv"), slurp(lib / "trials.csv"));

  const std::string weights = (dir / "o" / "filters" / "t60_0.300_snr_20_trial_0_proposed.dpmc").string();
  const Cli p = cli("beampattern --weights " + weights + " --bin 40 --points 8");
  ASSERT_EQ(p.code, 0) << p.err;
  const auto pl = lines_of(p.out);
  ASSERT_EQ(pl.size(), 9u);
  EXPECT_EQ(pl[0], "bin,frequency_hz,theta_deg,magnitude");
  EXPECT_EQ(pl[1].substr(0, 12), "40,1250.000,");
  EXPECT_EQ(cli("beampattern --weights " + weights + " --bin 9999").code, 1);
  fs::remove_all(dir);
}

TEST(Cli, OrdersMatchesTheLibrary) {
  if (!have_cli()) GTEST_SKIP() << "DPMCLP_CLI not set";
  const fs::path dir = scratch("cli_orders");
  const std::string text = "scene.duration = 0.8\nsweep.t60 = 0.2, 0.5\norders.trials = 4\n"
                           "orders.max_lag_frames = 20\norders.max_lag_bins = 8\n";
  detail::write_file(dir / "o.cfg", text);
  const Cli r = cli("orders --config " + (dir / "o.cfg").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cfg = parse_config(text);
  std::string expect = order_study_csv_header() + "\n";
  for (const auto& row : order_selection_study(cfg.order_study(), cfg.t60s, cfg.thresholds))
    expect += order_study_csv_row(row) + "\n";
  EXPECT_EQ(r.out, expect);
  fs::remove_all(dir);
}
