// Command-line front end: run sweeps, print order-selection tables, dump beam patterns.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>

#include <CLI11.hpp>

#include "dpmclp/dpmclp.hpp"

namespace {

int cmd_run(const std::string& config, const std::string& out, std::optional<std::size_t> workers, bool resume,
            bool quiet) {
  const auto cfg = dpmclp::load_config(config);
  dpmclp::SweepOptions opt;
  opt.out_dir = out;
  opt.workers = workers;
  opt.resume = resume;
  opt.config_text = dpmclp::detail::read_file(config);
  opt.log = quiet ? nullptr : &std::cerr;
  const auto rep = dpmclp::run_sweep(cfg, opt);
  std::cerr << "wrote " << rep.rows << " rows (" << rep.failed << " failed, " << rep.resumed_rows
            << " resumed) to " << out << "\n";
  return 0;
}

int cmd_orders(const std::string& config) {
  const auto cfg = dpmclp::load_config(config);
  const auto rows = dpmclp::order_selection_study(cfg.order_study(), cfg.t60s, cfg.thresholds);
  std::cout << dpmclp::order_study_csv_header() << "\n";
  for (const auto& r : rows) std::cout << dpmclp::order_study_csv_row(r) << "\n";
  return 0;
}

int cmd_beampattern(const std::string& weights, long bin, std::size_t points) {
  const auto a = dpmclp::read_container(weights);
  if (!a.weights) throw dpmclp::Error("'" + weights + "' holds no beamformer weights");
  const auto& ws = *a.weights;
  const auto bins = static_cast<Eigen::Index>(ws.w.size());
  if (bin < 0 || bin >= bins)
    throw dpmclp::Error("--bin " + std::to_string(bin) + " out of range [0, " + std::to_string(bins - 1) + "]");
  std::cout << "bin,frequency_hz,theta_deg,magnitude\n";
  const double f = dpmclp::bin_frequency(bin, bins, ws.sample_rate);
  for (const auto& [theta, mag] :
       dpmclp::beam_pattern(ws.w[static_cast<std::size_t>(bin)], ws.geometry, bin, bins, ws.sample_rate, points)) {
    std::printf("%ld,%.3f,%.3f,%.9f\n", bin, f, theta * 180.0 / std::numbers::pi, mag);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-path MCLP dereverberation and multi-norm beamforming experiments"};
  app.require_subcommand(1);

  std::string config, out, weights;
  std::optional<std::size_t> workers;
  bool resume = false, quiet = false;
  long bin = 0;
  std::size_t points = 360;

  auto* run = app.add_subcommand("run", "Run a Monte Carlo sweep and write CSV results");
  run->add_option("--config", config, "Config file")->required();
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--workers", workers, "Worker threads (overrides DPMCLP_WORKERS and the config)");
  run->add_flag("--resume", resume, "Continue an interrupted sweep in --out");
  run->add_flag("--quiet", quiet, "Suppress progress output");

  auto* orders = app.add_subcommand("orders", "Print the prediction-order selection table");
  orders->add_option("--config", config, "Config file")->required();

  auto* pattern = app.add_subcommand("beampattern", "Dump |w^H a(theta)| for one bin as CSV");
  pattern->add_option("--weights", weights, "Filter/weight container")->required();
  pattern->add_option("--bin", bin, "Frequency bin index")->required();
  pattern->add_option("--points", points, "Azimuth grid size")->check(CLI::PositiveNumber);

  auto* version = app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(config, out, workers, resume, quiet);
    if (orders->parsed()) return cmd_orders(config);
    if (pattern->parsed()) return cmd_beampattern(weights, bin, points);
    if (version->parsed()) {
      std::cout << "dpmclp " << dpmclp::kVersion << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
