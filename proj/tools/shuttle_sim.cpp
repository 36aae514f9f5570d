// shuttle-sim: command-line front end for the shuttling pipeline.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "shuttle/pipeline.hpp"

namespace {

using namespace shuttle;

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::vector<double> speeds, rms_list;
  std::vector<std::uint64_t> seeds;
  int threads = -1;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool ensemble_flags) {
  cmd->add_option("--config", c.config, "configuration file (INI)")->required();
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", c.seed, "member seed for single-chain stages");
  cmd->add_option("--threads", c.threads, "worker threads (0: all cores)");
  cmd->add_flag("--quiet,-q", c.quiet, "suppress progress messages");
  if (ensemble_flags) {
    cmd->add_option("--speeds", c.speeds, "shuttle speeds in m/s")->delimiter(',');
    cmd->add_option("--rms-list", c.rms_list, "interface rms values in Angstrom")->delimiter(',');
    cmd->add_option("--seeds", c.seeds, "ensemble seeds")->delimiter(',');
  }
}

SimulationConfig effective_config(const Common& c) {
  SimulationConfig cfg = load_config(c.config);
  if (!c.speeds.empty()) cfg.speed_grid = c.speeds;
  if (!c.rms_list.empty()) cfg.rms_list = c.rms_list;
  if (!c.seeds.empty()) cfg.seeds = c.seeds;
  if (c.threads >= 0) cfg.threads = c.threads;
  cfg.validate();
  return cfg;
}

int run_stages(const Common& c, std::set<std::string> stages) {
  const auto cfg = effective_config(c);
  PipelineOptions opt;
  opt.out_dir = c.out;
  opt.stages = std::move(stages);
  opt.seed = c.seed;
  opt.log = c.quiet ? nullptr : &std::cerr;
  const auto m = run_pipeline(cfg, opt);
  for (const auto& s : m.stages)
    if (!s.note.empty()) std::cerr << s.name << ": " << s.note << "\n";
  std::cout << (opt.out_dir / "manifest.json").generic_string() << "\n";
  return 0;
}

int surface_stats(const std::string& path) {
  std::vector<std::string> comments;
  const auto f = parse_surface(read_file(path), &comments);
  double mean = 0.0;
  for (double h : f.heights) mean += h;
  mean /= static_cast<double>(f.heights.size());
  std::cout << "nx: " << f.nx << "\nny: " << f.ny << "\n";
  std::cout << "mean_A: " << fmt17(mean) << "\n";
  std::cout << "rms_A: " << fmt17(sample_rms(f)) << "\n";
  if (f.nx < 64 || f.ny < 64) {
    std::cout << "psd_slope: n/a (field smaller than 64x64)\n";
    return 0;
  }
  const auto psd = radial_psd(f);
  const double k_max = constants::pi / std::max(f.dx, f.dy);
  const auto fit = fit_hurst(psd, 4.0 * constants::pi / std::min(f.nx * f.dx, f.ny * f.dy), 0.9 * k_max);
  std::cout << "psd_slope: " << fmt17(fit.slope) << "\n";
  std::cout << "psd_bins_used: " << fit.bins_used << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conveyor-mode spin shuttling simulator"};
  app.require_subcommand(1);
  Common common;
  std::string artifact;
  const std::vector<std::string> stage_cmds{"gen-surface", "build-lattice", "relax", "solve-potential",
                                            "trace",       "dynamics",      "sweep"};
  std::vector<CLI::App*> stage_apps;
  for (const auto& name : stage_cmds) {
    auto* cmd = app.add_subcommand(name, "run the " + name + " stage and any stale prerequisites");
    add_common(cmd, common, name == "dynamics" || name == "sweep");
    stage_apps.push_back(cmd);
  }
  auto* run = app.add_subcommand("run", "run every stage");
  add_common(run, common, true);
  auto* describe = app.add_subcommand("describe", "summarize an artifact file");
  describe->add_option("path", artifact, "artifact file")->required();
  auto* stats = app.add_subcommand("surface-stats", "rms and spectral slope of a ROUGHSURF file");
  stats->add_option("path", artifact, "surface file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*describe) {
      std::cout << describe_artifact(artifact);
      return 0;
    }
    if (*stats) return surface_stats(artifact);
    if (*run) return run_stages(common, {});
    for (std::size_t k = 0; k < stage_cmds.size(); ++k)
      if (*stage_apps[k]) return run_stages(common, {stage_cmds[k]});
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
