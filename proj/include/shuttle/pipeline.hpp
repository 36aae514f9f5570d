#pragma once

// Stage orchestration. Each stage writes its artifacts atomically with a
// `hash=` provenance comment; a stage is skipped when its artifacts exist with
// the expected hash and none of its inputs were regenerated in this run.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "shuttle/common.hpp"
#include "shuttle/config.hpp"
#include "shuttle/dynamics.hpp"
#include "shuttle/electrostatics.hpp"
#include "shuttle/lattice.hpp"
#include "shuttle/rough_surface.hpp"
#include "shuttle/strain.hpp"
#include "shuttle/valley.hpp"

namespace shuttle {

inline constexpr const char* kToolVersion = "shuttle-sim 1.0.0";

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"gen-surface", "build-lattice",   "relax", "solve-potential",
                                              "trace",       "dynamics",        "sweep"};
  return names;
}

/// Stream indices for seed derivation; one member seed feeds all three.
enum SeedStream : std::uint64_t { kTopSurface = 1, kBottomSurface = 2, kAlloy = 3 };

// ---- stage hashes ----------------------------------------------------------

namespace detail {

/// Canonical text of the named config sections.
inline std::string config_sections(const SimulationConfig& c, std::initializer_list<const char*> names) {
  const std::string all = save_config(c);
  std::string out;
  for (const char* name : names) {
    const std::string head = std::string("[") + name + "]\n";
    const auto a = all.find(head);
    if (a == std::string::npos) continue;
    auto b = all.find("\n[", a + head.size());
    out += all.substr(a, b == std::string::npos ? std::string::npos : b - a + 1);
  }
  return out;
}

inline std::string run_keys(const SimulationConfig& c, std::initializer_list<const char*> keys) {
  const std::string run = config_sections(c, {"run"});
  std::string out;
  for (const char* k : keys) {
    const std::string pre = std::string(k) + " = ";
    auto a = run.find(pre);
    if (a == std::string::npos) continue;
    out += run.substr(a, run.find('\n', a) - a + 1);
  }
  return out;
}

}  // namespace detail

struct StageHashes {
  std::string surface, lattice, relax, potential, trace, dynamics, sweep;
};

inline StageHashes stage_hashes(const SimulationConfig& c, std::uint64_t seed) {
  using detail::config_sections;
  using detail::run_keys;
  StageHashes h;
  const std::string s = "seed=" + std::to_string(seed) + "\n";
  h.surface = hex64(fnv1a("surface\n" + config_sections(c, {"geometry", "roughness"}) + s));
  h.lattice = hex64(fnv1a("lattice\n" + h.surface + config_sections(c, {"alloy"})));
  h.relax = hex64(fnv1a("relax\n" + h.lattice + config_sections(c, {"vff"})));
  h.potential = hex64(fnv1a("potential\n" + config_sections(c, {"geometry"}) + run_keys(c, {"resolution"})));
  h.trace = hex64(fnv1a("trace\n" + h.relax + h.potential + config_sections(c, {"drive", "valley"}) +
                        run_keys(c, {"num_steps"})));
  h.dynamics = hex64(fnv1a("dynamics\n" + h.trace + run_keys(c, {"speeds", "dt_max"})));
  h.sweep = hex64(fnv1a("sweep\n" + save_config(c)));
  return h;
}

/// Value of `hash=` in the first comment lines of an artifact, or empty.
inline std::string artifact_hash(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) return {};
  std::string line;
  for (int k = 0; k < 12 && std::getline(in, line); ++k) {
    if (line.empty() || line[0] != '#') continue;
    const std::vector<std::string> one{line.substr(1)};
    auto v = comment_value(one, "hash");
    if (!v.empty()) return v;
  }
  return {};
}

// ---- member pipeline -------------------------------------------------------

struct MemberSeeds {
  std::uint64_t top = 0, bottom = 0, alloy = 0;
};

inline MemberSeeds member_seeds(std::uint64_t seed) {
  return {derive_seed(seed, kTopSurface), derive_seed(seed, kBottomSurface), derive_seed(seed, kAlloy)};
}

struct SurfacePair {
  SurfaceField top, bottom;
};

inline SurfacePair make_surfaces(const SimulationConfig& c, double rms, std::uint64_t seed) {
  const auto lay = lattice_layout(c.geometry);
  int nx = 0, ny = 0;
  double dx = 0.0, dy = 0.0;
  surface_grid_for(lay, c.geometry.L, nx, ny, dx, dy);
  const auto ms = member_seeds(seed);
  RoughnessSpec top = c.roughness, bottom = c.roughness;
  top.rms_target = bottom.rms_target = rms;
  top.seed = ms.top;
  bottom.seed = ms.bottom;
  SurfacePair p;
  p.top = synthesize_surface(top, nx, ny, dx, dy);
  p.bottom = synthesize_partner_surface(top, bottom, c.roughness_correlation, nx, ny, dx, dy);
  return p;
}

inline AtomicStructure make_structure(const SimulationConfig& c, const SurfacePair& s, std::uint64_t seed) {
  AlloySpec alloy = c.alloy;
  alloy.seed = member_seeds(seed).alloy;
  return build_lattice(lattice_layout(c.geometry), c.geometry.L, s.top, s.bottom, alloy);
}

inline TraceOptions trace_options(const SimulationConfig& c) {
  TraceOptions o;
  o.num_steps = c.num_steps;
  o.box_x = c.geometry.box_x;
  o.box_z = c.geometry.box_z;
  o.eig.tol = c.valley.eig_tol;
  return o;
}

/// Fails unless the drive forms exactly one well per period at t = 0.
inline void assert_single_well(const UnitPotentialSet& units, const DriveWaveform& drive) {
  const auto f = assemble_potential(units, voltage_vector(0.0, drive), 0.0);
  const auto dot = locate_dot(units.grid, f.phi);
  const int wells = count_wells(units.grid, f.phi, dot);
  if (wells != 1 || dot.warning)
    throw ConfigError("drive does not form a single well per period at t=0 (" + std::to_string(wells) +
                      " maxima); retune drive.* or geometry.lower_gate_depth");
}

struct MemberOutput {
  MemberResult result;
  ValleyTrace trace;
  StrainState strain;
};

/// Full chain for one ensemble member: surfaces, lattice, relaxation, trace,
/// speed sweep.
inline MemberOutput run_member(const SimulationConfig& c, const UnitPotentialSet& units, double rms,
                               std::uint64_t seed) {
  MemberOutput out;
  out.result.rms = rms;
  out.result.seed = seed;
  const auto surfaces = make_surfaces(c, rms, seed);
  auto s = make_structure(c, surfaces, seed);
  out.strain = relax(s, c.vff, c.vff_tol, c.vff_max_iter);
  apply_strain_state(s, out.strain);
  const auto strain = local_strain(s, c.vff);
  out.trace = trace_shuttle(s, units, c.drive, c.valley, trace_options(c), strain);
  const auto it = interpolate_trace(out.trace);
  EvolveOptions eo;
  eo.dt_max = c.dt_max;
  out.result.sweep = speed_sweep(it, c.speed_grid, eo);
  double acc = 0.0;
  for (const auto& smp : out.trace.samples) acc += smp.Ev;
  out.result.mean_Ev = acc / static_cast<double>(out.trace.samples.size());
  out.result.ok = true;
  return out;
}

/// Runs `fn(k)` for k in [0, n) on `threads` workers; results are written by
/// index so the outcome does not depend on scheduling.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, std::max(1, n));
  if (threads == 1) {
    for (int k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (int k = next++; k < n; k = next++) fn(k);
    });
  for (auto& t : pool) t.join();
}

// ---- pipeline --------------------------------------------------------------

struct StageRecord {
  std::string name;
  bool ran = false;
  std::string hash;
  double seconds = 0.0;
  std::vector<std::string> artifacts;
  std::vector<std::uint64_t> seeds;
  std::string note;
};

struct RunManifest {
  std::string config_hash;
  std::string tool_version = kToolVersion;
  std::vector<StageRecord> stages;
  bool complete = true;
  std::string error;

  const StageRecord* find(const std::string& name) const {
    for (const auto& s : stages)
      if (s.name == name) return &s;
    return nullptr;
  }
};

inline std::string manifest_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["tool_version"] = m.tool_version;
  j["config_hash"] = m.config_hash;
  j["complete"] = m.complete;
  if (!m.error.empty()) j["error"] = m.error;
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : m.stages) {
    nlohmann::ordered_json e;
    e["name"] = s.name;
    e["ran"] = s.ran;
    e["hash"] = s.hash;
    e["seconds"] = s.seconds;
    e["artifacts"] = s.artifacts;
    e["seeds"] = s.seeds;
    if (!s.note.empty()) e["note"] = s.note;
    j["stages"].push_back(e);
  }
  return j.dump(2) + "\n";
}

struct PipelineOptions {
  std::filesystem::path out_dir = "out";
  std::set<std::string> stages;  // empty: all
  std::optional<std::uint64_t> seed;  // single-member chain; default cfg.seeds.front()
  std::ostream* log = nullptr;
};

namespace detail {

struct ArtifactPaths {
  std::filesystem::path top, bottom, lattice, relaxed, trace, dynamics, sweep, members, manifest;
  std::array<std::filesystem::path, kNumGates> potentials;
};

inline ArtifactPaths artifact_paths(const std::filesystem::path& out) {
  ArtifactPaths p;
  p.top = out / "surface_top.rsurf";
  p.bottom = out / "surface_bottom.rsurf";
  p.lattice = out / "lattice.atoms";
  p.relaxed = out / "relaxed.atoms";
  p.trace = out / "trace.vtrace";
  p.dynamics = out / "dynamics.sweep";
  p.sweep = out / "sweep.sweep";
  p.members = out / "members";
  p.manifest = out / "manifest.json";
  for (int g = 0; g < kNumGates; ++g) p.potentials[g] = out / ("potential_g" + std::to_string(g + 1) + ".potgrid");
  return p;
}

inline bool up_to_date(const std::vector<std::filesystem::path>& files, const std::string& hash) {
  for (const auto& f : files)
    if (artifact_hash(f) != hash) return false;
  return true;
}

inline std::string str(const std::filesystem::path& p) { return p.generic_string(); }

}  // namespace detail

/// Loads the six unit potentials from POTGRID files written by solve-potential.
inline UnitPotentialSet load_potentials(const SimulationConfig& c, const std::filesystem::path& out) {
  const auto paths = detail::artifact_paths(out);
  UnitPotentialSet set{build_grid(c.geometry, c.resolution), {}};
  for (int g = 0; g < kNumGates; ++g) {
    const auto f = parse_potgrid(read_file(paths.potentials[g]));
    if (f.nx != set.grid.nx || f.ny != set.grid.ny || f.nz != set.grid.nz)
      throw IoError("potential grid " + detail::str(paths.potentials[g]) + " does not match the configured grid");
    set.u[g] = f.values;
  }
  return set;
}

/// Executes the requested stages (and any stale prerequisites) in dependency
/// order. `seed` selects the single-member chain; `sweep` uses cfg.seeds.
inline RunManifest run_pipeline(const SimulationConfig& cfg, const PipelineOptions& opt) {
  namespace fs = std::filesystem;
  cfg.validate();
  const auto paths = detail::artifact_paths(opt.out_dir);
  const std::uint64_t seed = opt.seed.value_or(cfg.seeds.front());
  const auto hashes = stage_hashes(cfg, seed);
  RunManifest m;
  m.config_hash = hex64(config_hash(cfg));
  auto wanted = [&](const std::string& s) { return opt.stages.empty() || opt.stages.count(s) > 0; };
  auto log = [&](const std::string& msg) {
    if (opt.log) *opt.log << msg << std::endl;
  };

  // which stages are needed: requested ones plus prerequisites
  std::set<std::string> need;
  std::function<void(const std::string&)> require = [&](const std::string& s) {
    if (!need.insert(s).second) return;
    if (s == "build-lattice") require("gen-surface");
    if (s == "relax") require("build-lattice");
    if (s == "trace") {
      require("relax");
      require("solve-potential");
    }
    if (s == "dynamics") require("trace");
    if (s == "sweep") require("solve-potential");
  };
  for (const auto& s : stage_names())
    if (wanted(s)) require(s);

  std::set<std::string> ran;
  auto prov = [&](const std::string& stage, const std::string& hash) {
    return std::vector<std::string>{"stage=" + stage + " hash=" + hash + " config=" + m.config_hash,
                                    std::string("tool=") + "shuttle-sim-1.0.0" + " seed=" + std::to_string(seed)};
  };
  auto timed = [&](StageRecord& rec, const std::function<void()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  std::optional<SurfacePair> surfaces;
  std::optional<AtomicStructure> lattice, relaxed;
  std::optional<UnitPotentialSet> units;
  std::optional<ValleyTrace> trace;

  try {
    fs::create_directories(opt.out_dir);
    for (const auto& stage : stage_names()) {
      if (!need.count(stage)) continue;
      StageRecord rec;
      rec.name = stage;
      rec.seeds = {seed};
      if (stage == "gen-surface") {
        rec.hash = hashes.surface;
        rec.artifacts = {detail::str(paths.top), detail::str(paths.bottom)};
        if (!detail::up_to_date({paths.top, paths.bottom}, rec.hash)) {
          log("gen-surface: synthesizing interfaces (rms " + fmt17(cfg.roughness.rms_target) + " A)");
          timed(rec, [&] {
            surfaces = make_surfaces(cfg, cfg.roughness.rms_target, seed);
            auto p = prov(stage, rec.hash);
            write_file_atomic(paths.top, format_surface(surfaces->top, p[0] + " interface=top"));
            write_file_atomic(paths.bottom, format_surface(surfaces->bottom, p[0] + " interface=bottom"));
          });
          rec.ran = true;
        }
      } else if (stage == "build-lattice") {
        rec.hash = hashes.lattice;
        rec.artifacts = {detail::str(paths.lattice)};
        if (ran.count("gen-surface") || !detail::up_to_date({paths.lattice}, rec.hash)) {
          log("build-lattice: placing atoms");
          timed(rec, [&] {
            if (!surfaces) surfaces = SurfacePair{parse_surface(read_file(paths.top)), parse_surface(read_file(paths.bottom))};
            lattice = make_structure(cfg, *surfaces, seed);
            auto p = prov(stage, rec.hash);
            p.push_back("ge_atoms=" + std::to_string(count_species(*lattice, Species::Ge)));
            write_file_atomic(paths.lattice, format_atoms(*lattice, p));
          });
          rec.ran = true;
        }
      } else if (stage == "relax") {
        rec.hash = hashes.relax;
        rec.artifacts = {detail::str(paths.relaxed)};
        if (ran.count("build-lattice") || !detail::up_to_date({paths.relaxed}, rec.hash)) {
          log("relax: minimizing Keating energy");
          timed(rec, [&] {
            if (!lattice) lattice = parse_atoms(read_file(paths.lattice));
            const auto st = relax(*lattice, cfg.vff, cfg.vff_tol, cfg.vff_max_iter);
            relaxed = *lattice;
            apply_strain_state(*relaxed, st);
            auto p = prov(stage, rec.hash);
            p.push_back("energy_eV=" + fmt17(st.energy) + " grad_norm=" + fmt17(st.grad_norm) +
                        " iterations=" + std::to_string(st.iterations) + " converged=" + (st.converged ? "1" : "0"));
            write_file_atomic(paths.relaxed, format_atoms(*relaxed, p));
            if (!st.converged) rec.note = "relaxation not converged: grad_norm " + fmt17(st.grad_norm);
          });
          rec.ran = true;
        }
      } else if (stage == "solve-potential") {
        rec.hash = hashes.potential;
        std::vector<fs::path> files(paths.potentials.begin(), paths.potentials.end());
        for (const auto& f : files) rec.artifacts.push_back(detail::str(f));
        rec.seeds.clear();
        if (!detail::up_to_date(files, rec.hash)) {
          log("solve-potential: six unit solves");
          timed(rec, [&] {
            const auto grid = build_grid(cfg.geometry, cfg.resolution);
            UnitPotentialSet set{grid, {}};
            parallel_for(kNumGates, cfg.threads, [&](int g) { set.u[g] = solve_unit_potential(grid, g + 1); });
            auto p = prov(stage, rec.hash);
            for (int g = 0; g < kNumGates; ++g)
              write_file_atomic(paths.potentials[g], format_potgrid(grid, set.u[g], p[0] + " gate=" + std::to_string(g + 1)));
            units = std::move(set);
          });
          rec.ran = true;
        }
        if (!units) units = load_potentials(cfg, opt.out_dir);
        assert_single_well(*units, cfg.drive);
      } else if (stage == "trace") {
        rec.hash = hashes.trace;
        rec.artifacts = {detail::str(paths.trace)};
        if (ran.count("relax") || ran.count("solve-potential") || !detail::up_to_date({paths.trace}, rec.hash)) {
          log("trace: " + std::to_string(cfg.num_steps) + " steps");
          timed(rec, [&] {
            if (!relaxed) relaxed = parse_atoms(read_file(paths.relaxed));
            const auto strain = local_strain(*relaxed, cfg.vff);
            trace = trace_shuttle(*relaxed, *units, cfg.drive, cfg.valley, trace_options(cfg), strain);
            write_file_atomic(paths.trace, format_trace(*trace, prov(stage, rec.hash)));
          });
          rec.ran = true;
        }
      } else if (stage == "dynamics") {
        rec.hash = hashes.dynamics;
        rec.artifacts = {detail::str(paths.dynamics)};
        if (ran.count("trace") || !detail::up_to_date({paths.dynamics}, rec.hash)) {
          log("dynamics: " + std::to_string(cfg.speed_grid.size()) + " speeds");
          timed(rec, [&] {
            if (!trace) trace = parse_trace(read_file(paths.trace));
            EvolveOptions eo;
            eo.dt_max = cfg.dt_max;
            const auto sw = speed_sweep(interpolate_trace(*trace), cfg.speed_grid, eo);
            write_file_atomic(paths.dynamics,
                              format_speed_sweep(sw, cfg.roughness.rms_target, prov(stage, rec.hash)));
          });
          rec.ran = true;
        }
      } else if (stage == "sweep") {
        rec.hash = hashes.sweep;
        rec.artifacts = {detail::str(paths.sweep)};
        rec.seeds = cfg.seeds;
        if (ran.count("solve-potential") || !detail::up_to_date({paths.sweep}, rec.hash)) {
          const int n = static_cast<int>(cfg.rms_list.size() * cfg.seeds.size());
          log("sweep: " + std::to_string(n) + " ensemble members");
          timed(rec, [&] {
            std::vector<MemberResult> members(n);
            std::mutex log_mu;
            fs::create_directories(paths.members);
            parallel_for(n, cfg.threads, [&](int k) {
              const double rms = cfg.rms_list[k / cfg.seeds.size()];
              const std::uint64_t sd = cfg.seeds[k % cfg.seeds.size()];
              const std::string tag = "rms_" + fmt17(rms) + "_seed_" + std::to_string(sd);
              try {
                auto mo = run_member(cfg, *units, rms, sd);
                members[k] = mo.result;
                std::vector<std::string> p{"stage=sweep-member hash=" + rec.hash + " rms_A=" + fmt17(rms) +
                                           " seed=" + std::to_string(sd)};
                write_file_atomic(paths.members / (tag + ".vtrace"), format_trace(mo.trace, p));
                if (cfg.keep_structures) {
                  auto s = make_structure(cfg, make_surfaces(cfg, rms, sd), sd);
                  apply_strain_state(s, mo.strain);
                  write_file_atomic(paths.members / (tag + ".atoms"), format_atoms(s, p));
                }
                std::lock_guard<std::mutex> lk(log_mu);
                log("  member " + tag + " done");
              } catch (const Error& e) {
                members[k].rms = rms;
                members[k].seed = sd;
                members[k].ok = false;
                members[k].error = e.what();
                std::lock_guard<std::mutex> lk(log_mu);
                log("  member " + tag + " FAILED: " + e.what());
              }
            });
            const auto ens = aggregate(members, cfg.rms_list, cfg.speed_grid);
            auto p = prov(stage, rec.hash);
            for (const auto& mr : members)
              if (!mr.ok) p.push_back("failed rms_A=" + fmt17(mr.rms) + " seed=" + std::to_string(mr.seed) + ": " + mr.error);
            write_file_atomic(paths.sweep, format_sweep(ens, p));
          });
          rec.ran = true;
        }
      }
      if (rec.ran) ran.insert(stage);
      else log(stage + ": up to date");
      m.stages.push_back(rec);
    }
  } catch (const Error& e) {
    m.complete = false;
    m.error = e.what();
    write_file_atomic(paths.manifest, manifest_json(m));
    throw;
  }
  write_file_atomic(paths.manifest, manifest_json(m));
  return m;
}

// ---- describe --------------------------------------------------------------

inline std::string describe_artifact(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto nl = text.find('\n');
  std::string head = text.substr(0, nl == std::string::npos ? text.size() : nl);
  if (!head.empty() && head.back() == '\r') head.pop_back();
  std::string out;
  auto hash_line = [](const std::vector<std::string>& comments) {
    const auto h = comment_value(comments, "hash");
    return "provenance hash: " + (h.empty() ? std::string("(none)") : h) + "\n";
  };
  if (head == "ROUGHSURF v1") {
    std::vector<std::string> comments;
    const auto f = parse_surface(text, &comments);
    out += "format: ROUGHSURF v1\n";
    out += "nx: " + std::to_string(f.nx) + "\nny: " + std::to_string(f.ny) + "\n";
    out += "dx_nm: " + fmt17(f.dx) + "\ndy_nm: " + fmt17(f.dy) + "\n";
    out += "rms_A: " + fmt17(f.spec.rms_target) + "\nH: " + fmt17(f.spec.H) + "\nseed: " + std::to_string(f.spec.seed) + "\n";
    out += "sample_rms_A: " + fmt17(sample_rms(f)) + "\n";
    out += hash_line(comments);
  } else if (head == "POTGRID v1") {
    const auto f = parse_potgrid(text);
    out += "format: POTGRID v1\n";
    out += "nodes: " + std::to_string(f.nx) + " x " + std::to_string(f.ny) + " x " + std::to_string(f.nz) + "\n";
    out += "spacing_nm: " + fmt17(f.dx) + " " + fmt17(f.dy) + " " + fmt17(f.dz) + "\n";
    const auto [lo, hi] = std::minmax_element(f.values.begin(), f.values.end());
    out += "range: " + fmt17(*lo) + " .. " + fmt17(*hi) + "\n";
    out += hash_line(f.comments);
  } else if (head == "ATOMS v1") {
    std::vector<std::string> comments;
    const auto s = parse_atoms(text, &comments);
    out += "format: ATOMS v1\n";
    out += "atoms: " + std::to_string(s.size()) + "\n";
    out += "columns: " + std::to_string(s.ncx) + " x " + std::to_string(s.ncy) + "\nlayers: " + std::to_string(s.nlayers) + "\n";
    out += "Ge: " + std::to_string(count_species(s, Species::Ge)) + "\n";
    out += "a0_A: " + fmt17(s.a0) + "\n";
    const auto e = comment_value(comments, "energy_eV");
    if (!e.empty()) out += "energy_eV: " + e + "\n";
    out += hash_line(comments);
  } else if (head == "VTRACE v1") {
    std::vector<std::string> comments;
    const auto tr = parse_trace(text, &comments);
    double lo = tr.samples[0].Ev, hi = lo;
    for (const auto& s : tr.samples) {
      lo = std::min(lo, s.Ev);
      hi = std::max(hi, s.Ev);
    }
    out += "format: VTRACE v1\n";
    out += "steps: " + std::to_string(tr.samples.size()) + "\n";
    out += "L_nm: " + fmt17(tr.L) + "\n";
    out += "Ev_ueV: " + fmt17(lo) + " .. " + fmt17(hi) + "\n";
    out += hash_line(comments);
  } else if (head == "SWEEP v1") {
    std::vector<std::string> comments;
    const auto r = parse_sweep(text, &comments);
    std::set<double> rms, v;
    for (const auto& c : r) {
      rms.insert(c.rms);
      v.insert(c.v);
    }
    out += "format: SWEEP v1\n";
    out += "rows: " + std::to_string(r.size()) + "\n";
    out += "rms values: " + std::to_string(rms.size()) + "\nspeeds: " + std::to_string(v.size()) + "\n";
    out += hash_line(comments);
  } else {
    throw IoError("unrecognized artifact header '" + head +
                  "'; known formats: ROUGHSURF v1, POTGRID v1, ATOMS v1, VTRACE v1, SWEEP v1");
  }
  return out;
}

}  // namespace shuttle
