#pragma once

// Simulation configuration: an INI-style text file with the sections
// [geometry] [drive] [roughness] [alloy] [vff] [valley] [run]. Every key is
// optional and falls back to the defaults below; unknown keys are errors.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "shuttle/common.hpp"
#include "shuttle/device.hpp"
#include "shuttle/dynamics.hpp"
#include "shuttle/lattice.hpp"
#include "shuttle/rough_surface.hpp"
#include "shuttle/strain.hpp"
#include "shuttle/valley.hpp"

namespace shuttle {

inline constexpr int kConfigSchemaVersion = 1;

struct SimulationConfig {
  DeviceGeometry geometry;
  DriveWaveform drive;
  RoughnessSpec roughness{0.3, 0.1, 100.0, 2.0, 1000, 0.0, 0};
  double roughness_correlation = 0.0;  // between top and bottom interfaces
  AlloySpec alloy;
  VffParams vff;
  double vff_tol = 1e-4;  // eV/A
  int vff_max_iter = 5000;
  ValleyModelParams valley;
  int num_steps = 60;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<double> speed_grid{1, 2, 5, 10, 20, 50, 100};  // m/s
  std::vector<double> rms_list{0, 2, 3, 5, 10};               // Angstrom
  double resolution = 1.0;                                    // nm, electrostatics grid
  double dt_max = 1e-14;                                      // s
  int threads = 0;                                            // 0: hardware concurrency
  bool keep_structures = false;

  void validate() const {
    geometry.validate();
    drive.validate();
    roughness.validate();
    if (roughness_correlation < 0.0 || roughness_correlation > 1.0)
      throw ConfigError("roughness.correlation must lie in [0, 1]");
    alloy.validate();
    vff.validate();
    if (!(vff_tol > 0.0)) throw ConfigError("vff.tol must be > 0");
    if (vff_max_iter < 0) throw ConfigError("vff.max_iter must be >= 0");
    valley.validate();
    if (num_steps < 2) throw ConfigError("run.num_steps must be >= 2");
    if (seeds.empty()) throw ConfigError("run.seeds must not be empty");
    validate_speed_grid(speed_grid);
    if (rms_list.empty()) throw ConfigError("roughness.rms_list must not be empty");
    for (double r : rms_list)
      if (!(r >= 0.0)) throw ConfigError("roughness.rms_list entries must be >= 0");
    if (!(resolution > 0.0)) throw ConfigError("run.resolution must be > 0");
    if (!(dt_max > 0.0)) throw ConfigError("run.dt_max must be > 0");
    if (threads < 0) throw ConfigError("run.threads must be >= 0");
  }
};

/// Default step count: the density of 420 steps per 280 nm period.
inline int default_num_steps(double L_nm) { return std::max(2, static_cast<int>(std::lround(420.0 * L_nm / 280.0))); }

namespace detail {

inline std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(',', start);
    if (end == std::string::npos) end = s.size();
    auto item = trim(std::string_view(s).substr(start, end - start));
    if (!item.empty()) out.push_back(item);
    start = end + 1;
  }
  return out;
}

template <class T>
inline std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out += ", ";
    if constexpr (std::is_floating_point_v<T>) out += fmt17(v[k]);
    else out += std::to_string(v[k]);
  }
  return out;
}

/// Binds every key to a field; `load` and `save` walk the same table, which
/// keeps them in sync.
struct Field {
  std::string section, key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

inline std::vector<Field> fields(SimulationConfig& c) {
  std::vector<Field> f;
  auto num = [&f](const char* sec, const char* key, double& ref) {
    f.push_back({sec, key, [&ref](const std::string& v) { ref = parse_double(v); }, [&ref] { return fmt17(ref); }});
  };
  auto integer = [&f](const char* sec, const char* key, int& ref) {
    f.push_back({sec, key, [&ref](const std::string& v) { ref = static_cast<int>(parse_int(v)); },
                 [&ref] { return std::to_string(ref); }});
  };
  auto boolean = [&f](const char* sec, const char* key, bool& ref) {
    f.push_back({sec, key,
                 [&ref](const std::string& v) {
                   if (v == "true" || v == "1") ref = true;
                   else if (v == "false" || v == "0") ref = false;
                   else throw ConfigError("not a boolean: '" + v + "'");
                 },
                 [&ref] { return std::string(ref ? "true" : "false"); }});
  };
  auto list = [&f](const char* sec, const char* key, std::vector<double>& ref) {
    f.push_back({sec, key,
                 [&ref](const std::string& v) {
                   ref.clear();
                   for (const auto& item : split_list(v)) ref.push_back(parse_double(item));
                 },
                 [&ref] { return join(ref); }});
  };
  auto gm = [&](const char* key, double& ref) { num("geometry", key, ref); };
  auto& g = c.geometry;
  gm("L", g.L);
  gm("gate_width", g.gate_width);
  gm("gate_gap", g.gate_gap);
  gm("well_thickness", g.well_thickness);
  gm("barrier_thickness", g.barrier_thickness);
  gm("cap_thickness", g.cap_thickness);
  gm("oxide_thickness", g.oxide_thickness);
  gm("buffer_thickness", g.buffer_thickness);
  gm("lower_gate_depth", g.lower_gate_depth);
  gm("y_extent", g.y_extent);
  gm("screen_width", g.screen_width);
  gm("screen_gap", g.screen_gap);
  gm("box_x", g.box_x);
  gm("box_y", g.box_y);
  gm("box_z", g.box_z);
  gm("eps_si", g.eps_si);
  gm("eps_sige", g.eps_sige);
  gm("eps_oxide", g.eps_oxide);
  num("drive", "A_S", c.drive.A_S);
  num("drive", "B_S", c.drive.B_S);
  num("drive", "dB_S", c.drive.dB_S);
  num("drive", "V_S", c.drive.V_S);
  num("drive", "T", c.drive.T);
  num("roughness", "H", c.roughness.H);
  num("roughness", "lambda_min", c.roughness.lambda_min);
  num("roughness", "lambda_max", c.roughness.lambda_max);
  num("roughness", "rms", c.roughness.rms_target);
  integer("roughness", "N", c.roughness.N);
  num("roughness", "mean_height", c.roughness.mean_height);
  num("roughness", "correlation", c.roughness_correlation);
  list("roughness", "rms_list", c.rms_list);
  num("alloy", "x_ge", c.alloy.x_ge);
  num("vff", "alpha_si", c.vff.alpha[0]);
  num("vff", "alpha_ge", c.vff.alpha[1]);
  num("vff", "beta_si", c.vff.beta[0]);
  num("vff", "beta_ge", c.vff.beta[1]);
  num("vff", "d0_si", c.vff.d0[0]);
  num("vff", "d0_ge", c.vff.d0[1]);
  num("vff", "substrate_strain", c.vff.substrate_strain);
  num("vff", "tol", c.vff_tol);
  integer("vff", "max_iter", c.vff_max_iter);
  num("valley", "k0_fraction", c.valley.k0_fraction);
  num("valley", "m_l", c.valley.m_l);
  num("valley", "m_t", c.valley.m_t);
  num("valley", "dEc", c.valley.dEc);
  num("valley", "strain_coupling", c.valley.strain_coupling);
  num("valley", "eig_tol", c.valley.eig_tol);
  num("valley", "phase_floor", c.valley.phase_floor);
  integer("run", "num_steps", c.num_steps);
  f.push_back({"run", "seeds",
               [&c](const std::string& v) {
                 c.seeds.clear();
                 for (const auto& item : split_list(v)) {
                   c.seeds.push_back(parse_u64(item));
                 }
               },
               [&c] { return join(c.seeds); }});
  list("run", "speeds", c.speed_grid);
  num("run", "resolution", c.resolution);
  num("run", "dt_max", c.dt_max);
  integer("run", "threads", c.threads);
  boolean("run", "keep_structures", c.keep_structures);
  return f;
}

}  // namespace detail

inline const char* kConfigSections[] = {"geometry", "drive", "roughness", "alloy", "vff", "valley", "run"};

inline SimulationConfig parse_config(const std::string& text) {
  SimulationConfig c;
  auto table = detail::fields(c);
  std::string section;
  bool have_L = false, have_steps = false;
  int version = kConfigSchemaVersion;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = detail::trim(std::string_view(text).substr(pos, end - pos));
    pos = end + 1;
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = detail::trim(line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const char* s : kConfigSections) known |= section == s;
      if (!known) throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
    if (section == "run" && key == "schema_version") {
      version = static_cast<int>(parse_int(value));
      continue;
    }
    bool found = false;
    for (auto& f : table) {
      if (f.section != section || f.key != key) continue;
      try {
        f.set(value);
      } catch (const ConfigError& e) {
        throw ConfigError(section + "." + key + ": " + e.what());
      }
      found = true;
      break;
    }
    if (!found) throw ConfigError("line " + std::to_string(lineno) + ": unknown key " + section + "." + key);
    if (section == "geometry" && key == "L") have_L = true;
    if (section == "run" && key == "num_steps") have_steps = true;
  }
  if (version != kConfigSchemaVersion)
    throw ConfigError("run.schema_version " + std::to_string(version) + " not supported (expected " +
                      std::to_string(kConfigSchemaVersion) + ")");
  if (!have_L) c.geometry.L = 4.0 * (c.geometry.gate_width + c.geometry.gate_gap);
  if (!have_steps) c.num_steps = default_num_steps(c.geometry.L);
  c.valley = calibrate(c.valley);
  c.validate();
  return c;
}

inline SimulationConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

/// Canonical text: every field, fixed order, 17 significant digits.
inline std::string save_config(const SimulationConfig& cfg) {
  SimulationConfig c = cfg;
  auto table = detail::fields(c);
  std::string out;
  std::string section;
  for (const auto& f : table) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
      if (section == "run") out += "schema_version = " + std::to_string(kConfigSchemaVersion) + "\n";
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

inline std::uint64_t config_hash(const SimulationConfig& c) { return fnv1a(save_config(c)); }

inline bool operator==(const SimulationConfig& a, const SimulationConfig& b) { return save_config(a) == save_config(b); }

}  // namespace shuttle
