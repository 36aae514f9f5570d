#pragma once

// Diamond lattice in the (x || [110], y || [1-10], z || [001]) frame. Every
// atomic layer (spacing a0/4) is a square grid of columns with spacing
// a0/sqrt(2); consecutive layers are shifted by half a column so that each atom
// bonds to two atoms below (split along one lateral axis) and two above (split
// along the other).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "shuttle/common.hpp"
#include "shuttle/device.hpp"
#include "shuttle/rough_surface.hpp"

namespace shuttle {

using Vec3 = std::array<double, 3>;

enum class Species : std::uint8_t { Si = 0, Ge = 1 };

inline const char* species_name(Species s) { return s == Species::Si ? "Si" : "Ge"; }

struct AlloySpec {
  double x_ge = 0.3;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(x_ge >= 0.0 && x_ge <= 1.0)) throw ConfigError("alloy.x_ge must lie in [0, 1]");
  }
};

enum class Region : std::uint8_t { barrier = 0, well = 1 };

struct AtomicStructure {
  double a0 = constants::a0_si;  // Angstrom
  int ncx = 0, ncy = 0, nlayers = 0;
  double cell_x = 0.0;  // periodic length along x in the current coordinates (Angstrom)
  double z0_nm = 0.0;   // device z of layer 0
  double y0_nm = 0.0;   // device y of column row 0
  double device_L_nm = 0.0;
  std::vector<Vec3> positions;  // Angstrom, structure frame
  std::vector<Species> species;
  std::vector<Region> region;
  std::vector<std::array<int, 4>> bonds;  // [down0, down1, up0, up1], -1 when absent

  std::size_t size() const { return positions.size(); }
  int index(int i, int j, int l) const { return (l * ncy + j) * ncx + i; }
  int layer(int id) const { return id / (ncx * ncy); }
  int col_j(int id) const { return (id / ncx) % ncy; }
  int col_i(int id) const { return id % ncx; }
  double column_spacing() const { return a0 / std::sqrt(2.0); }
  double layer_spacing() const { return a0 / 4.0; }
  /// Device x (nm) of a structure-frame x coordinate.
  double device_x(double x) const { return x * device_L_nm / cell_x; }
};

/// Lateral offset of layer l in units of the column spacing.
inline std::array<double, 2> layer_offset(int l) {
  switch (((l % 4) + 4) % 4) {
    case 0: return {0.0, 0.0};
    case 1: return {0.5, 0.0};
    case 2: return {0.5, 0.5};
    default: return {0.0, 0.5};
  }
}

inline Vec3 ideal_position(int i, int j, int l, double a0) {
  const double as = a0 / std::sqrt(2.0);
  const auto off = layer_offset(l);
  return {(i + off[0]) * as, (j + off[1]) * as, l * a0 / 4.0};
}

enum class InterfaceSide { top, bottom };

/// Nearest layer index for a height in Angstrom. Half-layer ties (within 1e-3
/// of a layer) round toward the well interior: down for the top interface, up
/// for the bottom one.
inline int quantize_height(double h, double a0, InterfaceSide side = InterfaceSide::top) {
  const double n = h / (a0 / 4.0);
  const double fl = std::floor(n);
  const double frac = n - fl;
  if (std::abs(frac - 0.5) < 1e-3) return static_cast<int>(side == InterfaceSide::top ? fl : fl + 1.0);
  return static_cast<int>(std::lround(n));
}

/// Bilinear sample of a surface at device (x, y) in nm; x wraps on the
/// surface period, y clamps to the sampled range.
inline double sample_surface(const SurfaceField& s, double x, double y) {
  double fx = std::fmod(x / s.dx, static_cast<double>(s.nx));
  if (fx < 0.0) fx += s.nx;
  int i0 = static_cast<int>(std::floor(fx));
  if (i0 >= s.nx) i0 = s.nx - 1;
  const double tx = fx - i0;
  const int i1 = (i0 + 1) % s.nx;
  const double fy = std::clamp(y / s.dy, 0.0, static_cast<double>(s.ny - 1));
  const int j0 = std::min(static_cast<int>(fy), s.ny - 2);
  const double ty = fy - j0;
  return (s.at(i0, j0) * (1 - tx) + s.at(i1, j0) * tx) * (1 - ty) +
         (s.at(i0, j0 + 1) * (1 - tx) + s.at(i1, j0 + 1) * tx) * ty;
}

/// Tetrahedral bonds from the ideal connectivity: periodic in x, open in y and z.
inline std::vector<std::array<int, 4>> neighbor_table(const AtomicStructure& s) {
  std::vector<std::array<int, 4>> nb(s.size(), std::array<int, 4>{-1, -1, -1, -1});
  auto wrap = [&](int i) { return ((i % s.ncx) + s.ncx) % s.ncx; };
  for (int l = 0; l < s.nlayers; ++l)
    for (int j = 0; j < s.ncy; ++j)
      for (int i = 0; i < s.ncx; ++i) {
        const int id = s.index(i, j, l);
        auto& b = nb[id];
        if (l + 1 < s.nlayers) {
          // columns in layer l+1 reached from layer l
          std::array<std::array<int, 2>, 2> up;
          switch (l % 4) {
            case 0: up = {{{i, j}, {i - 1, j}}}; break;
            case 1: up = {{{i, j}, {i, j - 1}}}; break;
            case 2: up = {{{i, j}, {i + 1, j}}}; break;
            default: up = {{{i, j}, {i, j + 1}}}; break;
          }
          for (int u = 0; u < 2; ++u)
            if (up[u][1] >= 0 && up[u][1] < s.ncy) b[2 + u] = s.index(wrap(up[u][0]), up[u][1], l + 1);
        }
        if (l > 0) {
          std::array<std::array<int, 2>, 2> dn;
          switch ((l - 1) % 4) {
            case 0: dn = {{{i, j}, {i + 1, j}}}; break;
            case 1: dn = {{{i, j}, {i, j + 1}}}; break;
            case 2: dn = {{{i, j}, {i - 1, j}}}; break;
            default: dn = {{{i, j}, {i, j - 1}}}; break;
          }
          for (int d = 0; d < 2; ++d)
            if (dn[d][1] >= 0 && dn[d][1] < s.ncy) b[d] = s.index(wrap(dn[d][0]), dn[d][1], l - 1);
        }
      }
  return nb;
}

inline int count_bonds(const AtomicStructure& s) {
  int n = 0;
  for (const auto& b : s.bonds)
    for (int d = 2; d < 4; ++d) n += b[d] >= 0;
  return n;
}

/// Minimum-image bond vector from atom a to atom b (x periodic).
inline Vec3 bond_vector(const AtomicStructure& s, const std::vector<Vec3>& pos, int a, int b) {
  Vec3 r{pos[b][0] - pos[a][0], pos[b][1] - pos[a][1], pos[b][2] - pos[a][2]};
  r[0] -= s.cell_x * std::round(r[0] / s.cell_x);
  return r;
}

/// Empty ideal lattice: ncx x ncy columns, nlayers layers, all Si barrier.
inline AtomicStructure make_ideal_lattice(int ncx, int ncy, int nlayers, double a0 = constants::a0_si) {
  if (ncx < 2 || ncy < 1 || nlayers < 1) throw ConfigError("lattice needs at least 2 columns in x and one layer");
  AtomicStructure s;
  s.a0 = a0;
  s.ncx = ncx;
  s.ncy = ncy;
  s.nlayers = nlayers;
  s.cell_x = ncx * s.column_spacing();
  s.device_L_nm = s.cell_x / constants::nm_to_A;
  const std::size_t n = static_cast<std::size_t>(ncx) * ncy * nlayers;
  s.positions.resize(n);
  s.species.assign(n, Species::Si);
  s.region.assign(n, Region::barrier);
  for (int l = 0; l < nlayers; ++l)
    for (int j = 0; j < ncy; ++j)
      for (int i = 0; i < ncx; ++i) s.positions[s.index(i, j, l)] = ideal_position(i, j, l, a0);
  s.bonds = neighbor_table(s);
  return s;
}

struct LatticeLayout {
  int ncx = 0, ncy = 0, nlayers = 0;
  int well_bottom_layer = 0;  // first well layer for a flat interface
  int well_top_layer = 0;     // first barrier layer above the well for a flat interface
  double z0_nm = 0.0, y0_nm = 0.0;
};

/// Column and layer counts for the atomistic region of a device: full period
/// in x, box_y in y, barrier + well + barrier in z, centred in y.
inline LatticeLayout lattice_layout(const DeviceGeometry& g, double a0 = constants::a0_si) {
  LatticeLayout lay;
  const double as_nm = a0 / std::sqrt(2.0) / constants::nm_to_A;
  const double dl_nm = a0 / 4.0 / constants::nm_to_A;
  lay.ncx = std::max(2, static_cast<int>(std::lround(g.L / as_nm)));
  lay.ncy = std::max(1, static_cast<int>(std::lround(g.box_y / as_nm)));
  lay.nlayers = static_cast<int>(std::lround(g.atomistic_height() / dl_nm));
  lay.well_bottom_layer = static_cast<int>(std::lround(g.barrier_thickness / dl_nm));
  lay.well_top_layer = static_cast<int>(std::lround((g.barrier_thickness + g.well_thickness) / dl_nm));
  lay.z0_nm = g.atomistic_z0();
  lay.y0_nm = 0.5 * g.y_extent - 0.5 * (lay.ncy - 0.5) * as_nm;
  return lay;
}

/// Lateral surface grid matching a layout: two samples per column in each direction.
inline void surface_grid_for(const LatticeLayout& lay, double L_nm, int& nx, int& ny, double& dx, double& dy,
                             double a0 = constants::a0_si) {
  nx = std::max(16, 2 * lay.ncx);
  ny = std::max(16, 2 * lay.ncy);
  dx = L_nm / nx;
  dy = a0 / std::sqrt(2.0) / constants::nm_to_A * lay.ncy / ny;
}

/// Places atoms over the full period in x, `lay.ncy` columns in y and the
/// barrier/well/barrier stack in z. Sites between the quantized interfaces
/// are Si; barrier sites are Ge with probability x_ge. One uniform draw per
/// site in id order, so the alloy pattern does not depend on the surfaces.
inline AtomicStructure build_lattice(const LatticeLayout& lay, double L_nm, const SurfaceField& top,
                                     const SurfaceField& bottom, const AlloySpec& alloy,
                                     double a0 = constants::a0_si) {
  alloy.validate();
  if (top.nx < 2 || top.ny < 2 || bottom.nx < 2 || bottom.ny < 2) throw ConfigError("surfaces are empty");
  const double as_nm = a0 / std::sqrt(2.0) / constants::nm_to_A;
  const double y_span = (lay.ncy - 0.5) * as_nm;
  const double tol = 1e-9;
  if (std::abs(top.period_x() - L_nm) > 1e-6 * L_nm || std::abs(bottom.period_x() - L_nm) > 1e-6 * L_nm)
    throw ConfigError("surface period does not match the unit cell length");
  if ((top.ny - 1) * top.dy + tol < y_span || (bottom.ny - 1) * bottom.dy + tol < y_span)
    throw ConfigError("surfaces do not cover the lateral box extent");

  AtomicStructure s = make_ideal_lattice(lay.ncx, lay.ncy, lay.nlayers, a0);
  s.device_L_nm = L_nm;
  s.z0_nm = lay.z0_nm;
  s.y0_nm = lay.y0_nm;
  std::mt19937_64 rng(alloy.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t id = 0; id < s.size(); ++id) {
    const double draw = unit(rng);
    const auto& p = s.positions[id];
    const int l = s.layer(static_cast<int>(id));
    const double x = s.device_x(p[0]);
    const double y = p[1] / constants::nm_to_A;
    const int lt = lay.well_top_layer + quantize_height(sample_surface(top, x, y), a0, InterfaceSide::top);
    const int lb = lay.well_bottom_layer + quantize_height(sample_surface(bottom, x, y), a0, InterfaceSide::bottom);
    if (lt - lb < 2)
      throw ConfigError("interfaces cross: well thinner than 2 layers at x=" + fmt17(x) + " nm, y=" + fmt17(y) +
                        " nm");
    if (l >= lb && l < lt) {
      s.region[id] = Region::well;
      s.species[id] = Species::Si;
    } else {
      s.region[id] = Region::barrier;
      s.species[id] = draw < alloy.x_ge ? Species::Ge : Species::Si;
    }
  }
  return s;
}

inline std::size_t count_species(const AtomicStructure& s, Species sp, std::optional<Region> region = std::nullopt) {
  std::size_t n = 0;
  for (std::size_t id = 0; id < s.size(); ++id)
    if (s.species[id] == sp && (!region || s.region[id] == *region)) ++n;
  return n;
}

// ---- ATOMS v1 --------------------------------------------------------------

inline std::string format_atoms(const AtomicStructure& s, const std::vector<std::string>& provenance = {}) {
  std::string out = "ATOMS v1\n";
  for (const auto& p : provenance) out += "# " + p + "\n";
  out += "# natoms ncx ncy nlayers a0_A cell_x_A z0_nm y0_nm L_nm\n";
  out += std::to_string(s.size()) + " " + std::to_string(s.ncx) + " " + std::to_string(s.ncy) + " " +
         std::to_string(s.nlayers) + " " + fmt17(s.a0) + " " + fmt17(s.cell_x) + " " + fmt17(s.z0_nm) + " " +
         fmt17(s.y0_nm) + " " + fmt17(s.device_L_nm) + "\n";
  out += "# id species region x_A y_A z_A layer col_i col_j\n";
  std::string line;
  for (std::size_t id = 0; id < s.size(); ++id) {
    const int n = static_cast<int>(id);
    const auto& p = s.positions[id];
    line = std::to_string(id) + " " + species_name(s.species[id]) + " " +
           (s.region[id] == Region::well ? "W" : "B") + " " + fmt17(p[0]) + " " + fmt17(p[1]) + " " + fmt17(p[2]) +
           " " + std::to_string(s.layer(n)) + " " + std::to_string(s.col_i(n)) + " " + std::to_string(s.col_j(n)) +
           "\n";
    out += line;
  }
  return out;
}

inline AtomicStructure parse_atoms(const std::string& text, std::vector<std::string>* comments = nullptr) {
  require_complete(text, "ATOMS");
  LineReader r(text);
  if (r.require("header") != "ATOMS v1") throw IoError("not an ATOMS v1 file");
  auto h = split_ws(r.require("dimension line"));
  if (h.size() != 9) throw IoError("ATOMS: malformed dimension line");
  AtomicStructure s;
  std::size_t natoms = 0;
  try {
    natoms = static_cast<std::size_t>(parse_int(h[0]));
    s.ncx = static_cast<int>(parse_int(h[1]));
    s.ncy = static_cast<int>(parse_int(h[2]));
    s.nlayers = static_cast<int>(parse_int(h[3]));
    s.a0 = parse_double(h[4]);
    s.cell_x = parse_double(h[5]);
    s.z0_nm = parse_double(h[6]);
    s.y0_nm = parse_double(h[7]);
    s.device_L_nm = parse_double(h[8]);
  } catch (const ConfigError& e) {
    throw IoError(std::string("ATOMS header: ") + e.what());
  }
  if (natoms != static_cast<std::size_t>(s.ncx) * s.ncy * s.nlayers) throw IoError("ATOMS: atom count mismatch");
  s.positions.resize(natoms);
  s.species.resize(natoms);
  s.region.resize(natoms);
  for (std::size_t id = 0; id < natoms; ++id) {
    auto t = split_ws(r.require("atom records"));
    if (t.size() != 9) throw IoError("ATOMS: record " + std::to_string(id) + " malformed");
    try {
      if (static_cast<std::size_t>(parse_int(t[0])) != id) throw IoError("ATOMS: ids out of order");
      if (t[1] == "Si") s.species[id] = Species::Si;
      else if (t[1] == "Ge") s.species[id] = Species::Ge;
      else throw IoError("ATOMS: unknown species " + std::string(t[1]));
      s.region[id] = t[2] == "W" ? Region::well : Region::barrier;
      s.positions[id] = {parse_double(t[3]), parse_double(t[4]), parse_double(t[5])};
    } catch (const ConfigError& e) {
      throw IoError(std::string("ATOMS record: ") + e.what());
    }
  }
  s.bonds = neighbor_table(s);
  if (comments) *comments = r.comments();
  return s;
}

}  // namespace shuttle
