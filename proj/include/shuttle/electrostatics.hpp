#pragma once

// Linear Poisson solve, div(eps grad phi) = 0, on a structured node grid that
// is periodic in x. Gate nodes are Dirichlet; all other boundaries are
// homogeneous Neumann. Permittivity is stored per cell; each edge couples its
// two nodes through the dual face, whose coefficient is the area-weighted mean
// of the cells touching it (vertex-centred finite volumes).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shuttle/common.hpp"
#include "shuttle/device.hpp"

namespace shuttle {

struct DielectricGrid {
  int nx = 0, ny = 0, nz = 0;           // nodes; x is periodic (node nx == node 0)
  double dx = 0.0, dy = 0.0, dz = 0.0;  // nm
  std::vector<double> eps;              // cells: nx * (ny-1) * (nz-1), x fastest
  std::vector<std::int8_t> gate;        // nodes: 0 = free, 1..6 = gate id
  double well_z0 = 0.0, well_z1 = 0.0;  // nm, node planes considered "Si well" for dot tracking

  std::size_t num_nodes() const { return static_cast<std::size_t>(nx) * ny * nz; }
  std::size_t node(int i, int j, int k) const { return (static_cast<std::size_t>(k) * ny + j) * nx + i; }
  std::size_t cell(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * (ny - 1) + j) * nx + i;
  }
  double length_x() const { return nx * dx; }

  void validate() const {
    if (nx < 3 || ny < 2 || nz < 2) throw ConfigError("dielectric grid too small");
    if (eps.size() != static_cast<std::size_t>(nx) * (ny - 1) * (nz - 1))
      throw ConfigError("dielectric grid: eps has wrong size");
    if (gate.size() != num_nodes()) throw ConfigError("dielectric grid: gate mask has wrong size");
    for (double e : eps)
      if (!(e > 0.0)) throw ConfigError("dielectric grid: permittivity must be > 0");
  }
};

/// Builds the grid for the unit cell. `uniform_eps` replaces the layer stack
/// permittivities with a single value.
inline DielectricGrid build_grid(const DeviceGeometry& g, double resolution,
                                 std::optional<double> uniform_eps = std::nullopt) {
  if (!(resolution > 0.0)) throw ConfigError("electrostatics resolution must be > 0");
  if (resolution > g.gate_gap) throw ConfigError("resolution coarser than gate_gap: clavier gates would merge");
  g.validate();

  DielectricGrid grid;
  grid.nx = std::max(3, static_cast<int>(std::lround(g.L / resolution)));
  grid.dx = g.L / grid.nx;
  grid.ny = std::max(2, static_cast<int>(std::lround(g.y_extent / resolution)) + 1);
  grid.dy = g.y_extent / (grid.ny - 1);
  const double height = g.stack_height();
  grid.nz = std::max(2, static_cast<int>(std::lround(height / resolution)) + 1);
  grid.dz = height / (grid.nz - 1);
  grid.well_z0 = g.well_bottom();
  grid.well_z1 = g.well_top();

  // layer tops, bottom to top
  const double z_barrier0 = g.buffer_thickness;
  const double z_well0 = g.well_bottom();
  const double z_well1 = g.well_top();
  const double z_cap0 = z_well1 + g.barrier_thickness;
  const double z_ox0 = z_cap0 + g.cap_thickness;
  (void)z_barrier0;
  grid.eps.resize(static_cast<std::size_t>(grid.nx) * (grid.ny - 1) * (grid.nz - 1));
  for (int k = 0; k + 1 < grid.nz; ++k) {
    const double zc = (k + 0.5) * grid.dz;
    double e = g.eps_sige;
    if (zc >= z_well0 && zc < z_well1) e = g.eps_si;
    if (zc >= z_cap0 && zc < z_ox0) e = g.eps_si;
    if (zc >= z_ox0) e = g.eps_oxide;
    if (uniform_eps) e = *uniform_eps;
    for (int j = 0; j + 1 < grid.ny; ++j)
      for (int i = 0; i < grid.nx; ++i) grid.eps[grid.cell(i, j, k)] = e;
  }

  grid.gate.assign(grid.num_nodes(), 0);
  const int k_top = grid.nz - 1;
  const int k_low = static_cast<int>(std::lround((height - g.lower_gate_depth) / grid.dz));
  const double y_c0 = g.screen_width + g.screen_gap;
  const double y_c1 = g.y_extent - g.screen_width - g.screen_gap;
  const double tol = 1e-9 * std::max(1.0, g.L);
  for (int j = 0; j < grid.ny; ++j) {
    const double y = j * grid.dy;
    if (y <= g.screen_width + tol)
      for (int i = 0; i < grid.nx; ++i) grid.gate[grid.node(i, j, k_top)] = 5;
    if (y >= g.y_extent - g.screen_width - tol)
      for (int i = 0; i < grid.nx; ++i) grid.gate[grid.node(i, j, k_top)] = 6;
    if (y < y_c0 - tol || y > y_c1 + tol) continue;
    for (int i = 0; i < grid.nx; ++i) {
      const double x = i * grid.dx;
      for (int jg = 1; jg <= 4; ++jg) {
        // offset of x from the gate's left edge, wrapped into [0, L)
        double off = std::fmod(x - g.gate_x0(jg), g.L);
        if (off < 0.0) off += g.L;
        if (off > g.L - tol) off -= g.L;
        if (off >= -tol && off <= g.gate_width + tol) {
          const int k = (jg % 2 == 1) ? k_low : k_top;
          grid.gate[grid.node(i, j, k)] = static_cast<std::int8_t>(jg);
        }
      }
    }
  }
  for (int id = 1; id <= kNumGates; ++id)
    if (std::find(grid.gate.begin(), grid.gate.end(), id) == grid.gate.end())
      throw ConfigError("gate " + std::to_string(id) + " owns no grid node at this resolution");
  grid.validate();
  return grid;
}

namespace detail {

/// Edge conductances of the finite-volume operator. Entry [n][d] couples node n
/// to its neighbour in direction d = {-x, +x, -y, +y, -z, +z}; zero on open sides.
inline std::vector<std::array<double, 6>> edge_coefficients(const DielectricGrid& g) {
  std::vector<std::array<double, 6>> c(g.num_nodes(), std::array<double, 6>{});
  auto eps_cell = [&](int i, int j, int k) -> double {
    if (j < 0 || j >= g.ny - 1 || k < 0 || k >= g.nz - 1) return 0.0;
    i = ((i % g.nx) + g.nx) % g.nx;
    return g.eps[g.cell(i, j, k)];
  };
  const double ax = 0.25 * g.dy * g.dz / g.dx;
  const double ay = 0.25 * g.dx * g.dz / g.dy;
  const double az = 0.25 * g.dx * g.dy / g.dz;
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        auto& e = c[g.node(i, j, k)];
        // x edge (i,i+1) lies in cells (i, j-1..j, k-1..k)
        e[1] = ax * (eps_cell(i, j - 1, k - 1) + eps_cell(i, j, k - 1) + eps_cell(i, j - 1, k) + eps_cell(i, j, k));
        e[0] = ax * (eps_cell(i - 1, j - 1, k - 1) + eps_cell(i - 1, j, k - 1) + eps_cell(i - 1, j - 1, k) +
                     eps_cell(i - 1, j, k));
        if (j + 1 < g.ny)
          e[3] = ay * (eps_cell(i - 1, j, k - 1) + eps_cell(i, j, k - 1) + eps_cell(i - 1, j, k) + eps_cell(i, j, k));
        if (j > 0)
          e[2] = ay * (eps_cell(i - 1, j - 1, k - 1) + eps_cell(i, j - 1, k - 1) + eps_cell(i - 1, j - 1, k) +
                       eps_cell(i, j - 1, k));
        if (k + 1 < g.nz)
          e[5] = az * (eps_cell(i - 1, j - 1, k) + eps_cell(i, j - 1, k) + eps_cell(i - 1, j, k) + eps_cell(i, j, k));
        if (k > 0)
          e[4] = az * (eps_cell(i - 1, j - 1, k - 1) + eps_cell(i, j - 1, k - 1) + eps_cell(i - 1, j, k - 1) +
                       eps_cell(i, j, k - 1));
      }
  return c;
}

inline std::array<std::size_t, 6> neighbours(const DielectricGrid& g, int i, int j, int k) {
  const int im = i == 0 ? g.nx - 1 : i - 1;
  const int ip = i == g.nx - 1 ? 0 : i + 1;
  return {g.node(im, j, k), g.node(ip, j, k), g.node(i, std::max(j - 1, 0), k),
          g.node(i, std::min(j + 1, g.ny - 1), k), g.node(i, j, std::max(k - 1, 0)),
          g.node(i, j, std::min(k + 1, g.nz - 1))};
}

}  // namespace detail

struct SolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Solves for the free nodes with Jacobi-preconditioned conjugate gradients.
/// `dirichlet_values[n]` is used at every node with a nonzero gate id.
inline std::vector<double> solve_poisson(const DielectricGrid& g, std::span<const double> dirichlet_values,
                                         double tol = 1e-10, int max_iter = 50000, SolveReport* report = nullptr) {
  g.validate();
  if (dirichlet_values.size() != g.num_nodes()) throw ConfigError("solve_poisson: value array has wrong size");
  const auto coef = detail::edge_coefficients(g);
  const std::size_t n = g.num_nodes();
  std::vector<std::array<std::size_t, 6>> nb(n);
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) nb[g.node(i, j, k)] = detail::neighbours(g, i, j, k);

  std::vector<double> u(n, 0.0), diag(n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    if (g.gate[p]) u[p] = dirichlet_values[p];
    for (int d = 0; d < 6; ++d) diag[p] += coef[p][d];
  }
  // A restricted to free nodes; Dirichlet neighbours enter the right-hand side
  auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t p = 0; p < n; ++p) {
      if (g.gate[p]) {
        y[p] = 0.0;
        continue;
      }
      double acc = diag[p] * x[p];
      for (int d = 0; d < 6; ++d) {
        const std::size_t q = nb[p][d];
        if (coef[p][d] != 0.0 && !g.gate[q]) acc -= coef[p][d] * x[q];
      }
      y[p] = acc;
    }
  };
  std::vector<double> b(n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    if (g.gate[p]) continue;
    double acc = 0.0;
    for (int d = 0; d < 6; ++d) {
      const std::size_t q = nb[p][d];
      if (coef[p][d] != 0.0 && g.gate[q]) acc += coef[p][d] * dirichlet_values[q];
    }
    b[p] = acc;
  }
  double bnorm = 0.0;
  for (double v : b) bnorm += v * v;
  bnorm = std::sqrt(bnorm);
  if (bnorm == 0.0) {
    // all Dirichlet data zero: the solution is identically zero on free nodes
    if (report) *report = {0, 0.0};
    for (std::size_t p = 0; p < n; ++p)
      if (!g.gate[p]) u[p] = 0.0;
    return u;
  }
  for (std::size_t p = 0; p < n; ++p)
    if (!g.gate[p] && !(diag[p] > 0.0)) throw NumericalError("solve_poisson: isolated free node");

  std::vector<double> x(n, 0.0), r = b, z(n), pvec(n), q(n);
  for (std::size_t p = 0; p < n; ++p) z[p] = g.gate[p] ? 0.0 : r[p] / diag[p];
  pvec = z;
  double rz = 0.0;
  for (std::size_t p = 0; p < n; ++p) rz += r[p] * z[p];
  double rel = 1.0;
  int it = 0;
  for (; it < max_iter; ++it) {
    apply(pvec, q);
    double pq = 0.0;
    for (std::size_t p = 0; p < n; ++p) pq += pvec[p] * q[p];
    const double alpha = rz / pq;
    double rr = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      x[p] += alpha * pvec[p];
      r[p] -= alpha * q[p];
      rr += r[p] * r[p];
    }
    rel = std::sqrt(rr) / bnorm;
    if (rel <= tol) {
      ++it;
      break;
    }
    double rz_new = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      z[p] = g.gate[p] ? 0.0 : r[p] / diag[p];
      rz_new += r[p] * z[p];
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t p = 0; p < n; ++p) pvec[p] = z[p] + beta * pvec[p];
  }
  // true residual, not the recursively updated one
  apply(x, q);
  double rr = 0.0;
  for (std::size_t p = 0; p < n; ++p) rr += (b[p] - q[p]) * (b[p] - q[p]);
  rel = std::sqrt(rr) / bnorm;
  if (report) *report = {it, rel};
  if (rel > tol)
    throw NumericalError("Poisson solve did not converge: relative residual " + fmt17(rel) + " after " +
                         std::to_string(it) + " iterations");
  for (std::size_t p = 0; p < n; ++p)
    if (!g.gate[p]) u[p] = x[p];
  return u;
}

/// Relative residual of div(eps grad u) = 0 over the free nodes, scaled by the
/// Dirichlet forcing.
inline double poisson_residual(const DielectricGrid& g, std::span<const double> u) {
  const auto coef = detail::edge_coefficients(g);
  double rr = 0.0, bb = 0.0;
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        const std::size_t p = g.node(i, j, k);
        if (g.gate[p]) continue;
        const auto nb = detail::neighbours(g, i, j, k);
        double acc = 0.0, forcing = 0.0;
        for (int d = 0; d < 6; ++d) {
          if (coef[p][d] == 0.0) continue;
          acc += coef[p][d] * (u[nb[d]] - u[p]);
          if (g.gate[nb[d]]) forcing += coef[p][d] * u[nb[d]];
        }
        rr += acc * acc;
        bb += forcing * forcing;
      }
  return bb > 0.0 ? std::sqrt(rr / bb) : std::sqrt(rr);
}

/// One static solution per gate: 1 V on gate `g`, 0 V on the others.
inline std::vector<double> solve_unit_potential(const DielectricGrid& grid, int g, double tol = 1e-10,
                                                SolveReport* report = nullptr) {
  if (g < 1 || g > kNumGates) throw ConfigError("gate index must be 1..6");
  std::vector<double> values(grid.num_nodes(), 0.0);
  for (std::size_t p = 0; p < values.size(); ++p) values[p] = grid.gate[p] == g ? 1.0 : 0.0;
  return solve_poisson(grid, values, tol, 50000, report);
}

struct UnitPotentialSet {
  DielectricGrid grid;
  std::array<std::vector<double>, kNumGates> u;
};

inline UnitPotentialSet solve_unit_potentials(const DielectricGrid& grid, double tol = 1e-10) {
  UnitPotentialSet set{grid, {}};
  for (int g = 1; g <= kNumGates; ++g) set.u[g - 1] = solve_unit_potential(grid, g, tol);
  return set;
}

struct PotentialField {
  std::vector<double> phi;  // V, on the grid nodes
  double t = 0.0;
};

inline PotentialField assemble_potential(const UnitPotentialSet& units, const GateVoltages& v, double t = 0.0) {
  PotentialField f;
  f.t = t;
  f.phi.assign(units.grid.num_nodes(), 0.0);
  for (int g = 0; g < kNumGates; ++g) {
    if (units.u[g].size() != f.phi.size()) throw ConfigError("unit potentials not solved on the same grid");
    const double vg = v[g];
    for (std::size_t p = 0; p < f.phi.size(); ++p) f.phi[p] += vg * units.u[g][p];
  }
  return f;
}

/// Trilinear interpolation at (x, y, z) in nm; x wraps, y and z clamp.
inline double interpolate(const DielectricGrid& g, std::span<const double> phi, double x, double y, double z) {
  double fx = std::fmod(x / g.dx, static_cast<double>(g.nx));
  if (fx < 0.0) fx += g.nx;
  int i0 = static_cast<int>(std::floor(fx));
  if (i0 >= g.nx) i0 = g.nx - 1;
  const double tx = fx - i0;
  const int i1 = (i0 + 1) % g.nx;
  const double fy = std::clamp(y / g.dy, 0.0, static_cast<double>(g.ny - 1));
  const double fz = std::clamp(z / g.dz, 0.0, static_cast<double>(g.nz - 1));
  const int j0 = std::min(static_cast<int>(fy), g.ny - 2), k0 = std::min(static_cast<int>(fz), g.nz - 2);
  const double ty = fy - j0, tz = fz - k0;
  auto v = [&](int i, int j, int k) { return phi[g.node(i, j, k)]; };
  const double c00 = v(i0, j0, k0) * (1 - tx) + v(i1, j0, k0) * tx;
  const double c10 = v(i0, j0 + 1, k0) * (1 - tx) + v(i1, j0 + 1, k0) * tx;
  const double c01 = v(i0, j0, k0 + 1) * (1 - tx) + v(i1, j0, k0 + 1) * tx;
  const double c11 = v(i0, j0 + 1, k0 + 1) * (1 - tx) + v(i1, j0 + 1, k0 + 1) * tx;
  return (c00 * (1 - ty) + c10 * ty) * (1 - tz) + (c01 * (1 - ty) + c11 * ty) * tz;
}

struct DotPosition {
  double x = 0.0;  // nm in [0, L)
  int node_i = 0, node_j = 0, node_k = 0;
  bool warning = false;
  std::string message;
};

/// Position of the potential maximum (electron energy minimum) inside the Si
/// well, refined by a parabola through the neighbouring x nodes.
inline DotPosition locate_dot(const DielectricGrid& g, std::span<const double> phi, double tie_window = 1e-6) {
  int k0 = static_cast<int>(std::ceil(g.well_z0 / g.dz - 1e-9));
  int k1 = static_cast<int>(std::floor(g.well_z1 / g.dz + 1e-9));
  k0 = std::clamp(k0, 0, g.nz - 1);
  k1 = std::clamp(k1, k0, g.nz - 1);
  std::vector<double> colmax(g.nx, -std::numeric_limits<double>::infinity());
  DotPosition d;
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < g.nx; ++i)
    for (int k = k0; k <= k1; ++k)
      for (int j = 0; j < g.ny; ++j) {
        const double v = phi[g.node(i, j, k)];
        colmax[i] = std::max(colmax[i], v);
        if (v > best) {
          best = v;
          d.node_i = i;
          d.node_j = j;
          d.node_k = k;
        }
      }
  const int i = d.node_i;
  const double fm = phi[g.node((i + g.nx - 1) % g.nx, d.node_j, d.node_k)];
  const double f0 = best;
  const double fp = phi[g.node((i + 1) % g.nx, d.node_j, d.node_k)];
  const double curv = fm - 2.0 * f0 + fp;
  double delta = curv < 0.0 ? 0.5 * (fm - fp) / curv : 0.0;
  delta = std::clamp(delta, -0.5, 0.5);
  if (std::abs(delta) < 1e-9) delta = 0.0;  // symmetric neighbours: keep the node itself
  d.x = std::fmod((i + delta) * g.dx + g.length_x(), g.length_x());
  if (d.x >= g.length_x()) d.x = 0.0;

  // disconnected near-maximal runs along x indicate a distorted (multi-well) potential
  int runs = 0;
  for (int a = 0; a < g.nx; ++a) {
    const bool in = colmax[a] >= best - tie_window;
    const bool prev = colmax[(a + g.nx - 1) % g.nx] >= best - tie_window;
    if (in && !prev) ++runs;
  }
  if (runs > 1) {
    d.warning = true;
    d.message = "potential has " + std::to_string(runs) + " disconnected maxima within " + fmt17(tie_window) +
                " V of the peak";
  }
  return d;
}

/// Number of separate maxima of phi along x through the dot's (y, z) node row.
inline int count_wells(const DielectricGrid& g, std::span<const double> phi, const DotPosition& dot) {
  int n = 0;
  for (int i = 0; i < g.nx; ++i) {
    const double v = phi[g.node(i, dot.node_j, dot.node_k)];
    const double l = phi[g.node((i + g.nx - 1) % g.nx, dot.node_j, dot.node_k)];
    const double r = phi[g.node((i + 1) % g.nx, dot.node_j, dot.node_k)];
    if (v > l && v >= r) ++n;
  }
  return n;
}

inline DotPosition track_dot_position(const UnitPotentialSet& units, const DriveWaveform& drive, double t) {
  const auto f = assemble_potential(units, voltage_vector(t, drive), t);
  return locate_dot(units.grid, f.phi);
}

// ---- POTGRID v1 ------------------------------------------------------------

inline std::string format_potgrid(const DielectricGrid& g, std::span<const double> values,
                                  const std::string& provenance = {}) {
  std::string s = "POTGRID v1\n";
  if (!provenance.empty()) s += "# " + provenance + "\n";
  s += "# nx ny nz dx_nm dy_nm dz_nm; values z-major, then y, then x\n";
  s += std::to_string(g.nx) + " " + std::to_string(g.ny) + " " + std::to_string(g.nz) + " " + fmt17(g.dx) + " " +
       fmt17(g.dy) + " " + fmt17(g.dz) + "\n";
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j) {
      for (int i = 0; i < g.nx; ++i) {
        if (i) s += ' ';
        s += fmt17(values[g.node(i, j, k)]);
      }
      s += '\n';
    }
  return s;
}

struct PotGridFile {
  int nx = 0, ny = 0, nz = 0;
  double dx = 0.0, dy = 0.0, dz = 0.0;
  std::vector<double> values;
  std::vector<std::string> comments;
};

inline PotGridFile parse_potgrid(const std::string& text) {
  require_complete(text, "POTGRID");
  LineReader r(text);
  if (r.require("header") != "POTGRID v1") throw IoError("not a POTGRID v1 file");
  auto h = split_ws(r.require("dimensions"));
  if (h.size() != 6) throw IoError("POTGRID: malformed dimension line");
  PotGridFile f;
  try {
    f.nx = static_cast<int>(parse_int(h[0]));
    f.ny = static_cast<int>(parse_int(h[1]));
    f.nz = static_cast<int>(parse_int(h[2]));
    f.dx = parse_double(h[3]);
    f.dy = parse_double(h[4]);
    f.dz = parse_double(h[5]);
  } catch (const ConfigError& e) {
    throw IoError(std::string("POTGRID header: ") + e.what());
  }
  if (f.nx <= 0 || f.ny <= 0 || f.nz <= 0) throw IoError("POTGRID: bad dimensions");
  f.values.reserve(static_cast<std::size_t>(f.nx) * f.ny * f.nz);
  for (int row = 0; row < f.ny * f.nz; ++row) {
    auto vals = split_ws(r.require("value rows"));
    if (static_cast<int>(vals.size()) != f.nx) throw IoError("POTGRID: row " + std::to_string(row) + " truncated");
    for (auto v : vals) {
      try {
        f.values.push_back(parse_double(v));
      } catch (const ConfigError& e) {
        throw IoError(std::string("POTGRID data: ") + e.what());
      }
    }
  }
  f.comments = r.comments();
  return f;
}

}  // namespace shuttle
