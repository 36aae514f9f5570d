#include <gtest/gtest.h>

#include <set>

#include "shuttle/electrostatics.hpp"

using namespace shuttle;

namespace {

// Box with every node of the bottom plane on gate 2 and of the top plane on
// gate 1; `eps_of_layer(k)` gives the permittivity of cell layer k.
template <class F>
DielectricGrid plate_grid(int nx, int ny, int nz, double h, F eps_of_layer) {
  DielectricGrid g;
  g.nx = nx;
  g.ny = ny;
  g.nz = nz;
  g.dx = g.dy = g.dz = h;
  g.eps.resize(static_cast<std::size_t>(nx) * (ny - 1) * (nz - 1));
  for (int k = 0; k + 1 < nz; ++k)
    for (int j = 0; j + 1 < ny; ++j)
      for (int i = 0; i < nx; ++i) g.eps[g.cell(i, j, k)] = eps_of_layer(k);
  g.gate.assign(g.num_nodes(), 0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      g.gate[g.node(i, j, nz - 1)] = 1;
      g.gate[g.node(i, j, 0)] = 2;
    }
  return g;
}

std::vector<double> plate_values(const DielectricGrid& g) {
  std::vector<double> v(g.num_nodes(), 0.0);
  for (std::size_t p = 0; p < v.size(); ++p) v[p] = g.gate[p] == 1 ? 1.0 : 0.0;
  return v;
}

// Max nodal error against u = sin(kx) sinh(kz) / sinh(kH), top plane driven by sin(kx).
double sinusoid_error(int nx) {
  const double Lx = 8.0, H = 4.0, h = Lx / nx;
  const int nz = static_cast<int>(std::lround(H / h)) + 1;
  auto g = plate_grid(nx, 2, nz, h, [](int) { return 1.0; });
  const double k = 2.0 * constants::pi / Lx;
  std::vector<double> v(g.num_nodes(), 0.0);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < nx; ++i) v[g.node(i, j, nz - 1)] = std::sin(k * i * h);
  const auto u = solve_poisson(g, v, 1e-13);
  double err = 0.0;
  for (int kk = 0; kk < nz; ++kk)
    for (int i = 0; i < nx; ++i) {
      const double exact = std::sin(k * i * h) * std::sinh(k * kk * h) / std::sinh(k * H);
      err = std::max(err, std::abs(u[g.node(i, 0, kk)] - exact));
    }
  return err;
}

const UnitPotentialSet& desk_units() {
  static const UnitPotentialSet set = solve_unit_potentials(build_grid(DeviceGeometry{}, 2.0));
  return set;
}

}  // namespace

TEST(Poisson, ParallelPlateUniform) {
  const auto g = plate_grid(6, 4, 21, 0.5, [](int) { return 11.7; });
  const auto u = solve_poisson(g, plate_values(g), 1e-14);
  double err = 0.0;
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) err = std::max(err, std::abs(u[g.node(i, j, k)] - k / 20.0));
  EXPECT_LT(err, 1e-10);
}

TEST(Poisson, TwoDielectricPlates) {
  // interface at node plane m: slopes satisfy e1 s1 = e2 s2, s1 m h + s2 (nz-1-m) h = 1
  const double e1 = 13.05, e2 = 3.9, h = 0.25;
  const int nz = 33, m = 12;
  const auto g = plate_grid(5, 3, nz, h, [&](int k) { return k < m ? e1 : e2; });
  const auto u = solve_poisson(g, plate_values(g), 1e-14);
  const double z_m = m * h, H = (nz - 1) * h;
  const double s1 = 1.0 / (z_m + (H - z_m) * e1 / e2), s2 = s1 * e1 / e2;
  double err = 0.0;
  for (int k = 0; k < nz; ++k) {
    const double z = k * h;
    const double exact = z <= z_m ? s1 * z : s1 * z_m + s2 * (z - z_m);
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) err = std::max(err, std::abs(u[g.node(i, j, k)] - exact));
  }
  EXPECT_LT(err, 1e-8);
  EXPECT_NEAR(s2 / s1, e1 / e2, 1e-12);
}

TEST(Poisson, GridConvergenceSecondOrder) {
  const double e1 = sinusoid_error(16), e2 = sinusoid_error(32), e3 = sinusoid_error(64);
  EXPECT_GE(std::log2(e1 / e2), 1.8);
  EXPECT_GE(std::log2(e2 / e3), 1.8);
}

TEST(Poisson, ResidualBelowTolerance) {
  const auto grid = build_grid(DeviceGeometry{}, 2.0);
  SolveReport rep;
  const auto u = solve_unit_potential(grid, 2, 1e-10, &rep);
  EXPECT_LE(rep.relative_residual, 1e-10);
  EXPECT_LT(poisson_residual(grid, u), 1e-8);
}

TEST(Grid, UniformOverride) {
  const auto grid = build_grid(DeviceGeometry{}, 2.0, 7.5);
  for (double e : grid.eps) EXPECT_EQ(e, 7.5);
}

TEST(Grid, LayerStackPermittivities) {
  const DeviceGeometry geo;
  const auto grid = build_grid(geo, 1.0);
  std::set<double> seen(grid.eps.begin(), grid.eps.end());
  EXPECT_EQ(seen, (std::set<double>{geo.eps_si, geo.eps_sige, geo.eps_oxide}));
}

TEST(Grid, LargeGatesGiveDisjointNodeSets) {
  DeviceGeometry geo;
  geo.gate_width = 60;
  geo.gate_gap = 10;
  geo.L = 280;
  geo.y_extent = 60;
  geo.box_x = 9.4;
  const auto grid = build_grid(geo, 2.0);
  // count along x on a row through the clavier band, in each gate's plane
  const int j = grid.ny / 2;
  const int k_top = grid.nz - 1;
  const int k_low = static_cast<int>(std::lround((geo.stack_height() - geo.lower_gate_depth) / grid.dz));
  for (int gate = 1; gate <= 4; ++gate) {
    const int k = gate % 2 == 1 ? k_low : k_top;
    int n = 0;
    for (int i = 0; i < grid.nx; ++i) n += grid.gate[grid.node(i, j, k)] == gate;
    EXPECT_EQ(n, 31) << "gate " << gate;
  }
  std::set<std::size_t> owned;
  for (std::size_t p = 0; p < grid.num_nodes(); ++p)
    if (grid.gate[p] >= 1 && grid.gate[p] <= 4) EXPECT_TRUE(owned.insert(p).second);
}

TEST(Grid, ResolutionCoarserThanGapRejected) {
  DeviceGeometry geo;
  geo.gate_width = 60;
  geo.gate_gap = 10;
  geo.L = 280;
  EXPECT_THROW(build_grid(geo, 20.0), ConfigError);
}

TEST(UnitPotentials, MaximumPrinciple) {
  const auto& set = desk_units();
  for (int g = 0; g < kNumGates; ++g) {
    const auto [lo, hi] = std::minmax_element(set.u[g].begin(), set.u[g].end());
    EXPECT_GE(*lo, -1e-12);
    EXPECT_LE(*hi, 1.0 + 1e-12);
  }
}

TEST(Superposition, ZeroAndUnitVoltages) {
  const auto& set = desk_units();
  const auto zero = assemble_potential(set, GateVoltages{});
  for (double v : zero.phi) EXPECT_EQ(v, 0.0);
  for (int g = 0; g < kNumGates; ++g) {
    GateVoltages e{};
    e[g] = 1.0;
    EXPECT_EQ(assemble_potential(set, e).phi, set.u[g]);
  }
}

TEST(Superposition, Linear) {
  const auto& set = desk_units();
  const GateVoltages a{0.3, -0.1, 0.7, 0.2, -0.4, 0.05}, b{-0.2, 0.6, 0.1, 0.9, 0.3, -0.25};
  GateVoltages ab{};
  for (int g = 0; g < kNumGates; ++g) ab[g] = a[g] + b[g];
  const auto fa = assemble_potential(set, a), fb = assemble_potential(set, b), fab = assemble_potential(set, ab);
  for (std::size_t p = 0; p < fab.phi.size(); ++p) EXPECT_NEAR(fab.phi[p], fa.phi[p] + fb.phi[p], 1e-14);
  // against a direct solve with all gates driven at once
  std::vector<double> values(set.grid.num_nodes(), 0.0);
  for (std::size_t p = 0; p < values.size(); ++p)
    if (set.grid.gate[p]) values[p] = ab[set.grid.gate[p] - 1];
  const auto direct = solve_poisson(set.grid, values, 1e-12);
  double scale = 0.0, diff = 0.0;
  for (std::size_t p = 0; p < direct.size(); ++p) {
    scale = std::max(scale, std::abs(direct[p]));
    diff = std::max(diff, std::abs(direct[p] - fab.phi[p]));
  }
  EXPECT_LT(diff, 1e-8 * scale);
}

TEST(DotTracking, FlatDriveWarns) {
  DriveWaveform d;
  d.A_S = 0.0;
  d.dB_S = 0.0;
  const auto dot = track_dot_position(desk_units(), d, 0.0);
  EXPECT_TRUE(dot.warning);
  EXPECT_FALSE(dot.message.empty());
}

TEST(DotTracking, PeriodicInTime) {
  const DriveWaveform d;
  for (double s : {0.0, 0.13, 0.6}) {
    const auto a = track_dot_position(desk_units(), d, s * d.T);
    const auto b = track_dot_position(desk_units(), d, (s + 1.0) * d.T);
    EXPECT_NEAR(a.x, b.x, 1e-9);
  }
}

TEST(DotTracking, QuarterPeriodAdvancesQuarterCell) {
  const DriveWaveform d;
  const auto& set = desk_units();
  const double L = set.grid.length_x();
  // brute-force oracle: grid argmax of phi in the well at each phase
  auto argmax_x = [&](double t) {
    const auto f = assemble_potential(set, voltage_vector(t, d));
    double best = -1e300, x = 0.0;
    for (int k = 0; k < set.grid.nz; ++k) {
      const double z = k * set.grid.dz;
      if (z < set.grid.well_z0 - 1e-9 || z > set.grid.well_z1 + 1e-9) continue;
      for (int j = 0; j < set.grid.ny; ++j)
        for (int i = 0; i < set.grid.nx; ++i)
          if (f.phi[set.grid.node(i, j, k)] > best) {
            best = f.phi[set.grid.node(i, j, k)];
            x = i * set.grid.dx;
          }
    }
    return x;
  };
  const double x0 = track_dot_position(set, d, 0.0).x;
  const double x1 = track_dot_position(set, d, 0.25 * d.T).x;
  const double adv = std::remainder(x1 - x0, L);
  EXPECT_NEAR(std::abs(adv), L / 4.0, set.grid.dx);
  EXPECT_NEAR(std::abs(std::remainder(argmax_x(0.25 * d.T) - argmax_x(0.0), L)), L / 4.0, set.grid.dx);
  const auto f = assemble_potential(set, voltage_vector(0.0, d));
  const auto dot = locate_dot(set.grid, f.phi);
  EXPECT_FALSE(dot.warning);
  EXPECT_EQ(count_wells(set.grid, f.phi, dot), 1);
}

TEST(Interpolate, ExactOnNodesAndPeriodic) {
  const auto& set = desk_units();
  const auto& g = set.grid;
  const auto& u = set.u[1];
  EXPECT_DOUBLE_EQ(interpolate(g, u, 3 * g.dx, 5 * g.dy, 7 * g.dz), u[g.node(3, 5, 7)]);
  EXPECT_NEAR(interpolate(g, u, 1.3, 2.1, 30.4), interpolate(g, u, 1.3 + g.length_x(), 2.1, 30.4), 1e-14);
}

TEST(PotGridFile, RoundTripIsExact) {
  const auto& set = desk_units();
  const auto f = parse_potgrid(format_potgrid(set.grid, set.u[3], "hash=00ff"));
  EXPECT_EQ(f.nx, set.grid.nx);
  EXPECT_EQ(f.ny, set.grid.ny);
  EXPECT_EQ(f.nz, set.grid.nz);
  EXPECT_EQ(f.dz, set.grid.dz);
  EXPECT_EQ(f.values, set.u[3]);
  EXPECT_EQ(comment_value(f.comments, "hash"), "00ff");
}

TEST(PotGridFile, TruncatedIsIoError) {
  const auto& set = desk_units();
  const auto text = format_potgrid(set.grid, set.u[0]);
  EXPECT_THROW(parse_potgrid(text.substr(0, text.size() - 200)), IoError);
}

TEST(Poisson, DiscreteFluxConservation) {
  // net flux out of an interior block of free nodes vanishes; interior edges
  // cancel because the edge conductances are symmetric
  const auto& set = desk_units();
  const auto& g = set.grid;
  const auto coef = detail::edge_coefficients(g);
  const auto& u = set.u[1];
  const int k_hi = static_cast<int>(std::lround((DeviceGeometry{}.stack_height() - DeviceGeometry{}.lower_gate_depth) / g.dz)) - 2;
  auto inside = [&](int i, int j, int k) { return i >= 2 && i < g.nx - 3 && j >= 2 && j < g.ny - 3 && k >= 2 && k <= k_hi; };
  double net = 0.0, gross = 0.0;
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        if (!inside(i, j, k)) continue;
        const std::size_t p = g.node(i, j, k);
        ASSERT_EQ(g.gate[p], 0);
        const auto nb = detail::neighbours(g, i, j, k);
        const int ni[6] = {i - 1, i + 1, i, i, i, i}, nj[6] = {j, j, j - 1, j + 1, j, j}, nk[6] = {k, k, k, k, k - 1, k + 1};
        for (int d = 0; d < 6; ++d) {
          EXPECT_EQ(coef[p][d], coef[nb[d]][d ^ 1]);
          if (inside(ni[d], nj[d], nk[d])) continue;
          const double f = coef[p][d] * (u[nb[d]] - u[p]);
          net += f;
          gross += std::abs(f);
        }
      }
  ASSERT_GT(gross, 0.0);
  EXPECT_LT(std::abs(net), 1e-8 * gross);
}

TEST(DotTracking, MonotoneOverOnePeriod) {
  const DriveWaveform d;
  const auto& set = desk_units();
  const double L = set.grid.length_x();
  double prev = track_dot_position(set, d, 0.0).x, total = 0.0;
  for (int p = 1; p <= 40; ++p) {
    const double x = track_dot_position(set, d, p / 40.0 * d.T).x;
    const double step = std::remainder(x - prev, L);
    EXPECT_GT(step, 0.0) << "sample " << p;
    total += step;
    prev = x;
  }
  EXPECT_NEAR(total, L, 1e-9);
}
