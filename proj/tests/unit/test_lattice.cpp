#include <gtest/gtest.h>

#include <set>

#include "shuttle/lattice.hpp"

using namespace shuttle;

namespace {

double norm(const Vec3& r) { return std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]); }

SurfaceField flat_surface(const LatticeLayout& lay, double L) {
  int nx = 0, ny = 0;
  double dx = 0.0, dy = 0.0;
  surface_grid_for(lay, L, nx, ny, dx, dy);
  RoughnessSpec s;
  return synthesize_surface(s, nx, ny, dx, dy);
}

DeviceGeometry small_geometry() {
  DeviceGeometry g;
  g.box_y = 2.0;
  return g;
}

// Brute-force neighbour sets: all atoms within 1.05 bond lengths (minimum image in x).
std::vector<std::set<int>> neighbours_by_distance(const AtomicStructure& s) {
  const double d0 = s.a0 * std::sqrt(3.0) / 4.0;
  std::vector<std::set<int>> out(s.size());
  for (int a = 0; a < static_cast<int>(s.size()); ++a)
    for (int b = a + 1; b < static_cast<int>(s.size()); ++b) {
      Vec3 r{s.positions[b][0] - s.positions[a][0], s.positions[b][1] - s.positions[a][1],
             s.positions[b][2] - s.positions[a][2]};
      r[0] -= s.cell_x * std::round(r[0] / s.cell_x);
      if (norm(r) < 1.05 * d0) {
        out[a].insert(b);
        out[b].insert(a);
      }
    }
  return out;
}

}  // namespace

TEST(Quantize, Examples) {
  EXPECT_EQ(quantize_height(0.0, 5.43), 0);
  EXPECT_EQ(quantize_height(1.36, 5.43), 1);
  EXPECT_EQ(quantize_height(-1.36, 5.43), -1);
  // half-layer ties round toward the well interior
  EXPECT_EQ(quantize_height(0.679, 5.43, InterfaceSide::top), 0);
  EXPECT_EQ(quantize_height(0.679, 5.43, InterfaceSide::bottom), 1);
  EXPECT_EQ(quantize_height(5.43 / 8.0, 5.43, InterfaceSide::top), 0);
}

TEST(Bonds, MatchDistanceOracle) {
  const auto s = make_ideal_lattice(6, 4, 9);
  const auto oracle = neighbours_by_distance(s);
  for (int a = 0; a < static_cast<int>(s.size()); ++a) {
    std::set<int> got;
    for (int b : s.bonds[a])
      if (b >= 0) got.insert(b);
    EXPECT_EQ(got, oracle[a]) << "atom " << a;
  }
}

TEST(Bonds, InteriorDegreeFourAndIdealLength) {
  const auto s = make_ideal_lattice(8, 8, 12);
  const double d0 = s.a0 * std::sqrt(3.0) / 4.0;
  for (int a = 0; a < static_cast<int>(s.size()); ++a) {
    const int l = s.layer(a), j = s.col_j(a);
    int deg = 0;
    for (int b : s.bonds[a])
      if (b >= 0) {
        ++deg;
        EXPECT_NEAR(norm(bond_vector(s, s.positions, a, b)), d0, 1e-12);
      }
    if (l > 0 && l + 1 < s.nlayers && j > 0 && j + 1 < s.ncy) EXPECT_EQ(deg, 4) << "atom " << a;
  }
}

TEST(Bonds, WrapAcrossX) {
  const auto s = make_ideal_lattice(6, 4, 5);
  bool wrapped = false;
  for (int j = 0; j < s.ncy; ++j)
    for (int l = 0; l < s.nlayers; ++l) {
      const int a = s.index(s.ncx - 1, j, l);
      for (int b : s.bonds[a])
        if (b >= 0 && s.col_i(b) == 0) wrapped = true;
    }
  EXPECT_TRUE(wrapped);
}

TEST(Bonds, TotalCountEqualsHalfDegreeSum) {
  const auto s = make_ideal_lattice(4, 4, 8);
  const auto oracle = neighbours_by_distance(s);
  std::size_t deg = 0, deficit = 0;
  for (const auto& n : oracle) {
    deg += n.size();
    deficit += 4 - n.size();
  }
  EXPECT_EQ(static_cast<std::size_t>(count_bonds(s)), deg / 2);
  EXPECT_EQ(2 * s.size() - deficit / 2, deg / 2);
}

TEST(Alloy, PureSiliconWhenNoGe) {
  const auto g = small_geometry();
  const auto lay = lattice_layout(g);
  const auto flat = flat_surface(lay, g.L);
  AlloySpec a;
  a.x_ge = 0.0;
  a.seed = 5;
  const auto s = build_lattice(lay, g.L, flat, flat, a);
  EXPECT_EQ(count_species(s, Species::Ge), 0u);
}

TEST(Alloy, BinomialGeCount) {
  const auto g = small_geometry();
  const auto lay = lattice_layout(g);
  const auto flat = flat_surface(lay, g.L);
  AlloySpec a;
  a.x_ge = 0.3;
  a.seed = 17;
  const auto s = build_lattice(lay, g.L, flat, flat, a);
  const double n = static_cast<double>(s.size() - count_species(s, Species::Si, Region::well) -
                                       count_species(s, Species::Ge, Region::well));
  const double ge = static_cast<double>(count_species(s, Species::Ge, Region::barrier));
  EXPECT_NEAR(ge, 0.3 * n, 3.0 * std::sqrt(n * 0.3 * 0.7));
  EXPECT_EQ(count_species(s, Species::Ge, Region::well), 0u);
}

TEST(Alloy, FlatWellHasNominalLayers) {
  const auto g = small_geometry();
  const auto lay = lattice_layout(g);
  const auto flat = flat_surface(lay, g.L);
  const auto s = build_lattice(lay, g.L, flat, flat, AlloySpec{});
  for (int id = 0; id < static_cast<int>(s.size()); ++id) {
    const int l = s.layer(id);
    const bool in_well = l >= lay.well_bottom_layer && l < lay.well_top_layer;
    EXPECT_EQ(s.region[id] == Region::well, in_well);
  }
}

TEST(Alloy, RoughInterfaceSteps) {
  const auto g = small_geometry();
  const auto lay = lattice_layout(g);
  int nx = 0, ny = 0;
  double dx = 0.0, dy = 0.0;
  surface_grid_for(lay, g.L, nx, ny, dx, dy);
  RoughnessSpec r;
  r.rms_target = 2.0;
  r.seed = 3;
  const auto top = synthesize_surface(r, nx, ny, dx, dy);
  const auto flat = flat_surface(lay, g.L);
  const auto s = build_lattice(lay, g.L, top, flat, AlloySpec{});
  // topmost well layer per column, brute force
  int lo = 1 << 30, hi = -1;
  for (int j = 0; j < s.ncy; ++j)
    for (int i = 0; i < s.ncx; ++i) {
      int top_l = -1;
      for (int l = 0; l < s.nlayers; ++l)
        if (s.region[s.index(i, j, l)] == Region::well) top_l = l;
      lo = std::min(lo, top_l);
      hi = std::max(hi, top_l);
    }
  EXPECT_GE(hi - lo, 1);
}

TEST(Alloy, SameSeedSameAlloyAcrossSurfaces) {
  // one draw per site: barrier sites shared by two structures get the same species
  const auto g = small_geometry();
  const auto lay = lattice_layout(g);
  int nx = 0, ny = 0;
  double dx = 0.0, dy = 0.0;
  surface_grid_for(lay, g.L, nx, ny, dx, dy);
  RoughnessSpec r;
  r.rms_target = 3.0;
  r.seed = 9;
  const auto flat = flat_surface(lay, g.L);
  const auto a = build_lattice(lay, g.L, flat, flat, AlloySpec{0.3, 4});
  const auto b = build_lattice(lay, g.L, synthesize_surface(r, nx, ny, dx, dy), flat, AlloySpec{0.3, 4});
  for (std::size_t id = 0; id < a.size(); ++id)
    if (a.region[id] == Region::barrier && b.region[id] == Region::barrier) EXPECT_EQ(a.species[id], b.species[id]);
}

TEST(AtomsFile, RoundTripIsExact) {
  const auto g = small_geometry();
  const auto lay = lattice_layout(g);
  const auto flat = flat_surface(lay, g.L);
  auto s = build_lattice(lay, g.L, flat, flat, AlloySpec{0.3, 2});
  s.positions[7][2] += 0.0123456789;
  std::vector<std::string> comments;
  const auto t = parse_atoms(format_atoms(s, {"hash=1234"}), &comments);
  EXPECT_EQ(t.positions, s.positions);
  EXPECT_EQ(t.species, s.species);
  EXPECT_EQ(t.region, s.region);
  EXPECT_EQ(t.bonds, s.bonds);
  EXPECT_EQ(t.cell_x, s.cell_x);
  EXPECT_EQ(comment_value(comments, "hash"), "1234");
}

TEST(AtomsFile, TruncatedIsIoError) {
  const auto s = make_ideal_lattice(4, 2, 4);
  const auto text = format_atoms(s);
  EXPECT_THROW(parse_atoms(text.substr(0, text.size() - 30)), IoError);
}

TEST(Alloy, MonolayerStepGivesOneTerraceEdge) {
  // h = 0 for x < L/2 and a0/4 beyond: one raised terrace; with x periodic the
  // wrap at x = L closes it, so each row has exactly two single-layer edges
  const auto g = small_geometry();
  const auto lay = lattice_layout(g);
  auto top = flat_surface(lay, g.L);
  for (int j = 0; j < top.ny; ++j)
    for (int i = 0; i < top.nx; ++i) top.at(i, j) = i * top.dx >= 0.5 * g.L ? constants::a0_si / 4.0 : 0.0;
  const auto s = build_lattice(lay, g.L, top, flat_surface(lay, g.L), AlloySpec{0.3, 1});
  for (int j = 0; j < s.ncy; ++j) {
    std::vector<int> top_layer(s.ncx, -1);
    for (int i = 0; i < s.ncx; ++i)
      for (int l = 0; l < s.nlayers; ++l)
        if (s.region[s.index(i, j, l)] == Region::well) top_layer[i] = l;
    int edges = 0;
    for (int i = 0; i < s.ncx; ++i) {
      const int d = top_layer[(i + 1) % s.ncx] - top_layer[i];
      EXPECT_LE(std::abs(d), 1);
      edges += d != 0;
      // away from the two edges the layer follows the step directly
      const double x = s.device_x(s.positions[s.index(i, j, lay.well_top_layer)][0]);
      const double margin = 2.0 * top.dx;
      if (std::abs(x - 0.5 * g.L) > margin && x > margin && x < g.L - margin)
        EXPECT_EQ(top_layer[i], lay.well_top_layer - 1 + (x >= 0.5 * g.L ? 1 : 0)) << "column " << i;
    }
    EXPECT_EQ(edges, 2);
  }
}

TEST(Alloy, GeFractionConvergesWithBoxSize) {
  double prev_sigma = 1.0;
  for (double box_y : {1.0, 2.0, 4.0}) {
    auto g = small_geometry();
    g.box_y = box_y;
    const auto lay = lattice_layout(g);
    const auto flat = flat_surface(lay, g.L);
    const auto s = build_lattice(lay, g.L, flat, flat, AlloySpec{0.3, 8});
    const double n = static_cast<double>(s.size() - count_species(s, Species::Si, Region::well));
    const double frac = count_species(s, Species::Ge, Region::barrier) / n;
    const double sigma = std::sqrt(0.3 * 0.7 / n);
    EXPECT_NEAR(frac, 0.3, 3.0 * sigma) << "box_y " << box_y;
    EXPECT_LT(sigma, prev_sigma);
    prev_sigma = sigma;
  }
}
