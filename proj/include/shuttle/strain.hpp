#pragma once

// Keating valence force field:
//   E = sum_bonds 3 a/(16 d^2) (r^2 - d^2)^2
//     + sum_angles 3 b/(8 d_ij d_ik) (r_ij . r_ik + d_ij d_ik / 3)^2
// Mixed bonds use the arithmetic mean of the species constants; an angle uses
// the mean of its two bonds' beta.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "shuttle/common.hpp"
#include "shuttle/lattice.hpp"

namespace shuttle {

inline constexpr double kNewtonPerMeterInEvPerA2 = 0.062415091;

struct VffParams {
  // index 0 = Si, 1 = Ge
  std::array<double, 2> alpha{48.5, 38.67};  // N/m
  std::array<double, 2> beta{13.8, 11.35};   // N/m
  std::array<double, 2> d0{2.3512589712747505, 2.450};  // Angstrom; Si value is sqrt(3)/4 of the 5.43 A lattice
  double substrate_strain = 0.0125;

  void validate() const {
    for (int s = 0; s < 2; ++s) {
      if (!(alpha[s] > 0.0)) throw ConfigError("vff.alpha must be > 0");
      if (!(beta[s] > 0.0)) throw ConfigError("vff.beta must be > 0");
      if (!(d0[s] > 0.0)) throw ConfigError("vff.d0 must be > 0");
    }
    if (!(substrate_strain > -0.1 && substrate_strain < 0.1))
      throw ConfigError("vff.substrate_strain must lie in (-0.1, 0.1)");
  }

  double pair_alpha(Species a, Species b) const {
    return 0.5 * (alpha[static_cast<int>(a)] + alpha[static_cast<int>(b)]) * kNewtonPerMeterInEvPerA2;
  }
  double pair_beta(Species a, Species b) const {
    return 0.5 * (beta[static_cast<int>(a)] + beta[static_cast<int>(b)]) * kNewtonPerMeterInEvPerA2;
  }
  double pair_d0(Species a, Species b) const { return 0.5 * (d0[static_cast<int>(a)] + d0[static_cast<int>(b)]); }
};

/// Energy (eV) and, when `grad` is non-null, its gradient (eV/Angstrom).
inline double keating_energy_gradient(const AtomicStructure& s, const std::vector<Vec3>& pos, const VffParams& p,
                                      std::vector<Vec3>* grad) {
  if (pos.size() != s.size()) throw ConfigError("positions do not match the structure");
  if (grad) grad->assign(s.size(), Vec3{0.0, 0.0, 0.0});
  double energy = 0.0;
  const int n = static_cast<int>(s.size());
  for (int a = 0; a < n; ++a) {
    const auto& nb = s.bonds[a];
    std::array<Vec3, 4> r{};
    std::array<double, 4> d{}, beta{};
    for (int m = 0; m < 4; ++m) {
      if (nb[m] < 0) continue;
      r[m] = bond_vector(s, pos, a, nb[m]);
      d[m] = p.pair_d0(s.species[a], s.species[nb[m]]);
      beta[m] = p.pair_beta(s.species[a], s.species[nb[m]]);
    }
    // stretch: count each bond once, from its lower atom
    for (int m = 2; m < 4; ++m) {
      if (nb[m] < 0) continue;
      const double al = p.pair_alpha(s.species[a], s.species[nb[m]]);
      const double r2 = r[m][0] * r[m][0] + r[m][1] * r[m][1] + r[m][2] * r[m][2];
      const double dd = d[m] * d[m];
      const double diff = r2 - dd;
      energy += 3.0 * al / (16.0 * dd) * diff * diff;
      if (grad) {
        const double f = 3.0 * al / (4.0 * dd) * diff;
        for (int c = 0; c < 3; ++c) {
          (*grad)[nb[m]][c] += f * r[m][c];
          (*grad)[a][c] -= f * r[m][c];
        }
      }
    }
    // bend: every pair of bonds at this atom
    for (int m = 0; m < 4; ++m) {
      if (nb[m] < 0) continue;
      for (int q = m + 1; q < 4; ++q) {
        if (nb[q] < 0) continue;
        const double b = 0.5 * (beta[m] + beta[q]);
        const double k = 3.0 * b / (8.0 * d[m] * d[q]);
        const double c = r[m][0] * r[q][0] + r[m][1] * r[q][1] + r[m][2] * r[q][2] + d[m] * d[q] / 3.0;
        energy += k * c * c;
        if (grad) {
          const double f = 2.0 * k * c;
          for (int t = 0; t < 3; ++t) {
            (*grad)[nb[m]][t] += f * r[q][t];
            (*grad)[nb[q]][t] += f * r[m][t];
            (*grad)[a][t] -= f * (r[m][t] + r[q][t]);
          }
        }
      }
    }
  }
  return energy;
}

inline double keating_energy(const AtomicStructure& s, const std::vector<Vec3>& pos, const VffParams& p) {
  return keating_energy_gradient(s, pos, p, nullptr);
}

inline std::vector<Vec3> keating_gradient(const AtomicStructure& s, const std::vector<Vec3>& pos, const VffParams& p) {
  std::vector<Vec3> g;
  keating_energy_gradient(s, pos, p, &g);
  return g;
}

/// Out-of-plane to in-plane strain ratio 2 C12 / C11 of the Keating model.
inline double poisson_ratio_biaxial(double alpha, double beta) { return 2.0 * (alpha - beta) / (alpha + 3.0 * beta); }

/// Starting point for relaxation: lateral coordinates scaled to the substrate
/// lattice, each layer gap set from the tetragonal response of its local
/// composition. Returns positions; `cell_x` receives the strained period.
inline std::vector<Vec3> biaxial_guess(const AtomicStructure& s, const VffParams& p, double& cell_x) {
  const double lat = 1.0 + p.substrate_strain;
  const double ideal_cell = s.ncx * s.a0 / std::sqrt(2.0);
  const double scale_in = lat * ideal_cell / s.cell_x;  // the structure may already be scaled
  cell_x = s.cell_x * scale_in;
  const double delta = p.d0[1] / p.d0[0] - 1.0;
  std::vector<double> ge_frac(s.nlayers, 0.0);
  const int per_layer = s.ncx * s.ncy;
  for (std::size_t id = 0; id < s.size(); ++id)
    if (s.species[id] == Species::Ge) ge_frac[s.layer(static_cast<int>(id))] += 1.0 / per_layer;
  std::vector<double> z(s.nlayers, 0.0);
  for (int l = 1; l < s.nlayers; ++l) {
    const double f = 0.5 * (ge_frac[l - 1] + ge_frac[l]);
    const double natural = 1.0 + f * delta;
    const double al = (1 - f) * p.alpha[0] + f * p.alpha[1];
    const double be = (1 - f) * p.beta[0] + f * p.beta[1];
    const double eps_par = lat / natural - 1.0;
    const double eps_zz = -poisson_ratio_biaxial(al, be) * eps_par;
    z[l] = z[l - 1] + s.a0 / 4.0 * natural * (1.0 + eps_zz);
  }
  std::vector<Vec3> out(s.size());
  for (std::size_t id = 0; id < s.size(); ++id) {
    const int n = static_cast<int>(id);
    const Vec3 ideal = ideal_position(s.col_i(n), s.col_j(n), s.layer(n), s.a0);
    out[id] = {ideal[0] * lat, ideal[1] * lat, z[s.layer(n)]};
  }
  return out;
}

struct StrainState {
  std::vector<Vec3> positions;
  double cell_x = 0.0;
  double energy = 0.0;
  double grad_norm = 0.0;  // max per-atom gradient magnitude over free atoms
  int iterations = 0;
  bool converged = false;
  std::vector<double> energy_history;  // accepted iterates, starting with the initial energy
};

inline double max_atom_gradient(const std::vector<Vec3>& g, const std::vector<char>& frozen) {
  double m = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!frozen[i]) m = std::max(m, std::sqrt(g[i][0] * g[i][0] + g[i][1] * g[i][1] + g[i][2] * g[i][2]));
  return m;
}

/// Nonlinear conjugate gradients (Polak-Ribiere+) with a secant step and
/// Armijo backtracking. The lateral period is fixed; the top and bottom layers
/// stay at their starting positions. When `start` is empty the biaxial guess
/// is used as the starting point.
inline StrainState relax(const AtomicStructure& s, const VffParams& p, double tol = 1e-4, int max_iter = 5000,
                         std::vector<Vec3> start = {}) {
  p.validate();
  if (!(tol > 0.0)) throw ConfigError("relaxation tolerance must be > 0");
  StrainState st;
  AtomicStructure work = s;
  if (start.empty()) {
    st.positions = biaxial_guess(s, p, st.cell_x);
  } else {
    if (start.size() != s.size()) throw ConfigError("start positions do not match the structure");
    st.positions = std::move(start);
    st.cell_x = s.cell_x;
  }
  work.cell_x = st.cell_x;

  std::vector<char> frozen(s.size(), 0);
  for (std::size_t id = 0; id < s.size(); ++id) {
    const int l = s.layer(static_cast<int>(id));
    if (l == 0 || l == s.nlayers - 1) frozen[id] = 1;
  }
  auto project = [&](std::vector<Vec3>& g) {
    for (std::size_t i = 0; i < g.size(); ++i)
      if (frozen[i]) g[i] = {0.0, 0.0, 0.0};
  };
  auto dot = [](const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i][0] * b[i][0] + a[i][1] * b[i][1] + a[i][2] * b[i][2];
    return acc;
  };
  auto axpy = [](const std::vector<Vec3>& x, double t, const std::vector<Vec3>& d, std::vector<Vec3>& out) {
    out.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      for (int c = 0; c < 3; ++c) out[i][c] = x[i][c] + t * d[i][c];
  };

  std::vector<Vec3> g, g_new, trial, dir;
  double e = keating_energy_gradient(work, st.positions, p, &g);
  project(g);
  st.energy_history.push_back(e);
  dir.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) dir[i] = {-g[i][0], -g[i][1], -g[i][2]};
  double gg = dot(g, g);
  double step = 1e-2;
  int it = 0;
  for (; it < max_iter; ++it) {
    if (max_atom_gradient(g, frozen) <= tol) break;
    double slope = dot(g, dir);
    if (slope >= 0.0) {
      for (std::size_t i = 0; i < g.size(); ++i) dir[i] = {-g[i][0], -g[i][1], -g[i][2]};
      slope = -gg;
    }
    // secant estimate of the 1D minimiser from the directional derivative at a probe step
    axpy(st.positions, step, dir, trial);
    keating_energy_gradient(work, trial, p, &g_new);
    project(g_new);
    const double slope_probe = dot(g_new, dir);
    double t = step;
    if (slope_probe > slope) t = step * slope / (slope - slope_probe);
    if (!(t > 0.0) || !std::isfinite(t)) t = step;
    double e_new = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      axpy(st.positions, t, dir, trial);
      e_new = keating_energy_gradient(work, trial, p, &g_new);
      if (e_new <= e + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted || e_new > e) break;
    project(g_new);
    st.positions.swap(trial);
    e = e_new;
    st.energy_history.push_back(e);
    const double gg_new = dot(g_new, g_new);
    double beta_pr = (gg_new - dot(g_new, g)) / gg;
    beta_pr = std::max(0.0, beta_pr);
    g.swap(g_new);
    gg = gg_new;
    for (std::size_t i = 0; i < g.size(); ++i)
      for (int c = 0; c < 3; ++c) dir[i][c] = -g[i][c] + beta_pr * dir[i][c];
    step = std::clamp(t, 1e-6, 1.0);
  }
  st.iterations = it;
  st.energy = e;
  st.grad_norm = max_atom_gradient(g, frozen);
  st.converged = st.grad_norm <= tol;
  return st;
}

/// Copies relaxed positions and the strained period into the structure.
inline void apply_strain_state(AtomicStructure& s, const StrainState& st) {
  s.positions = st.positions;
  s.cell_x = st.cell_x;
}

/// Local hydrostatic strain per atom: mean bond length over the atom's bonds
/// divided by the mean equilibrium length of the same bonds, minus one.
inline std::vector<double> local_strain(const AtomicStructure& s, const VffParams& p) {
  std::vector<double> out(s.size(), 0.0);
  for (std::size_t a = 0; a < s.size(); ++a) {
    double len = 0.0, ref = 0.0;
    int n = 0;
    for (int nb : s.bonds[a]) {
      if (nb < 0) continue;
      const Vec3 r = bond_vector(s, s.positions, static_cast<int>(a), nb);
      len += std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
      ref += p.pair_d0(s.species[a], s.species[nb]);
      ++n;
    }
    if (n > 0) out[a] = len / ref - 1.0;
  }
  return out;
}

}  // namespace shuttle
