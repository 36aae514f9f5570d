#pragma once

// Reduced valley tight-binding model: one orbital per lattice site. Along z a
// column is a chain with first (t1) and second (t2) neighbour hoppings whose
// band minima sit at +-k0; in-plane, neighbouring columns of the same layer
// couple through t_xy. On-site energies carry the electrostatic energy -e*phi,
// the Ge band offset and a hydrostatic strain shift.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "shuttle/common.hpp"
#include "shuttle/electrostatics.hpp"
#include "shuttle/lattice.hpp"
#include "shuttle/strain.hpp"

namespace shuttle {

struct ValleyModelParams {
  double k0_fraction = constants::valley_k0_fraction;  // k0 in units of 2 pi / a0
  double m_l = 0.916;                                  // longitudinal mass, m_e
  double m_t = 0.19;                                   // transverse mass, m_e
  double dEc = 0.5;                                    // eV per Ge site
  double strain_coupling = -2.0;                       // eV per unit local strain
  double eig_tol = 1e-10;                              // eV, eigenpair residual norm
  double phase_floor = 1e-12;                          // |F| below this: valley character unresolved
  double a0 = constants::a0_si;

  // derived by calibrate()
  double t1 = 0.0, t2 = 0.0, t_xy = 0.0;

  double k0() const { return k0_fraction * 2.0 * constants::pi / a0; }
  double layer_spacing() const { return a0 / 4.0; }

  void validate() const {
    if (!(k0_fraction > 0.0 && k0_fraction < 1.0)) throw ConfigError("valley.k0_fraction must lie in (0, 1)");
    if (!(m_l > 0.0)) throw ConfigError("valley.m_l must be > 0");
    if (!(m_t > 0.0)) throw ConfigError("valley.m_t must be > 0");
    if (!(eig_tol > 0.0)) throw ConfigError("valley.eig_tol must be > 0");
    if (!(phase_floor >= 0.0)) throw ConfigError("valley.phase_floor must be >= 0");
    if (t2 != 0.0 || t1 != 0.0) {
      if (!(t2 > 0.0)) throw ConfigError("valley: t2 must be > 0");
      const double want = -4.0 * t2 * std::cos(k0() * layer_spacing());
      if (std::abs(t1 - want) > 1e-12 * std::abs(want)) throw ConfigError("valley: t1 inconsistent with k0 and t2");
      if (!(t_xy < 0.0)) throw ConfigError("valley: t_xy must be < 0 (positive in-plane mass)");
    }
  }
};

struct ChainHoppings {
  double t1 = 0.0, t2 = 0.0;
};

/// t1, t2 (eV) placing the minima of E(k) = 2 t1 cos(ka) + 2 t2 cos(2ka) at
/// +-k0 with curvature hbar^2 / m_l there; a is the layer spacing.
inline ChainHoppings calibrate_chain_hoppings(double k0, double m_l, double a) {
  if (!(m_l > 0.0)) throw ConfigError("longitudinal mass must be > 0");
  const double c = std::cos(k0 * a);
  const double t2 = constants::hbar2_over_me / m_l / (8.0 * a * a * (1.0 - c * c));
  return {-4.0 * t2 * c, t2};
}

inline double chain_dispersion(double k, double t1, double t2, double a) {
  return 2.0 * t1 * std::cos(k * a) + 2.0 * t2 * std::cos(2.0 * k * a);
}

inline ValleyModelParams calibrate(ValleyModelParams p) {
  const auto h = calibrate_chain_hoppings(p.k0(), p.m_l, p.layer_spacing());
  p.t1 = h.t1;
  p.t2 = h.t2;
  const double as = p.a0 / std::sqrt(2.0);
  p.t_xy = -constants::hbar2_over_me / (2.0 * p.m_t * as * as);
  p.validate();
  return p;
}

/// Solve window: `nbx` consecutive columns starting at `i0` (wrapping in x),
/// all y columns, and the top `nbz` layers of the structure.
struct SolveBox {
  int i0 = 0, nbx = 0, ncy = 0, l0 = 0, nbz = 0;
  int size() const { return nbx * ncy * nbz; }
  int local(int ib, int j, int lz) const { return (lz * ncy + j) * nbx + ib; }
};

inline SolveBox make_box(const AtomicStructure& s, double x_center_nm, double box_x_nm, double box_z_nm) {
  const double as_nm = s.a0 / std::sqrt(2.0) / constants::nm_to_A;
  const double dl_nm = s.a0 / 4.0 / constants::nm_to_A;
  SolveBox b;
  b.nbx = std::max(1, static_cast<int>(std::lround(box_x_nm / as_nm)));
  b.nbz = std::max(1, static_cast<int>(std::lround(box_z_nm / dl_nm)));
  b.ncy = s.ncy;
  if (b.nbx > s.ncx || b.nbz > s.nlayers) throw ConfigError("solve box larger than the atomic structure");
  b.l0 = s.nlayers - b.nbz;
  const double col = x_center_nm / s.device_L_nm * s.ncx;  // in column units
  b.i0 = static_cast<int>(std::lround(col - 0.5 * b.nbx));
  b.i0 = ((b.i0 % s.ncx) + s.ncx) % s.ncx;
  return b;
}

/// Hamiltonian on a box: uniform hoppings plus a site-dependent diagonal.
struct SparseHamiltonian {
  SolveBox box;
  double t1 = 0.0, t2 = 0.0, t_xy = 0.0;
  std::vector<double> diag;  // eV
  std::vector<int> atom;     // local index -> atom id
  std::vector<int> layer;    // local index -> global layer index

  int dimension() const { return static_cast<int>(diag.size()); }

  /// y = H x for column-major blocks (one vector per column).
  void apply(const Eigen::MatrixXd& x, Eigen::MatrixXd& y) const {
    const int nbx = box.nbx, ncy = box.ncy, nbz = box.nbz;
    y.resize(x.rows(), x.cols());
    for (int c = 0; c < x.cols(); ++c) {
      const double* in = x.col(c).data();
      double* out = y.col(c).data();
      for (int lz = 0; lz < nbz; ++lz)
        for (int j = 0; j < ncy; ++j)
          for (int ib = 0; ib < nbx; ++ib) {
            const int q = (lz * ncy + j) * nbx + ib;
            double acc = diag[q] * in[q];
            if (ib > 0) acc += t_xy * in[q - 1];
            if (ib + 1 < nbx) acc += t_xy * in[q + 1];
            if (j > 0) acc += t_xy * in[q - nbx];
            if (j + 1 < ncy) acc += t_xy * in[q + nbx];
            const int sz = nbx * ncy;
            if (lz > 0) acc += t1 * in[q - sz];
            if (lz + 1 < nbz) acc += t1 * in[q + sz];
            if (lz > 1) acc += t2 * in[q - 2 * sz];
            if (lz + 2 < nbz) acc += t2 * in[q + 2 * sz];
            out[q] = acc;
          }
    }
  }

  Eigen::SparseMatrix<double> to_sparse() const {
    const int n = dimension();
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(n) * 9);
    const int nbx = box.nbx, ncy = box.ncy, nbz = box.nbz, sz = nbx * ncy;
    for (int lz = 0; lz < nbz; ++lz)
      for (int j = 0; j < ncy; ++j)
        for (int ib = 0; ib < nbx; ++ib) {
          const int q = (lz * ncy + j) * nbx + ib;
          t.emplace_back(q, q, diag[q]);
          if (ib > 0) t.emplace_back(q, q - 1, t_xy);
          if (ib + 1 < nbx) t.emplace_back(q, q + 1, t_xy);
          if (j > 0) t.emplace_back(q, q - nbx, t_xy);
          if (j + 1 < ncy) t.emplace_back(q, q + nbx, t_xy);
          if (lz > 0) t.emplace_back(q, q - sz, t1);
          if (lz + 1 < nbz) t.emplace_back(q, q + sz, t1);
          if (lz > 1) t.emplace_back(q, q - 2 * sz, t2);
          if (lz + 2 < nbz) t.emplace_back(q, q + 2 * sz, t2);
        }
    Eigen::SparseMatrix<double> m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }

  Eigen::MatrixXd to_dense() const { return Eigen::MatrixXd(to_sparse()); }
};

/// Device coordinates (nm) of an atom.
inline std::array<double, 3> device_position(const AtomicStructure& s, int id) {
  const auto& p = s.positions[id];
  return {s.device_x(p[0]), s.y0_nm + p[1] / constants::nm_to_A, s.z0_nm + p[2] / constants::nm_to_A};
}

/// On-site: -phi (eV per V) interpolated at the atom, + dEc on Ge, + strain
/// shift. `strain` may be empty (unrelaxed structure, no shift).
inline SparseHamiltonian build_hamiltonian(const AtomicStructure& s, const DielectricGrid* grid,
                                           const std::vector<double>* phi, const ValleyModelParams& p,
                                           const SolveBox& box, const std::vector<double>& strain = {}) {
  if (box.nbx > s.ncx || box.nbz > s.nlayers || box.ncy != s.ncy || box.l0 < 0 || box.l0 + box.nbz > s.nlayers)
    throw ConfigError("solve box larger than the atomic structure");
  if (!strain.empty() && strain.size() != s.size()) throw ConfigError("strain vector does not match the structure");
  if (!(p.t2 > 0.0)) throw ConfigError("valley model not calibrated");
  SparseHamiltonian h;
  h.box = box;
  h.t1 = p.t1;
  h.t2 = p.t2;
  h.t_xy = p.t_xy;
  const int n = box.size();
  h.diag.resize(n);
  h.atom.resize(n);
  h.layer.resize(n);
  for (int lz = 0; lz < box.nbz; ++lz)
    for (int j = 0; j < box.ncy; ++j)
      for (int ib = 0; ib < box.nbx; ++ib) {
        const int q = box.local(ib, j, lz);
        const int l = box.l0 + lz;
        const int id = s.index((box.i0 + ib) % s.ncx, j, l);
        h.atom[q] = id;
        h.layer[q] = l;
        double e = 0.0;
        if (grid && phi) {
          const auto r = device_position(s, id);
          e -= interpolate(*grid, *phi, r[0], r[1], r[2]);
        }
        if (s.species[id] == Species::Ge) e += p.dEc;
        if (!strain.empty()) e += p.strain_coupling * strain[id];
        h.diag[q] = e;
      }
  return h;
}

// ---- eigensolver -----------------------------------------------------------

namespace detail {

/// Exact inverse of (K + Vx + Vy + Vz - sigma), where K is the hopping
/// operator and V* are separable fits of the diagonal. Applied via the
/// eigenbases of the three one-dimensional operators.
class SeparablePreconditioner {
 public:
  SeparablePreconditioner(const SparseHamiltonian& h, double shift_below) {
    const auto& b = h.box;
    nx_ = b.nbx;
    ny_ = b.ncy;
    nz_ = b.nbz;
    std::vector<double> vz(nz_, 0.0), vx(nx_, 0.0), vy(ny_, 0.0);
    for (int lz = 0; lz < nz_; ++lz) {
      double acc = 0.0;
      for (int q = lz * nx_ * ny_; q < (lz + 1) * nx_ * ny_; ++q) acc += h.diag[q];
      vz[lz] = acc / (nx_ * ny_);
    }
    for (int lz = 0; lz < nz_; ++lz)
      for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i) vx[i] += (h.diag[b.local(i, j, lz)] - vz[lz]) / (ny_ * nz_);
    for (int lz = 0; lz < nz_; ++lz)
      for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i) vy[j] += (h.diag[b.local(i, j, lz)] - vz[lz] - vx[i]) / (nx_ * nz_);

    auto solve1d = [](int n, const std::vector<double>& v, double t_first, double t_second, Eigen::MatrixXd& q,
                      Eigen::VectorXd& lam) {
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        m(i, i) = v[i];
        if (i + 1 < n) m(i, i + 1) = m(i + 1, i) = t_first;
        if (i + 2 < n) m(i, i + 2) = m(i + 2, i) = t_second;
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
      q = es.eigenvectors();
      lam = es.eigenvalues();
    };
    solve1d(nx_, vx, h.t_xy, 0.0, qx_, lx_);
    solve1d(ny_, vy, h.t_xy, 0.0, qy_, ly_);
    solve1d(nz_, vz, h.t1, h.t2, qz_, lz_);
    lambda_min_ = lx_(0) + ly_(0) + lz_(0);
    sigma_ = lambda_min_ - shift_below;
  }

  double lambda_min() const { return lambda_min_; }

  /// Lowest `m` eigenvectors of the separable operator.
  Eigen::MatrixXd lowest_modes(int m) const {
    struct Mode {
      double e;
      int a, b, c;
    };
    std::vector<Mode> modes;
    const int kx = std::min(nx_, 4), ky = std::min(ny_, 4), kz = std::min(nz_, 8);
    for (int a = 0; a < kx; ++a)
      for (int b2 = 0; b2 < ky; ++b2)
        for (int c = 0; c < kz; ++c) modes.push_back({lx_(a) + ly_(b2) + lz_(c), a, b2, c});
    std::stable_sort(modes.begin(), modes.end(), [](const Mode& u, const Mode& v) { return u.e < v.e; });
    Eigen::MatrixXd out(nx_ * ny_ * nz_, m);
    for (int k = 0; k < m; ++k) {
      const auto& md = modes[std::min<std::size_t>(k, modes.size() - 1)];
      for (int lz = 0; lz < nz_; ++lz)
        for (int j = 0; j < ny_; ++j)
          for (int i = 0; i < nx_; ++i)
            out((lz * ny_ + j) * nx_ + i, k) = qx_(i, md.a) * qy_(j, md.b) * qz_(lz, md.c);
    }
    return out;
  }

  void apply(const Eigen::MatrixXd& r, Eigen::MatrixXd& out) const {
    out.resize(r.rows(), r.cols());
    Eigen::MatrixXd t1m, t2m;
    for (int c = 0; c < r.cols(); ++c) {
      // x: rows nx, columns ny*nz
      Eigen::Map<const Eigen::MatrixXd> rx(r.col(c).data(), nx_, ny_ * nz_);
      t1m.noalias() = qx_.transpose() * rx;
      // y: per layer, (nx, ny) * qy
      for (int lz = 0; lz < nz_; ++lz) {
        Eigen::Map<Eigen::MatrixXd> blk(t1m.data() + static_cast<std::ptrdiff_t>(lz) * nx_ * ny_, nx_, ny_);
        blk = (blk * qy_).eval();
      }
      // z: (nx*ny, nz) * qz
      Eigen::Map<Eigen::MatrixXd> rz(t1m.data(), nx_ * ny_, nz_);
      t2m.noalias() = rz * qz_;
      for (int lz = 0; lz < nz_; ++lz)
        for (int j = 0; j < ny_; ++j)
          for (int i = 0; i < nx_; ++i) t2m(j * nx_ + i, lz) /= (lx_(i) + ly_(j) + lz_(lz) - sigma_);
      // back
      Eigen::MatrixXd back = t2m * qz_.transpose();
      for (int lz = 0; lz < nz_; ++lz) {
        Eigen::Map<Eigen::MatrixXd> blk(back.data() + static_cast<std::ptrdiff_t>(lz) * nx_ * ny_, nx_, ny_);
        blk = (blk * qy_.transpose()).eval();
      }
      Eigen::Map<Eigen::MatrixXd> bx(back.data(), nx_, ny_ * nz_);
      Eigen::Map<Eigen::MatrixXd> o(out.col(c).data(), nx_, ny_ * nz_);
      o.noalias() = qx_ * bx;
    }
  }

 private:
  int nx_ = 0, ny_ = 0, nz_ = 0;
  Eigen::MatrixXd qx_, qy_, qz_;
  Eigen::VectorXd lx_, ly_, lz_;
  double lambda_min_ = 0.0, sigma_ = 0.0;
};

/// Orthonormalises the columns of `v` against `basis` (orthonormal) and among
/// themselves; near-dependent columns are dropped.
inline Eigen::MatrixXd orthonormal_complement(const Eigen::MatrixXd& basis, Eigen::MatrixXd v) {
  for (int c = 0; c < v.cols(); ++c) {
    const double nrm = v.col(c).norm();
    if (nrm > 0.0) v.col(c) /= nrm;
  }
  for (int pass = 0; pass < 2; ++pass)
    if (basis.cols() > 0) v -= basis * (basis.transpose() * v);
  Eigen::MatrixXd out(v.rows(), 0);
  for (int c = 0; c < v.cols(); ++c) {
    Eigen::VectorXd col = v.col(c);
    for (int pass = 0; pass < 2; ++pass) {
      if (basis.cols() > 0) col -= basis * (basis.transpose() * col);
      if (out.cols() > 0) col -= out * (out.transpose() * col);
    }
    const double nrm = col.norm();
    if (nrm < 1e-8) continue;
    out.conservativeResize(Eigen::NoChange, out.cols() + 1);
    out.col(out.cols() - 1) = col / nrm;
  }
  return out;
}

}  // namespace detail

struct EigenPairs {
  double E0 = 0.0, E1 = 0.0;
  Eigen::VectorXd psi0, psi1;
  double residual0 = 0.0, residual1 = 0.0;
  int iterations = 0;
  Eigen::MatrixXd block;  // converged block, reusable as a warm start
};

struct EigenSolverOptions {
  double tol = 1e-10;  // eV
  int max_iter = 500;
  int block = 4;
  double shift = 0.005;  // eV below the separable operator's minimum
};

/// Two algebraically smallest eigenpairs by block LOBPCG with the separable
/// preconditioner. `guess` (n x k) seeds the block when given.
inline EigenPairs lowest_pair(const SparseHamiltonian& h, const EigenSolverOptions& opt = {},
                              const Eigen::MatrixXd* guess = nullptr) {
  const int n = h.dimension();
  if (n < 2) throw ConfigError("Hamiltonian needs at least 2 sites");
  const int m = std::min(opt.block, n);
  detail::SeparablePreconditioner prec(h, opt.shift);

  Eigen::MatrixXd x = prec.lowest_modes(m);
  if (guess && guess->rows() == n && guess->cols() > 0) {
    // guess columns first; the separable modes fill in whatever the guess lacks
    // (a block shifted past the old box is partly or wholly zero)
    const int k = std::min<int>(static_cast<int>(guess->cols()), m);
    Eigen::MatrixXd cand(n, k + m);
    cand << guess->leftCols(k), x;
    x = detail::orthonormal_complement(Eigen::MatrixXd(n, 0), cand);
    if (x.cols() > m) x = x.leftCols(m).eval();
  } else {
    x = detail::orthonormal_complement(Eigen::MatrixXd(n, 0), x);
  }
  if (x.cols() < std::min(m, 2)) throw NumericalError("eigensolver: degenerate starting block");

  auto rayleigh_ritz = [&](const Eigen::MatrixXd& q, Eigen::MatrixXd& coeffs, Eigen::VectorXd& vals) {
    Eigen::MatrixXd hq;
    h.apply(q, hq);
    Eigen::MatrixXd a = q.transpose() * hq;
    a = 0.5 * (a + a.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    coeffs = es.eigenvectors();
    vals = es.eigenvalues();
  };

  Eigen::MatrixXd coeffs, hx, r, w, p(n, 0);
  Eigen::VectorXd vals;
  rayleigh_ritz(x, coeffs, vals);
  x = (x * coeffs).eval();
  const int mm = static_cast<int>(x.cols());
  Eigen::VectorXd lam = vals;
  EigenPairs out;
  int it = 0;
  for (;; ++it) {
    h.apply(x, hx);
    r = hx - x * lam.head(mm).asDiagonal();
    const double r0 = r.col(0).norm(), r1 = r.col(1).norm();
    out.residual0 = r0;
    out.residual1 = r1;
    if (r0 <= opt.tol && r1 <= opt.tol) break;
    if (it >= opt.max_iter)
      throw NumericalError("eigensolver did not converge after " + std::to_string(it) + " iterations (residuals " +
                           fmt17(r0) + ", " + fmt17(r1) + " eV)");
    // precondition only the columns that still matter; converged guard columns add nothing
    prec.apply(r, w);
    Eigen::MatrixXd extra(n, w.cols() + p.cols());
    extra << w, p;
    Eigen::MatrixXd comp = detail::orthonormal_complement(x, extra);
    Eigen::MatrixXd q(n, mm + comp.cols());
    q << x, comp;
    rayleigh_ritz(q, coeffs, vals);
    Eigen::MatrixXd c = coeffs.leftCols(mm);
    Eigen::MatrixXd x_new = q * c;
    p = comp * c.bottomRows(comp.cols());
    x = x_new;
    lam = vals.head(mm);
  }
  out.iterations = it;
  out.E0 = lam(0);
  out.E1 = lam(1);
  out.psi0 = x.col(0);
  out.psi1 = x.col(1);
  out.block = x;
  return out;
}

/// Dense reference solve (test oracle and small systems).
inline EigenPairs lowest_pair_dense(const SparseHamiltonian& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.to_dense());
  EigenPairs out;
  out.E0 = es.eigenvalues()(0);
  out.E1 = es.eigenvalues()(1);
  out.psi0 = es.eigenvectors().col(0);
  out.psi1 = es.eigenvectors().col(1);
  return out;
}

// ---- valley phase ----------------------------------------------------------

/// Layer-averaged density difference of the pair, Fourier component at 2 k0:
/// F = sum_l D(l) exp(+i 2 k0 z_l), z_l = l a0 / 4. Returns arg F in (-pi, pi].
inline double extract_valley_phase(const Eigen::VectorXd& psi0, const Eigen::VectorXd& psi1,
                                   const std::vector<int>& layer_of_site, double k0, double a0,
                                   double floor = 1e-12) {
  if (psi0.size() != psi1.size() || static_cast<std::size_t>(psi0.size()) != layer_of_site.size())
    throw ConfigError("valley phase: vector sizes differ");
  const int lmin = *std::min_element(layer_of_site.begin(), layer_of_site.end());
  const int lmax = *std::max_element(layer_of_site.begin(), layer_of_site.end());
  std::vector<double> d(lmax - lmin + 1, 0.0);
  std::vector<int> count(d.size(), 0);
  for (std::size_t q = 0; q < layer_of_site.size(); ++q) {
    const int l = layer_of_site[q] - lmin;
    d[l] += psi0(q) * psi0(q) - psi1(q) * psi1(q);
    ++count[l];
  }
  std::complex<double> f(0.0, 0.0);
  for (std::size_t l = 0; l < d.size(); ++l) {
    if (count[l] == 0) continue;
    const double z = (static_cast<double>(l) + lmin) * a0 / 4.0;
    f += d[l] / count[l] * std::polar(1.0, 2.0 * k0 * z);
  }
  if (std::abs(f) < floor) throw NumericalError("valley character unresolved: |F| = " + fmt17(std::abs(f)));
  double phi = std::arg(f);
  if (phi <= -constants::pi) phi += 2.0 * constants::pi;
  return phi;
}

// ---- shuttle trace ---------------------------------------------------------

struct ValleySample {
  int p = 0;
  double t_over_T = 0.0;
  double x_dot = 0.0;  // nm
  double E0 = 0.0, E1 = 0.0;  // eV
  double Ev = 0.0;            // micro-eV
  double phiv = 0.0;          // rad
  double residual0 = 0.0, residual1 = 0.0;
  bool dot_warning = false;
};

struct ValleyTrace {
  std::vector<ValleySample> samples;
  double L = 0.0;  // nm
};

struct TraceOptions {
  int num_steps = 60;
  double box_x = 9.4, box_z = 10.0;  // nm
  EigenSolverOptions eig;
};

/// Shifts the columns of a block solved on box `from` onto box `to` (same
/// ncy, nbz); sites that enter the window start at zero.
inline Eigen::MatrixXd shift_block(const Eigen::MatrixXd& blk, const SolveBox& from, const SolveBox& to, int ncx) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(to.size(), blk.cols());
  int delta = to.i0 - from.i0;
  delta = ((delta % ncx) + ncx) % ncx;
  if (delta > ncx / 2) delta -= ncx;
  for (int lz = 0; lz < to.nbz; ++lz)
    for (int j = 0; j < to.ncy; ++j)
      for (int ib = 0; ib < to.nbx; ++ib) {
        const int src = ib + delta;
        if (src < 0 || src >= from.nbx) continue;
        out.row(to.local(ib, j, lz)) = blk.row(from.local(src, j, lz));
      }
  return out;
}

/// Solves the pair at p = 1..num_steps, t_p = (p-1) T / num_steps, with the
/// box centred on the dot. Each step starts from the previous step's block.
inline ValleyTrace trace_shuttle(const AtomicStructure& s, const UnitPotentialSet& units, const DriveWaveform& drive,
                                 const ValleyModelParams& params, const TraceOptions& opt,
                                 const std::vector<double>& strain = {}) {
  if (opt.num_steps < 2) throw ConfigError("num_steps must be >= 2");
  ValleyTrace tr;
  tr.L = units.grid.length_x();
  Eigen::MatrixXd prev_block;
  SolveBox prev_box;
  for (int p = 1; p <= opt.num_steps; ++p) {
    ValleySample smp;
    smp.p = p;
    smp.t_over_T = static_cast<double>(p - 1) / opt.num_steps;
    const double t = smp.t_over_T * drive.T;
    const auto field = assemble_potential(units, voltage_vector(t, drive), t);
    const auto dot = locate_dot(units.grid, field.phi);
    smp.x_dot = dot.x;
    smp.dot_warning = dot.warning;
    const SolveBox box = make_box(s, dot.x, opt.box_x, opt.box_z);
    const auto h = build_hamiltonian(s, &units.grid, &field.phi, params, box, strain);
    EigenPairs ep;
    try {
      if (prev_block.size() > 0) {
        const Eigen::MatrixXd g = shift_block(prev_block, prev_box, box, s.ncx);
        ep = lowest_pair(h, opt.eig, &g);
      } else {
        ep = lowest_pair(h, opt.eig);
      }
      smp.phiv = extract_valley_phase(ep.psi0, ep.psi1, h.layer, params.k0(), params.a0, params.phase_floor);
    } catch (const NumericalError& e) {
      throw NumericalError("trace step " + std::to_string(p) + ": " + e.what());
    }
    smp.E0 = ep.E0;
    smp.E1 = ep.E1;
    smp.Ev = (ep.E1 - ep.E0) * 1e6;
    smp.residual0 = ep.residual0;
    smp.residual1 = ep.residual1;
    prev_block = ep.block;
    prev_box = box;
    tr.samples.push_back(smp);
  }
  return tr;
}

// ---- VTRACE v1 -------------------------------------------------------------

inline std::string format_trace(const ValleyTrace& tr, const std::vector<std::string>& provenance = {}) {
  std::string out = "VTRACE v1\n";
  for (const auto& p : provenance) out += "# " + p + "\n";
  double rmax = 0.0;
  for (const auto& s : tr.samples) rmax = std::max({rmax, s.residual0, s.residual1});
  out += "# L_nm=" + fmt17(tr.L) + " steps=" + std::to_string(tr.samples.size()) + " max_residual_eV=" + fmt17(rmax) +
         "\n";
  out += "# p t_over_T x_dot_nm E0_eV E1_eV Ev_ueV phiv_rad\n";
  for (const auto& s : tr.samples)
    out += std::to_string(s.p) + " " + fmt17(s.t_over_T) + " " + fmt17(s.x_dot) + " " + fmt17(s.E0) + " " +
           fmt17(s.E1) + " " + fmt17(s.Ev) + " " + fmt17(s.phiv) + "\n";
  return out;
}

inline ValleyTrace parse_trace(const std::string& text, std::vector<std::string>* comments = nullptr) {
  require_complete(text, "VTRACE");
  LineReader r(text);
  if (r.require("header") != "VTRACE v1") throw IoError("not a VTRACE v1 file");
  ValleyTrace tr;
  std::string_view line;
  while (r.next(line)) {
    auto t = split_ws(line);
    if (t.size() != 7) throw IoError("VTRACE: malformed row '" + std::string(line) + "'");
    ValleySample s;
    try {
      s.p = static_cast<int>(parse_int(t[0]));
      s.t_over_T = parse_double(t[1]);
      s.x_dot = parse_double(t[2]);
      s.E0 = parse_double(t[3]);
      s.E1 = parse_double(t[4]);
      s.Ev = parse_double(t[5]);
      s.phiv = parse_double(t[6]);
    } catch (const ConfigError& e) {
      throw IoError(std::string("VTRACE row: ") + e.what());
    }
    tr.samples.push_back(s);
  }
  const auto Ls = comment_value(r.comments(), "L_nm");
  if (Ls.empty()) throw IoError("VTRACE: missing L_nm");
  try {
    tr.L = parse_double(Ls);
  } catch (const ConfigError& e) {
    throw IoError(std::string("VTRACE L_nm: ") + e.what());
  }
  if (tr.samples.empty()) throw IoError("VTRACE: no samples");
  const auto steps = comment_value(r.comments(), "steps");
  if (!steps.empty() && steps != std::to_string(tr.samples.size()))
    throw IoError("VTRACE: truncated, " + std::to_string(tr.samples.size()) + " of " + steps + " samples");
  // only the maximum residual is stored; every sample gets it
  const auto res = comment_value(r.comments(), "max_residual_eV");
  if (!res.empty()) {
    try {
      const double rmax = parse_double(res);
      for (auto& smp : tr.samples) smp.residual0 = smp.residual1 = rmax;
    } catch (const ConfigError& e) {
      throw IoError(std::string("VTRACE max_residual_eV: ") + e.what());
    }
  }
  if (comments) *comments = r.comments();
  return tr;
}

}  // namespace shuttle
