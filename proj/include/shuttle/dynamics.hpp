#pragma once

// Two-level leakage dynamics along an interpolated valley trace. With s = t/T
// and T = L/v the Hamiltonian in the instantaneous valley basis is
//   H(t) = 1/2 [[-Ev, hbar dphi/dt], [hbar dphi/dt, Ev]],  dphi/dt = (1/T) dphi/ds,
// propagated with the exact 2x2 exponential of H frozen at each step midpoint.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "shuttle/common.hpp"
#include "shuttle/valley.hpp"

namespace shuttle {

/// Monotone piecewise cubic Hermite interpolant (Fritsch-Carlson slopes,
/// three-point shape-preserving end slopes).
class Pchip {
 public:
  Pchip() = default;
  Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw ConfigError("pchip needs at least 2 matching samples");
    for (std::size_t k = 1; k < n; ++k)
      if (!(x_[k] > x_[k - 1])) throw ConfigError("pchip abscissae must be strictly increasing");
    std::vector<double> h(n - 1), del(n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      h[k] = x_[k + 1] - x_[k];
      del[k] = (y_[k + 1] - y_[k]) / h[k];
    }
    d_.assign(n, 0.0);
    if (n == 2) {
      d_[0] = d_[1] = del[0];
      return;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (del[k - 1] * del[k] <= 0.0) continue;
      const double w1 = 2.0 * h[k] + h[k - 1], w2 = h[k] + 2.0 * h[k - 1];
      d_[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
    }
    d_[0] = end_slope(h[0], h[1], del[0], del[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
  }

  double operator()(double x) const { return eval(x, false); }
  double derivative(double x) const { return eval(x, true); }
  const std::vector<double>& knots() const { return x_; }
  const std::vector<double>& values() const { return y_; }

 private:
  static double end_slope(double h0, double h1, double m0, double m1) {
    double d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if (d * m0 <= 0.0) return 0.0;
    if (m0 * m1 <= 0.0 && std::abs(d) > std::abs(3.0 * m0)) return 3.0 * m0;
    return d;
  }

  double eval(double x, bool deriv) const {
    std::size_t k = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin());
    k = std::clamp<std::size_t>(k, 1, x_.size() - 1) - 1;
    const double h = x_[k + 1] - x_[k];
    const double t = (x - x_[k]) / h;
    const double y0 = y_[k], y1 = y_[k + 1], m0 = d_[k] * h, m1 = d_[k + 1] * h;
    if (!deriv) {
      const double t2 = t * t, t3 = t2 * t;
      return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * m1;
    }
    const double t2 = t * t;
    return ((6 * t2 - 6 * t) * y0 + (3 * t2 - 4 * t + 1) * m0 + (-6 * t2 + 6 * t) * y1 + (3 * t2 - 2 * t) * m1) / h;
  }

  std::vector<double> x_, y_, d_;
};

/// Adds 2 pi multiples so adjacent samples differ by less than pi. A raw jump
/// of exactly pi cannot be resolved.
inline std::vector<double> unwrap_phase(const std::vector<double>& raw) {
  std::vector<double> out(raw.size());
  if (raw.empty()) return out;
  out[0] = raw[0];
  const double two_pi = 2.0 * constants::pi;
  for (std::size_t k = 1; k < raw.size(); ++k) {
    double d = std::remainder(raw[k] - out[k - 1], two_pi);  // in [-pi, pi]
    if (std::abs(std::abs(d) - constants::pi) < 1e-12)
      throw NumericalError("phase unwrap ambiguous: jump of pi between samples " + std::to_string(k - 1) + " and " +
                           std::to_string(k));
    out[k] = out[k - 1] + d;
  }
  return out;
}

struct InterpolatedTrace {
  Pchip Ev;    // micro-eV vs s
  Pchip phiv;  // rad (unwrapped) vs s
  double L = 0.0;  // nm
};

/// PCHIP of Ev and unwrapped phiv versus s = t/T. The trace covers
/// s in [0, 1); a closure knot at s = 1 repeats the first sample (the
/// structure is periodic in x), its phase unwrapped like any other sample.
inline InterpolatedTrace interpolate_trace(const ValleyTrace& tr, bool periodic_closure = true) {
  if (tr.samples.size() < 4) throw ConfigError("interpolate_trace needs at least 4 samples");
  std::vector<double> s, ev, ph;
  for (const auto& smp : tr.samples) {
    s.push_back(smp.t_over_T);
    ev.push_back(smp.Ev);
    ph.push_back(smp.phiv);
  }
  if (periodic_closure && s.back() < 1.0) {
    s.push_back(1.0);
    ev.push_back(tr.samples.front().Ev);
    ph.push_back(tr.samples.front().phiv);
  }
  InterpolatedTrace it;
  it.Ev = Pchip(s, ev);
  it.phiv = Pchip(s, unwrap_phase(ph));
  it.L = tr.L;
  return it;
}

struct TwoLevelState {
  std::complex<double> alpha0{1.0, 0.0}, alpha1{0.0, 0.0};
  double norm2() const { return std::norm(alpha0) + std::norm(alpha1); }
};

struct Evolution {
  double T = 0.0;   // s
  double dt = 0.0;  // s
  long long steps = 0;
  double min_p0 = 1.0;  // min over the time grid of |alpha0|^2
  double t_min = 0.0;   // s
  double max_norm_error = 0.0;
  TwoLevelState final_state;
  std::vector<double> times;          // filled when requested
  std::vector<TwoLevelState> states;  // idem
};

struct EvolveOptions {
  double dt_max = 1e-14;  // s
  bool store = false;
  long long max_steps = 400000000;
};

/// Largest |H| (eV) along the trace at speed v, from a dense scan of the interpolants.
inline double max_hamiltonian_norm(const InterpolatedTrace& it, double T) {
  const auto& k = it.Ev.knots();
  double m = 0.0;
  for (std::size_t i = 0; i + 1 < k.size(); ++i)
    for (int q = 0; q <= 16; ++q) {
      const double s = k[i] + (k[i + 1] - k[i]) * q / 16.0;
      const double ev = it.Ev(s) * 1e-6;
      const double hq = constants::hbar_eVs * it.phiv.derivative(s) / T;
      m = std::max(m, 0.5 * std::hypot(ev, hq));
    }
  return m;
}

inline void step_2x2(TwoLevelState& st, double ev, double q, double dt) {
  // H = (hx sigma_x + hz sigma_z) with hx = q/2, hz = -ev/2
  const double hx = 0.5 * q, hz = -0.5 * ev;
  const double w = std::hypot(hx, hz);
  if (w == 0.0) return;
  const double th = w * dt / constants::hbar_eVs;
  // cos(th) - 1 formed directly: cos(th) itself rounds the same way every step
  // when H is constant, which would drift the norm linearly in the step count
  const double sh = std::sin(0.5 * th);
  const double cm1 = -2.0 * sh * sh, sn = std::sin(th) / w;
  const std::complex<double> I(0.0, 1.0);
  const auto a0 = st.alpha0, a1 = st.alpha1;
  st.alpha0 = a0 + (cm1 * a0 - I * sn * (hz * a0 + hx * a1));
  st.alpha1 = a1 + (cm1 * a1 - I * sn * (hx * a0 - hz * a1));
}

/// Integrates from `initial` over one period T = L / v (v in m/s, L in nm).
inline Evolution evolve(const InterpolatedTrace& it, double v, const EvolveOptions& opt = {},
                        TwoLevelState initial = {}) {
  if (!(v > 0.0)) throw ConfigError("speed must be > 0");
  if (!(opt.dt_max > 0.0)) throw ConfigError("dt_max must be > 0");
  Evolution ev;
  ev.T = it.L * 1e-9 / v;
  const double hmax = max_hamiltonian_norm(it, ev.T);
  double dt = std::min(opt.dt_max, ev.T / 1000.0);
  if (hmax > 0.0) dt = std::min(dt, constants::hbar_eVs / (10.0 * hmax));
  const double nsteps = std::ceil(ev.T / dt);
  if (nsteps > static_cast<double>(opt.max_steps))
    throw NumericalError("evolve: " + fmt17(nsteps) + " steps exceeds the step budget");
  ev.steps = static_cast<long long>(nsteps);
  ev.dt = ev.T / static_cast<double>(ev.steps);
  TwoLevelState st = initial;
  ev.min_p0 = std::norm(st.alpha0);
  ev.t_min = 0.0;
  if (opt.store) {
    ev.times.reserve(ev.steps + 1);
    ev.states.reserve(ev.steps + 1);
    ev.times.push_back(0.0);
    ev.states.push_back(st);
  }
  const double inv_T = 1.0 / ev.T;
  for (long long k = 0; k < ev.steps; ++k) {
    const double s_mid = (static_cast<double>(k) + 0.5) * ev.dt * inv_T;
    const double e = it.Ev(s_mid) * 1e-6;
    const double q = constants::hbar_eVs * it.phiv.derivative(s_mid) * inv_T;
    step_2x2(st, e, q, ev.dt);
    const double t = static_cast<double>(k + 1) * ev.dt;
    const double p0 = std::norm(st.alpha0);
    if (p0 < ev.min_p0) {
      ev.min_p0 = p0;
      ev.t_min = t;
    }
    ev.max_norm_error = std::max(ev.max_norm_error, std::abs(st.norm2() - 1.0));
    if (opt.store) {
      ev.times.push_back(t);
      ev.states.push_back(st);
    }
  }
  ev.final_state = st;
  return ev;
}

struct FidelityResult {
  double F = 1.0;
  double t_min = 0.0;  // s
};

inline FidelityResult fidelity(const Evolution& ev) {
  if (!ev.states.empty()) {
    FidelityResult r{std::norm(ev.states[0].alpha0), ev.times[0]};
    for (std::size_t k = 1; k < ev.states.size(); ++k) {
      const double p = std::norm(ev.states[k].alpha0);
      if (p < r.F) r = {p, ev.times[k]};
    }
    return r;
  }
  return {ev.min_p0, ev.t_min};
}

struct SpeedPoint {
  double v = 0.0;         // m/s
  double F = 1.0;
  double infidelity = 0.0;
  double t_min_over_T = 0.0;
};

using SpeedSweepResult = std::vector<SpeedPoint>;

inline void validate_speed_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("run.speeds must not be empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0)) throw ConfigError("run.speeds must be > 0");
    if (k > 0 && !(grid[k] > grid[k - 1])) throw ConfigError("run.speeds must be strictly increasing");
  }
}

inline SpeedSweepResult speed_sweep(const InterpolatedTrace& it, const std::vector<double>& speeds,
                                    const EvolveOptions& opt = {}) {
  validate_speed_grid(speeds);
  SpeedSweepResult out;
  for (double v : speeds) {
    EvolveOptions o = opt;
    o.store = false;
    const auto ev = evolve(it, v, o);
    const double F = std::clamp(ev.min_p0, 0.0, 1.0);
    out.push_back({v, F, 1.0 - F, ev.t_min / ev.T});
  }
  return out;
}

// ---- ensembles -------------------------------------------------------------

struct EnsembleCell {
  double rms = 0.0, v = 0.0;
  double mean = 0.0, std = std::numeric_limits<double>::quiet_NaN();
  int n = 0;
  int expected = 0;
};

using EnsembleResult = std::vector<EnsembleCell>;

struct MemberResult {
  double rms = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  SpeedSweepResult sweep;
  double mean_Ev = 0.0;  // micro-eV over the trace
};

/// Mean and sample standard deviation per (rms, v); members are grouped by
/// rms in the order given, failed members are skipped and counted as missing.
inline EnsembleResult aggregate(const std::vector<MemberResult>& members, const std::vector<double>& rms_list,
                                const std::vector<double>& speeds) {
  EnsembleResult out;
  for (double rms : rms_list)
    for (std::size_t iv = 0; iv < speeds.size(); ++iv) {
      EnsembleCell c;
      c.rms = rms;
      c.v = speeds[iv];
      std::vector<double> vals;
      for (const auto& m : members) {
        if (m.rms != rms) continue;
        ++c.expected;
        if (m.ok && iv < m.sweep.size()) vals.push_back(m.sweep[iv].infidelity);
      }
      c.n = static_cast<int>(vals.size());
      if (c.n > 0) {
        double acc = 0.0;
        for (double x : vals) acc += x;
        c.mean = acc / c.n;
      }
      if (c.n >= 2) {
        double acc = 0.0;
        for (double x : vals) acc += (x - c.mean) * (x - c.mean);
        c.std = std::sqrt(acc / (c.n - 1));
      }
      out.push_back(c);
    }
  return out;
}

// ---- SWEEP v1 --------------------------------------------------------------

inline std::string format_sweep(const EnsembleResult& r, const std::vector<std::string>& provenance = {}) {
  std::string out = "SWEEP v1\n";
  for (const auto& p : provenance) out += "# " + p + "\n";
  for (const auto& c : r)
    if (c.n < c.expected)
      out += "# incomplete rms_A=" + fmt17(c.rms) + " speed_mps=" + fmt17(c.v) + " n=" + std::to_string(c.n) +
             " expected=" + std::to_string(c.expected) + "\n";
  out += "# rms_A speed_mps infidelity_mean infidelity_std n\n";
  for (const auto& c : r)
    out += fmt17(c.rms) + " " + fmt17(c.v) + " " + fmt17(c.mean) + " " + (std::isnan(c.std) ? "nan" : fmt17(c.std)) +
           " " + std::to_string(c.n) + "\n";
  return out;
}

inline EnsembleResult parse_sweep(const std::string& text, std::vector<std::string>* comments = nullptr) {
  require_complete(text, "SWEEP");
  LineReader r(text);
  if (r.require("header") != "SWEEP v1") throw IoError("not a SWEEP v1 file");
  EnsembleResult out;
  std::string_view line;
  while (r.next(line)) {
    auto t = split_ws(line);
    if (t.size() != 5) throw IoError("SWEEP: malformed row '" + std::string(line) + "'");
    EnsembleCell c;
    try {
      c.rms = parse_double(t[0]);
      c.v = parse_double(t[1]);
      c.mean = parse_double(t[2]);
      c.std = t[3] == "nan" ? std::numeric_limits<double>::quiet_NaN() : parse_double(t[3]);
      c.n = static_cast<int>(parse_int(t[4]));
    } catch (const ConfigError& e) {
      throw IoError(std::string("SWEEP row: ") + e.what());
    }
    c.expected = c.n;
    out.push_back(c);
  }
  if (comments) *comments = r.comments();
  return out;
}

/// Single-trace sweep file: one row per speed (n = 1, std reported as nan).
inline std::string format_speed_sweep(const SpeedSweepResult& r, double rms, const std::vector<std::string>& prov) {
  EnsembleResult e;
  for (const auto& p : r) e.push_back({rms, p.v, p.infidelity, std::numeric_limits<double>::quiet_NaN(), 1, 1});
  return format_sweep(e, prov);
}

}  // namespace shuttle
