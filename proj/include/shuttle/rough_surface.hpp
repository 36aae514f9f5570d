#pragma once

// Self-affine random interfaces: a random superposition of cosine modes with
// power-law amplitudes |k|^-(1+H), wavevectors drawn on the annulus
// [2 pi / lambda_max, 2 pi / lambda_min], normalised to an exact sample RMS.

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "shuttle/common.hpp"

namespace shuttle {

struct RoughnessSpec {
  double H = 0.3;
  double lambda_min = 0.1;    // nm
  double lambda_max = 100.0;  // nm
  double rms_target = 0.0;    // Angstrom
  int N = 1000;
  double mean_height = 0.0;   // Angstrom
  std::uint64_t seed = 0;

  double k_min() const { return 2.0 * constants::pi / lambda_max; }
  double k_max() const { return 2.0 * constants::pi / lambda_min; }

  void validate() const {
    if (!(H > 0.0 && H < 1.0)) throw ConfigError("roughness.H must lie in (0, 1)");
    if (!(lambda_min > 0.0 && lambda_min < lambda_max))
      throw ConfigError("roughness.lambda_min/lambda_max must satisfy 0 < lambda_min < lambda_max");
    if (!(rms_target >= 0.0)) throw ConfigError("roughness.rms_target must be >= 0");
    if (N < 1) throw ConfigError("roughness.N must be >= 1");
  }
};

/// Sampled wavevectors (rad/nm), normal weights, phases in [0, pi], and the
/// normalisation constant C (Angstrom) fixed after evaluation on a grid.
struct ModeSet {
  std::vector<double> kx, ky, G, U;
  double C = 0.0;

  std::size_t size() const { return kx.size(); }
  double k_norm(std::size_t n) const { return std::hypot(kx[n], ky[n]); }
};

struct SurfaceField {
  int nx = 0, ny = 0;
  double dx = 0.0, dy = 0.0;  // nm
  std::vector<double> heights;  // Angstrom, index j*nx + i (x fastest)
  RoughnessSpec spec;

  double at(int i, int j) const { return heights[static_cast<std::size_t>(j) * nx + i]; }
  double& at(int i, int j) { return heights[static_cast<std::size_t>(j) * nx + i]; }
  double period_x() const { return nx * dx; }
};

/// Draws the mode set. k_x is snapped to a multiple of 2 pi / period_x so the
/// surface is exactly periodic in x; draws whose snapped |k| leaves the annulus
/// are rejected and redrawn.
inline ModeSet sample_modes(const RoughnessSpec& spec, double period_x) {
  spec.validate();
  if (!(period_x > 0.0)) throw ConfigError("surface period must be > 0");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double kmin = spec.k_min(), kmax = spec.k_max();
  const double dkx = 2.0 * constants::pi / period_x;
  ModeSet modes;
  modes.kx.reserve(spec.N);
  modes.ky.reserve(spec.N);
  modes.G.reserve(spec.N);
  modes.U.reserve(spec.N);
  for (int n = 0; n < spec.N; ++n) {
    double kx = 0.0, ky = 0.0;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw ConfigError("cannot place modes in the annulus for this surface period");
      // uniform by area on the annulus
      const double r = std::sqrt(kmin * kmin + unit(rng) * (kmax * kmax - kmin * kmin));
      const double theta = 2.0 * constants::pi * unit(rng);
      kx = std::round(r * std::cos(theta) / dkx) * dkx;
      ky = r * std::sin(theta);
      const double k = std::hypot(kx, ky);
      if (k >= kmin && k <= kmax) break;
    }
    modes.kx.push_back(kx);
    modes.ky.push_back(ky);
    modes.G.push_back(normal(rng));
    modes.U.push_back(constants::pi * unit(rng));
  }
  return modes;
}

namespace detail {

/// Un-normalised mode sum on the grid, x fastest. Uses the fact that every k_x is
/// an x-harmonic of the grid period: per row, the modes collapse onto harmonic
/// bins and one inverse DFT evaluates the row.
inline std::vector<double> mode_sum(const ModeSet& modes, double H, int nx, int ny, double dx, double dy) {
  const double period_x = nx * dx;
  const double dkx = 2.0 * constants::pi / period_x;
  std::vector<long long> harmonic(modes.size());
  std::vector<double> amp(modes.size());
  for (std::size_t n = 0; n < modes.size(); ++n) {
    const long long m = std::llround(modes.kx[n] / dkx);
    harmonic[n] = ((m % nx) + nx) % nx;
    const double k = modes.k_norm(n);
    amp[n] = k > 0.0 ? modes.G[n] * std::pow(k, -(1.0 + H)) : 0.0;
  }

  std::vector<double> out(static_cast<std::size_t>(nx) * ny);
  fftw_complex* buf = fftw_alloc_complex(nx);
  fftw_plan plan = fftw_plan_dft_1d(nx, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  for (int j = 0; j < ny; ++j) {
    std::fill(reinterpret_cast<double*>(buf), reinterpret_cast<double*>(buf) + 2 * nx, 0.0);
    const double y = j * dy;
    for (std::size_t n = 0; n < modes.size(); ++n) {
      const double ph = modes.ky[n] * y + modes.U[n];
      buf[harmonic[n]][0] += amp[n] * std::cos(ph);
      buf[harmonic[n]][1] += amp[n] * std::sin(ph);
    }
    fftw_execute(plan);
    for (int i = 0; i < nx; ++i) out[static_cast<std::size_t>(j) * nx + i] = buf[i][0];
  }
  fftw_destroy_plan(plan);
  fftw_free(buf);
  return out;
}

inline double rms_about_mean(const std::vector<double>& h) {
  if (h.empty()) return 0.0;
  const double mean = std::accumulate(h.begin(), h.end(), 0.0) / static_cast<double>(h.size());
  double acc = 0.0;
  for (double v : h) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(h.size()));
}

}  // namespace detail

/// Evaluates a given mode set on the grid and fixes C so the sample RMS about
/// the sample mean equals spec.rms_target.
inline SurfaceField synthesize_from_modes(ModeSet& modes, const RoughnessSpec& spec, int nx, int ny, double dx,
                                          double dy) {
  SurfaceField f;
  f.nx = nx;
  f.ny = ny;
  f.dx = dx;
  f.dy = dy;
  f.spec = spec;
  f.heights.assign(static_cast<std::size_t>(nx) * ny, spec.mean_height);
  if (spec.rms_target == 0.0 || modes.size() == 0) {
    modes.C = 0.0;
    return f;
  }
  const auto raw = detail::mode_sum(modes, spec.H, nx, ny, dx, dy);
  const double raw_rms = detail::rms_about_mean(raw);
  if (!(raw_rms > 0.0)) throw NumericalError("mode sum has zero variance on this grid; cannot normalise");
  modes.C = spec.rms_target / raw_rms;
  for (std::size_t n = 0; n < raw.size(); ++n) f.heights[n] = spec.mean_height + modes.C * raw[n];
  return f;
}

inline SurfaceField synthesize_surface(const RoughnessSpec& spec, int nx, int ny, double dx, double dy) {
  if (nx < 16 || ny < 16) throw ConfigError("surface grid must be at least 16x16");
  if (!(dx > 0.0 && dy > 0.0)) throw ConfigError("surface spacings must be > 0");
  auto modes = sample_modes(spec, nx * dx);
  return synthesize_from_modes(modes, spec, nx, ny, dx, dy);
}

/// Bottom interface for a given top interface: independent when correlation is
/// 0, identical shape when 1, mixed before normalisation otherwise.
inline SurfaceField synthesize_partner_surface(const RoughnessSpec& top_spec, const RoughnessSpec& bottom_spec,
                                               double correlation, int nx, int ny, double dx, double dy) {
  if (correlation < 0.0 || correlation > 1.0) throw ConfigError("roughness.correlation must lie in [0, 1]");
  if (correlation == 0.0) return synthesize_surface(bottom_spec, nx, ny, dx, dy);
  SurfaceField f;
  f.nx = nx;
  f.ny = ny;
  f.dx = dx;
  f.dy = dy;
  f.spec = bottom_spec;
  f.heights.assign(static_cast<std::size_t>(nx) * ny, bottom_spec.mean_height);
  if (bottom_spec.rms_target == 0.0) return f;
  auto mt = sample_modes(top_spec, nx * dx);
  auto mb = sample_modes(bottom_spec, nx * dx);
  auto a = detail::mode_sum(mt, top_spec.H, nx, ny, dx, dy);
  auto b = detail::mode_sum(mb, bottom_spec.H, nx, ny, dx, dy);
  const double sa = detail::rms_about_mean(a), sb = detail::rms_about_mean(b);
  const double w = std::sqrt(1.0 - correlation * correlation);
  std::vector<double> mix(a.size());
  for (std::size_t n = 0; n < a.size(); ++n) mix[n] = correlation * a[n] / sa + w * b[n] / sb;
  const double c = bottom_spec.rms_target / detail::rms_about_mean(mix);
  for (std::size_t n = 0; n < mix.size(); ++n) f.heights[n] = bottom_spec.mean_height + c * mix[n];
  return f;
}

inline double sample_rms(const SurfaceField& field) { return detail::rms_about_mean(field.heights); }

struct PsdBin {
  double k = 0.0;      // rad/nm, geometric centre of the member pixels
  double power = 0.0;  // mean periodogram value, Angstrom^2 nm^2
  int count = 0;
};

/// Radially binned 2D periodogram of the mean-removed field. The field is taken
/// as periodic in x; a Hann taper is applied along y to suppress leakage from
/// off-grid k_y components. Bins are log-spaced and merged until each holds at
/// least 8 pixels.
inline std::vector<PsdBin> radial_psd(const SurfaceField& field) {
  const int nx = field.nx, ny = field.ny;
  if (nx < 64 || ny < 64) throw ConfigError("radial_psd needs at least a 64x64 field");
  const double mean = std::accumulate(field.heights.begin(), field.heights.end(), 0.0) /
                      static_cast<double>(field.heights.size());
  fftw_complex* buf = fftw_alloc_complex(static_cast<std::size_t>(nx) * ny);
  double wsum = 0.0;
  for (int j = 0; j < ny; ++j) {
    const double s = std::sin(constants::pi * (j + 0.5) / ny);
    const double w = s * s;
    wsum += w * w;
    for (int i = 0; i < nx; ++i) {
      auto& c = buf[static_cast<std::size_t>(j) * nx + i];
      c[0] = w * (field.at(i, j) - mean);
      c[1] = 0.0;
    }
  }
  const double wnorm = wsum / ny;
  fftw_plan plan = fftw_plan_dft_2d(ny, nx, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  const double dkx = 2.0 * constants::pi / (nx * field.dx);
  const double dky = 2.0 * constants::pi / (ny * field.dy);
  const double scale = field.dx * field.dy / (4.0 * constants::pi * constants::pi * nx * ny * wnorm);
  struct Pixel {
    double k, p;
  };
  std::vector<Pixel> pix;
  pix.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    const int qj = j <= ny / 2 ? j : j - ny;
    for (int i = 0; i < nx; ++i) {
      if (i == 0 && j == 0) continue;
      const int qi = i <= nx / 2 ? i : i - nx;
      const auto& c = buf[static_cast<std::size_t>(j) * nx + i];
      pix.push_back({std::hypot(qi * dkx, qj * dky), (c[0] * c[0] + c[1] * c[1]) * scale});
    }
  }
  fftw_free(buf);
  std::sort(pix.begin(), pix.end(), [](const Pixel& a, const Pixel& b) { return a.k < b.k; });

  // quarter-octave bins, merged forward until each holds >= 8 pixels
  const double log_ratio = 0.25 * std::log(2.0);
  const double log_k0 = std::log(pix.front().k);
  std::vector<PsdBin> bins;
  double logk = 0.0, pw = 0.0;
  int count = 0;
  for (std::size_t p = 0; p < pix.size(); ++p) {
    logk += std::log(pix[p].k);
    pw += pix[p].p;
    ++count;
    const bool last = p + 1 == pix.size();
    const bool edge = last || std::floor((std::log(pix[p + 1].k) - log_k0) / log_ratio) !=
                                  std::floor((std::log(pix[p].k) - log_k0) / log_ratio);
    if (edge && count >= 8) {
      bins.push_back({std::exp(logk / count), pw / count, count});
      logk = pw = 0.0;
      count = 0;
    }
  }
  if (count > 0) {
    if (bins.empty()) {
      bins.push_back({std::exp(logk / count), pw / count, count});
    } else {
      auto& b = bins.back();
      const double total = b.count + count;
      b.k = std::exp((std::log(b.k) * b.count + logk) / total);
      b.power = (b.power * b.count + pw) / total;
      b.count += count;
    }
  }
  return bins;
}

struct HurstFit {
  double H = 0.0;
  double slope = 0.0;
  int bins_used = 0;
};

/// Slope of log power vs log k over bins inside [k_lo, k_hi]; H = -slope/2 - 1.
/// Bins are weighted by their pixel count (the variance of a bin mean falls as
/// 1/count), which keeps sparsely populated low-k bins from dominating.
inline HurstFit fit_hurst(const std::vector<PsdBin>& psd, double k_lo, double k_hi) {
  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (const auto& b : psd) {
    if (b.k < k_lo || b.k > k_hi || !(b.power > 0.0)) continue;
    const double w = b.count, x = std::log(b.k), y = std::log(b.power);
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
    ++n;
  }
  if (n < 5) throw NumericalError("fit_hurst: fewer than 5 usable PSD bins in band");
  const double slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
  return {-0.5 * slope - 1.0, slope, n};
}

/// Average of several PSD tables computed on identical grids.
inline std::vector<PsdBin> average_psd(const std::vector<std::vector<PsdBin>>& tables) {
  if (tables.empty()) return {};
  std::vector<PsdBin> out = tables.front();
  for (std::size_t t = 1; t < tables.size(); ++t) {
    if (tables[t].size() != out.size()) throw NumericalError("average_psd: tables have different binning");
    for (std::size_t b = 0; b < out.size(); ++b) out[b].power += tables[t][b].power;
  }
  for (auto& b : out) b.power /= static_cast<double>(tables.size());
  return out;
}

// ---- ROUGHSURF v1 ----------------------------------------------------------

inline std::string format_surface(const SurfaceField& f, const std::string& provenance = {}) {
  std::string s = "ROUGHSURF v1\n";
  if (!provenance.empty()) s += "# " + provenance + "\n";
  s += "# nx ny dx_nm dy_nm mean_A rms_A H seed\n";
  s += std::to_string(f.nx) + " " + std::to_string(f.ny) + " " + fmt17(f.dx) + " " + fmt17(f.dy) + " " +
       fmt17(f.spec.mean_height) + " " + fmt17(f.spec.rms_target) + " " + fmt17(f.spec.H) + " " +
       std::to_string(f.spec.seed) + "\n";
  for (int j = 0; j < f.ny; ++j) {
    for (int i = 0; i < f.nx; ++i) {
      if (i) s += ' ';
      s += fmt17(f.at(i, j));
    }
    s += '\n';
  }
  return s;
}

inline SurfaceField parse_surface(const std::string& text, std::vector<std::string>* comments = nullptr) {
  require_complete(text, "ROUGHSURF");
  LineReader r(text);
  if (r.require("header") != "ROUGHSURF v1") throw IoError("not a ROUGHSURF v1 file");
  auto hdr = split_ws(r.require("dimensions"));
  if (hdr.size() != 8) throw IoError("ROUGHSURF: malformed dimension line");
  SurfaceField f;
  try {
    f.nx = static_cast<int>(parse_int(hdr[0]));
    f.ny = static_cast<int>(parse_int(hdr[1]));
    f.dx = parse_double(hdr[2]);
    f.dy = parse_double(hdr[3]);
    f.spec.mean_height = parse_double(hdr[4]);
    f.spec.rms_target = parse_double(hdr[5]);
    f.spec.H = parse_double(hdr[6]);
    f.spec.seed = parse_u64(hdr[7]);
  } catch (const ConfigError& e) {
    throw IoError(std::string("ROUGHSURF header: ") + e.what());
  }
  if (f.nx <= 0 || f.ny <= 0) throw IoError("ROUGHSURF: bad dimensions");
  f.heights.reserve(static_cast<std::size_t>(f.nx) * f.ny);
  for (int j = 0; j < f.ny; ++j) {
    auto row = split_ws(r.require("height rows"));
    if (static_cast<int>(row.size()) != f.nx) throw IoError("ROUGHSURF: row " + std::to_string(j) + " truncated");
    for (auto v : row) {
      try {
        f.heights.push_back(parse_double(v));
      } catch (const ConfigError& e) {
        throw IoError(std::string("ROUGHSURF data: ") + e.what());
      }
    }
  }
  if (comments) *comments = r.comments();
  return f;
}

}  // namespace shuttle
