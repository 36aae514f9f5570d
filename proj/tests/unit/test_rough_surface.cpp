#include <gtest/gtest.h>

#include <random>

#include "shuttle/rough_surface.hpp"

using namespace shuttle;

namespace {

RoughnessSpec spec(double rms, std::uint64_t seed) {
  RoughnessSpec s;
  s.rms_target = rms;
  s.seed = seed;
  return s;
}

// brute-force RMS about the mean, independent of the library helper
double brute_rms(const SurfaceField& f) {
  long double m = 0.0;
  for (double h : f.heights) m += h;
  m /= f.heights.size();
  long double v = 0.0;
  for (double h : f.heights) v += (h - m) * (h - m);
  return static_cast<double>(std::sqrt(v / f.heights.size()));
}

}  // namespace

TEST(Surface, ZeroRmsIsFlat) {
  auto s = spec(0.0, 3);
  s.mean_height = 1.5;
  const auto f = synthesize_surface(s, 32, 32, 0.2, 0.2);
  for (double h : f.heights) EXPECT_EQ(h, 1.5);
}

TEST(Surface, SampleRmsMatchesTarget) {
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const auto f = synthesize_surface(spec(2.5, seed), 128, 64, 0.3, 0.3);
    EXPECT_NEAR(brute_rms(f), 2.5, 2.5e-12);
    EXPECT_NEAR(sample_rms(f), 2.5, 2.5e-12);
  }
}

TEST(Surface, DeterministicPerSeed) {
  const auto a = synthesize_surface(spec(2.0, 7), 64, 32, 0.25, 0.25);
  const auto b = synthesize_surface(spec(2.0, 7), 64, 32, 0.25, 0.25);
  const auto c = synthesize_surface(spec(2.0, 8), 64, 32, 0.25, 0.25);
  EXPECT_EQ(a.heights, b.heights);
  EXPECT_NE(a.heights, c.heights);
}

TEST(Surface, PeriodicInX) {
  // a mode sum evaluated one period to the right must repeat the first column
  auto s = spec(2.0, 5);
  const auto modes = sample_modes(s, 12.8);
  const auto g = detail::mode_sum(modes, s.H, 128, 16, 0.2, 0.2);
  for (int j = 0; j < 16; ++j)
    for (int i = 0; i < 64; ++i) EXPECT_NEAR(g[j * 128 + i], g[j * 128 + i + 64], 1e-9);
}

TEST(Surface, SingleModeCosine) {
  // one mode along x with unit weight and zero phase: h = sqrt(2) rms cos(k x)
  RoughnessSpec s = spec(1.7, 0);
  ModeSet m;
  const double L = 12.8;
  m.kx = {2.0 * constants::pi / L * 3};
  m.ky = {0.0};
  m.G = {1.0};
  m.U = {0.0};
  const int nx = 64;
  const auto f = synthesize_from_modes(m, s, nx, 16, L / nx, 0.2);
  for (int j = 0; j < 16; ++j)
    for (int i = 0; i < nx; ++i)
      EXPECT_NEAR(f.at(i, j), std::sqrt(2.0) * 1.7 * std::cos(m.kx[0] * i * f.dx), 1e-12);
}

TEST(SampleRms, ConstantIsZero) {
  SurfaceField f;
  f.nx = f.ny = 8;
  f.dx = f.dy = 1.0;
  f.heights.assign(64, 4.2);
  EXPECT_LT(sample_rms(f), 1e-14);  // only the rounding of the mean remains
}

TEST(SampleRms, CosineOverWholePeriods) {
  SurfaceField f;
  f.nx = 40;
  f.ny = 4;
  f.dx = f.dy = 0.5;
  for (int j = 0; j < f.ny; ++j)
    for (int i = 0; i < f.nx; ++i) f.heights.push_back(3.0 * std::cos(2.0 * constants::pi * i / 10.0));
  EXPECT_NEAR(sample_rms(f), 3.0 / std::sqrt(2.0), 1e-13);
}

TEST(Psd, WhiteNoiseIsFlat) {
  SurfaceField f;
  f.nx = f.ny = 256;
  f.dx = f.dy = 0.1;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 256 * 256; ++k) f.heights.push_back(n(rng));
  const auto fit = fit_hurst(radial_psd(f), 2.0, 0.9 * constants::pi / f.dx);
  EXPECT_NEAR(fit.slope, 0.0, 0.2);
}

TEST(Psd, SingleCosineConcentrates) {
  SurfaceField f;
  f.nx = f.ny = 64;
  f.dx = f.dy = 0.25;
  for (int j = 0; j < 64; ++j)
    for (int i = 0; i < 64; ++i) f.heights.push_back(std::cos(2.0 * constants::pi * 5 * i / 64.0));
  const auto psd = radial_psd(f);
  double total = 0.0, best = 0.0;
  for (const auto& b : psd) {
    total += b.power * b.count;
    best = std::max(best, b.power * b.count);
  }
  EXPECT_GT(best / total, 0.99);
}

TEST(Psd, EnsembleSlopeNearTheory) {
  // 512^2 at 0.05 nm, averaged over seeds: slope of log PSD in the annulus band
  std::vector<std::vector<PsdBin>> tables;
  for (std::uint64_t seed = 1; seed <= 8; ++seed)
    tables.push_back(radial_psd(synthesize_surface(spec(2.0, seed), 512, 512, 0.05, 0.05)));
  const auto fit = fit_hurst(average_psd(tables), 4.0, 0.9 * constants::pi / 0.05);
  EXPECT_NEAR(fit.slope, -2.6, 0.3);
  EXPECT_NEAR(fit.H, 0.3, 0.15);
}

TEST(FitHurst, ExactPowerLaws) {
  std::vector<PsdBin> a, b;
  for (int k = 1; k <= 40; ++k) {
    const double kk = 0.5 * k;
    a.push_back({kk, std::pow(kk, -2.6), 3});
    b.push_back({kk, 7.0 * std::pow(kk, -2.0), 3});
  }
  EXPECT_NEAR(fit_hurst(a, 0.0, 100.0).H, 0.3, 1e-12);
  EXPECT_NEAR(fit_hurst(b, 0.0, 100.0).H, 0.0, 1e-12);
}

TEST(PartnerSurface, CorrelationLimits) {
  auto top = spec(2.0, 21), bottom = spec(2.0, 22);
  const auto t = synthesize_surface(top, 64, 32, 0.2, 0.2);
  const auto same = synthesize_partner_surface(top, bottom, 1.0, 64, 32, 0.2, 0.2);
  for (std::size_t n = 0; n < t.heights.size(); ++n) EXPECT_NEAR(same.heights[n], t.heights[n], 1e-12);
  const auto indep = synthesize_partner_surface(top, bottom, 0.0, 64, 32, 0.2, 0.2);
  EXPECT_EQ(indep.heights, synthesize_surface(bottom, 64, 32, 0.2, 0.2).heights);
  const auto mixed = synthesize_partner_surface(top, bottom, 0.5, 64, 32, 0.2, 0.2);
  EXPECT_NEAR(sample_rms(mixed), 2.0, 1e-12);
}

TEST(SurfaceFile, RoundTripIsExact) {
  const auto f = synthesize_surface(spec(1.3, 0xfedcba9876543210ULL), 32, 16, 0.21, 0.3);
  std::vector<std::string> comments;
  const auto g = parse_surface(format_surface(f, "hash=abc"), &comments);
  EXPECT_EQ(g.nx, f.nx);
  EXPECT_EQ(g.ny, f.ny);
  EXPECT_EQ(g.dx, f.dx);
  EXPECT_EQ(g.dy, f.dy);
  EXPECT_EQ(g.heights, f.heights);
  EXPECT_EQ(g.spec.seed, f.spec.seed);
  EXPECT_EQ(comment_value(comments, "hash"), "abc");
}

TEST(SurfaceFile, TruncatedIsIoError) {
  const auto text = format_surface(synthesize_surface(spec(1.0, 1), 16, 16, 0.2, 0.2));
  EXPECT_THROW(parse_surface(text.substr(0, text.size() / 2)), IoError);
  EXPECT_THROW(parse_surface("POTGRID v1\n"), IoError);
}

TEST(Surface, MeanHeightShiftsEveryHeight) {
  auto a = spec(2.0, 11), b = a;
  b.mean_height = 0.75;
  const auto fa = synthesize_surface(a, 64, 32, 0.25, 0.25), fb = synthesize_surface(b, 64, 32, 0.25, 0.25);
  for (std::size_t k = 0; k < fa.heights.size(); ++k) EXPECT_NEAR(fb.heights[k] - fa.heights[k], 0.75, 1e-14);
}

TEST(Surface, IsotropicStructureFunction) {
  // mean squared height increments along x and along y agree over an ensemble;
  // long wavelengths dominate, so the spread per seed is large
  const int n = 128;
  for (int r : {2, 8, 24}) {
    double sx = 0.0, sy = 0.0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
      const auto f = synthesize_surface(spec(2.0, seed), n, n, 0.2, 0.2);
      for (int j = 0; j + r < n; ++j)
        for (int i = 0; i + r < n; ++i) {
          sx += std::pow(f.at(i + r, j) - f.at(i, j), 2);
          sy += std::pow(f.at(i, j + r) - f.at(i, j), 2);
        }
    }
    EXPECT_NEAR(sx / sy, 1.0, 0.1) << "lag " << r;
  }
}
