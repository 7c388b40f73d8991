#include <doctest.h>

#include "cbs/analytic.hpp"
#include "cbs/phasescreen.hpp"
#include "wick.hpp"

#include <numbers>

using namespace cbs;
using namespace cbs::phasescreen;

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kLambda = 808e-9;
const double kK = 2 * kPi / kLambda;
constexpr double kTheta0 = 4.4e-3;

// Small grid whose spacing divides the correlation width c = xi0/pi in 5 steps.
ScreenConfig small_config(double L, std::size_t n = 512, std::uint64_t seed = 1) {
  ScreenConfig c;
  c.k = kK;
  c.L = L;
  c.theta0 = kTheta0;
  c.n_points = n;
  c.window = static_cast<double>(n) * (c.xi0() / kPi) / 5.0;
  c.seed = seed;
  c.validate();
  return c;
}

std::vector<cplx> unit(std::size_t n, std::size_t j) {
  std::vector<cplx> e(n, 0.0);
  e[j] = 1.0;
  return e;
}
}  // namespace

TEST_CASE("Fresnel diagonal") {
  const auto basis = ModeBasis::centered(9, 0.5, 3.0);
  for (auto h : fresnel_diagonal(basis, 0.0, 3.0)) CHECK(h == cplx(1.0));
  for (auto h : fresnel_diagonal(basis, 7.0, 3.0)) CHECK(std::abs(h) == doctest::Approx(1.0));
  const double k = 2.0, q = 2.0;
  const double d = 2.0 * kPi * k / (q * q);  // q^2 d / (2k) = pi
  const auto b2 = ModeBasis::from_values({-q, 0.0, q}, k);
  const auto h = fresnel_diagonal(b2, d, k);
  CHECK(h[2].real() == doctest::Approx(-1.0));
  CHECK(std::abs(h[2].imag()) < 1e-12);
  CHECK_THROWS_AS(fresnel_diagonal(b2, -1.0, k), ConfigError);
}

TEST_CASE("screen configuration sizing") {
  const auto c = ScreenConfig::make(kK, 0.025, kTheta0, 0);
  CHECK(c.n_points == 4096);
  CHECK(c.window == doctest::Approx(256 * c.xi0()));
  CHECK(c.dx() <= c.xi0() / (4 * kPi));
  CHECK(screen_basis(c).size() == 4095);

  auto coarse = small_config(0.0);
  coarse.window *= 2;
  CHECK_THROWS_AS(coarse.validate(), ConfigError);
  auto npow = small_config(0.0);
  npow.n_points = 500;
  CHECK_THROWS_AS(npow.validate(), ConfigError);
}

TEST_CASE("FFT index bookkeeping") {
  const ScreenPlan plan(small_config(0.0, 64));
  const auto& b = plan.basis();
  CHECK(b.size() == 63);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto j = plan.fft_index(i);
    REQUIRE(plan.basis_index(j).has_value());
    CHECK(*plan.basis_index(j) == i);
  }
  CHECK(plan.fft_index(b.nearest(0.0)) == 0);
  CHECK_FALSE(plan.basis_index(32).has_value());
}

TEST_CASE("screen autocorrelation and far field") {
  const ScreenPlan plan(small_config(0.0, 512, 5));
  const std::size_t n = plan.n();
  const std::size_t lag = 5;  // c / dx
  double c0 = 0.0, cl = 0.0;
  const std::size_t n_screens = 1000;
  std::vector<double> far(n, 0.0);
  for (std::size_t s = 0; s < n_screens; ++s) {
    const auto v = sample_screen(plan, s);
    for (std::size_t j = 0; j < n; ++j) {
      c0 += std::norm(v[j]);
      cl += (v[j] * std::conj(v[(j + lag) % n])).real();
    }
    const ScreenRealization real(plan, v);
    std::vector<cplx> out;
    real.apply_v(unit(n, 0), out);
    for (std::size_t j = 0; j < n; ++j) far[j] += std::norm(out[j]);
  }
  c0 /= static_cast<double>(n * n_screens);
  cl /= static_cast<double>(n * n_screens);
  CHECK(c0 == doctest::Approx(1.0).epsilon(0.02));
  CHECK(cl / c0 == doctest::Approx(std::exp(-1.0)).epsilon(0.05));

  // ln I = a - theta^2 / w^2 over |theta| < 2 theta0.
  double sxx = 0, sx = 0, sy = 0, sxy = 0;
  int m = 0;
  const auto& b = plan.basis();
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double th = b.q(i) / b.k();
    if (std::abs(th) > 2 * kTheta0) continue;
    const double y = std::log(far[plan.fft_index(i)]);
    const double x = th * th;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  CHECK(std::sqrt(-1.0 / slope) == doctest::Approx(kTheta0).epsilon(0.05));
}

TEST_CASE("trivial screens") {
  const ScreenPlan flat0(small_config(0.0, 64));
  const std::vector<cplx> ones(64, 1.0);
  const auto id = build_reflection(flat0, ScreenRealization(flat0, ones));
  CHECK((id.entries() - CMatrix::Identity(63, 63)).cwiseAbs().maxCoeff() < 1e-12);

  const double L = 0.5e-3;
  const ScreenPlan flat(small_config(L, 64));
  const auto r = build_reflection(flat, ScreenRealization(flat, ones));
  const auto h = fresnel_diagonal(flat.basis(), 2 * L, kK);
  CMatrix hd = CMatrix::Zero(63, 63);
  for (int i = 0; i < 63; ++i) hd(i, i) = h[static_cast<std::size_t>(i)];
  CHECK((r.entries() - hd).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("random screens give reciprocal matrices and epr_gamma matches the operator path") {
  const double L = 0.5e-3;
  const ScreenPlan plan(small_config(L, 64, 3));
  const auto& b = plan.basis();
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ScreenRealization real(plan, s);
    const auto r = build_reflection(plan, real);
    CHECK(r.is_reciprocal());
    CHECK(reciprocity_defect(b, r.entries()) < 1e-12);
    const std::size_t a = b.nearest(0.0) + 2;
    std::vector<cplx> x, y;
    real.apply_r(unit(64, plan.fft_index(b.negate(a))), x);
    real.apply_r(x, y);
    for (std::size_t bi = 0; bi < b.size(); bi += 7) {
      const double op = 2.0 / b.size() * std::norm(y[plan.fft_index(bi)]);
      CHECK(epr_gamma(r, a, bi) == doctest::Approx(op).epsilon(1e-6));
    }
  }
}

TEST_CASE("screen pair correlator carries the memory-effect delta") {
  const ScreenPlan plan(small_config(0.0, 64, 9));
  const std::size_t n = 64, n_screens = 1000;
  // (alpha, beta, gamma, delta) FFT slots; first two respect alpha-beta = gamma-delta.
  const int quads[][4] = {{3, 1, 4, 2}, {0, 62, 1, 63}, {3, 1, 4, 1}, {0, 1, 2, 0}, {5, 2, 0, 0}};
  for (const auto& q : quads) {
    cplx sum = 0.0;
    double s2 = 0.0;
    for (std::size_t s = 0; s < n_screens; ++s) {
      const ScreenRealization real(plan, s);
      std::vector<cplx> cb, cd;
      real.apply_v(unit(n, q[1]), cb);
      real.apply_v(unit(n, q[3]), cd);
      const cplx z = cb[q[0]] * std::conj(cd[q[2]]);
      sum += z;
      s2 += std::norm(z);
    }
    const double m = static_cast<double>(n_screens);
    const cplx mean = sum / m;
    const double se = std::sqrt(std::max(0.0, s2 / m - std::norm(mean)) / (m - 1));
    const bool on_memory = ((q[0] - q[1] - q[2] + q[3]) % 64) == 0;
    if (on_memory) {
      CHECK(std::abs(mean) > 5 * se);
    } else {
      CHECK(std::abs(mean) < 3 * std::sqrt(2.0) * se);
    }
  }
}

TEST_CASE("double-passage MC is deterministic and worker independent") {
  const ScreenPlan plan(small_config(0.5e-3, 128, 4));
  McOptions o;
  o.exec = Exec::serial;
  const auto serial = run_double_passage_acc(plan, 70, o);
  o.exec = Exec::openmp;
  for (int w : {1, 2, 4}) {
    set_worker_count(w);
    CHECK(run_double_passage_acc(plan, 70, o) == serial);
  }
  // Split runs merge to the same accumulator as one run of the union.
  McOptions first = o, second = o;
  auto part = run_double_passage_acc(plan, 32, first);
  second.first_realization = 32;
  part.merge(run_double_passage_acc(plan, 38, second));
  CHECK(part.r1p.count(0) == 70);
}

TEST_CASE("backscattering point against the exact Gaussian-pairing average") {
  for (double x : {0.5, 3.0}) {
    const double L = x / (kK * kTheta0 * kTheta0);
    const ScreenPlan plan(ScreenConfig::make(kK, L, kTheta0, 21));
    const double probe = 3.0;
    const auto acc = run_backscatter_point_mc(plan, 1500, probe * kTheta0);
    const double exact = (oracle::wick_gamma(0, 0, x) /
                          (0.5 * (oracle::wick_gamma(probe, -probe, x) +
                                  oracle::wick_gamma(-probe, probe, x))))
                             .real();
    CHECK(std::abs(acc.ratio() - exact) < 3.5 * acc.ratio_stderr());
  }
}

TEST_CASE("exact pairing average reduces to the closed form at the backscattering point") {
  for (double x : {0.5, 2.0, 10.0}) {
    const double a = 1 / std::sqrt(1 + x * x / 2), c = 1 / std::sqrt(1 + x * x);
    const double bg = oracle::wick_gamma(40.0, -40.0, x).real();
    CHECK(oracle::wick_gamma(0, 0, x).real() / bg == doctest::Approx(2 + 8 * a + 2 * c).epsilon(1e-9));
  }
}

TEST_CASE("one-photon cone from the MC matches the leading-order width") {
  const double L = 0.011;
  const ScreenPlan plan(ScreenConfig::make(kK, L, kTheta0, 33));
  McOptions o;
  o.output_halfwidth = 2 * kTheta0;
  const auto res = run_double_passage_mc(plan, 2000, o);
  analytic::FitOptions fo;
  fo.window = 2 * kTheta0;
  const auto f1 = analytic::fit_cbs_profile(res.one_photon, analytic::CbsModel::one_photon, fo);
  CHECK(f1.peak_width * kK * L * kTheta0 == doctest::Approx(1.0).epsilon(0.05));
  CHECK(f1.background_width == doctest::Approx(kTheta0).epsilon(0.05));
}
