#include "cbs/phasescreen.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

namespace cbs::phasescreen {

namespace {

constexpr double kPi = std::numbers::pi;

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Signed frequency index of FFT slot j.
long signed_mode(std::size_t j, std::size_t n) {
  return j < n / 2 ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(n);
}

}  // namespace

double ScreenConfig::xi0() const { return 2.0 * kPi / (k * theta0); }

double ScreenConfig::dq() const { return 2.0 * kPi / window; }

ScreenConfig ScreenConfig::make(double k, double L, double theta0, std::uint64_t seed) {
  ScreenConfig c;
  c.k = k;
  c.L = L;
  c.theta0 = theta0;
  c.seed = seed;
  if (!(k > 0.0) || !(theta0 > 0.0)) throw ConfigError("screen: k and theta0 must be positive");
  const double xi0 = c.xi0();
  c.window = std::max(16.0 * L * theta0, 256.0 * xi0);
  const double max_dx = xi0 / (4.0 * kPi);
  std::size_t n = 8;
  while (c.window / static_cast<double>(n) > max_dx) n *= 2;
  c.n_points = n;
  c.validate();
  return c;
}

void ScreenConfig::validate() const {
  if (!(k > 0.0)) throw ConfigError("screen: k must be positive");
  if (!(L >= 0.0)) throw ConfigError("screen: L must be non-negative");
  if (!(theta0 > 0.0 && theta0 < 0.5)) throw ConfigError("screen: theta0 must be in (0, 0.5) rad");
  if (!is_pow2(n_points) || n_points < 8)
    throw ConfigError("screen: n_points must be a power of two >= 8");
  if (!(window > 0.0)) throw ConfigError("screen: window must be positive");
  if (dx() > xi0() / (4.0 * kPi) * (1.0 + 1e-12))
    throw ConfigError("screen: grid spacing exceeds xi0/(4 pi); screen correlation unresolved");
  if (window < 16.0 * L * theta0 * (1.0 - 1e-12))
    throw ConfigError("screen: window narrower than 16 L theta0");
  if (kind == ScreenKind::pure_phase && !(phase_sigma > 0.0))
    throw ConfigError("screen: phase_sigma must be positive");
}

ModeBasis screen_basis(const ScreenConfig& cfg) {
  cfg.validate();
  return ModeBasis::centered(cfg.n_points - 1, cfg.dq(), cfg.k);
}

std::vector<cplx> fresnel_diagonal(const ModeBasis& basis, double d, double k) {
  if (!(d >= 0.0)) throw ConfigError("fresnel: distance must be non-negative");
  std::vector<cplx> h(basis.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double q = basis.q(i);
    h[i] = std::polar(1.0, -q * q * d / (2.0 * k));
  }
  return h;
}

ScreenPlan::ScreenPlan(const ScreenConfig& cfg)
    : cfg_(cfg), basis_(screen_basis(cfg)) {
  const std::size_t n = cfg_.n_points;
  const double dq = cfg_.dq();
  h_.resize(n);
  g_.resize(n);
  const double c = cfg_.xi0() / kPi;
  const double s = cfg_.kind == ScreenKind::gaussian ? 0.5 * c : 0.5 * cfg_.phase_sigma * c;
  double g2 = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double q = static_cast<double>(signed_mode(j, n)) * dq;
    h_[j] = std::polar(1.0, -q * q * (2.0 * cfg_.L) / (2.0 * cfg_.k));
    g_[j] = std::exp(-0.5 * q * q * s * s);
    g2 += g_[j] * g_[j];
  }
  g_norm_ = std::sqrt(g2 / static_cast<double>(n));

  std::lock_guard lock(fftw_planner_mutex());
  std::vector<cplx> tmp(n);
  auto* buf = reinterpret_cast<fftw_complex*>(tmp.data());
  const int ni = static_cast<int>(n);
  fwd_ = fftw_plan_dft_1d(ni, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  bwd_ = fftw_plan_dft_1d(ni, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!fwd_ || !bwd_) throw NumericalError("FFTW plan creation failed");
}

ScreenPlan::~ScreenPlan() {
  std::lock_guard lock(fftw_planner_mutex());
  if (fwd_) fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
  if (bwd_) fftw_destroy_plan(static_cast<fftw_plan>(bwd_));
}

std::size_t ScreenPlan::fft_index(std::size_t i) const {
  const std::size_t n = cfg_.n_points;
  if (i >= n - 1) throw ConfigError("screen: basis index out of range");
  const long m = static_cast<long>(i) - static_cast<long>(n / 2 - 1);
  return static_cast<std::size_t>((m + static_cast<long>(n)) % static_cast<long>(n));
}

std::optional<std::size_t> ScreenPlan::basis_index(std::size_t j) const {
  const std::size_t n = cfg_.n_points;
  const long m = signed_mode(j, n);
  if (m == -static_cast<long>(n / 2)) return std::nullopt;
  return static_cast<std::size_t>(m + static_cast<long>(n / 2 - 1));
}

void ScreenPlan::forward(const cplx* in, cplx* out) const {
  const std::size_t n = cfg_.n_points;
  if (in != out) std::copy(in, in + n, out);
  auto* b = reinterpret_cast<fftw_complex*>(out);
  fftw_execute_dft(static_cast<fftw_plan>(fwd_), b, b);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t j = 0; j < n; ++j) out[j] *= s;
}

void ScreenPlan::backward(const cplx* in, cplx* out) const {
  const std::size_t n = cfg_.n_points;
  if (in != out) std::copy(in, in + n, out);
  auto* b = reinterpret_cast<fftw_complex*>(out);
  fftw_execute_dft(static_cast<fftw_plan>(bwd_), b, b);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t j = 0; j < n; ++j) out[j] *= s;
}

std::vector<cplx> sample_screen(const ScreenPlan& plan, std::uint64_t index) {
  const std::size_t n = plan.n();
  auto eng = SeedPlan(plan.cfg_.seed).engine(index);
  std::vector<cplx> w(n);
  for (auto& z : w) z = complex_normal(eng);
  plan.forward(w.data(), w.data());
  for (std::size_t j = 0; j < n; ++j) w[j] *= plan.g_[j] / plan.g_norm_;
  plan.backward(w.data(), w.data());
  if (plan.cfg_.kind == ScreenKind::pure_phase) {
    // Re of a unit-variance circular field has variance 1/2.
    const double amp = std::sqrt(2.0) * plan.cfg_.phase_sigma;
    for (auto& z : w) z = std::polar(1.0, amp * z.real());
  }
  return w;
}

ScreenRealization::ScreenRealization(const ScreenPlan& plan, std::vector<cplx> screen)
    : plan_(&plan), v_(std::move(screen)), work_(plan.n()) {
  if (v_.size() != plan.n()) throw ConfigError("screen: field size does not match the grid");
}

void ScreenRealization::apply_v(const std::vector<cplx>& in, std::vector<cplx>& out) const {
  const std::size_t n = plan_->n();
  out.resize(n);
  plan_->backward(in.data(), out.data());
  for (std::size_t j = 0; j < n; ++j) out[j] *= v_[j];
  plan_->forward(out.data(), out.data());
}

void ScreenRealization::apply_r(const std::vector<cplx>& in, std::vector<cplx>& out) const {
  const std::size_t n = plan_->n();
  const auto& h = plan_->propagator();
  out.resize(n);
  plan_->backward(in.data(), out.data());
  for (std::size_t j = 0; j < n; ++j) out[j] *= v_[j];
  plan_->forward(out.data(), out.data());
  for (std::size_t j = 0; j < n; ++j) out[j] *= h[j];
  plan_->backward(out.data(), out.data());
  for (std::size_t j = 0; j < n; ++j) out[j] *= v_[j];
  plan_->forward(out.data(), out.data());
}

void ScreenRealization::column(std::size_t fft_m, std::vector<cplx>& out) const {
  std::fill(work_.begin(), work_.end(), cplx(0.0));
  work_.at(fft_m) = 1.0;
  apply_r(work_, out);
}

ReflectionMatrix build_reflection(const ScreenPlan& plan, std::uint64_t index) {
  return build_reflection(plan, ScreenRealization(plan, index));
}

ReflectionMatrix build_reflection(const ScreenPlan& plan, const ScreenRealization& real) {
  const ModeBasis& basis = plan.basis();
  const auto nb = static_cast<Eigen::Index>(basis.size());
  CMatrix r(nb, nb);
  std::vector<cplx> col;
  for (Eigen::Index j = 0; j < nb; ++j) {
    real.column(plan.fft_index(static_cast<std::size_t>(j)), col);
    for (Eigen::Index i = 0; i < nb; ++i) r(i, j) = col[plan.fft_index(static_cast<std::size_t>(i))];
  }
  return ReflectionMatrix::reciprocal(basis, std::move(r), kScreenReciprocityTolerance);
}

namespace {

struct OutputBins {
  std::vector<std::size_t> fft;  // FFT slot per bin
  std::vector<double> angle;
};

OutputBins output_bins(const ScreenPlan& plan, double halfwidth) {
  OutputBins b;
  const ModeBasis& basis = plan.basis();
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const double th = basis.q(i) / basis.k();
    if (std::abs(th) <= halfwidth) {
      b.fft.push_back(plan.fft_index(i));
      b.angle.push_back(th);
    }
  }
  if (b.fft.empty()) throw ConfigError("screen: output window contains no modes");
  return b;
}

std::vector<cplx> unit(std::size_t n, std::size_t j) {
  std::vector<cplx> e(n, cplx(0.0));
  e[j] = 1.0;
  return e;
}

}  // namespace

DoublePassageAccumulator run_double_passage_acc(const ScreenPlan& plan,
                                                std::size_t n_realizations,
                                                const McOptions& opts) {
  const ModeBasis& basis = plan.basis();
  const std::size_t a = opts.detector.value_or(basis.nearest(0.0));
  if (a >= basis.size()) throw ConfigError("screen: detector index out of range");
  const std::size_t fa = plan.fft_index(a);
  const std::size_t fma = plan.fft_index(basis.negate(a));
  const auto bins = output_bins(plan, opts.output_halfwidth.value_or(3.0 * plan.config().theta0));
  const double pref = 2.0 / static_cast<double>(basis.size());
  const std::size_t n = plan.n();

  auto make = [&] {
    return DoublePassageAccumulator{EnsembleAccumulator(bins.angle),
                                    EnsembleAccumulator(bins.angle)};
  };
  auto body = [&](std::size_t idx, DoublePassageAccumulator& acc) {
    const ScreenRealization real(plan, idx);
    std::vector<cplx> x1, x2, x3;
    real.apply_r(unit(n, fa), x1);
    if (fma == fa) {
      x2 = x1;
    } else {
      real.apply_r(unit(n, fma), x2);
    }
    real.apply_r(x2, x3);
    std::vector<double> s1(bins.fft.size()), s2(bins.fft.size());
    for (std::size_t b = 0; b < bins.fft.size(); ++b) {
      s1[b] = std::norm(x1[bins.fft[b]]);
      s2[b] = pref * std::norm(x3[bins.fft[b]]);
    }
    acc.r1p.add(s1);
    acc.g2p.add(s2);
  };
  return reduce_realizations<DoublePassageAccumulator>(opts.first_realization, n_realizations,
                                                       make, body, opts.exec);
}

DoublePassageResult run_double_passage_mc(const ScreenPlan& plan, std::size_t n_realizations,
                                          const McOptions& opts) {
  const auto acc = run_double_passage_acc(plan, n_realizations, opts);
  DoublePassageResult res;
  res.one_photon = to_profile(acc.r1p);
  res.two_photon = to_profile(acc.g2p);
  res.detector_index = opts.detector.value_or(plan.basis().nearest(0.0));
  res.detector_angle = plan.basis().q(res.detector_index) / plan.basis().k();
  return res;
}

double RatioAccumulator::ratio_stderr() const {
  if (n < 2) return 0.0;
  const double nn = static_cast<double>(n);
  const double mx = sx / nn, my = sy / nn;
  const double vx = (sxx - nn * mx * mx) / (nn - 1.0);
  const double vy = (syy - nn * my * my) / (nn - 1.0);
  const double cxy = (sxy - nn * mx * my) / (nn - 1.0);
  const double r = mx / my;
  const double var = (vx - 2.0 * r * cxy + r * r * vy) / (my * my * nn);
  return std::sqrt(std::max(0.0, var));
}

RatioAccumulator run_backscatter_point_mc(const ScreenPlan& plan, std::size_t n_realizations,
                                          double probe_angle, Exec exec) {
  const ModeBasis& basis = plan.basis();
  const std::size_t n = plan.n();
  const std::size_t i0 = basis.nearest(0.0);
  const std::size_t ip = basis.nearest(probe_angle * basis.k());
  const std::size_t im = basis.negate(ip);
  if (ip == i0) throw ConfigError("backscatter probe angle resolves to the centre mode");
  const double pref = 2.0 / static_cast<double>(basis.size());

  // Gamma_{b,a} with b = -a reads the diagonal element (r^2)_{b,b}.
  auto diag_r2 = [&](const ScreenRealization& real, std::size_t bi) {
    const std::size_t f = plan.fft_index(bi);
    std::vector<cplx> x, y;
    real.apply_r(unit(n, f), x);
    real.apply_r(x, y);
    return pref * std::norm(y[f]);
  };
  auto body = [&](std::size_t idx, RatioAccumulator& acc) {
    const ScreenRealization real(plan, idx);
    const double g0 = diag_r2(real, i0);
    const double gb = 0.5 * (diag_r2(real, ip) + diag_r2(real, im));
    acc.add(g0, gb);
  };
  return reduce_realizations<RatioAccumulator>(0, n_realizations,
                                               [] { return RatioAccumulator{}; }, body, exec);
}

}  // namespace cbs::phasescreen
