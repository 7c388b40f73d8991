#include "cbs/analytic.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace cbs::analytic {

namespace {

constexpr double kPi = std::numbers::pi;

// c (1 - f(x)) / x with c = 3 (3D) or 2 (2D); tends to 1 as x -> 0.
double scaled_one_minus_f(double x, int dim) {
  if (dim == 2) {
    const double s = std::sqrt(1.0 + x);
    return 2.0 / (s * (1.0 + s));
  }
  if (x < 1e-3) {
    return 1.0 - x * (3.0 / 5.0 - x * (3.0 / 7.0 - x * (3.0 / 9.0 - x * (3.0 / 11.0))));
  }
  const double r = std::sqrt(x);
  return 3.0 * (1.0 - std::atan(r) / r) / x;
}

double log_c(int dim) { return std::log(dim == 2 ? 2.0 : 3.0); }

// Smooth remainder J(s) = int_0^{pi/2} [ln(c(1-f)/x) - 2 ln cos b] db, x = tan^2 b + s^2.
double smooth_remainder(double s, int dim) {
  auto h = [s, dim](double beta) {
    const double u = std::tan(beta);
    const double x = u * u + s * s;
    return std::log(scaled_one_minus_f(x, dim)) - 2.0 * std::log(std::cos(beta));
  };
  double err = 0.0;
  const double val = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      h, 0.0, kPi / 2, 20, 1e-14, &err);
  return val;
}

double smooth_remainder_at_zero(int dim) {
  static const double j2 = smooth_remainder(0.0, 2);
  static const double j3 = smooth_remainder(0.0, 3);
  return dim == 2 ? j2 : j3;
}

}  // namespace

void LineshapeParams::validate() const {
  if (!(ell > 0.0)) throw ConfigError("lineshape: ell must be positive");
  if (dim != 2 && dim != 3) throw ConfigError("lineshape: dim must be 2 or 3");
  if (!(k > 0.0)) throw ConfigError("lineshape: k must be positive");
  if (!(k * ell > 1.0)) throw ConfigError("lineshape: requires k*ell > 1 (weak scattering)");
}

double one_minus_f(double x, int dim) {
  if (x < 0.0) throw ConfigError("one_minus_f: negative argument");
  if (dim != 2 && dim != 3) throw ConfigError("one_minus_f: dim must be 2 or 3");
  const double c = dim == 2 ? 2.0 : 3.0;
  return x * scaled_one_minus_f(x, dim) / c;
}

double lineshape_log_integral(double q, const LineshapeParams& p) {
  p.validate();
  const double s = std::abs(q) * p.ell;
  // int_0^inf ln(u^2+s^2)/(1+u^2) du = pi ln(1+s); int_0^inf ln(1+u^2)/(1+u^2) du = pi ln 2.
  return kPi * std::log1p(s) - 0.5 * kPi * log_c(p.dim) - kPi * std::log(2.0) +
         smooth_remainder(s, p.dim);
}

double f_lineshape(double q, const LineshapeParams& p) {
  p.validate();
  if (!std::isfinite(q)) throw ConfigError("f_lineshape: q must be finite");
  const double s = std::abs(q) * p.ell;
  const double dj = smooth_remainder(s, p.dim) - smooth_remainder_at_zero(p.dim);
  const double v = std::exp(-2.0 / kPi * dj) / ((1.0 + s) * (1.0 + s));
  return std::clamp(v, 0.0, 1.0);
}

double f_smallq(double q, double ell) {
  const double s = std::abs(q) * ell;
  return 1.0 / ((1.0 + s) * (1.0 + s));
}

DoublePassageParams DoublePassageParams::from_optics(double wavelength, double L,
                                                     double theta0, double fibre_radius,
                                                     double f1, double f4) {
  if (!(wavelength > 0.0)) throw ConfigError("wavelength must be positive");
  if (!(f1 > 0.0) || !(f4 > 0.0)) throw ConfigError("focal lengths must be positive");
  if (!(fibre_radius >= 0.0)) throw ConfigError("fibre radius must be non-negative");
  DoublePassageParams p;
  p.k = 2.0 * kPi / wavelength;
  p.L = L;
  p.theta0 = theta0;
  p.delta_a = fibre_radius / f4;
  p.delta_b = fibre_radius / f4;
  p.delta_h = fibre_radius / f1;
  p.validate();
  return p;
}

void DoublePassageParams::validate() const {
  if (!(k > 0.0)) throw ConfigError("double passage: k must be positive");
  if (!(L > 0.0)) throw ConfigError("double passage: L must be positive");
  if (!(theta0 > 0.0)) throw ConfigError("double passage: theta0 must be positive");
  if (!(delta_a >= 0.0 && delta_b >= 0.0 && delta_h >= 0.0))
    throw ConfigError("double passage: detector resolutions must be non-negative");
}

double gamma_double_passage(double ta, double tb, const DoublePassageParams& p) {
  const double w = 2.0 * p.kLtheta0();
  const double d = ta - tb;
  const double s = ta + tb;
  return (1.0 + std::exp(-0.5 * w * w * d * d)) *
         std::exp(-s * s / (4.0 * p.theta0 * p.theta0));
}

double r_double_passage(double ta, double tb, const DoublePassageParams& p) {
  const double w = p.kLtheta0();
  const double d = ta - tb;
  const double s = ta + tb;
  return (1.0 + std::exp(-0.5 * w * w * s * s)) *
         std::exp(-d * d / (2.0 * p.theta0 * p.theta0));
}

double gamma_zero_angle(double x) {
  return 2.0 * (1.0 + 1.0 / std::sqrt(1.0 + 0.5 * x * x) + 1.0 / std::sqrt(1.0 + 0.25 * x * x));
}

double convolved_width_2p(const DoublePassageParams& p) {
  const double intrinsic = 1.0 / (2.0 * p.kLtheta0());
  return std::sqrt(p.delta_a * p.delta_a + p.delta_b * p.delta_b + intrinsic * intrinsic);
}

double convolved_width_1p(const DoublePassageParams& p) {
  const double intrinsic = 1.0 / p.kLtheta0();
  return std::sqrt(p.delta_h * p.delta_h + p.delta_b * p.delta_b + intrinsic * intrinsic);
}

double gamma_diffusive(double theta, const LineshapeParams& p) {
  const double f = f_lineshape(diffusive_momentum(theta, p.k), p);
  return 1.0 + f * f;
}

double r_diffusive(double theta, const LineshapeParams& p) {
  return 1.0 + f_lineshape(diffusive_momentum(theta, p.k), p);
}

GaussianExpansion gamma_gaussian_full(double qa, double qb, std::span<const double> modes,
                                      const std::function<double(double)>& F) {
  GaussianExpansion g;
  const double f0 = F(0.0);
  const double fab = F(std::abs(qb - qa));
  for (const double qp : modes) {
    const double f_pb = F(std::abs(qp + qb));
    const double f_ma = F(std::abs(qp - qa));
    const double f_pa = F(std::abs(qp + qa));
    const double f_mb = F(std::abs(qp - qb));
    g.bi_diffuson += f0 * f0;
    g.bi_cooperon += fab * fab;
    g.mixed += f0 * f_ma + f_pb * f0 + f_pb * f_ma;
    g.mixed += f_pa * f_mb + f_pa * fab + fab * f_mb;
  }
  return g;
}

// ---------------------------------------------------------------------------

std::vector<std::string> FitResult::param_names() {
  return {"peak_width", "background_width", "peak_center", "background_center",
          "amplitude", "contrast"};
}

namespace {

double model_value(const Eigen::VectorXd& x, double t, CbsModel model) {
  const double w = x[0], s = x[1], pc = x[2], bc = x[3], A = x[4], C = x[5];
  const double m = model == CbsModel::two_photon ? 4.0 : 2.0;
  const double dp = t - pc;
  const double db = t - bc;
  return A * (1.0 + C * std::exp(-dp * dp / (2.0 * w * w))) * std::exp(-db * db / (m * s * s));
}

struct ProfileFunctor {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  std::vector<double> t, y, wgt;
  CbsModel model;

  int inputs() const { return 6; }
  int values() const { return static_cast<int>(t.size()); }
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    for (std::size_t i = 0; i < t.size(); ++i)
      f[static_cast<Eigen::Index>(i)] = (model_value(x, t[i], model) - y[i]) * wgt[i];
    return 0;
  }
};

FitResult to_result(const Eigen::VectorXd& x) {
  FitResult r;
  r.peak_width = std::abs(x[0]);
  r.background_width = std::abs(x[1]);
  r.peak_center = x[2];
  r.background_center = x[3];
  r.amplitude = x[4];
  r.contrast = x[5];
  return r;
}

}  // namespace

double FitResult::evaluate(double t, CbsModel model) const {
  Eigen::VectorXd x(6);
  x << peak_width, background_width, peak_center, background_center, amplitude, contrast;
  return model_value(x, t, model);
}

FitResult fit_cbs_profile(const CbsProfile& profile, CbsModel model, const FitOptions& opts) {
  ProfileFunctor fn;
  fn.model = model;
  for (std::size_t i = 0; i < profile.size(); ++i) {
    if (opts.window && std::abs(profile.angle[i]) > *opts.window) continue;
    fn.t.push_back(profile.angle[i]);
    fn.y.push_back(profile.mean[i]);
    double w = 1.0;
    if (opts.use_stderr && i < profile.stderr_.size() && profile.stderr_[i] > 0.0)
      w = 1.0 / profile.stderr_[i];
    fn.wgt.push_back(w);
  }
  const std::size_t n = fn.t.size();
  if (n < 8) throw ConfigError("fit_cbs_profile: need at least 8 bins");

  const auto [imin, imax] = std::minmax_element(fn.y.begin(), fn.y.end());
  const double ymax = *imax, ymin = *imin;
  if (!(ymax > 0.0) || (ymax - ymin) <= 1e-9 * std::abs(ymax))
    throw FitError("fit_cbs_profile: flat profile, no peak", FitResult{});

  std::vector<double> sorted = fn.y;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2),
                   sorted.end());
  const double median = sorted[n / 2];
  const std::size_t ipk = static_cast<std::size_t>(imax - fn.y.begin());
  const double tpk = fn.t[ipk];
  const double span = fn.t.back() - fn.t.front();
  const double step = span / static_cast<double>(n - 1);

  double wsum = 0.0, tsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    wsum += fn.y[i];
    tsum += fn.y[i] * fn.t[i];
  }
  const double bc0 = tsum / wsum;
  double vsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) vsum += fn.y[i] * (fn.t[i] - bc0) * (fn.t[i] - bc0);
  const double var = vsum / wsum;
  const double s0 = std::max(model == CbsModel::two_photon ? std::sqrt(var / 2.0)
                                                           : std::sqrt(var),
                             span / 4.0);

  // Half width above the median level.
  const double half = median + 0.5 * (ymax - median);
  std::size_t lo = ipk, hi = ipk;
  while (lo > 0 && fn.y[lo - 1] > half) --lo;
  while (hi + 1 < n && fn.y[hi + 1] > half) ++hi;
  const double w0 = std::max(step, 0.5 * (fn.t[hi] - fn.t[lo] + step) / 1.1774);
  const double A0 = std::max(median, 1e-300);
  const double C0 = std::max(0.05, ymax / A0 - 1.0);

  FitResult best;
  double best_norm = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  int best_iter = 0;
  for (const double wscale : {1.0, 0.5, 2.0}) {
    Eigen::VectorXd x(6);
    x << w0 * wscale, s0, tpk, bc0, A0, C0;
    Eigen::NumericalDiff<ProfileFunctor, Eigen::Central> nd(fn);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<ProfileFunctor, Eigen::Central>> lm(nd);
    lm.parameters.maxfev = 4000;
    lm.parameters.xtol = 1e-14;
    lm.parameters.ftol = 1e-14;
    const auto status = lm.minimize(x);
    if (status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters) continue;
    if (!x.allFinite()) continue;
    const double norm = lm.fvec.norm();
    if (norm < best_norm) {
      best_norm = norm;
      best_x = x;
      best_iter = static_cast<int>(lm.nfev);
    }
  }
  if (best_x.size() != 6) throw FitError("fit_cbs_profile: no converged start", FitResult{});
  best = to_result(best_x);
  best.residual_norm = best_norm;
  best.iterations = best_iter;

  // Covariance from a central-difference Jacobian at the optimum.
  Eigen::MatrixXd J(static_cast<Eigen::Index>(n), 6);
  Eigen::VectorXd fp(static_cast<Eigen::Index>(n)), fm(static_cast<Eigen::Index>(n));
  for (int j = 0; j < 6; ++j) {
    Eigen::VectorXd xp = best_x, xm = best_x;
    const double h = 1e-6 * std::max(std::abs(best_x[j]), step);
    xp[j] += h;
    xm[j] -= h;
    fn(xp, fp);
    fn(xm, fm);
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  const double dof = std::max<double>(1.0, static_cast<double>(n) - 6.0);
  const double s2 = best_norm * best_norm / dof;
  best.covariance = s2 * (J.transpose() * J).completeOrthogonalDecomposition().pseudoInverse();

  if (!(best.contrast > 0.0) || !(best.peak_width > 0.0)) {
    throw FitError("fit_cbs_profile: fit converged to a non-physical peak", best);
  }
  if (best.peak_width < 0.5 * step) {
    throw FitError("fit_cbs_profile: peak narrower than the bin spacing", best);
  }
  const double sigma_c = std::sqrt(std::max(0.0, best.covariance(5, 5)));
  if (s2 > 0.0 && best.contrast < 5.0 * sigma_c) {
    throw FitError("fit_cbs_profile: no significant peak", best);
  }
  return best;
}

namespace {

// Solve quadratic through three points for level crossing inside [xa, xb].
double quadratic_crossing(const double* x, const double* y, double level, double xa,
                          double xb) {
  // Newton form about x[1].
  const double u0 = x[0] - x[1], u2 = x[2] - x[1];
  const double d0 = (y[0] - y[1]) / u0, d2 = (y[2] - y[1]) / u2;
  const double a = (d2 - d0) / (u2 - u0);
  const double b = d0 - a * u0;
  const double c = y[1] - level;
  std::vector<double> roots;
  if (std::abs(a) < 1e-300 || std::abs(a * (xb - xa)) < 1e-12 * std::abs(b)) {
    if (b != 0.0) roots.push_back(-c / b);
  } else {
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      const double qq = -0.5 * (b + std::copysign(sq, b));
      if (qq != 0.0) roots.push_back(c / qq);
      roots.push_back(qq / a);
    }
  }
  const double lo = std::min(xa, xb) - x[1], hi = std::max(xa, xb) - x[1];
  const double eps = 1e-12 * (hi - lo);
  for (double r : roots) {
    if (r >= lo - eps && r <= hi + eps) return x[1] + r;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

double fwhm_quadratic(std::span<const double> t, std::span<const double> v, double baseline) {
  const std::size_t n = t.size();
  if (n != v.size() || n < 3) throw ConfigError("fwhm_quadratic: need >= 3 matching points");
  const std::size_t ipk =
      static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  const double level = baseline + 0.5 * (v[ipk] - baseline);
  if (!(v[ipk] > baseline)) throw NumericalError("fwhm_quadratic: peak not above baseline");

  auto crossing = [&](std::size_t i, std::size_t j) {
    // Crossing between neighbours i and j; pick a 3-point stencil containing both.
    const std::size_t a = std::min(i, j);
    std::size_t s = a == 0 ? 0 : a - 1;
    if (s + 2 >= n) s = n - 3;
    const double xs[3] = {t[s], t[s + 1], t[s + 2]};
    const double ys[3] = {v[s], v[s + 1], v[s + 2]};
    double x = quadratic_crossing(xs, ys, level, t[i], t[j]);
    if (!std::isfinite(x)) {
      x = t[i] + (level - v[i]) * (t[j] - t[i]) / (v[j] - v[i]);
    }
    return x;
  };

  std::size_t l = ipk;
  while (l > 0 && v[l - 1] >= level) --l;
  if (l == 0) throw NumericalError("fwhm_quadratic: no half-maximum crossing on the left");
  std::size_t r = ipk;
  while (r + 1 < n && v[r + 1] >= level) ++r;
  if (r + 1 == n) throw NumericalError("fwhm_quadratic: no half-maximum crossing on the right");
  return crossing(r, r + 1) - crossing(l - 1, l);
}

}  // namespace cbs::analytic
