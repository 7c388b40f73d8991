#include "cbs/fisher.hpp"

#include "cbs/analytic.hpp"

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace cbs::fisher {

namespace {

void require_nr(double n_r, const char* where) {
  if (!(n_r >= 1)) throw ConfigError(std::string(where) + ": n_r must be >= 1");
}

}  // namespace

double speckle_mean_pdf(double nbar, double mean, double n_r) {
  require_nr(n_r, "speckle_mean_pdf");
  if (!(mean > 0)) throw ConfigError("speckle_mean_pdf: mean must be positive");
  if (nbar < 0) return 0.0;
  if (nbar == 0) return n_r == 1 ? 1 / mean : 0.0;
  return boost::math::pdf(boost::math::gamma_distribution<>(n_r, mean / n_r), nbar);
}

double photon_count_log_pmf(std::uint64_t n, double mean, double n_r) {
  require_nr(n_r, "photon_count_pmf");
  if (!(mean > 0)) throw ConfigError("photon_count_pmf: mean must be positive");
  using boost::math::lgamma;
  const double x = static_cast<double>(n);
  return lgamma(n_r + x) - lgamma(n_r) - lgamma(x + 1) + n_r * std::log(n_r / (n_r + mean)) +
         x * std::log(mean / (n_r + mean));
}

double photon_count_pmf(std::uint64_t n, double mean, double n_r) {
  return std::exp(photon_count_log_pmf(n, mean, n_r));
}

Eigen::MatrixXd fisher_element(std::span<const double> means, const Eigen::MatrixXd& derivs,
                               double n_r) {
  require_nr(n_r, "fisher_element");
  if (static_cast<std::size_t>(derivs.cols()) != means.size())
    throw ConfigError("fisher_element: one derivative column per position required");
  Eigen::VectorXd w(derivs.cols());
  for (std::size_t b = 0; b < means.size(); ++b) {
    if (!(means[b] > 0)) throw ConfigError("fisher_element: means must be positive");
    w(static_cast<Eigen::Index>(b)) = n_r / (n_r + means[b]) / means[b];
  }
  Eigen::MatrixXd f = derivs * w.asDiagonal() * derivs.transpose();
  return (f + f.transpose()) / 2;
}

Derivative d_dell(const EllProfile& f, double theta, double ell, double rel_step) {
  const double h = rel_step * ell;
  const double d1 = (f(theta, ell + h) - f(theta, ell - h)) / (2 * h);
  const double d2 = (f(theta, ell + h / 2) - f(theta, ell - h / 2)) / h;
  const double rich = (4 * d2 - d1) / 3;
  return {rich, std::abs(rich - d1)};
}

FisherEll fisher_ell_profiles(const EllProfile& r, const EllProfile& gamma,
                              std::span<const double> angles, double ell, double n_r) {
  require_nr(n_r, "fisher_ell_profiles");
  if (!(ell > 0)) throw ConfigError("fisher_ell_profiles: ell must be positive");
  FisherEll out;
  for (double th : angles) {
    const auto dr = d_dell(r, th, ell), dg = d_dell(gamma, th, ell);
    const double lr = dr.value / r(th, ell), lg = dg.value / gamma(th, ell);
    out.f_1p += n_r * lr * lr;
    out.f_2p += n_r * lg * lg;
    for (const auto& d : {dr, dg})
      if (d.value != 0) out.max_fd_error = std::max(out.max_fd_error, d.error / std::abs(d.value));
  }
  return out;
}

double fisher_ratio(double x) {
  if (!(x >= 1)) throw ConfigError("fisher_ratio: F(0)/F must be >= 1");
  if (std::isinf(x)) return 0.0;
  return 4 * (1 + x) / (1 + x * x);
}

double fisher_ratio_profiles(double x) {
  if (!(x >= 1)) throw ConfigError("fisher_ratio_profiles: F(0)/F must be >= 1");
  if (std::isinf(x)) return 0.0;
  const double t = 2 * (1 + x) / (1 + x * x);
  return t * t;
}

CbsProfiles cbs_profiles(LineshapeForm form, double k, double offset) {
  if (!(k > 0)) throw ConfigError("cbs_profiles: k must be positive");
  EllProfile f;
  switch (form) {
    case LineshapeForm::diffusive_2d:
    case LineshapeForm::diffusive_3d: {
      const int dim = form == LineshapeForm::diffusive_2d ? 2 : 3;
      f = [k, dim](double th, double ell) {
        return analytic::f_lineshape(analytic::diffusive_momentum(th, k),
                                     analytic::LineshapeParams{ell, dim, k});
      };
      break;
    }
    case LineshapeForm::small_q:
      f = [k](double th, double ell) {
        return analytic::f_smallq(analytic::diffusive_momentum(th, k), ell);
      };
      break;
  }
  CbsProfiles p;
  p.f = f;
  p.r = [f, offset](double th, double ell) { return 1 + offset * f(th, ell); };
  p.gamma = [f, offset](double th, double ell) {
    const double e = 1 - offset + offset * f(th, ell);
    return 1 + e * e;
  };
  return p;
}

void NoiseConfig::validate() const {
  require_nr(n_r, "NoiseConfig");
  if (!(rate > 0)) throw ConfigError("rate must be positive");
  if (angles.empty()) throw ConfigError("angles: at least one detector position required");
}

FisherReport fisher_report(double ell, const NoiseConfig& cfg, const EllProfile& profile) {
  cfg.validate();
  if (!(ell > 0)) throw ConfigError("ell must be positive");
  const auto m = static_cast<Eigen::Index>(cfg.angles.size());
  std::vector<double> means(cfg.angles.size());
  Eigen::MatrixXd d(1, m);
  for (Eigen::Index b = 0; b < m; ++b) {
    const double th = cfg.angles[static_cast<std::size_t>(b)];
    means[static_cast<std::size_t>(b)] = cfg.rate * profile(th, ell);
    d(0, b) = cfg.rate * d_dell(profile, th, ell).value;
  }
  FisherReport rep;
  rep.parameters = {"ell"};
  rep.fisher = fisher_element(means, d, cfg.n_r);
  rep.crlb = {1.0 / rep.fisher(0, 0)};
  return rep;
}

FisherReport simulate_estimation(double ell, const NoiseConfig& cfg, std::size_t n_trials,
                                 Mode mode, const CbsProfiles& profiles,
                                 const EstimationOptions& opts) {
  if (!(opts.bracket_lo > 0 && opts.bracket_hi > opts.bracket_lo))
    throw ConfigError("estimation bracket must satisfy 0 < lo < hi");
  const EllProfile& prof = mode == Mode::one_photon ? profiles.r : profiles.gamma;
  FisherReport rep = fisher_report(ell, cfg, prof);
  rep.trials = n_trials;
  rep.estimates.assign(n_trials, std::numeric_limits<double>::quiet_NaN());

  const SeedPlan plan(opts.seed);
  const double ulo = std::log(opts.bracket_lo), uhi = std::log(opts.bracket_hi);
  const auto m = cfg.angles.size();
  const double nr = cfg.n_r;

  auto trial = [&](std::size_t i) {
    auto eng = plan.engine(i);
    std::vector<double> n(m);
    for (std::size_t b = 0; b < m; ++b) {
      const double mu = cfg.rate * prof(cfg.angles[b], ell);
      std::gamma_distribution<double> speckle(nr, mu / nr);
      std::poisson_distribution<long long> counts(speckle(eng));
      n[b] = static_cast<double>(counts(eng));
    }
    // mean-dependent part of the log-likelihood
    auto nll = [&](double u) {
      const double e = ell * std::exp(u);
      double s = 0;
      for (std::size_t b = 0; b < m; ++b) {
        const double mu = cfg.rate * prof(cfg.angles[b], e);
        s -= n[b] * std::log(mu) - (nr + n[b]) * std::log(nr + mu);
      }
      return s;
    };
    const auto best = boost::math::tools::brent_find_minima(nll, ulo, uhi, 40);
    const double edge = 1e-3 * (uhi - ulo);
    if (best.first - ulo > edge && uhi - best.first > edge)
      rep.estimates[i] = ell * std::exp(best.first);
  };

  const auto nt = static_cast<std::int64_t>(n_trials);
  if (opts.exec == Exec::openmp) {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::int64_t i = 0; i < nt; ++i) trial(static_cast<std::size_t>(i));
  } else {
    for (std::int64_t i = 0; i < nt; ++i) trial(static_cast<std::size_t>(i));
  }

  double s = 0, s2 = 0;
  std::size_t ok = 0;
  for (double e : rep.estimates) {
    if (std::isnan(e)) continue;
    s += e;
    ++ok;
  }
  rep.failures = n_trials - ok;
  if (ok >= 2) {
    const double mean = s / static_cast<double>(ok);
    for (double e : rep.estimates)
      if (!std::isnan(e)) s2 += (e - mean) * (e - mean);
    rep.empirical_mean = mean;
    rep.empirical_variance = s2 / static_cast<double>(ok - 1);
  }
  return rep;
}

ExponentialCheck exponential_check(std::vector<double> x) {
  if (x.empty()) throw ConfigError("exponential_check: no samples");
  std::sort(x.begin(), x.end());
  double mean = 0;
  for (double v : x) {
    if (v < 0) throw ConfigError("exponential_check: samples must be non-negative");
    mean += v;
  }
  mean /= static_cast<double>(x.size());
  ExponentialCheck out;
  out.n = x.size();
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cdf = 1 - std::exp(-x[i] / mean);
    out.ks = std::max({out.ks, (static_cast<double>(i) + 1) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  out.scaled_ks = std::sqrt(n) * out.ks;
  return out;
}

}  // namespace cbs::fisher
