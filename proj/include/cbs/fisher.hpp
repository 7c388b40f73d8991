#pragma once

// Photon-counting noise (speckle averaged over N_r realizations, then
// Poisson), Fisher information for the transport mean free path and
// maximum-likelihood estimation experiments.

#include "cbs/core.hpp"
#include "cbs/parallel.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cbs::fisher {

/// Density of the realization-averaged mean count: Gamma of order N_r with
/// the given mean.
double speckle_mean_pdf(double nbar, double mean, double n_r);

/// Poisson-speckle (negative binomial) probability of n counts, log space.
double photon_count_log_pmf(std::uint64_t n, double mean, double n_r);
double photon_count_pmf(std::uint64_t n, double mean, double n_r);

/// sum_b N_r / (N_r + <n_b>) d_i<n_b> d_j<n_b> / <n_b>. `derivs` holds one
/// row per parameter and one column per position.
Eigen::MatrixXd fisher_element(std::span<const double> means, const Eigen::MatrixXd& derivs,
                               double n_r);

/// Normalised profile as a function of angle (rad) and ell.
using EllProfile = std::function<double(double theta, double ell)>;

struct Derivative {
  double value = 0.0;
  double error = 0.0;  // |Richardson estimate - coarse estimate|
};

/// Central difference in ell at relative step `rel_step`, refined by one
/// Richardson step (h, h/2).
Derivative d_dell(const EllProfile& f, double theta, double ell, double rel_step = 1e-4);

struct FisherEll {
  double f_1p = 0.0;  // N_r sum (d_ell R / R)^2
  double f_2p = 0.0;  // N_r sum (d_ell Gamma / Gamma)^2
  double max_fd_error = 0.0;  // largest relative Richardson correction
  double ratio() const { return f_2p / f_1p; }
};

/// Fisher information on ell in the speckle-dominated limit.
FisherEll fisher_ell_profiles(const EllProfile& r, const EllProfile& gamma,
                              std::span<const double> angles, double ell, double n_r);

/// 4 (1 + x) / (1 + x^2), x = F(0)/F >= 1.
double fisher_ratio(double f0_over_f);

/// Ratio implied by R = 1 + F/F(0), Gamma = 1 + (F/F(0))^2 at a single
/// position: [2 (1 + x) / (1 + x^2)]^2.
double fisher_ratio_profiles(double f0_over_f);

enum class LineshapeForm { diffusive_2d, diffusive_3d, small_q };

struct CbsProfiles {
  EllProfile r;      // 1 + s F/F(0)
  EllProfile gamma;  // 1 + (R - s)^2
  EllProfile f;      // F/F(0)
};

/// Diffusive profiles at wavenumber k; `offset` is the single-scattering
/// offset s (1 for the pure diffusive cones).
CbsProfiles cbs_profiles(LineshapeForm form, double k, double offset = 1.0);

enum class Mode { one_photon, two_photon };

struct NoiseConfig {
  double n_r = 1.0;             // disorder realizations averaged per position
  double rate = 1.0;            // mean count at unit normalised profile
  std::vector<double> angles;   // detector positions, rad
  void validate() const;
};

struct EstimationOptions {
  std::uint64_t seed = 0;
  Exec exec = Exec::openmp;
  double bracket_lo = 0.2;  // ML search on [lo, hi] x true ell
  double bracket_hi = 5.0;
};

struct FisherReport {
  std::vector<std::string> parameters;
  Eigen::MatrixXd fisher;
  std::vector<double> crlb;
  std::optional<double> empirical_variance;
  std::optional<double> empirical_mean;
  std::size_t trials = 0;
  std::size_t failures = 0;  // ML hit the bracket edge
  std::vector<double> estimates;  // NaN for failed trials
};

/// Fisher information (exact Poisson-speckle form) for ell at the given
/// configuration.
FisherReport fisher_report(double ell, const NoiseConfig& cfg, const EllProfile& profile);

/// Draws counts from the Poisson-speckle law at each position and estimates
/// ell by maximum likelihood; reports the empirical variance next to the CRLB.
FisherReport simulate_estimation(double ell, const NoiseConfig& cfg, std::size_t n_trials,
                                 Mode mode, const CbsProfiles& profiles,
                                 const EstimationOptions& opts = {});

struct ExponentialCheck {
  std::size_t n = 0;
  double ks = 0.0;         // sup |F_emp - (1 - e^{-x/mean})|
  double scaled_ks = 0.0;  // sqrt(n) ks
};

/// Kolmogorov-Smirnov distance of positive samples to the exponential law
/// with the sample mean.
ExponentialCheck exponential_check(std::vector<double> samples);

}  // namespace cbs::fisher
