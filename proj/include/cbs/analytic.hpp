#pragma once

// Closed-form CBS lineshapes: the diffusive F(q), double-passage Gaussian
// profiles and their detector-limited widths, the eight-term Gaussian
// expansion of the coincidence rate, and least-squares profile fitting.

#include "cbs/core.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace cbs::analytic {

struct LineshapeParams {
  double ell = 1.0;  // transport mean free path
  int dim = 3;       // 2 or 3
  double k = 10.0;   // wavenumber

  /// Throws ConfigError unless ell > 0, dim in {2, 3} and k ell > 1.
  void validate() const;
};

/// Diffusive CBS function normalised to F(0) = 1.
///
/// Evaluates exp[-(2/pi) int_0^{pi/2} ln(1 - f(tan^2 b + q^2 l^2)) db] with
/// f(x) = atan(sqrt x)/sqrt x (3D) or 1/sqrt(x+1) (2D). The logarithmic part
/// of the integrand is integrated in closed form, which isolates the exact
/// (1 + q l)^-2 factor; the smooth remainder goes to adaptive Gauss-Kronrod.
double f_lineshape(double q, const LineshapeParams& p);

/// Small-q form 1/(1 + q l)^2.
double f_smallq(double q, double ell);

/// Unnormalised log-integral I(q) = int_0^{pi/2} ln(1 - f(...)) db, exposed
/// for diagnostics and cross-checks.
double lineshape_log_integral(double q, const LineshapeParams& p);

/// 1 - f(x), evaluated without cancellation for small x.
double one_minus_f(double x, int dim);

struct DoublePassageParams {
  double k = 0.0;       // wavenumber
  double L = 0.0;       // diffuser-mirror spacing
  double theta0 = 0.0;  // 1/e far-field half-width of one pass through the diffuser
  double delta_a = 0.0;
  double delta_b = 0.0;
  double delta_h = 0.0;

  /// Detector resolutions from fibre radius and focal lengths:
  /// delta_a = delta_b = sigma/f4, delta_h = sigma/f1.
  static DoublePassageParams from_optics(double wavelength, double L, double theta0,
                                         double fibre_radius, double f1, double f4);
  double kLtheta0() const { return k * L * theta0; }
  /// Dimensionless k L theta0^2.
  double fresnel_number() const { return k * L * theta0 * theta0; }
  void validate() const;
};

/// Leading-order double-passage two-photon profile (unnormalised).
double gamma_double_passage(double theta_a, double theta_b, const DoublePassageParams& p);
/// Leading-order double-passage one-photon profile (unnormalised).
double r_double_passage(double theta_a, double theta_b, const DoublePassageParams& p);

/// Backscattering-point value 2[1 + (1+x^2/2)^-1/2 + (1+x^2/4)^-1/2], x = k L theta0^2.
double gamma_zero_angle(double x);

/// Gaussian-std width of the two-photon peak after detector blur.
double convolved_width_2p(const DoublePassageParams& p);
/// Gaussian-std width of the one-photon peak after detector blur.
double convolved_width_1p(const DoublePassageParams& p);

/// 1 + F(q)^2, q = 2k sin(theta/2).
double gamma_diffusive(double theta, const LineshapeParams& p);
/// 1 + F(q), q = 2k sin(theta/2).
double r_diffusive(double theta, const LineshapeParams& p);

/// Momentum transfer for the diffusive formulas.
inline double diffusive_momentum(double theta, double k) {
  return 2.0 * k * std::sin(0.5 * std::abs(theta));
}

struct GaussianExpansion {
  double bi_diffuson = 0.0;
  double bi_cooperon = 0.0;
  double mixed = 0.0;  // the six diffuson/cooperon cross terms
  double total() const { return bi_diffuson + bi_cooperon + mixed; }
  double leading() const { return bi_diffuson + bi_cooperon; }
};

/// All eight Gaussian-pairing terms of the coincidence rate, summed
/// explicitly over the mode set q_{a'}.
GaussianExpansion gamma_gaussian_full(double q_a, double q_b, std::span<const double> modes,
                                      const std::function<double(double)>& F);

// ---------------------------------------------------------------------------
// Profile fitting

enum class CbsModel { one_photon, two_photon };

/// Fit of a fixed-detector scan to the double-passage form
///   A {1 + C exp[-(t - peak_center)^2 / (2 w^2)]} exp[-(t - bg_center)^2 / (m s^2)]
/// with m = 4 (two-photon) or m = 2 (one-photon), t the scanning angle.
/// For the two-photon model s is directly comparable to theta0.
struct FitResult {
  double peak_width = 0.0;        // w, Gaussian std of the enhancement
  double background_width = 0.0;  // s
  double peak_center = 0.0;       // static-detector offset
  double background_center = 0.0; // global angular shift of the envelope
  double amplitude = 0.0;         // A
  double contrast = 0.0;          // C; peak enhancement is 1 + C
  Eigen::MatrixXd covariance;     // parameter order as in param_names()
  double residual_norm = 0.0;
  int iterations = 0;

  double enhancement() const { return 1.0 + contrast; }
  static std::vector<std::string> param_names();
  double evaluate(double t, CbsModel model) const;
};

class FitError : public NumericalError {
 public:
  FitError(const std::string& what, FitResult best)
      : NumericalError(what), best_(std::move(best)) {}
  const FitResult& best_iterate() const noexcept { return best_; }

 private:
  FitResult best_;
};

struct FitOptions {
  /// Only bins with |t| <= window are fitted when set.
  std::optional<double> window;
  /// Weight residuals by 1/stderr when available.
  bool use_stderr = false;
};

/// Non-linear least squares fit; at least 8 bins spanning peak and
/// background. Throws FitError on a flat profile or non-convergence.
FitResult fit_cbs_profile(const CbsProfile& profile, CbsModel model,
                          const FitOptions& opts = {});

/// Full width at half maximum above `baseline`, crossings located by a
/// 3-point quadratic interpolation. Throws NumericalError when a crossing is
/// missing.
double fwhm_quadratic(std::span<const double> angle, std::span<const double> value,
                      double baseline);

}  // namespace cbs::analytic
