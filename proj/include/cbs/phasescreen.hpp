#pragma once

// Double-passage model r = V H V: a thin random screen V, free propagation
// to a mirror and back (H), and the screen again. V acts diagonally in real
// space and H diagonally in momentum space; both are applied with FFTs on a
// periodic transverse window.

#include "cbs/core.hpp"
#include "cbs/parallel.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace cbs::phasescreen {

enum class ScreenKind { gaussian, pure_phase };

struct ScreenConfig {
  double k = 0.0;       // wavenumber
  double L = 0.0;       // diffuser-mirror spacing
  double theta0 = 0.0;  // far-field 1/e half-width of one pass
  std::size_t n_points = 0;
  double window = 0.0;  // periodic window width W_x
  ScreenKind kind = ScreenKind::gaussian;
  double phase_sigma = 8.0;  // rms phase of the pure-phase screen (rad)
  std::uint64_t seed = 0;

  /// Window max(16 L theta0, 256 xi0) and the smallest power-of-two grid with
  /// spacing <= xi0/(4 pi).
  static ScreenConfig make(double k, double L, double theta0, std::uint64_t seed);

  double xi0() const;  // lambda / theta0
  double dx() const { return window / static_cast<double>(n_points); }
  double dq() const;
  /// Throws ConfigError on a coarse grid, undersized window or bad values.
  void validate() const;
};

/// Symmetric odd-sized momentum basis: the FFT grid without its Nyquist mode.
ModeBasis screen_basis(const ScreenConfig& cfg);

/// H_q = exp(-i q^2 d / (2k)) on the basis.
std::vector<cplx> fresnel_diagonal(const ModeBasis& basis, double d, double k);

/// Immutable per-config state: FFT plans, propagator and screen filter.
/// Safe to share across threads.
class ScreenPlan {
 public:
  explicit ScreenPlan(const ScreenConfig& cfg);
  ~ScreenPlan();
  ScreenPlan(const ScreenPlan&) = delete;
  ScreenPlan& operator=(const ScreenPlan&) = delete;

  const ScreenConfig& config() const noexcept { return cfg_; }
  const ModeBasis& basis() const noexcept { return basis_; }
  std::size_t n() const noexcept { return cfg_.n_points; }

  /// FFT-order index of basis index i, and back.
  std::size_t fft_index(std::size_t basis_index) const;
  std::optional<std::size_t> basis_index(std::size_t fft_index) const;

  /// Unitary transforms, in and out may alias.
  void forward(const cplx* in, cplx* out) const;
  void backward(const cplx* in, cplx* out) const;

  const std::vector<cplx>& propagator() const noexcept { return h_; }  // FFT order
  const std::vector<double>& screen_filter() const noexcept { return g_; }

 private:
  ScreenConfig cfg_;
  ModeBasis basis_;
  std::vector<cplx> h_;
  std::vector<double> g_;
  double g_norm_ = 1.0;
  void* fwd_ = nullptr;
  void* bwd_ = nullptr;

  friend std::vector<cplx> sample_screen(const ScreenPlan&, std::uint64_t);
};

/// Real-space screen v(rho) for realization `index`.
std::vector<cplx> sample_screen(const ScreenPlan& plan, std::uint64_t index);

/// One realization of r = V H V as a matrix-free operator in FFT order.
class ScreenRealization {
 public:
  ScreenRealization(const ScreenPlan& plan, std::vector<cplx> screen);
  ScreenRealization(const ScreenPlan& plan, std::uint64_t index)
      : ScreenRealization(plan, sample_screen(plan, index)) {}

  /// out = r in, momentum vectors in FFT order.
  void apply_r(const std::vector<cplx>& in, std::vector<cplx>& out) const;
  /// out = V in (the screen alone), momentum vectors in FFT order.
  void apply_v(const std::vector<cplx>& in, std::vector<cplx>& out) const;
  /// r e_m for the FFT-order unit vector m.
  void column(std::size_t fft_m, std::vector<cplx>& out) const;

  const std::vector<cplx>& screen() const noexcept { return v_; }

 private:
  const ScreenPlan* plan_;
  std::vector<cplx> v_;
  mutable std::vector<cplx> work_;
};

/// Dense r over the basis (column by column); checked for reciprocity to 1e-8.
ReflectionMatrix build_reflection(const ScreenPlan& plan, std::uint64_t index);
ReflectionMatrix build_reflection(const ScreenPlan& plan, const ScreenRealization& real);

inline constexpr double kScreenReciprocityTolerance = 1e-8;

struct DoublePassageResult {
  CbsProfile one_photon;  // |r_{b,a}|^2 vs theta_b
  CbsProfile two_photon;  // (2/N)|(r^2)_{b,-a}|^2 vs theta_b
  std::size_t detector_index = 0;
  double detector_angle = 0.0;
};

struct McOptions {
  /// Detector mode; defaults to q = 0.
  std::optional<std::size_t> detector;
  /// Only output angles with |theta_b| <= halfwidth are recorded; default 3 theta0.
  std::optional<double> output_halfwidth;
  Exec exec = Exec::openmp;
  std::uint64_t first_realization = 0;
};

/// Per-realization accumulators over the output bins, exposed for resumable runs.
struct DoublePassageAccumulator {
  EnsembleAccumulator r1p, g2p;
  void merge(const DoublePassageAccumulator& o) {
    r1p.merge(o.r1p);
    g2p.merge(o.g2p);
  }
  bool operator==(const DoublePassageAccumulator&) const = default;
};

DoublePassageAccumulator run_double_passage_acc(const ScreenPlan& plan,
                                                std::size_t n_realizations,
                                                const McOptions& opts = {});
DoublePassageResult run_double_passage_mc(const ScreenPlan& plan, std::size_t n_realizations,
                                          const McOptions& opts = {});

/// Ratio of ensemble means with delta-method standard error.
struct RatioAccumulator {
  std::uint64_t n = 0;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  void add(double x, double y) {
    ++n;
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  void merge(const RatioAccumulator& o) {
    n += o.n;
    sx += o.sx;
    sy += o.sy;
    sxx += o.sxx;
    syy += o.syy;
    sxy += o.sxy;
  }
  double ratio() const { return sx / sy; }
  double ratio_stderr() const;
  bool operator==(const RatioAccumulator&) const = default;
};

/// Gamma at the backscattering point (a = b = 0) against the bi-diffuson
/// level, read on the anti-diagonal theta_a = -theta_b = probe_angle.
RatioAccumulator run_backscatter_point_mc(const ScreenPlan& plan, std::size_t n_realizations,
                                          double probe_angle, Exec exec = Exec::openmp);

}  // namespace cbs::phasescreen
