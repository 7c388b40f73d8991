#pragma once

// Two-dimensional scalar Helmholtz scattering from a slab of dielectric
// cylinders. Five-point finite differences on a grid periodic in x; the slab
// is swept slice by slice along z with a recursive Green's function, closed
// on both sides by semi-infinite uniform leads.
//
// Lengths are in units of the vacuum wavelength.

#include "cbs/core.hpp"
#include "cbs/parallel.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cbs::fullwave {

struct SlabSpec {
  double width = 20.0;      // W, periodic
  double thickness = 5.0;   // L
  double diameter = 0.8;    // d
  double n_cyl = 1.5;
  double density = 0.0;     // cylinders per unit area
  double dx = 0.125;
  std::uint64_t seed = 0;

  double k() const;
  std::size_t nx() const;       // transverse grid points
  std::size_t nz() const;       // slices
  std::size_t cylinder_count() const;
  double filling_fraction() const;  // nominal rho * pi (d/2)^2

  /// Throws ConfigError naming the violated constraint.
  void validate() const;

  /// ell ~ 2.5, W = 150, L = 10 ell, dx = 1/8.
  static SlabSpec desk();
  /// W = 700, 56000 cylinders at 10% filling, dx = 1/10.
  static SlabSpec paper_scale();
  /// Density giving transport mean free path `ell`, with the cylinder
  /// calibrated on the grid of step dx.
  static double density_for_ell(double ell, double diameter, double n_cyl, double dx);
};

struct Cylinder {
  double x = 0.0, z = 0.0;
};

/// Uniform centres, x in [0, W), z in [d/2, L - d/2]; overlaps allowed.
std::vector<Cylinder> place_cylinders(const SlabSpec& spec, std::uint64_t realization);

/// Relative permittivity on the grid, nz rows (slices) by nx columns, cell
/// centres at ((j + 1/2) dx, (s + 1/2) dx). Cells cut by a boundary take the
/// area-weighted average, estimated on a `sub` x `sub` subgrid.
Eigen::MatrixXd rasterize_permittivity(const SlabSpec& spec, const std::vector<Cylinder>& cyl,
                                       int sub = 24);

struct Channels {
  std::vector<int> m;        // transverse orders, q = 2 pi m / W
  std::vector<double> q;
  std::vector<double> kz_dx; // Re(kz) dx of the discrete lead dispersion
  ModeBasis basis() const;
};

/// Propagating channels of the discrete uniform lead.
Channels propagating_channels(const SlabSpec& spec);

struct Scattering {
  Channels channels;
  CMatrix r;  // flux-normalised reflection, incident from the left
  CMatrix t;  // flux-normalised transmission
  double unitarity_defect = 0.0;    // max_n |sum_m |r_mn|^2 + |t_mn|^2 - 1|
  double reciprocity_defect = 0.0;  // max |r(q,q') - r(-q',-q)| / max |r|
  double mean_transmission() const;  // Tr(t^dagger t) / N
};

inline constexpr double kUnitarityTolerance = 1e-6;
inline constexpr double kFullwaveReciprocityTolerance = 1e-6;

/// Slice recursion over an arbitrary permittivity grid (nz x nx); throws
/// NumericalError past the unitarity or reciprocity tolerance, or when a
/// channel sits at the propagation cutoff.
Scattering rgf_scattering(const SlabSpec& spec, const Eigen::MatrixXd& eps);

/// Reflection matrix with its reciprocity tag.
ReflectionMatrix rgf_reflection(const SlabSpec& spec, const Eigen::MatrixXd& eps);

struct TransportCalibration {
  double sigma_sca = 0.0;  // length
  double g = 0.0;
  double ell = 0.0;        // set by transport_mfp when a density is known
};

/// Partial-wave series for an infinite dielectric cylinder, field along the
/// axis; orders up to k d / 2 + 15.
TransportCalibration cylinder_cross_section(double diameter, double n_cyl, double k);

/// Single cylinder on the finite-difference grid: scattered flux over the
/// diffraction orders of a periodic cell (the empty-grid transmission is
/// subtracted coherently), averaged over eight cell widths in
/// [cell, cell + 1).
TransportCalibration grid_cross_section(double diameter, double n_cyl, double dx, double cell);

/// [sigma rho (1 - g)]^-1.
double transport_mfp(double rho, double sigma_sca, double g);

/// ell from 1/T = 1 + (2/pi) L / ell, least squares over the given thicknesses.
double ell_from_transmission(const std::vector<double>& thickness,
                             const std::vector<double>& transmission);

/// Diffusion prediction [1 + (2/pi) L / ell]^-1.
double diffusive_transmission(double thickness, double ell);

struct FullwaveOptions {
  /// Incident columns: the `columns` channels closest to normal incidence
  /// (odd count, centred on q = 0).
  std::size_t columns = 29;
  Exec exec = Exec::openmp;
  /// Per-realization reflection dumps; existing files are reused.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::uint64_t first_realization = 0;
};

struct FullwaveAccumulator {
  EnsembleAccumulator r1p, g2p, trans;
  double max_unitarity = 0.0;
  void merge(const FullwaveAccumulator& o);
  bool operator==(const FullwaveAccumulator&) const = default;
};

struct FullwaveResult {
  CbsProfile one_photon;  // |r_{b,a}|^2 vs (q_a + q_b)/k
  CbsProfile two_photon;  // (2/N)|(r^2)_{b,-a}|^2 vs (q_a - q_b)/k
  double mean_transmission = 0.0;
  double transmission_stderr = 0.0;
  std::uint64_t n_realizations = 0;
  double max_unitarity_defect = 0.0;
};

/// One realization: geometry, permittivity and scattering matrices.
Scattering simulate_realization(const SlabSpec& spec, std::uint64_t realization);

FullwaveAccumulator run_fullwave_acc(const SlabSpec& spec, std::size_t n_realizations,
                                     const FullwaveOptions& opts = {});
FullwaveResult finalize(const FullwaveAccumulator& acc);
FullwaveResult run_fullwave_cbs(const SlabSpec& spec, std::size_t n_realizations,
                                const FullwaveOptions& opts = {});

struct ConeOptions {
  double background_min = 0.3;  // rad, relative angle
  double background_max = 0.5;
};

struct ConeAnalysis {
  double background_1p = 0.0;  // R_0
  double background_2p = 0.0;  // Gamma_0
  double enhancement_1p = 0.0;
  double enhancement_2p = 0.0;
  double fwhm_1p = 0.0;  // rad
  double fwhm_2p = 0.0;
  double offset = 0.0;          // s in 1 + (R/R0 - s)^2
  double max_deviation = 0.0;   // over |theta| <= 2 fwhm_1p
  CbsProfile norm_1p, norm_2p;  // profiles divided by their backgrounds
};

ConeAnalysis analyze_cones(const FullwaveResult& res, const ConeOptions& opts = {});

/// Binary checkpoint: "CBSM" magic, u32 version, u64 rows, u64 cols,
/// u64 seed, u64 realization, u64 n_aux, n_aux f64, then rows*cols
/// complex128 row-major. Everything little-endian.
struct Checkpoint {
  std::uint64_t seed = 0;
  std::uint64_t realization = 0;
  std::vector<double> aux;
  CMatrix matrix;
};
void write_checkpoint(const std::filesystem::path& file, const Checkpoint& c);
Checkpoint read_checkpoint(const std::filesystem::path& file);

}  // namespace cbs::fullwave
