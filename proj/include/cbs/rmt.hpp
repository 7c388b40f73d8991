#pragma once

// Random-matrix model of a reciprocal waveguide reflection matrix,
// r = U* sqrt(R) U^dagger with U Haar distributed, and the large-N
// Weingarten predictions for the coincidence rate and mean reflection.

#include "cbs/core.hpp"
#include "cbs/parallel.hpp"

#include <random>
#include <vector>

namespace cbs::rmt {

/// Haar unitary from the QR decomposition of a complex Ginibre matrix, with
/// the phases of R's diagonal moved into Q.
CMatrix sample_haar_unitary(std::size_t n, std::mt19937_64& eng);

/// r = conj(U) diag(sqrt R) U^dagger; symmetric by construction.
CMatrix build_r_rmt(const CMatrix& u, const std::vector<double>& reflection_eigenvalues);

/// Cycle type of a permutation of four elements, e.g. {1,1,2}.
using CycleType = std::vector<int>;

/// Large-N Weingarten weight, prod_j V_{c_j} with
/// V_c = (-1)^{c-1} (2c-2)! / (c (c-1)!^2) N^{-(2c-1)}.
double weingarten_asymptotic(const CycleType& ct, double n);

/// Integer prefactor of V_c, i.e. V_c N^{2c-1}.
long long weingarten_coefficient(int c);

struct Traces {
  double n = 0;     // N
  double tr = 0;    // Tr R
  double tr2 = 0;   // Tr R^2
  static Traces of(const std::vector<double>& r);
  static Traces identity(std::size_t n) {
    return {static_cast<double>(n), static_cast<double>(n), static_cast<double>(n)};
  }
};

/// (1+d) T^2/N^3 + (1+d) t2/N^3 - 2 T^2/N^4.
double predicted_gamma(const Traces& t, bool diagonal);

struct GaussianUSplit {
  double gaussian_u = 0;  // (1+d) T^2/N^3 + (2+4d) T^2/N^4 + (1+d) t2/N^3
  double correction = 0;  // -4 (1+d) T^2/N^4
  double total() const { return gaussian_u + correction; }
};
GaussianUSplit predicted_gamma_gaussian_u(const Traces& t, bool diagonal);

/// Gaussian-r value (1+d) T^2/N^3 + (2+4d) T^2/N^4.
double predicted_gamma_gaussian_r(const Traces& t, bool diagonal);

/// (1+d)(1 - 1/N) T/N^2.
double predicted_rba(const Traces& t, bool diagonal);

struct RmtConfig {
  std::size_t n_modes = 8;
  std::vector<double> reflection_eigenvalues;  // empty means all ones
  std::uint64_t seed = 0;
  std::size_t detector = 0;  // fixed mode a

  std::vector<double> eigenvalues() const;
  void validate() const;
};

/// Ensemble statistics, each entry a per-realization mean then averaged
/// over realizations. `*_all_diag` averages over every a, `*_all_off` over
/// every b != a; the remaining entries use the fixed detector row.
struct RmtAccumulator {
  EnsembleAccumulator acc;  // bins in the order of RmtObservable
  EnsembleAccumulator row_gamma, row_r;  // |(r^2)_{ba}|^2, |r_ba|^2 over b at the detector a
  void merge(const RmtAccumulator& o) {
    acc.merge(o.acc);
    row_gamma.merge(o.row_gamma);
    row_r.merge(o.row_r);
  }
  bool operator==(const RmtAccumulator&) const = default;
};

enum RmtObservable : std::size_t {
  kGammaDiag = 0,
  kGammaOff,
  kRDiag,
  kROff,
  kGammaAllDiag,
  kGammaAllOff,
  kRAllDiag,
  kRAllOff,
  kRmtObservableCount
};

const char* observable_name(std::size_t i);

struct RmtSummaryRow {
  std::string observable;
  double mean = 0;
  double stderr_ = 0;
  double prediction = 0;
};

struct RmtResult {
  std::size_t n_modes = 0;
  std::uint64_t n_realizations = 0;
  std::vector<RmtSummaryRow> rows;
  CbsProfile row_gamma, row_r;  // angle holds the output mode index b
  double enhancement() const;         // Gamma_aa / Gamma_{b!=a}, all-entries average
  double enhancement_stderr() const;  // first-order propagation
  double r_ratio() const;             // R_aa / R_{b!=a}
  double r_ratio_stderr() const;
  const RmtSummaryRow& row(RmtObservable o) const { return rows.at(o); }
};

RmtAccumulator run_rmt_acc(const RmtConfig& cfg, std::size_t n_realizations,
                           std::uint64_t first = 0, Exec exec = Exec::openmp);
RmtResult summarize(const RmtConfig& cfg, const RmtAccumulator& acc);
RmtResult run_rmt_mc(const RmtConfig& cfg, std::size_t n_realizations, Exec exec = Exec::openmp);

}  // namespace cbs::rmt
