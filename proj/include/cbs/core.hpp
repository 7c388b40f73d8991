#pragma once

// Shared vocabulary: transverse mode grids, reflection matrices, the EPR
// two-photon correlator, ensemble statistics and the seed contract used by
// every Monte Carlo driver.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbs {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// Invalid user input or a violated structural precondition.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed to reach its tolerance.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::string diagnostics = {})
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

/// Uniform 1D grid of transverse momenta, symmetric about q = 0.
///
/// Index i and negate(i) label q and -q. The grid is immutable once built.
class ModeBasis {
 public:
  /// n points centred on zero: q_i = (i - (n-1)/2) dq. Odd n contains q = 0.
  static ModeBasis centered(std::size_t n, double dq, double k);
  /// Validates uniform spacing, strict ordering and mirror symmetry.
  static ModeBasis from_values(std::vector<double> q, double k);

  std::size_t size() const noexcept { return q_.size(); }
  double k() const noexcept { return k_; }
  double dq() const noexcept { return dq_; }
  double q(std::size_t i) const { return q_.at(i); }
  const std::vector<double>& values() const noexcept { return q_; }

  /// Index j with q[j] = -q[i].
  std::size_t negate(std::size_t i) const;
  /// Index of the grid point closest to q (ties go to the lower index).
  std::size_t nearest(double q) const;

  bool operator==(const ModeBasis& o) const = default;

 private:
  ModeBasis(std::vector<double> q, double dq, double k)
      : q_(std::move(q)), dq_(dq), k_(k) {}
  std::vector<double> q_;
  double dq_ = 0.0;
  double k_ = 0.0;
};

inline std::size_t negate_index(const ModeBasis& basis, std::size_t i) {
  return basis.negate(i);
}

/// max |m(q,q') - m(-q',-q)| / max |m|, zero for the zero matrix.
double reciprocity_defect(const ModeBasis& basis, const CMatrix& m);

/// (m + reverse-transpose(m)) / 2, where reverse-transpose maps (q,q') to (-q',-q).
CMatrix symmetrize_reciprocal(const ModeBasis& basis, const CMatrix& m);

inline constexpr double kReciprocityTolerance = 1e-10;

/// Complex N x N reflection matrix over a ModeBasis.
class ReflectionMatrix {
 public:
  /// No reciprocity claim.
  ReflectionMatrix(ModeBasis basis, CMatrix entries);

  /// Checks r(q,q') = r(-q',-q) to `rel_tol` and tags the matrix reciprocal.
  /// Throws NumericalError when the check fails.
  static ReflectionMatrix reciprocal(ModeBasis basis, CMatrix entries,
                                     double rel_tol = kReciprocityTolerance);

  const ModeBasis& basis() const noexcept { return basis_; }
  const CMatrix& entries() const noexcept { return r_; }
  std::size_t size() const noexcept { return basis_.size(); }
  bool is_reciprocal() const noexcept { return reciprocal_; }
  cplx operator()(std::size_t out, std::size_t in) const { return r_(out, in); }

 private:
  ModeBasis basis_;
  CMatrix r_;
  bool reciprocal_ = false;
};

/// Two-photon correlator of the EPR state after reflection,
/// (2/N) |(r^2)_{b,-a}|^2. Requires a reciprocal matrix.
double epr_gamma(const ReflectionMatrix& r, std::size_t a, std::size_t b);

/// Brute-force evaluation of the same correlator from the EPR state and the
/// input-output relation, enumerating the vacuum matrix element
/// <0| c_a' c_b' c+_i c+_-i |0> term by term. Limited to N <= 16.
double epr_gamma_oracle(const ReflectionMatrix& r, std::size_t a, std::size_t b);

inline constexpr std::size_t kOracleMaxModes = 16;

/// Per-bin running (count, sum, sum of squares).
class EnsembleAccumulator {
 public:
  EnsembleAccumulator() = default;
  explicit EnsembleAccumulator(std::vector<double> labels);

  std::size_t bins() const noexcept { return labels_.size(); }
  const std::vector<double>& labels() const noexcept { return labels_; }

  /// One sample per bin.
  void add(std::span<const double> samples);
  /// Single sample into one bin.
  void add_at(std::size_t bin, double value);
  /// Element-wise sum of (count, sum, sumsq); labels must match.
  void merge(const EnsembleAccumulator& other);

  std::uint64_t count(std::size_t bin) const { return count_.at(bin); }
  double sum(std::size_t bin) const { return sum_.at(bin); }
  double sumsq(std::size_t bin) const { return sumsq_.at(bin); }
  double mean(std::size_t bin) const;
  double stderr_of_mean(std::size_t bin) const;

  bool operator==(const EnsembleAccumulator& o) const = default;

 private:
  std::vector<double> labels_;
  std::vector<std::uint64_t> count_;
  std::vector<double> sum_;
  std::vector<double> sumsq_;
};

inline EnsembleAccumulator accumulate_profile(EnsembleAccumulator acc,
                                              std::span<const double> samples) {
  acc.add(samples);
  return acc;
}

/// Angle-resolved ensemble statistics ready for output.
struct CbsProfile {
  std::vector<double> angle;  // rad
  std::vector<double> mean;
  std::vector<double> stderr_;
  std::vector<std::uint64_t> count;

  std::size_t size() const noexcept { return angle.size(); }
};

/// Bins with zero samples are dropped.
CbsProfile to_profile(const EnsembleAccumulator& acc);

/// Counter-based stream derivation: stream i depends only on (master, i).
class SeedPlan {
 public:
  explicit SeedPlan(std::uint64_t master_seed = 0) : master_(master_seed) {}
  std::uint64_t master() const noexcept { return master_; }
  std::uint64_t stream_seed(std::uint64_t index) const noexcept;
  std::mt19937_64 engine(std::uint64_t index) const {
    return std::mt19937_64(stream_seed(index));
  }
  /// Independent plan for a sub-stage (e.g. screens vs noise draws).
  SeedPlan derive(std::uint64_t stage) const noexcept {
    return SeedPlan(stream_seed(~stage));
  }

 private:
  std::uint64_t master_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Circular standard complex Gaussian, E|z|^2 = 1.
template <class Engine>
cplx complex_normal(Engine& eng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
  const double re = nd(eng);
  const double im = nd(eng);
  return {re, im};
}

}  // namespace cbs
