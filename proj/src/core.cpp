#include "cbs/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cbs {

ModeBasis ModeBasis::centered(std::size_t n, double dq, double k) {
  if (n == 0) throw ConfigError("mode basis: n_modes must be positive");
  if (!(dq > 0.0)) throw ConfigError("mode basis: dq must be positive");
  if (!(k > 0.0)) throw ConfigError("mode basis: k must be positive");
  std::vector<double> q(n);
  const double mid = 0.5 * static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) q[i] = (static_cast<double>(i) - mid) * dq;
  return ModeBasis(std::move(q), dq, k);
}

ModeBasis ModeBasis::from_values(std::vector<double> q, double k) {
  if (q.empty()) throw ConfigError("mode basis: empty grid");
  if (!(k > 0.0)) throw ConfigError("mode basis: k must be positive");
  const std::size_t n = q.size();
  double dq = 0.0;
  if (n > 1) {
    dq = (q.back() - q.front()) / static_cast<double>(n - 1);
    const double tol = 1e-9 * std::max(dq, std::abs(q.back()));
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (!(q[i + 1] > q[i])) throw ConfigError("mode basis: q values not strictly increasing");
      if (std::abs((q[i + 1] - q[i]) - dq) > tol)
        throw ConfigError("mode basis: q values not uniformly spaced");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(q[i] + q[n - 1 - i]) > tol)
        throw ConfigError("mode basis: grid not symmetric about q = 0");
    }
  } else if (q[0] != 0.0) {
    throw ConfigError("mode basis: single-point grid must be q = 0");
  }
  return ModeBasis(std::move(q), dq, k);
}

std::size_t ModeBasis::negate(std::size_t i) const {
  if (i >= q_.size()) throw ConfigError("mode index out of range");
  return q_.size() - 1 - i;
}

std::size_t ModeBasis::nearest(double q) const {
  const auto it = std::lower_bound(q_.begin(), q_.end(), q);
  if (it == q_.begin()) return 0;
  if (it == q_.end()) return q_.size() - 1;
  const auto j = static_cast<std::size_t>(it - q_.begin());
  return (q - q_[j - 1] <= q_[j] - q) ? j - 1 : j;
}

double reciprocity_defect(const ModeBasis& basis, const CMatrix& m) {
  const auto n = static_cast<Eigen::Index>(basis.size());
  if (m.rows() != n || m.cols() != n) throw ConfigError("matrix size does not match basis");
  const double scale = m.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      // (q_i, q_j) -> (-q_j, -q_i)
      worst = std::max(worst, std::abs(m(i, j) - m(n - 1 - j, n - 1 - i)));
    }
  }
  return worst / scale;
}

CMatrix symmetrize_reciprocal(const ModeBasis& basis, const CMatrix& m) {
  const auto n = static_cast<Eigen::Index>(basis.size());
  if (m.rows() != n || m.cols() != n) throw ConfigError("matrix size does not match basis");
  // The index reversal J maps q to -q, so the reverse-transpose is J m^T J.
  CMatrix rt = m.transpose().colwise().reverse().rowwise().reverse();
  return 0.5 * (m + rt);
}

ReflectionMatrix::ReflectionMatrix(ModeBasis basis, CMatrix entries)
    : basis_(std::move(basis)), r_(std::move(entries)) {
  const auto n = static_cast<Eigen::Index>(basis_.size());
  if (r_.rows() != n || r_.cols() != n)
    throw ConfigError("reflection matrix size does not match its basis");
}

ReflectionMatrix ReflectionMatrix::reciprocal(ModeBasis basis, CMatrix entries,
                                              double rel_tol) {
  ReflectionMatrix r(std::move(basis), std::move(entries));
  const double defect = reciprocity_defect(r.basis_, r.r_);
  if (!(defect <= rel_tol)) {
    std::ostringstream os;
    os << "reciprocity defect " << defect << " exceeds tolerance " << rel_tol;
    throw NumericalError("reflection matrix is not reciprocal", os.str());
  }
  r.reciprocal_ = true;
  return r;
}

double epr_gamma(const ReflectionMatrix& r, std::size_t a, std::size_t b) {
  if (!r.is_reciprocal())
    throw ConfigError("epr_gamma requires a reciprocity-validated reflection matrix");
  const std::size_t n = r.size();
  if (a >= n || b >= n) throw ConfigError("mode index out of range");
  const auto minus_a = static_cast<Eigen::Index>(r.basis().negate(a));
  // (r^2)_{b,-a} = sum_i r_{b,i} r_{i,-a}. Eigen's dot() conjugates its first
  // argument, hence the plain row * column product.
  const cplx elem = (r.entries().row(static_cast<Eigen::Index>(b)) *
                     r.entries().col(minus_a))(0, 0);
  return 2.0 / static_cast<double>(n) * std::norm(elem);
}

double epr_gamma_oracle(const ReflectionMatrix& r, std::size_t a, std::size_t b) {
  const std::size_t n = r.size();
  if (n > kOracleMaxModes) throw ConfigError("epr_gamma_oracle: N too large for brute force");
  if (a >= n || b >= n) throw ConfigError("mode index out of range");
  const ModeBasis& basis = r.basis();
  auto delta = [](std::size_t x, std::size_t y) { return x == y ? 1.0 : 0.0; };
  cplx amp = 0.0;
  for (std::size_t ap = 0; ap < n; ++ap) {
    for (std::size_t bp = 0; bp < n; ++bp) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t mi = basis.negate(i);
        // <0| c_a' c_b' c+_i c+_{-i} |0> by Wick contraction of bosonic modes.
        const double elem = delta(ap, i) * delta(bp, mi) + delta(ap, mi) * delta(bp, i);
        if (elem == 0.0) continue;
        amp += r(a, ap) * r(b, bp) * elem;
      }
    }
  }
  return std::norm(amp) / (2.0 * static_cast<double>(n));
}

EnsembleAccumulator::EnsembleAccumulator(std::vector<double> labels)
    : labels_(std::move(labels)),
      count_(labels_.size(), 0),
      sum_(labels_.size(), 0.0),
      sumsq_(labels_.size(), 0.0) {}

void EnsembleAccumulator::add(std::span<const double> samples) {
  if (samples.size() != labels_.size())
    throw ConfigError("accumulate_profile: bin count mismatch");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    count_[i] += 1;
    sum_[i] += samples[i];
    sumsq_[i] += samples[i] * samples[i];
  }
}

void EnsembleAccumulator::add_at(std::size_t bin, double value) {
  if (bin >= labels_.size()) throw ConfigError("accumulator bin out of range");
  count_[bin] += 1;
  sum_[bin] += value;
  sumsq_[bin] += value * value;
}

void EnsembleAccumulator::merge(const EnsembleAccumulator& other) {
  if (other.labels_ != labels_) throw ConfigError("merge: accumulator bins differ");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    count_[i] += other.count_[i];
    sum_[i] += other.sum_[i];
    sumsq_[i] += other.sumsq_[i];
  }
}

double EnsembleAccumulator::mean(std::size_t bin) const {
  const auto c = count_.at(bin);
  return c == 0 ? 0.0 : sum_[bin] / static_cast<double>(c);
}

double EnsembleAccumulator::stderr_of_mean(std::size_t bin) const {
  const auto c = count_.at(bin);
  if (c == 0) return 0.0;
  const double n = static_cast<double>(c);
  const double m = sum_[bin] / n;
  const double var = std::max(0.0, sumsq_[bin] / n - m * m);
  return std::sqrt(var / std::max(n - 1.0, 1.0));
}

CbsProfile to_profile(const EnsembleAccumulator& acc) {
  CbsProfile p;
  for (std::size_t i = 0; i < acc.bins(); ++i) {
    if (acc.count(i) == 0) continue;
    p.angle.push_back(acc.labels()[i]);
    p.mean.push_back(acc.mean(i));
    p.stderr_.push_back(acc.stderr_of_mean(i));
    p.count.push_back(acc.count(i));
  }
  return p;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t SeedPlan::stream_seed(std::uint64_t index) const noexcept {
  return splitmix64(splitmix64(master_) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

}  // namespace cbs
