#include "cbs/rmt.hpp"

#include <Eigen/QR>

#include <cmath>
#include <string>

namespace cbs::rmt {

CMatrix sample_haar_unitary(std::size_t n, std::mt19937_64& eng) {
  if (n == 0) throw ConfigError("sample_haar_unitary: n must be positive");
  const auto m = static_cast<Eigen::Index>(n);
  CMatrix z(m, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i) z(i, j) = complex_normal(eng);
  Eigen::HouseholderQR<CMatrix> qr(z);
  CMatrix q = qr.householderQ();
  const CMatrix& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < m; ++j) {
    const double a = std::abs(r(j, j));
    const cplx ph = a > 0 ? r(j, j) / a : cplx(1.0);
    q.col(j) *= ph;
  }
  return q;
}

CMatrix build_r_rmt(const CMatrix& u, const std::vector<double>& ev) {
  if (u.rows() != u.cols() || static_cast<std::size_t>(u.rows()) != ev.size())
    throw ConfigError("build_r_rmt: dimension mismatch");
  Eigen::VectorXd s(u.rows());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double e = ev[static_cast<std::size_t>(i)];
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("build_r_rmt: eigenvalues must lie in [0, 1]");
    s(i) = std::sqrt(e);
  }
  return u.conjugate() * s.asDiagonal() * u.adjoint();
}

long long weingarten_coefficient(int c) {
  if (c < 1) throw ConfigError("weingarten_coefficient: cycle length must be positive");
  // Catalan number C_{c-1} with sign (-1)^{c-1}.
  long long cat = 1;
  for (int i = 0; i < c - 1; ++i) cat = cat * 2 * (2 * i + 1) / (i + 2);
  return (c % 2 == 1) ? cat : -cat;
}

double weingarten_asymptotic(const CycleType& ct, double n) {
  double w = 1.0;
  for (int c : ct) w *= static_cast<double>(weingarten_coefficient(c)) * std::pow(n, -(2 * c - 1));
  return w;
}

Traces Traces::of(const std::vector<double>& r) {
  Traces t;
  t.n = static_cast<double>(r.size());
  for (double x : r) {
    t.tr += x;
    t.tr2 += x * x;
  }
  return t;
}

namespace {
double d1(bool diag) { return diag ? 2.0 : 1.0; }
}  // namespace

double predicted_gamma(const Traces& t, bool diagonal) {
  const double n3 = t.n * t.n * t.n, n4 = n3 * t.n, T2 = t.tr * t.tr;
  return d1(diagonal) * T2 / n3 + d1(diagonal) * t.tr2 / n3 - 2.0 * T2 / n4;
}

GaussianUSplit predicted_gamma_gaussian_u(const Traces& t, bool diagonal) {
  const double n3 = t.n * t.n * t.n, n4 = n3 * t.n, T2 = t.tr * t.tr;
  const double d = diagonal ? 1.0 : 0.0;
  GaussianUSplit s;
  s.gaussian_u = (1 + d) * T2 / n3 + (2 + 4 * d) * T2 / n4 + (1 + d) * t.tr2 / n3;
  s.correction = -4.0 * (1 + d) * T2 / n4;
  return s;
}

double predicted_gamma_gaussian_r(const Traces& t, bool diagonal) {
  const double n3 = t.n * t.n * t.n, n4 = n3 * t.n, T2 = t.tr * t.tr;
  const double d = diagonal ? 1.0 : 0.0;
  return (1 + d) * T2 / n3 + (2 + 4 * d) * T2 / n4;
}

double predicted_rba(const Traces& t, bool diagonal) {
  return d1(diagonal) * (1.0 - 1.0 / t.n) * t.tr / (t.n * t.n);
}

std::vector<double> RmtConfig::eigenvalues() const {
  if (reflection_eigenvalues.empty()) return std::vector<double>(n_modes, 1.0);
  return reflection_eigenvalues;
}

void RmtConfig::validate() const {
  if (n_modes < 2) throw ConfigError("rmt: n_modes must be at least 2");
  if (!reflection_eigenvalues.empty() && reflection_eigenvalues.size() != n_modes)
    throw ConfigError("rmt: reflection_eigenvalues must have n_modes entries");
  for (double e : reflection_eigenvalues)
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("rmt: eigenvalues must lie in [0, 1]");
  if (detector >= n_modes) throw ConfigError("rmt: detector out of range");
}

const char* observable_name(std::size_t i) {
  static const char* names[] = {"gamma_aa",     "gamma_ba",     "r_aa",     "r_ba",
                                "gamma_aa_all", "gamma_ba_all", "r_aa_all", "r_ba_all"};
  if (i >= kRmtObservableCount) throw ConfigError("observable_name: index out of range");
  return names[i];
}

RmtAccumulator run_rmt_acc(const RmtConfig& cfg, std::size_t n_realizations, std::uint64_t first,
                           Exec exec) {
  cfg.validate();
  const auto ev = cfg.eigenvalues();
  const SeedPlan seeds(cfg.seed);
  const auto n = static_cast<Eigen::Index>(cfg.n_modes);
  const auto a = static_cast<Eigen::Index>(cfg.detector);
  const double nd = static_cast<double>(n);

  std::vector<double> modes(cfg.n_modes);
  for (std::size_t b = 0; b < modes.size(); ++b) modes[b] = static_cast<double>(b);
  auto make = [&] {
    std::vector<double> labels(kRmtObservableCount);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<double>(i);
    return RmtAccumulator{EnsembleAccumulator(std::move(labels)), EnsembleAccumulator(modes),
                          EnsembleAccumulator(modes)};
  };
  auto body = [&](std::size_t idx, RmtAccumulator& acc) {
    auto eng = seeds.engine(idx);
    const CMatrix u = sample_haar_unitary(cfg.n_modes, eng);
    const CMatrix r = build_r_rmt(u, ev);
    const CMatrix r2 = r * r;
    const Eigen::MatrixXd g = r2.cwiseAbs2();
    const Eigen::MatrixXd p = r.cwiseAbs2();
    double s[kRmtObservableCount];
    s[kGammaDiag] = g(a, a);
    s[kGammaOff] = (g.col(a).sum() - g(a, a)) / (nd - 1);
    s[kRDiag] = p(a, a);
    s[kROff] = (p.col(a).sum() - p(a, a)) / (nd - 1);
    const double gd = g.diagonal().sum(), pd = p.diagonal().sum();
    s[kGammaAllDiag] = gd / nd;
    s[kGammaAllOff] = (g.sum() - gd) / (nd * (nd - 1));
    s[kRAllDiag] = pd / nd;
    s[kRAllOff] = (p.sum() - pd) / (nd * (nd - 1));
    acc.acc.add(s);
    const Eigen::VectorXd gc = g.col(a), pc = p.col(a);
    acc.row_gamma.add(std::span<const double>(gc.data(), static_cast<std::size_t>(n)));
    acc.row_r.add(std::span<const double>(pc.data(), static_cast<std::size_t>(n)));
  };
  return reduce_realizations<RmtAccumulator>(static_cast<std::size_t>(first), n_realizations, make,
                                             body, exec);
}

RmtResult summarize(const RmtConfig& cfg, const RmtAccumulator& acc) {
  const auto t = Traces::of(cfg.eigenvalues());
  RmtResult res;
  res.n_modes = cfg.n_modes;
  res.n_realizations = acc.acc.count(0);
  for (std::size_t i = 0; i < kRmtObservableCount; ++i) {
    const bool diag = i == kGammaDiag || i == kRDiag || i == kGammaAllDiag || i == kRAllDiag;
    const bool is_r = i == kRDiag || i == kROff || i == kRAllDiag || i == kRAllOff;
    RmtSummaryRow row;
    row.observable = observable_name(i);
    row.mean = acc.acc.mean(i);
    row.stderr_ = acc.acc.stderr_of_mean(i);
    row.prediction = is_r ? predicted_rba(t, diag) : predicted_gamma(t, diag);
    res.rows.push_back(std::move(row));
  }
  res.row_gamma = to_profile(acc.row_gamma);
  res.row_r = to_profile(acc.row_r);
  return res;
}

RmtResult run_rmt_mc(const RmtConfig& cfg, std::size_t n_realizations, Exec exec) {
  return summarize(cfg, run_rmt_acc(cfg, n_realizations, 0, exec));
}

namespace {
double ratio_err(const RmtSummaryRow& x, const RmtSummaryRow& y) {
  const double q = x.mean / y.mean;
  return std::abs(q) * std::hypot(x.stderr_ / x.mean, y.stderr_ / y.mean);
}
}  // namespace

double RmtResult::enhancement() const { return row(kGammaAllDiag).mean / row(kGammaAllOff).mean; }
double RmtResult::enhancement_stderr() const {
  return ratio_err(row(kGammaAllDiag), row(kGammaAllOff));
}
double RmtResult::r_ratio() const { return row(kRAllDiag).mean / row(kRAllOff).mean; }
double RmtResult::r_ratio_stderr() const { return ratio_err(row(kRAllDiag), row(kRAllOff)); }

}  // namespace cbs::rmt
