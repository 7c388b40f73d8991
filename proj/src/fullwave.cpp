#include "cbs/fullwave.hpp"

#include "cbs/analytic.hpp"

#include <Eigen/LU>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <unordered_map>

namespace cbs::fullwave {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kCutoffGuard = 1e-9;

bool is_integral(double x) { return std::abs(x - std::round(x)) < 1e-9 * std::max(1.0, x); }
}  // namespace

double SlabSpec::k() const { return 2 * kPi; }
std::size_t SlabSpec::nx() const { return static_cast<std::size_t>(std::llround(width / dx)); }
std::size_t SlabSpec::nz() const { return static_cast<std::size_t>(std::llround(thickness / dx)); }
std::size_t SlabSpec::cylinder_count() const {
  return static_cast<std::size_t>(std::llround(density * width * thickness));
}
double SlabSpec::filling_fraction() const { return density * kPi * diameter * diameter / 4; }

void SlabSpec::validate() const {
  if (!(dx > 0)) throw ConfigError("dx must be positive");
  if (!(width > 0)) throw ConfigError("width must be positive");
  if (!(thickness > 0)) throw ConfigError("thickness must be positive");
  if (!is_integral(width / dx)) throw ConfigError("width / dx must be an integer");
  if (!is_integral(thickness / dx)) throw ConfigError("thickness / dx must be an integer");
  if (!(k() * dx < 1)) throw ConfigError("dx: k dx must be below 1");
  if (!(n_cyl >= 1)) throw ConfigError("n_cyl must be >= 1");
  if (!(density >= 0)) throw ConfigError("density must be non-negative");
  if (density > 0) {
    if (diameter < 2 * dx) throw ConfigError("diameter must be at least 2 dx");
    if (diameter > thickness) throw ConfigError("diameter exceeds thickness");
    if (!(filling_fraction() < 0.5)) throw ConfigError("density: filling fraction must be below 0.5");
  }
}

double SlabSpec::density_for_ell(double ell, double diameter, double n_cyl, double dx) {
  const auto c = grid_cross_section(diameter, n_cyl, dx, 12.0);
  return 1.0 / (ell * c.sigma_sca * (1 - c.g));
}

SlabSpec SlabSpec::desk() {
  SlabSpec s;
  s.width = 150.0;
  s.thickness = 25.0;
  s.diameter = 0.8;
  s.n_cyl = 1.5;
  s.dx = 0.125;
  s.density = density_for_ell(2.5, s.diameter, s.n_cyl, s.dx);
  return s;
}

SlabSpec SlabSpec::paper_scale() {
  SlabSpec s;
  s.width = 700.0;
  s.diameter = 0.8;
  s.n_cyl = 1.5;
  s.dx = 0.1;
  s.density = 0.1 / (kPi * 0.16);
  s.thickness = std::round(56000.0 / (s.density * s.width) / s.dx) * s.dx;
  return s;
}

std::vector<Cylinder> place_cylinders(const SlabSpec& spec, std::uint64_t realization) {
  spec.validate();
  auto eng = SeedPlan(spec.seed).engine(realization);
  std::uniform_real_distribution<double> ux(0.0, spec.width);
  const double rad = spec.diameter / 2;
  std::uniform_real_distribution<double> uz(rad, spec.thickness - rad);
  std::vector<Cylinder> out(spec.cylinder_count());
  for (auto& c : out) {
    c.x = ux(eng);
    c.z = uz(eng);
  }
  return out;
}

Eigen::MatrixXd rasterize_permittivity(const SlabSpec& spec, const std::vector<Cylinder>& cyl,
                                       int sub) {
  spec.validate();
  if (sub < 1) throw ConfigError("rasterize_permittivity: sub must be positive");
  const auto nx = static_cast<long>(spec.nx()), nz = static_cast<long>(spec.nz());
  const double h = spec.dx, rad = spec.diameter / 2, W = spec.width;
  const double half_diag = h * std::sqrt(0.5);
  Eigen::MatrixXd cover = Eigen::MatrixXd::Zero(nz, nx);
  std::unordered_map<long, std::vector<std::size_t>> mixed;

  auto wrap = [W](double d) { return d - W * std::round(d / W); };
  for (std::size_t ci = 0; ci < cyl.size(); ++ci) {
    const auto& c = cyl[ci];
    const long s0 = std::max(0L, static_cast<long>(std::floor((c.z - rad) / h)) - 1);
    const long s1 = std::min(nz - 1, static_cast<long>(std::floor((c.z + rad) / h)) + 1);
    const long j0 = static_cast<long>(std::floor((c.x - rad) / h)) - 1;
    const long j1 = static_cast<long>(std::floor((c.x + rad) / h)) + 1;
    for (long s = s0; s <= s1; ++s) {
      const double zc = (s + 0.5) * h;
      for (long jj = j0; jj <= j1; ++jj) {
        const long j = ((jj % nx) + nx) % nx;
        const double dxp = wrap((j + 0.5) * h - c.x);
        const double d = std::hypot(dxp, zc - c.z);
        if (d <= rad - half_diag) {
          cover(s, j) = 1.0;
        } else if (d < rad + half_diag) {
          mixed[s * nx + j].push_back(ci);
        }
      }
    }
  }
  const double r2 = rad * rad;
  for (const auto& [key, list] : mixed) {
    const long s = key / nx, j = key % nx;
    if (cover(s, j) == 1.0) continue;
    long inside = 0;
    for (int a = 0; a < sub; ++a) {
      const double z = (s + (a + 0.5) / sub) * h;
      for (int b = 0; b < sub; ++b) {
        const double x = (j + (b + 0.5) / sub) * h;
        for (auto ci : list) {
          const double ddx = wrap(x - cyl[ci].x), ddz = z - cyl[ci].z;
          if (ddx * ddx + ddz * ddz <= r2) {
            ++inside;
            break;
          }
        }
      }
    }
    cover(s, j) = static_cast<double>(inside) / (sub * sub);
  }
  const double de = spec.n_cyl * spec.n_cyl - 1.0;
  return (Eigen::MatrixXd::Ones(nz, nx) + de * cover).eval();
}

ModeBasis Channels::basis() const {
  return ModeBasis::from_values(q, 2 * kPi);
}

namespace {

struct Lead {
  std::vector<int> m;       // all orders, column order of F
  std::vector<cplx> mu;     // exp(i kz dx)
  std::vector<std::size_t> prop;  // columns of propagating orders
  CMatrix F;                // F(j, c) = exp(i q_c x_j) / sqrt(M)
};

Lead make_lead(const SlabSpec& spec) {
  const auto M = static_cast<long>(spec.nx());
  const double h = spec.dx, kap = spec.k() * h;
  Lead L;
  L.F.resize(M, M);
  for (long c = 0; c < M; ++c) {
    const int m = static_cast<int>(c - M / 2);
    const double q = 2 * kPi * m / spec.width;
    L.m.push_back(m);
    const double cc = 2.0 - std::cos(q * h) - 0.5 * kap * kap;
    if (std::abs(cc - 1.0) < kCutoffGuard)
      throw NumericalError("lead channel at the propagation cutoff; adjust width or dx");
    if (cc < 1.0) {
      L.mu.emplace_back(cc, std::sqrt(1.0 - cc * cc));
      L.prop.push_back(static_cast<std::size_t>(c));
    } else {
      L.mu.emplace_back(cc - std::sqrt(cc * cc - 1.0), 0.0);
    }
    for (long j = 0; j < M; ++j)
      L.F(j, c) = std::polar(1.0 / std::sqrt(static_cast<double>(M)), q * (j + 0.5) * h);
  }
  return L;
}

}  // namespace

Channels propagating_channels(const SlabSpec& spec) {
  spec.validate();
  const auto lead = make_lead(spec);
  Channels ch;
  for (auto c : lead.prop) {
    ch.m.push_back(lead.m[c]);
    ch.q.push_back(2 * kPi * lead.m[c] / spec.width);
    ch.kz_dx.push_back(std::arg(lead.mu[c]));
  }
  return ch;
}

double Scattering::mean_transmission() const {
  return t.cwiseAbs2().sum() / static_cast<double>(t.cols());
}

Scattering rgf_scattering(const SlabSpec& spec, const Eigen::MatrixXd& eps) {
  spec.validate();
  const auto M = static_cast<Eigen::Index>(spec.nx());
  const auto N = static_cast<Eigen::Index>(spec.nz());
  if (eps.rows() != N || eps.cols() != M) throw ConfigError("rgf_scattering: grid shape mismatch");
  const double kap2 = std::pow(spec.k() * spec.dx, 2);
  const Lead lead = make_lead(spec);
  const auto P = static_cast<Eigen::Index>(lead.prop.size());

  Eigen::VectorXcd mu(M);
  for (Eigen::Index c = 0; c < M; ++c) mu(c) = lead.mu[static_cast<std::size_t>(c)];
  const CMatrix Fh = lead.F.adjoint();
  CMatrix X = lead.F * mu.asDiagonal() * Fh;  // right-lead self-energy

  CMatrix G(P, M);  // propagating rows of F^dagger times the slice product
  for (Eigen::Index p = 0; p < P; ++p) G.row(p) = Fh.row(static_cast<Eigen::Index>(lead.prop[p]));

  CMatrix A(M, M);
  Eigen::PartialPivLU<CMatrix> lu;
  for (Eigen::Index s = N - 1; s >= 0; --s) {
    A = X;
    for (Eigen::Index j = 0; j < M; ++j) {
      A(j, j) += kap2 * eps(s, j) - 4.0;
      A(j, (j + 1) % M) += 1.0;
      A((j + 1) % M, j) += 1.0;
    }
    lu.compute(A);
    X = -lu.inverse();
    G = (G * X).eval();
  }

  const CMatrix Xt = Fh * X * lead.F;
  CMatrix lhs = Xt, rhs(M, P);
  for (Eigen::Index c = 0; c < M; ++c) lhs(c, c) -= 1.0 / mu(c);
  for (Eigen::Index p = 0; p < P; ++p) {
    const auto c = static_cast<Eigen::Index>(lead.prop[p]);
    rhs.col(p) = -Xt.col(c);
    rhs(c, p) += mu(c);
  }
  const CMatrix B = lhs.partialPivLu().solve(rhs);  // M x P reflected amplitudes

  CMatrix psi0 = lead.F * B;
  for (Eigen::Index p = 0; p < P; ++p) psi0.col(p) += lead.F.col(static_cast<Eigen::Index>(lead.prop[p]));
  const CMatrix C = G * psi0;

  Scattering out;
  out.channels = propagating_channels(spec);
  Eigen::VectorXd v(P);
  for (Eigen::Index p = 0; p < P; ++p) v(p) = std::sqrt(mu(static_cast<Eigen::Index>(lead.prop[p])).imag());
  out.r.resize(P, P);
  out.t.resize(P, P);
  for (Eigen::Index a = 0; a < P; ++a) {
    for (Eigen::Index b = 0; b < P; ++b) {
      const auto cb = static_cast<Eigen::Index>(lead.prop[b]);
      out.r(b, a) = v(b) * B(cb, a) / v(a);
      out.t(b, a) = v(b) * mu(cb) * C(b, a) / v(a);
    }
  }
  const Eigen::VectorXd flux = out.r.cwiseAbs2().colwise().sum() + out.t.cwiseAbs2().colwise().sum();
  out.unitarity_defect = (flux.array() - 1.0).abs().maxCoeff();
  out.reciprocity_defect = reciprocity_defect(out.channels.basis(), out.r);
  if (!(out.unitarity_defect <= kUnitarityTolerance))
    throw NumericalError("rgf_scattering: flux not conserved (defect " +
                         std::to_string(out.unitarity_defect) + ")");
  const double rmax = out.r.cwiseAbs().maxCoeff();
  if (!(out.reciprocity_defect <= kFullwaveReciprocityTolerance || out.reciprocity_defect * rmax <= 1e-12))
    throw NumericalError("rgf_scattering: reflection matrix not reciprocal (defect " +
                         std::to_string(out.reciprocity_defect) + ")");
  return out;
}

ReflectionMatrix rgf_reflection(const SlabSpec& spec, const Eigen::MatrixXd& eps) {
  auto s = rgf_scattering(spec, eps);
  // Near-empty media: the relative defect of a round-off-sized matrix means nothing.
  const double tol = s.r.cwiseAbs().maxCoeff() > 1e-6 ? kFullwaveReciprocityTolerance : 1.0;
  return ReflectionMatrix::reciprocal(s.channels.basis(), std::move(s.r), tol);
}

TransportCalibration cylinder_cross_section(double diameter, double n_cyl, double k) {
  if (!(diameter >= 0) || !(n_cyl >= 1) || !(k > 0))
    throw ConfigError("cylinder_cross_section: invalid arguments");
  TransportCalibration out;
  const double x = k * diameter / 2, nx = n_cyl * x;
  if (x == 0.0 || n_cyl == 1.0) return out;
  if (x > 20.0) throw ConfigError("cylinder_cross_section: size parameter above 20");
  const int mmax = static_cast<int>(std::ceil(x)) + 15;
  auto sgn = [](int m) { return (m < 0 && (-m) % 2 == 1) ? -1.0 : 1.0; };
  auto J = [&](int m, double z) { return sgn(m) * std::cyl_bessel_j(std::abs(m), z); };
  auto Y = [&](int m, double z) { return sgn(m) * std::cyl_neumann(std::abs(m), z); };
  std::vector<cplx> b(static_cast<std::size_t>(mmax + 2));
  for (int m = 0; m <= mmax + 1; ++m) {
    const double j = J(m, x), jp = 0.5 * (J(m - 1, x) - J(m + 1, x));
    const double jn = J(m, nx), jnp = 0.5 * (J(m - 1, nx) - J(m + 1, nx));
    const cplx hh(j, Y(m, x));
    const cplx hp(jp, 0.5 * (Y(m - 1, x) - Y(m + 1, x)));
    b[static_cast<std::size_t>(m)] = (n_cyl * jnp * j - jn * jp) / (jn * hp - n_cyl * jnp * hh);
  }
  double s = std::norm(b[0]), c = 0.0;
  for (int m = 1; m <= mmax; ++m) s += 2 * std::norm(b[static_cast<std::size_t>(m)]);
  // sum over all m of Re(b_m conj b_{m+1}); b_{-m} = b_m.
  for (int m = 0; m <= mmax; ++m)
    c += 2 * (b[static_cast<std::size_t>(m)] * std::conj(b[static_cast<std::size_t>(m + 1)])).real();
  const double tail = std::norm(b[static_cast<std::size_t>(mmax)]);
  if (!(tail <= 1e-12 * s)) throw NumericalError("cylinder_cross_section: series not converged");
  out.sigma_sca = 4.0 / k * s;
  out.g = c / s;
  return out;
}

namespace {

TransportCalibration grid_cross_section_cell(double diameter, double n_cyl, double dx, double cell) {
  SlabSpec s;
  s.width = cell;
  s.dx = dx;
  s.diameter = diameter;
  s.n_cyl = n_cyl;
  s.thickness = dx * (std::ceil(diameter / dx) + 4);
  s.validate();
  const std::vector<Cylinder> one = {{cell / 2, s.thickness / 2}};
  const auto full = rgf_scattering(s, rasterize_permittivity(s, one));
  const auto empty = rgf_scattering(s, Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(s.nz()),
                                                             static_cast<Eigen::Index>(s.nx())));
  const auto& ch = full.channels;
  const auto a = static_cast<Eigen::Index>(std::find(ch.m.begin(), ch.m.end(), 0) - ch.m.begin());
  const double k = s.k();
  double tot = 0.0, cosw = 0.0;
  for (Eigen::Index b = 0; b < full.r.rows(); ++b) {
    const double sn = ch.q[static_cast<std::size_t>(b)] / k;
    const double cs = std::abs(sn) < 1 ? std::sqrt(1 - sn * sn) : 0.0;
    const double pr = std::norm(full.r(b, a));
    const double pt = std::norm(full.t(b, a) - empty.t(b, a));
    tot += pr + pt;
    cosw += cs * (pt - pr);
  }
  return {cell * tot, cosw / tot, 0.0};
}

}  // namespace

TransportCalibration grid_cross_section(double diameter, double n_cyl, double dx, double cell) {
  // Images of the cylinder in neighbouring cells couple through a lattice sum
  // that oscillates with k W; eight widths across one wavelength average it out.
  constexpr int kWidths = 8;
  double s = 0, g = 0;
  for (int j = 0; j < kWidths; ++j) {
    const double w = dx * std::round((cell + static_cast<double>(j) / kWidths) / dx);
    const auto c = grid_cross_section_cell(diameter, n_cyl, dx, w);
    s += c.sigma_sca;
    g += c.g;
  }
  return {s / kWidths, g / kWidths, 0.0};
}

double transport_mfp(double rho, double sigma_sca, double g) {
  if (!(rho > 0) || !(sigma_sca > 0) || !(g >= 0 && g < 1))
    throw ConfigError("transport_mfp: need rho > 0, sigma > 0, 0 <= g < 1");
  return 1.0 / (sigma_sca * rho * (1 - g));
}

double diffusive_transmission(double thickness, double ell) {
  return 1.0 / (1.0 + 2.0 / kPi * thickness / ell);
}

double ell_from_transmission(const std::vector<double>& L, const std::vector<double>& T) {
  if (L.size() != T.size() || L.size() < 2) throw ConfigError("ell_from_transmission: need >= 2 points");
  // 1/T - 1 = (2/pi) L / ell, a line through the origin.
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (!(T[i] > 0 && T[i] <= 1)) throw ConfigError("ell_from_transmission: T outside (0, 1]");
    sxy += L[i] * (1.0 / T[i] - 1.0);
    sxx += L[i] * L[i];
  }
  return 2.0 / kPi * sxx / sxy;
}

Scattering simulate_realization(const SlabSpec& spec, std::uint64_t realization) {
  return rgf_scattering(spec, rasterize_permittivity(spec, place_cylinders(spec, realization)));
}

void FullwaveAccumulator::merge(const FullwaveAccumulator& o) {
  r1p.merge(o.r1p);
  g2p.merge(o.g2p);
  trans.merge(o.trans);
  max_unitarity = std::max(max_unitarity, o.max_unitarity);
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw ConfigError("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

std::filesystem::path checkpoint_file(const std::filesystem::path& dir, std::uint64_t i) {
  return dir / ("realization_" + std::to_string(i) + ".cbsm");
}

struct Sample {
  CMatrix r;
  double transmission = 0.0;
  double unitarity = 0.0;
};

Sample obtain(const SlabSpec& spec, std::uint64_t i, const FullwaveOptions& opts,
              std::size_t n_channels) {
  if (opts.checkpoint_dir) {
    const auto file = checkpoint_file(*opts.checkpoint_dir, i);
    if (std::filesystem::exists(file)) {
      auto c = read_checkpoint(file);
      if (c.seed != spec.seed || c.realization != i || c.aux.size() != 2 ||
          static_cast<std::size_t>(c.matrix.rows()) != n_channels ||
          static_cast<std::size_t>(c.matrix.cols()) != n_channels)
        throw ConfigError("checkpoint " + file.string() + " does not match this run");
      return {std::move(c.matrix), c.aux[0], c.aux[1]};
    }
  }
  auto s = simulate_realization(spec, i);
  Sample out{std::move(s.r), s.mean_transmission(), s.unitarity_defect};
  if (opts.checkpoint_dir) {
    Checkpoint c{spec.seed, i, {out.transmission, out.unitarity}, out.r};
    const auto file = checkpoint_file(*opts.checkpoint_dir, i);
    const auto tmp = file.string() + ".tmp";
    write_checkpoint(tmp, c);
    std::filesystem::rename(tmp, file);
  }
  return out;
}

}  // namespace

FullwaveAccumulator run_fullwave_acc(const SlabSpec& spec, std::size_t n_realizations,
                                     const FullwaveOptions& opts) {
  spec.validate();
  const auto ch = propagating_channels(spec);
  const auto P = static_cast<long>(ch.m.size());
  const long c0 = static_cast<long>(std::find(ch.m.begin(), ch.m.end(), 0) - ch.m.begin());
  if (opts.columns % 2 == 0 || opts.columns > ch.m.size())
    throw ConfigError("columns must be odd and at most the number of propagating channels");
  const long half = static_cast<long>(opts.columns / 2);
  const long mmax = ch.m.back();
  const long span = mmax + half;
  const double step = 2 * kPi / spec.width / spec.k();
  if (opts.checkpoint_dir) std::filesystem::create_directories(*opts.checkpoint_dir);

  std::vector<double> labels;
  for (long j = -span; j <= span; ++j) labels.push_back(static_cast<double>(j) * step);
  auto make = [&] {
    return FullwaveAccumulator{EnsembleAccumulator(labels), EnsembleAccumulator(labels),
                               EnsembleAccumulator({0.0}), 0.0};
  };
  auto body = [&](std::size_t i, FullwaveAccumulator& acc) {
    const auto smp = obtain(spec, i, opts, ch.m.size());
    const CMatrix r2 = smp.r * smp.r;
    const double norm = 2.0 / static_cast<double>(P);
    const std::size_t nb = labels.size();
    std::vector<double> s1(nb, 0.0), s2(nb, 0.0);
    std::vector<int> n1(nb, 0), n2(nb, 0);
    for (long a = c0 - half; a <= c0 + half; ++a) {
      const long ma = ch.m[static_cast<std::size_t>(a)];
      const long na = 2 * c0 - a;  // -q_a
      for (long b = 0; b < P; ++b) {
        const long mb = ch.m[static_cast<std::size_t>(b)];
        if (b != a) {
          const auto j = static_cast<std::size_t>(ma + mb + span);
          s1[j] += std::norm(smp.r(b, a));
          ++n1[j];
        }
        if (b != na) {
          const auto j = static_cast<std::size_t>(ma - mb + span);
          s2[j] += norm * std::norm(r2(b, na));
          ++n2[j];
        }
      }
    }
    for (std::size_t j = 0; j < nb; ++j) {
      if (n1[j]) acc.r1p.add_at(j, s1[j] / n1[j]);
      if (n2[j]) acc.g2p.add_at(j, s2[j] / n2[j]);
    }
    acc.trans.add_at(0, smp.transmission);
    acc.max_unitarity = std::max(acc.max_unitarity, smp.unitarity);
  };
  return reduce_realizations<FullwaveAccumulator>(static_cast<std::size_t>(opts.first_realization),
                                                  n_realizations, make, body, opts.exec, 1);
}

FullwaveResult finalize(const FullwaveAccumulator& acc) {
  FullwaveResult res;
  res.one_photon = to_profile(acc.r1p);
  res.two_photon = to_profile(acc.g2p);
  res.n_realizations = acc.trans.count(0);
  if (res.n_realizations > 0) {
    res.mean_transmission = acc.trans.mean(0);
    res.transmission_stderr = acc.trans.stderr_of_mean(0);
  }
  res.max_unitarity_defect = acc.max_unitarity;
  return res;
}

FullwaveResult run_fullwave_cbs(const SlabSpec& spec, std::size_t n_realizations,
                                const FullwaveOptions& opts) {
  return finalize(run_fullwave_acc(spec, n_realizations, opts));
}

namespace {

double background(const CbsProfile& p, const ConeOptions& o) {
  double s = 0;
  int n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = std::abs(p.angle[i]);
    if (a >= o.background_min && a <= o.background_max) {
      s += p.mean[i];
      ++n;
    }
  }
  if (n == 0) throw NumericalError("analyze_cones: no bins in the background window");
  return s / n;
}

CbsProfile scaled(const CbsProfile& p, double f) {
  CbsProfile q = p;
  for (auto& v : q.mean) v /= f;
  for (auto& v : q.stderr_) v /= f;
  return q;
}

double value_at_zero(const CbsProfile& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (std::abs(p.angle[i]) < std::abs(p.angle[best])) best = i;
  return p.mean[best];
}

double fwhm(const CbsProfile& p, double limit) {
  std::vector<double> a, v;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (std::abs(p.angle[i]) <= limit) {
      a.push_back(p.angle[i]);
      v.push_back(p.mean[i]);
    }
  return analytic::fwhm_quadratic(a, v, 1.0);
}

}  // namespace

ConeAnalysis analyze_cones(const FullwaveResult& res, const ConeOptions& opts) {
  if (!(opts.background_min > 0 && opts.background_max > opts.background_min))
    throw ConfigError("analyze_cones: invalid background window");
  ConeAnalysis out;
  out.background_1p = background(res.one_photon, opts);
  out.background_2p = background(res.two_photon, opts);
  out.norm_1p = scaled(res.one_photon, out.background_1p);
  out.norm_2p = scaled(res.two_photon, out.background_2p);
  out.enhancement_1p = value_at_zero(out.norm_1p);
  out.enhancement_2p = value_at_zero(out.norm_2p);
  out.fwhm_1p = fwhm(out.norm_1p, opts.background_min);
  out.fwhm_2p = fwhm(out.norm_2p, opts.background_min);

  std::map<long long, double> r1;
  double step = 0.0;
  for (std::size_t i = 1; i < out.norm_1p.size(); ++i) {
    const double d = out.norm_1p.angle[i] - out.norm_1p.angle[i - 1];
    if (d > 0 && (step == 0.0 || d < step)) step = d;
  }
  for (std::size_t i = 0; i < out.norm_1p.size(); ++i)
    r1[std::llround(out.norm_1p.angle[i] / step)] = out.norm_1p.mean[i];
  std::vector<std::pair<double, double>> pairs;  // (R/R0, Gamma/Gamma0)
  for (std::size_t i = 0; i < out.norm_2p.size(); ++i) {
    if (std::abs(out.norm_2p.angle[i]) > 2 * out.fwhm_1p) continue;
    const auto it = r1.find(std::llround(out.norm_2p.angle[i] / step));
    if (it != r1.end()) pairs.emplace_back(it->second, out.norm_2p.mean[i]);
  }
  if (pairs.empty()) throw NumericalError("analyze_cones: no overlapping bins");
  auto cost = [&](double s) {
    double c = 0;
    for (auto [r, g] : pairs) c += std::pow(g - 1 - (r - s) * (r - s), 2);
    return c;
  };
  const auto m = boost::math::tools::brent_find_minima(cost, 0.0, 2.0, 40);
  out.offset = m.first;
  for (auto [r, g] : pairs)
    out.max_deviation = std::max(out.max_deviation, std::abs(g - 1 - (r - out.offset) * (r - out.offset)));
  return out;
}

void write_checkpoint(const std::filesystem::path& file, const Checkpoint& c) {
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("checkpoint: cannot open " + file.string());
  os.write("CBSM", 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(c.matrix.rows()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(c.matrix.cols()));
  put<std::uint64_t>(os, c.seed);
  put<std::uint64_t>(os, c.realization);
  put<std::uint64_t>(os, c.aux.size());
  for (double a : c.aux) put<double>(os, a);
  for (Eigen::Index i = 0; i < c.matrix.rows(); ++i)
    for (Eigen::Index j = 0; j < c.matrix.cols(); ++j) {
      put<double>(os, c.matrix(i, j).real());
      put<double>(os, c.matrix(i, j).imag());
    }
  if (!os) throw ConfigError("checkpoint: write failed for " + file.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw ConfigError("checkpoint: cannot open " + file.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "CBSM", 4) != 0)
    throw ConfigError("checkpoint: bad magic in " + file.string());
  if (get<std::uint32_t>(is) != kCheckpointVersion)
    throw ConfigError("checkpoint: unsupported version in " + file.string());
  const auto rows = get<std::uint64_t>(is), cols = get<std::uint64_t>(is);
  if (rows > (1u << 20) || cols > (1u << 20)) throw ConfigError("checkpoint: implausible dims");
  Checkpoint c;
  c.seed = get<std::uint64_t>(is);
  c.realization = get<std::uint64_t>(is);
  const auto na = get<std::uint64_t>(is);
  if (na > 1024) throw ConfigError("checkpoint: implausible aux count");
  for (std::uint64_t i = 0; i < na; ++i) c.aux.push_back(get<double>(is));
  c.matrix.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < c.matrix.rows(); ++i)
    for (Eigen::Index j = 0; j < c.matrix.cols(); ++j) {
      const double re = get<double>(is);
      const double im = get<double>(is);
      c.matrix(i, j) = cplx(re, im);
    }
  return c;
}

}  // namespace cbs::fullwave
