// Acceptance run: one PASS/FAIL/SKIP line per criterion.
//
//   acceptance [--only 1,2,...] [--fullwave-checkpoints DIR]
//
// Criterion 7 (desk-scale full-wave ensemble, hours of compute) runs only
// when a checkpoint directory is given; missing realizations are computed
// and written there.

#include "cbs/analytic.hpp"
#include "cbs/cli.hpp"
#include "cbs/core.hpp"
#include "cbs/fisher.hpp"
#include "cbs/fullwave.hpp"
#include "cbs/phasescreen.hpp"
#include "cbs/rmt.hpp"
#include "cylinder_series.hpp"
#include "lineshape_oracle.hpp"
#include "weingarten_enum.hpp"
#include "wick.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace cbs;

namespace {

constexpr double kK = 2 * M_PI;

struct Outcome {
  enum State { pass, fail, skip } state = fail;
  std::vector<std::string> notes;
  void require(bool ok, const std::string& note) {
    notes.push_back((ok ? "ok   " : "FAIL ") + note);
    if (!ok) failed = true;
  }
  void info(const std::string& note) { notes.push_back("     " + note); }
  bool failed = false;
};

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Outcome o;
  std::mt19937_64 eng(20240601);
  for (std::size_t n : {2, 4, 8}) {
    const auto basis = ModeBasis::centered(n, 1.0, 10.0);
    double worst = 0;
    for (int m = 0; m < 200; ++m) {
      CMatrix g(n, n);
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = complex_normal(eng);
      const auto r = ReflectionMatrix::reciprocal(basis, symmetrize_reciprocal(basis, g));
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
          const double x = epr_gamma(r, a, b), y = epr_gamma_oracle(r, a, b);
          worst = std::max(worst, std::abs(x - y) / std::max(std::abs(y), 1e-300));
        }
    }
    o.require(worst <= 1e-12, fmt::format("N = {}: 200 matrices, max relative difference {:.2e}", n, worst));
  }
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion2() {
  Outcome o;
  {
    rmt::RmtConfig cfg;
    cfg.n_modes = 32;
    cfg.seed = 2;
    const auto r = rmt::run_rmt_mc(cfg, 100000);
    const double n = 32;
    const auto& d = r.row(rmt::kGammaDiag);
    const auto& off = r.row(rmt::kGammaOff);
    const double zd = (d.mean - 2 / n) / d.stderr_;
    const double zo = (off.mean - (1 - 1 / n) / n) / off.stderr_;
    o.require(std::abs(zd) <= 3, fmt::format("N = 32: Gamma_aa = {:.6f} +- {:.6f} vs 2/N = {:.6f} (z = {:.2f})",
                                             d.mean, d.stderr_, 2 / n, zd));
    o.require(std::abs(zo) <= 3,
              fmt::format("N = 32: Gamma_b!=a (row average) = {:.6f} +- {:.1e} vs (1-1/N)/N = {:.6f} (z = {:.2f})",
                          off.mean, off.stderr_, (1 - 1 / n) / n, zo));
    const double target = 2 * (1 + 1 / n);
    const double rel = r.enhancement() / target - 1;
    o.require(std::abs(rel) <= 0.02, fmt::format("N = 32: enhancement {:.4f} +- {:.4f} vs 2(1+1/N) = {:.4f} ({:+.2f}%)",
                                                 r.enhancement(), r.enhancement_stderr(), target, 100 * rel));
  }
  for (std::size_t n : {8, 32, 128}) {
    rmt::RmtConfig cfg;
    cfg.n_modes = n;
    cfg.seed = 10 + n;
    const std::size_t reps = n == 128 ? 20000 : 100000;
    const auto r = rmt::run_rmt_mc(cfg, reps);
    o.require(std::abs(r.r_ratio() / 2 - 1) <= 0.01,
              fmt::format("N = {}: R_aa/R_b!=a = {:.4f} +- {:.4f} ({} realizations)", n, r.r_ratio(),
                          r.r_ratio_stderr(), reps));
  }
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion3() {
  Outcome o;
  using Key = std::tuple<int, int, int>;
  for (bool diag : {false, true}) {
    const int d = diag ? 1 : 0;
    std::map<Key, long long> g;
    for (const auto& t : ::oracle::expand_all(diag))
      if (!t.vanishes && t.p == t.pp) g[Key{t.n_power, t.tr_count, t.tr2_count}] += t.coef;
    const long long c1 = g[Key{-3, 2, 0}], c2 = g[Key{-4, 2, 0}], c3 = g[Key{-3, 0, 1}];
    o.require(c1 == 1 + d && c2 == 2 + 4 * d && c3 == 1 + d,
              fmt::format("delta_ab = {}: Gaussian-U coefficients (T^2/N^3, T^2/N^4, t2/N^3) = ({}, {}, {}), "
                          "expected ({}, {}, {})",
                          d, c1, c2, c3, 1 + d, 2 + 4 * d, 1 + d));
    long long corr = 0;
    for (const auto& p : ::oracle::all_perms()) {
      const auto gt = ::oracle::expand_pair(p, p, diag);
      if (gt.vanishes || gt.free_rows != 1) continue;
      for (const auto& pp : ::oracle::all_perms()) {
        const auto t = ::oracle::expand_pair(p, pp, diag);
        if (t.vanishes || t.cycles != std::vector<int>{1, 1, 2} || t.free_rows != 1 || t.tr_count != 2)
          continue;
        corr += t.coef;
      }
    }
    o.require(corr == -4 * (1 + d),
              fmt::format("delta_ab = {}: transposition correction coefficient {}, expected {}", d, corr,
                          -4 * (1 + d)));
    // the library closed form carries the same integers
    const rmt::Traces t{7, 3, 2};
    const auto split = rmt::predicted_gamma_gaussian_u(t, diag);
    const double expect_g = (1 + d) * 9.0 / 343 + (2 + 4 * d) * 9.0 / 2401 + (1 + d) * 2.0 / 343;
    const double expect_c = -4.0 * (1 + d) * 9.0 / 2401;
    o.require(std::abs(split.gaussian_u - expect_g) < 1e-15 && std::abs(split.correction - expect_c) < 1e-15,
              fmt::format("delta_ab = {}: predicted_gamma_gaussian_u matches the enumerated integers", d));
    const auto rest = g[Key{-4, 0, 1}];
    o.info(fmt::format("delta_ab = {}: remaining Gaussian term {} Tr(R^2)/N^4", d, rest));
  }
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion4() {
  Outcome o;
  const double theta0 = 4.4e-3;
  std::uint64_t seed = 40;
  for (double cm : {1.1, 2.5}) {
    const double L = cm * 1e-2 / 808e-9;
    const phasescreen::ScreenPlan plan(phasescreen::ScreenConfig::make(kK, L, theta0, seed++));
    const auto res = phasescreen::run_double_passage_mc(plan, 10000);
    analytic::FitOptions fo;
    fo.window = 2 * theta0;
    const auto f1 = analytic::fit_cbs_profile(res.one_photon, analytic::CbsModel::one_photon, fo);
    const auto f2 = analytic::fit_cbs_profile(res.two_photon, analytic::CbsModel::two_photon, fo);
    const double p1 = 1 / (kK * L * theta0), p2 = 1 / (2 * kK * L * theta0);
    const std::string tag = fmt::format("L = {} cm (k L theta0^2 = {:.2f})", cm, kK * L * theta0 * theta0);
    o.require(std::abs(f2.peak_width / p2 - 1) <= 0.1,
              fmt::format("{}: 2p width {:.3f} mrad vs 1/(2kL theta0) = {:.3f} mrad ({:+.1f}%)", tag,
                          f2.peak_width * 1e3, p2 * 1e3, 100 * (f2.peak_width / p2 - 1)));
    o.require(std::abs(f1.peak_width / p1 - 1) <= 0.1,
              fmt::format("{}: 1p width {:.3f} mrad vs 1/(kL theta0) = {:.3f} mrad ({:+.1f}%)", tag,
                          f1.peak_width * 1e3, p1 * 1e3, 100 * (f1.peak_width / p1 - 1)));
    const double ratio = f2.peak_width / f1.peak_width;
    o.require(std::abs(ratio / 0.5 - 1) <= 0.1, fmt::format("{}: width ratio {:.3f} vs 0.5", tag, ratio));
    o.require(std::abs(f2.enhancement() - 2) <= 0.1,
              fmt::format("{}: 2p enhancement {:.3f} vs 2", tag, f2.enhancement()));
  }
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion5() {
  Outcome o;
  const double theta0 = 4.4e-3, probe = 3.0;
  std::uint64_t seed = 50;
  for (double x : {0.5, 2.0, 10.0}) {
    const double L = x / (kK * theta0 * theta0);
    const phasescreen::ScreenPlan plan(phasescreen::ScreenConfig::make(kK, L, theta0, seed++));
    const auto acc = phasescreen::run_backscatter_point_mc(plan, 4000, probe * theta0);
    const double target = analytic::gamma_zero_angle(x) / 2;
    const double z = (acc.ratio() - target) / acc.ratio_stderr();
    o.require(std::abs(z) <= 3, fmt::format("k L theta0^2 = {}: MC {:.4f} +- {:.4f} vs gamma_zero_angle/2 = {:.4f} "
                                            "(z = {:.1f})",
                                            x, acc.ratio(), acc.ratio_stderr(), target, z));
    const double exact = (cbs::oracle::wick_gamma(0, 0, x) /
                          (0.5 * (cbs::oracle::wick_gamma(probe, -probe, x) + cbs::oracle::wick_gamma(-probe, probe, x))))
                             .real();
    o.info(fmt::format("k L theta0^2 = {}: exact Gaussian pairing average {:.4f}", x, exact));
  }
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion6() {
  Outcome o;
  const double ell = 9.5;
  for (int dim : {2, 3}) {
    const analytic::LineshapeParams p{ell, dim, kK};
    o.require(analytic::f_lineshape(0, p) == 1.0, fmt::format("dim {}: F(0) = {}", dim, analytic::f_lineshape(0, p)));
    const double q = 1e-4 / ell;
    const double slope = (analytic::f_lineshape(q, p) - 1) / q;
    o.require(std::abs(slope / (-2 * ell) - 1) <= 0.05,
              fmt::format("dim {}: small-q slope {:.4f} vs -2 ell = {:.4f}", dim, slope, -2 * ell));
    double worst = 0;
    for (double ql : {0.0, 1e-3, 0.01, 0.1, 0.3, 1.0, 2.0, 5.0, 10.0, 30.0})
      worst = std::max(worst, std::abs(analytic::f_lineshape(ql / ell, p) - cbs::oracle::lineshape(ql / ell, ell, dim)));
    o.require(worst <= 1e-8, fmt::format("dim {}: max |F - independent quadrature| = {:.1e}", dim, worst));
  }
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion7(const std::string& checkpoints) {
  Outcome o;
  if (checkpoints.empty()) {
    o.state = Outcome::skip;
    o.info("opt-in: pass --fullwave-checkpoints DIR (hours of compute without existing checkpoints)");
    return o;
  }
  const auto spec = fullwave::SlabSpec::desk();
  fullwave::FullwaveOptions fo;
  fo.checkpoint_dir = checkpoints;
  const auto res = fullwave::run_fullwave_cbs(spec, 100, fo);
  const auto c = fullwave::analyze_cones(res);
  const auto cal = fullwave::grid_cross_section(spec.diameter, spec.n_cyl, spec.dx, 12.0);
  const double ell = fullwave::transport_mfp(spec.density, cal.sigma_sca, cal.g);
  o.info(fmt::format("desk: W = {} L = {} ell = {:.3f} (lambda), {} cylinders, {} realizations", spec.width,
                     spec.thickness, ell, spec.cylinder_count(), res.n_realizations));
  o.require(c.enhancement_1p >= 1.7 && c.enhancement_1p <= 2.0,
            fmt::format("1p enhancement {:.3f} in [1.7, 2.0]", c.enhancement_1p));
  o.require(c.enhancement_2p >= 1.85 && c.enhancement_2p <= 2.1,
            fmt::format("2p enhancement {:.3f} in [1.85, 2.1]", c.enhancement_2p));
  const double ratio = c.fwhm_2p / c.fwhm_1p;
  o.require(std::abs(ratio - 0.55) <= 0.15,
            fmt::format("FWHM_2p/FWHM_1p = {:.3f} ({:.2f}/(k ell) over {:.2f}/(k ell)) vs 0.55 +- 0.15", ratio,
                        c.fwhm_2p * kK * ell, c.fwhm_1p * kK * ell));
  o.require(c.max_deviation <= 0.1,
            fmt::format("contrast-square max deviation {:.3f} (offset s = {:.3f})", c.max_deviation, c.offset));
  const double t_pred = fullwave::diffusive_transmission(spec.thickness, ell);
  o.require(std::abs(res.mean_transmission / t_pred - 1) <= 0.15,
            fmt::format("mean transmission {:.4f} +- {:.4f} vs [1+(2/pi)L/ell]^-1 = {:.4f} ({:+.1f}%)",
                        res.mean_transmission, res.transmission_stderr, t_pred, 100 * (res.mean_transmission / t_pred - 1)));
  o.info(fmt::format("max unitarity defect {:.1e}", res.max_unitarity_defect));
  return o;
}

// ---------------------------------------------------------------------------

Outcome criterion8() {
  Outcome o;
  const auto s = fullwave::cylinder_cross_section(0.8, 1.5, kK);
  const auto [sig_ff, g_ff] = ::oracle::cylinder_far_field(0.8, 1.5, kK);
  o.require(std::abs(s.sigma_sca / sig_ff - 1) <= 1e-6 && std::abs(s.g - g_ff) <= 1e-6,
            fmt::format("series sigma = {:.6f}, g = {:.6f}; far-field integration {:.6f}, {:.6f}", s.sigma_sca, s.g,
                        sig_ff, g_ff));
  o.require(std::abs(s.sigma_sca / 3.02 - 1) <= 0.05,
            fmt::format("partial-wave sigma_sca = {:.4f} lambda vs 3.02 lambda ({:+.1f}%)", s.sigma_sca,
                        100 * (s.sigma_sca / 3.02 - 1)));
  o.require(std::abs(s.g - 0.825) <= 0.03, fmt::format("g = {:.4f} vs 0.825", s.g));
  const double rho = 0.1 / (M_PI * 0.4 * 0.4);
  const double ell = fullwave::transport_mfp(rho, s.sigma_sca, s.g);
  o.require(std::abs(ell / 9.5 - 1) <= 0.05,
            fmt::format("transport_mfp at 10% filling with the series cross section: {:.3f} lambda vs 9.5 "
                        "({:+.1f}%)",
                        ell, 100 * (ell / 9.5 - 1)));
  o.info(fmt::format("transport_mfp with sigma = 3.02, g = 0.825: {:.3f} lambda",
                     fullwave::transport_mfp(rho, 3.02, 0.825)));
  const auto grid = fullwave::grid_cross_section(0.8, 1.5, 0.1, 12.0);
  o.info(fmt::format("finite-difference cylinder at dx = lambda/10: sigma_sca = {:.4f} lambda, g = {:.4f}",
                     grid.sigma_sca, grid.g));
  return o;
}

// ---------------------------------------------------------------------------

double angle_of_ql(double ql, double ell) { return 2 * std::asin(ql / ell / (2 * kK)); }

Outcome criterion9() {
  Outcome o;
  const double ell = 9.5;
  for (auto [form, name] : {std::pair{fisher::LineshapeForm::diffusive_2d, "diffusive 2D"},
                            std::pair{fisher::LineshapeForm::diffusive_3d, "diffusive 3D"},
                            std::pair{fisher::LineshapeForm::small_q, "small-q"}}) {
    const auto pr = fisher::cbs_profiles(form, kK);
    const std::vector<double> th = {angle_of_ql(1e-5, ell)};
    const double ratio = fisher::fisher_ell_profiles(pr.r, pr.gamma, th, ell, 1.0).ratio();
    o.require(std::abs(ratio - 4) <= 1e-3, fmt::format("{}: Fisher ratio at the centre {:.6f}", name, ratio));
  }

  struct Config {
    std::string name;
    double n_r, rate;
  };
  const std::vector<Config> configs = {
      {"speckle dominated (N_r = 1e5, rate 1e8)", 1e5, 1e8},
      {"mixed (N_r = 1e3, rate 1e3)", 1e3, 1e3},
      {"shot-noise dominated (N_r = 1e6, rate 1e2)", 1e6, 1e2},
  };
  const auto pr = fisher::cbs_profiles(fisher::LineshapeForm::diffusive_2d, kK);
  const std::size_t trials = 1000;
  const double allowance = 1 - 3 * std::sqrt(2.0 / (trials - 1));
  std::uint64_t seed = 90;
  for (const auto& c : configs) {
    fisher::NoiseConfig nc;
    nc.n_r = c.n_r;
    nc.rate = c.rate;
    for (int i = 1; i <= 10; ++i) nc.angles.push_back(angle_of_ql(0.0025 * i, ell));
    double var[2];
    for (auto mode : {fisher::Mode::one_photon, fisher::Mode::two_photon}) {
      fisher::EstimationOptions eo;
      eo.seed = seed++;
      const auto rep = fisher::simulate_estimation(ell, nc, trials, mode, pr, eo);
      const char* m = mode == fisher::Mode::one_photon ? "1p" : "2p";
      const double v = rep.empirical_variance.value_or(NAN);
      var[mode == fisher::Mode::one_photon ? 0 : 1] = v;
      o.require(v >= allowance * rep.crlb[0],
                fmt::format("{} {}: var {:.4g} vs CRLB {:.4g} (ratio {:.3f}, sampling floor {:.3f}), "
                            "mean/ell {:.3f}, {} bracket failures",
                            c.name, m, v, rep.crlb[0], v / rep.crlb[0], allowance,
                            rep.empirical_mean.value_or(NAN) / ell, rep.failures));
    }
    if (c.n_r == 1e5)
      o.require(std::abs(var[0] / var[1] / 4 - 1) <= 0.25,
                fmt::format("{}: var_1p/var_2p = {:.3f} vs 4 +- 25%", c.name, var[0] / var[1]));
    else
      o.info(fmt::format("{}: var_1p/var_2p = {:.3f}", c.name, var[0] / var[1]));
  }
  return o;
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> csv_bytes(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

Outcome criterion10() {
  Outcome o;
  namespace fs = std::filesystem;
  const std::vector<std::pair<std::string, cli::Json>> runs = {
      {"rmt", {{"N", 32}, {"realizations", 20000}, {"seed", 7}}},
      {"phasescreen", {{"realizations", 1000}, {"seed", 3}}},
      {"fisher", {{"realizations", 300}, {"exp_check_screens", 100}}},
      {"reproduce", {{"preset", "rmt-levels"}, {"realizations", 500}, {"seed", 11}}},
      {"fullwave", {{"width", 20}, {"thickness", 5}, {"density", 0.2}, {"columns", 9}, {"realizations", 4}}},
  };
  const auto base = fs::temp_directory_path() / "cbs_acceptance_determinism";
  for (const auto& [cmd, over] : runs) {
    std::vector<std::map<std::string, std::string>> got;
    std::vector<int> workers = {1, 2, 4, 1};
    for (std::size_t i = 0; i < workers.size(); ++i) {
      const auto dir = base / fmt::format("{}_{}", cmd, i);
      fs::remove_all(dir);
      auto ov = over;
      ov["workers"] = workers[i];
      ov["out"] = dir.string();
      cli::run(cli::parse_config(cmd, {}, ov));
      got.push_back(csv_bytes(dir));
      fs::remove_all(dir);
    }
    bool same = true;
    for (const auto& g : got) same = same && g == got[0];
    o.require(same && !got[0].empty(),
              fmt::format("{}: {} CSV files byte-identical across workers 1, 2, 4 and a repeat", cmd,
                          got[0].size()));
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-10"};
  std::vector<int> only;
  std::string checkpoints;
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_option("--fullwave-checkpoints", checkpoints, "checkpoint directory enabling criterion 7");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle equivalence of the EPR correlator", criterion1},
      {"RMT levels", criterion2},
      {"Weingarten bookkeeping", criterion3},
      {"double-passage widths", criterion4},
      {"backscattering-point formula", criterion5},
      {"lineshape checks", criterion6},
      {"full-wave desk scale", [&] { return criterion7(checkpoints); }},
      {"single-scatterer calibration", criterion8},
      {"Fisher factor 4", criterion9},
      {"determinism", criterion10},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  std::vector<std::string> summary;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    if (o.state != Outcome::skip) o.state = o.failed ? Outcome::fail : Outcome::pass;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* word = o.state == Outcome::pass ? "PASS" : o.state == Outcome::fail ? "FAIL" : "SKIP";
    if (o.state == Outcome::fail) ++failures;
    const auto line = fmt::format("criterion {:2}: {}  {} ({:.0f} s)", id, word, criteria[i].first, secs);
    std::cout << line << "\n";
    for (const auto& n : o.notes) std::cout << "      " << n << "\n";
    std::cout.flush();
    summary.push_back(line);
  }
  std::cout << "\nsummary\n";
  for (const auto& l : summary) std::cout << l << "\n";
  return failures == 0 ? 0 : 1;
}
