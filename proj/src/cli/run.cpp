#include "cbs/analytic.hpp"
#include "cbs/cli.hpp"
#include "cbs/fisher.hpp"
#include "cbs/fullwave.hpp"
#include "cbs/parallel.hpp"
#include "cbs/phasescreen.hpp"
#include "cbs/rmt.hpp"
#include "output.hpp"
#include "params.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <optional>

namespace cbs::cli {

using namespace detail;

namespace {

constexpr double kTwoPi = 2 * M_PI;
constexpr double kK = kTwoPi;  // wavenumber in units of 1/lambda

double num(const Json& p, const char* key) { return p.at(key).get<double>(); }
std::optional<double> opt(const Json& p, const char* key) {
  if (p.at(key).is_null()) return std::nullopt;
  return p.at(key).get<double>();
}
std::size_t count(const Json& p, const char* key) {
  return static_cast<std::size_t>(p.at(key).get<long long>());
}

struct Stage {
  Output& out;
  std::string prefix;  // file-name prefix inside a preset
  std::uint64_t seed;
  std::uint64_t realizations;
  Json& seeds;  // manifest seed record
  std::string name;
  std::string file(const std::string& base) const { return prefix + base; }
  void record_seed(const std::string& sub, std::uint64_t s) const {
    seeds["stages"][name + (sub.empty() ? "" : "/" + sub)] = s;
  }
};

// ---------------------------------------------------------------------------

Json lineshape_stage(const Json& p, const Stage& st) {
  const analytic::LineshapeParams lp{num(p, "ell"), static_cast<int>(count(p, "dim")), kK};
  lp.validate();
  const double max_rad = opt(p, "max_angle") ? *opt(p, "max_angle") * 1e-3 : 10 / (kK * lp.ell);
  const std::size_t n = count(p, "points");
  CbsProfile f, r, g;
  for (std::size_t i = 0; i < n; ++i) {
    const double th = max_rad * static_cast<double>(i) / static_cast<double>(n - 1);
    const double v = analytic::f_lineshape(analytic::diffusive_momentum(th, kK), lp);
    for (auto* prof : {&f, &r, &g}) {
      prof->angle.push_back(th);
      prof->stderr_.push_back(0);
      prof->count.push_back(0);
    }
    f.mean.push_back(v);
    r.mean.push_back(1 + v);
    g.mean.push_back(1 + v * v);
  }
  st.out.profile(st.file("lineshape.csv"), f);
  st.out.profile(st.file("r_profile.csv"), r);
  st.out.profile(st.file("gamma_profile.csv"), g);

  const double h = 1e-6 / lp.ell;
  const double slope = (analytic::f_lineshape(h, lp) - 1) / h;
  Json hwhm = nullptr;
  for (std::size_t i = 1; i < n; ++i)
    if (f.mean[i] < 0.5) {
      const double t = (f.mean[i - 1] - 0.5) / (f.mean[i - 1] - f.mean[i]);
      const double th = f.angle[i - 1] + t * (f.angle[i] - f.angle[i - 1]);
      hwhm = {{"mrad", th * 1e3}, {"k_ell", th * kK * lp.ell}};
      break;
    }
  return {{"ell", lp.ell},
          {"dim", lp.dim},
          {"k", kK},
          {"f_at_zero", f.mean.front()},
          {"small_q_slope", slope},
          {"slope_over_minus_2ell", slope / (-2 * lp.ell)},
          {"half_width_at_half_maximum", hwhm},
          {"far_level", f.mean.back()}};
}

// ---------------------------------------------------------------------------

Json fit_json(const CbsProfile& prof, analytic::CbsModel model, double window) {
  try {
    analytic::FitOptions fo;
    fo.window = window;
    const auto fit = analytic::fit_cbs_profile(prof, model, fo);
    return {{"peak_width_mrad", fit.peak_width * 1e3},
            {"peak_width_stderr_mrad", std::sqrt(fit.covariance(0, 0)) * 1e3},
            {"background_width_mrad", fit.background_width * 1e3},
            {"peak_center_mrad", fit.peak_center * 1e3},
            {"enhancement", fit.enhancement()},
            {"enhancement_stderr", std::sqrt(fit.covariance(5, 5))},
            {"iterations", fit.iterations}};
  } catch (const NumericalError& e) {
    return {{"error", e.what()}};
  }
}

Json phasescreen_stage(const Json& p, const Stage& st) {
  const double L = num(p, "L"), theta0 = num(p, "theta0") * 1e-3;
  auto sc = phasescreen::ScreenConfig::make(kK, L, theta0, st.seed);
  sc.kind = p.at("kind") == "pure_phase" ? phasescreen::ScreenKind::pure_phase
                                         : phasescreen::ScreenKind::gaussian;
  sc.phase_sigma = num(p, "phase_sigma");
  if (!p.at("n_points").is_null()) sc.n_points = count(p, "n_points");
  if (opt(p, "window")) sc.window = *opt(p, "window");
  sc.validate();
  st.record_seed("", st.seed);

  analytic::DoublePassageParams dp{kK, L, theta0, num(p, "delta_a") * 1e-3,
                                   num(p, "delta_b") * 1e-3, num(p, "delta_h") * 1e-3};
  dp.validate();

  const phasescreen::ScreenPlan plan(sc);
  phasescreen::McOptions mo;
  mo.detector = plan.basis().nearest(kK * num(p, "detector") * 1e-3);
  if (opt(p, "halfwidth")) mo.output_halfwidth = *opt(p, "halfwidth") * 1e-3;
  log().info("phasescreen {}: {} screens, grid {} over {:.1f} lambda", st.name, st.realizations,
               sc.n_points, sc.window);
  const auto res = phasescreen::run_double_passage_mc(plan, st.realizations, mo);
  st.out.profile(st.file("profile_1p.csv"), res.one_photon);
  st.out.profile(st.file("profile_2p.csv"), res.two_photon);

  const double window = opt(p, "fit_window") ? *opt(p, "fit_window") * 1e-3 : 2 * theta0;
  Json f1 = fit_json(res.one_photon, analytic::CbsModel::one_photon, window);
  Json f2 = fit_json(res.two_photon, analytic::CbsModel::two_photon, window);
  const double w1 = analytic::convolved_width_1p(dp), w2 = analytic::convolved_width_2p(dp);
  Json ratio = nullptr;
  if (f1.contains("peak_width_mrad") && f2.contains("peak_width_mrad"))
    ratio = f2["peak_width_mrad"].get<double>() / f1["peak_width_mrad"].get<double>();
  return {{"L_lambda", L},
          {"theta0_mrad", theta0 * 1e3},
          {"kLtheta0", dp.kLtheta0()},
          {"fresnel_number", dp.fresnel_number()},
          {"grid", {{"n_points", sc.n_points}, {"window_lambda", sc.window}, {"dx_lambda", sc.dx()}}},
          {"detector_mrad", res.detector_angle * 1e3},
          {"fit_window_mrad", window * 1e3},
          {"fit_1p", f1},
          {"fit_2p", f2},
          {"width_ratio", ratio},
          {"prediction",
           {{"width_1p_mrad", w1 * 1e3}, {"width_2p_mrad", w2 * 1e3}, {"ratio", w2 / w1}}}};
}

// ---------------------------------------------------------------------------

CbsProfile mode_angles(CbsProfile p, std::size_t n) {
  for (auto& a : p.angle) {
    const double s = (2 * a + 1 - static_cast<double>(n)) / static_cast<double>(n);
    a = std::asin(s);
  }
  return p;
}

Json rmt_stage(const Json& p, const Stage& st, std::vector<double>* table_row) {
  rmt::RmtConfig rc;
  rc.n_modes = count(p, "N");
  if (p.at("eigenvalues").is_array())
    rc.reflection_eigenvalues = p.at("eigenvalues").get<std::vector<double>>();
  rc.seed = st.seed;
  rc.detector = count(p, "detector");
  rc.validate();
  st.record_seed("", st.seed);
  log().info("rmt {}: N = {}, {} realizations", st.name, rc.n_modes, st.realizations);
  const auto acc = rmt::run_rmt_acc(rc, st.realizations, 0, Exec::openmp);
  const auto r = rmt::summarize(rc, acc);
  st.out.profile(st.file("gamma_row.csv"), mode_angles(r.row_gamma, rc.n_modes));
  st.out.profile(st.file("r_row.csv"), mode_angles(r.row_r, rc.n_modes));

  const auto t = rmt::Traces::of(rc.eigenvalues());
  const double enh_pred = rmt::predicted_gamma(t, true) / rmt::predicted_gamma(t, false);
  Json rows = Json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"observable", row.observable},
                    {"mean", row.mean},
                    {"stderr", row.stderr_},
                    {"prediction", row.prediction},
                    {"z", row.stderr_ > 0 ? Json((row.mean - row.prediction) / row.stderr_) : Json()}});
  if (table_row) {
    const auto& d = r.row(rmt::kGammaDiag);
    const auto& o = r.row(rmt::kGammaOff);
    *table_row = {static_cast<double>(rc.n_modes), d.mean, d.stderr_, d.prediction, o.mean,
                  o.stderr_, o.prediction, r.enhancement(), r.enhancement_stderr(), enh_pred,
                  r.r_ratio(), r.r_ratio_stderr()};
  }
  return {{"N", rc.n_modes},
          {"detector", rc.detector},
          {"realizations", r.n_realizations},
          {"observables", rows},
          {"enhancement", r.enhancement()},
          {"enhancement_stderr", r.enhancement_stderr()},
          {"enhancement_prediction", enh_pred},
          {"r_ratio", r.r_ratio()},
          {"r_ratio_stderr", r.r_ratio_stderr()}};
}

// ---------------------------------------------------------------------------

constexpr std::size_t kFullwaveBlock = 10;

Json fullwave_stage(const Json& p, const std::string& preset, bool resume, const Stage& st) {
  auto spec = preset == "paper-scale" ? fullwave::SlabSpec::paper_scale()
                                      : fullwave::SlabSpec::desk();
  if (opt(p, "width")) spec.width = *opt(p, "width");
  if (opt(p, "thickness")) spec.thickness = *opt(p, "thickness");
  if (opt(p, "diameter")) spec.diameter = *opt(p, "diameter");
  if (opt(p, "n_cyl")) spec.n_cyl = *opt(p, "n_cyl");
  if (opt(p, "dx")) spec.dx = *opt(p, "dx");
  if (opt(p, "density")) spec.density = *opt(p, "density");
  else if (opt(p, "ell"))
    spec.density =
        fullwave::SlabSpec::density_for_ell(*opt(p, "ell"), spec.diameter, spec.n_cyl, spec.dx);
  spec.seed = st.seed;
  spec.validate();
  st.record_seed("", st.seed);

  const fs::path ckpt = st.out.dir() / kCheckpointDir;
  if (!resume && fs::exists(ckpt) && !fs::is_empty(ckpt))
    throw KeyError("resume", "fullwave: checkpoints already exist in " + ckpt.string() +
                                 "; pass --resume to reuse them");

  const auto cal = fullwave::grid_cross_section(spec.diameter, spec.n_cyl, spec.dx, 12.0);
  const double ell = fullwave::transport_mfp(spec.density, cal.sigma_sca, cal.g);
  log().info("fullwave {}: W = {} L = {} lambda, {} cylinders (filling {:.3f}), ell = {:.3f}, "
               "grid {} x {}",
               st.name, spec.width, spec.thickness, spec.cylinder_count(),
               spec.filling_fraction(), ell, spec.nx(), spec.nz());
  if (spec.width < 60 * ell)
    log().warn("fullwave: W = {:.1f} lambda is below 60 ell = {:.1f} lambda", spec.width, 60 * ell);

  fullwave::FullwaveOptions fo;
  fo.columns = count(p, "columns");
  fo.checkpoint_dir = ckpt;
  std::optional<fullwave::FullwaveAccumulator> total;
  for (std::size_t first = 0; first < st.realizations; first += kFullwaveBlock) {
    fo.first_realization = first;
    const std::size_t n = std::min<std::size_t>(kFullwaveBlock, st.realizations - first);
    auto acc = fullwave::run_fullwave_acc(spec, n, fo);
    if (total) total->merge(acc);
    else total = std::move(acc);
    log().info("fullwave {}: {}/{} realizations", st.name, first + n, st.realizations);
  }
  for (std::size_t i = 0; i < st.realizations; ++i)
    st.out.adopt(std::string(kCheckpointDir) + "/realization_" + std::to_string(i) + ".cbsm");

  const auto res = fullwave::finalize(*total);
  st.out.profile(st.file("profile_1p.csv"), res.one_photon);
  st.out.profile(st.file("profile_2p.csv"), res.two_photon);

  Json cones;
  try {
    const auto c = fullwave::analyze_cones(
        res, {num(p, "background_min") * 1e-3, num(p, "background_max") * 1e-3});
    st.out.profile(st.file("normalized_1p.csv"), c.norm_1p);
    st.out.profile(st.file("normalized_2p.csv"), c.norm_2p);
    cones = {{"background_1p", c.background_1p},
             {"background_2p", c.background_2p},
             {"enhancement_1p", c.enhancement_1p},
             {"enhancement_2p", c.enhancement_2p},
             {"fwhm_1p_mrad", c.fwhm_1p * 1e3},
             {"fwhm_2p_mrad", c.fwhm_2p * 1e3},
             {"fwhm_1p_k_ell", c.fwhm_1p * kK * ell},
             {"fwhm_2p_k_ell", c.fwhm_2p * kK * ell},
             {"fwhm_ratio", c.fwhm_2p / c.fwhm_1p},
             {"offset", c.offset},
             {"max_deviation", c.max_deviation}};
  } catch (const NumericalError& e) {
    cones = {{"error", e.what()}};
  }
  const double t_pred = fullwave::diffusive_transmission(spec.thickness, ell);
  return {{"geometry",
           {{"width", spec.width},
            {"thickness", spec.thickness},
            {"diameter", spec.diameter},
            {"n_cyl", spec.n_cyl},
            {"dx", spec.dx},
            {"density", spec.density},
            {"cylinders", spec.cylinder_count()},
            {"filling_fraction", spec.filling_fraction()},
            {"nx", spec.nx()},
            {"nz", spec.nz()}}},
          {"calibration", {{"sigma_sca", cal.sigma_sca}, {"g", cal.g}, {"ell", ell}}},
          {"realizations", res.n_realizations},
          {"max_unitarity_defect", res.max_unitarity_defect},
          {"transmission",
           {{"mean", res.mean_transmission},
            {"stderr", res.transmission_stderr},
            {"diffusion_prediction", t_pred},
            {"relative_deviation", res.mean_transmission / t_pred - 1}}},
          {"cones", cones}};
}

// ---------------------------------------------------------------------------

fisher::LineshapeForm parse_form(const std::string& s) {
  if (s == "diffusive_3d") return fisher::LineshapeForm::diffusive_3d;
  if (s == "small_q") return fisher::LineshapeForm::small_q;
  return fisher::LineshapeForm::diffusive_2d;
}

double angle_of_ql(double ql, double ell) { return 2 * std::asin(ql / ell / (2 * kK)); }

double centre_ratio(fisher::LineshapeForm form, double ell, double offset) {
  const auto pr = fisher::cbs_profiles(form, kK, offset);
  const std::vector<double> th = {angle_of_ql(1e-5, ell)};
  return fisher::fisher_ell_profiles(pr.r, pr.gamma, th, ell, 1.0).ratio();
}

Json coincidence_check(std::size_t screens, std::uint64_t seed) {
  const double theta0 = 4.4e-3;
  const auto sc = phasescreen::ScreenConfig::make(kK, cm_to_lambda(1.1), theta0, seed);
  const phasescreen::ScreenPlan plan(sc);
  const auto& basis = plan.basis();
  const std::size_t a = basis.nearest(0.0);
  const std::size_t in = plan.fft_index(basis.negate(a));
  const std::size_t b = basis.nearest(kK * theta0 / 2);
  const std::size_t out = plan.fft_index(b);
  const double n = static_cast<double>(basis.size());
  std::vector<double> samples(screens);
  const auto ns = static_cast<std::int64_t>(screens);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < ns; ++i) {
    const phasescreen::ScreenRealization real(plan, static_cast<std::uint64_t>(i));
    std::vector<cplx> e(plan.n()), t1(plan.n()), t2(plan.n());
    e[in] = 1;
    real.apply_r(e, t1);
    real.apply_r(t1, t2);
    samples[static_cast<std::size_t>(i)] = 2 / n * std::norm(t2[out]);
  }
  const auto ks = fisher::exponential_check(samples);
  return {{"screens", screens},
          {"angle_b_mrad", basis.q(b) / kK * 1e3},
          {"ks", ks.ks},
          {"scaled_ks", ks.scaled_ks}};
}

Json fisher_stage(const Json& p, const Stage& st) {
  const double ell = num(p, "ell");
  const auto form = parse_form(p.at("form").get<std::string>());
  const double offset = num(p, "offset");
  fisher::NoiseConfig nc;
  nc.n_r = num(p, "n_r");
  nc.rate = num(p, "rate");
  if (p.at("angles").is_array()) {
    for (double a : p.at("angles").get<std::vector<double>>()) nc.angles.push_back(a * 1e-3);
  } else {
    const std::size_t m = count(p, "positions");
    for (std::size_t i = 1; i <= m; ++i)
      nc.angles.push_back(
          angle_of_ql(num(p, "max_ql") * static_cast<double>(i) / static_cast<double>(m), ell));
  }
  nc.validate();
  const auto prof = fisher::cbs_profiles(form, kK, offset);

  const SeedPlan plan(st.seed);
  fisher::EstimationOptions eo;
  eo.bracket_lo = num(p, "bracket_lo");
  eo.bracket_hi = num(p, "bracket_hi");
  Json modes = Json::object();
  std::vector<fisher::FisherReport> reps;
  for (auto [mode, label, stage] : {std::tuple{fisher::Mode::one_photon, "1p", 1ull},
                                    std::tuple{fisher::Mode::two_photon, "2p", 2ull}}) {
    eo.seed = plan.derive(stage).master();
    st.record_seed(label, eo.seed);
    log().info("fisher {}: {} ML trials ({})", st.name, st.realizations, label);
    reps.push_back(fisher::simulate_estimation(ell, nc, st.realizations, mode, prof, eo));
    const auto& r = reps.back();
    modes[label] = {{"fisher", r.fisher(0, 0)},
                    {"crlb", r.crlb[0]},
                    {"empirical_mean", r.empirical_mean ? Json(*r.empirical_mean) : Json()},
                    {"empirical_variance", r.empirical_variance ? Json(*r.empirical_variance) : Json()},
                    {"variance_over_crlb",
                     r.empirical_variance ? Json(*r.empirical_variance / r.crlb[0]) : Json()},
                    {"trials", r.trials},
                    {"failures", r.failures}};
  }
  std::vector<std::vector<double>> est;
  for (std::size_t i = 0; i < st.realizations; ++i)
    est.push_back({static_cast<double>(i), reps[0].estimates[i], reps[1].estimates[i]});
  st.out.table(st.file("estimates.csv"), {"trial", "ell_1p", "ell_2p"}, est);

  // ratio along the cone, single position at a time
  const std::size_t np = count(p, "ratio_points");
  CbsProfile ratio, closed;
  for (std::size_t i = 0; i < np; ++i) {
    const double ql = 1e-3 + (3.0 - 1e-3) * static_cast<double>(i) / static_cast<double>(np - 1);
    const double th = angle_of_ql(ql, ell);
    const std::vector<double> one = {th};
    const double x = 1 / prof.f(th, ell);
    for (auto* c : {&ratio, &closed}) {
      c->angle.push_back(th);
      c->stderr_.push_back(0);
      c->count.push_back(0);
    }
    ratio.mean.push_back(fisher::fisher_ell_profiles(prof.r, prof.gamma, one, ell, 1.0).ratio());
    closed.mean.push_back(fisher::fisher_ratio(x));
  }
  st.out.profile(st.file("fisher_ratio_profile.csv"), ratio);
  st.out.profile(st.file("fisher_ratio_closed_form.csv"), closed);

  const auto fe = fisher::fisher_ell_profiles(prof.r, prof.gamma, nc.angles, ell, nc.n_r);
  Json v1 = modes["1p"]["empirical_variance"], v2 = modes["2p"]["empirical_variance"];
  Json out = {{"ell", ell},
              {"form", p.at("form")},
              {"offset", offset},
              {"n_r", nc.n_r},
              {"rate", nc.rate},
              {"angles_mrad", Json::array()},
              {"speckle_limit", {{"f_1p", fe.f_1p}, {"f_2p", fe.f_2p}, {"ratio", fe.ratio()},
                                 {"max_fd_error", fe.max_fd_error}}},
              {"estimation", modes},
              {"variance_ratio_1p_over_2p",
               v1.is_null() || v2.is_null() ? Json() : Json(v1.get<double>() / v2.get<double>())},
              {"crlb_ratio_1p_over_2p", reps[0].crlb[0] / reps[1].crlb[0]},
              {"centre_ratio",
               {{"offset_1", centre_ratio(form, ell, 1.0)},
                {"offset_0.94", centre_ratio(form, ell, 0.94)},
                {"configured_offset", centre_ratio(form, ell, offset)}}}};
  for (double a : nc.angles) out["angles_mrad"].push_back(a * 1e3);

  const std::size_t screens = count(p, "exp_check_screens");
  if (screens > 0) {
    const auto seed = plan.derive(3).master();
    st.record_seed("coincidence_check", seed);
    out["coincidence_distribution"] = coincidence_check(screens, seed);
  }
  return out;
}

// ---------------------------------------------------------------------------

Json defaults(const std::string& command) {
  Json p = Json::object();
  for (const auto& prm : params_of(command)) p[prm.key] = prm.def;
  return p;
}

Json reproduce(const RunConfig& cfg, Output& out, Json& seeds) {
  const SeedPlan plan(cfg.seed);
  auto stage = [&](std::string name, std::string prefix, std::uint64_t seed) {
    return Stage{out, std::move(prefix), seed, cfg.realizations, seeds, std::move(name)};
  };
  Json res = Json::object();
  if (cfg.preset == "fig3-widths") {
    std::vector<std::vector<double>> table;
    std::uint64_t i = 0;
    for (double cm : {1.1, 2.5}) {
      auto p = defaults("phasescreen");
      p["L"] = cm_to_lambda(cm);
      const std::string name = fmt::format("L{}cm", cm);
      const auto s = phasescreen_stage(p, stage(name, name + "_", plan.derive(i++).master()));
      res[name] = s;
      auto get = [&](const Json& fit) {
        return fit.contains("peak_width_mrad") ? fit["peak_width_mrad"].get<double>() : NAN;
      };
      const double w1 = get(s["fit_1p"]), w2 = get(s["fit_2p"]);
      const double e2 = s["fit_2p"].contains("enhancement") ? s["fit_2p"]["enhancement"].get<double>()
                                                            : NAN;
      table.push_back({cm, w1, w2, s["prediction"]["width_1p_mrad"].get<double>(),
                       s["prediction"]["width_2p_mrad"].get<double>(), w2 / w1, e2});
    }
    out.table("fig3_widths.csv",
              {"L_cm", "width_1p_mrad", "width_2p_mrad", "prediction_1p_mrad",
               "prediction_2p_mrad", "ratio", "enhancement_2p"},
              table);
  } else if (cfg.preset == "rmt-levels") {
    std::vector<std::vector<double>> table;
    std::uint64_t i = 0;
    for (long long n : {8, 32, 128}) {
      auto p = defaults("rmt");
      p["N"] = n;
      const std::string name = fmt::format("N{}", n);
      std::vector<double> row;
      res[name] = rmt_stage(p, stage(name, name + "_", plan.derive(i++).master()), &row);
      table.push_back(row);
    }
    out.table("rmt_levels.csv",
              {"N", "gamma_aa", "gamma_aa_stderr", "gamma_aa_prediction", "gamma_off",
               "gamma_off_stderr", "gamma_off_prediction", "enhancement", "enhancement_stderr",
               "enhancement_prediction", "r_ratio", "r_ratio_stderr"},
              table);
  } else if (cfg.preset == "fig4-cones") {
    res["desk"] = fullwave_stage(defaults("fullwave"), "desk", cfg.resume, stage("desk", "", cfg.seed));
  } else if (cfg.preset == "fisher-ratio") {
    res["estimator"] = fisher_stage(defaults("fisher"), stage("estimator", "", cfg.seed));
    Json centre = Json::object();
    for (const char* f : {"diffusive_2d", "diffusive_3d", "small_q"})
      centre[f] = centre_ratio(parse_form(f), 9.5, 1.0);
    res["centre_ratio_by_form"] = centre;
    res["closed_form"] = {{"x_1", fisher::fisher_ratio(1)}, {"x_2", fisher::fisher_ratio(2)}};
  }
  return res;
}

Json dispatch(const RunConfig& cfg, Output& out, Json& seeds) {
  const Stage st{out, "", cfg.seed, cfg.realizations, seeds, cfg.command};
  if (cfg.command == "lineshape") return lineshape_stage(cfg.params, st);
  if (cfg.command == "phasescreen") return phasescreen_stage(cfg.params, st);
  if (cfg.command == "rmt") return rmt_stage(cfg.params, st, nullptr);
  if (cfg.command == "fullwave") return fullwave_stage(cfg.params, cfg.preset, cfg.resume, st);
  if (cfg.command == "fisher") return fisher_stage(cfg.params, st);
  return reproduce(cfg, out, seeds);
}

}  // namespace

RunResult run(const RunConfig& cfg) {
  if (cfg.workers > 0) set_worker_count(cfg.workers);
  const auto started = utc_now();
  prepare_output_dir(cfg.out);
  Output out(cfg.out);
  Json seeds = {{"master", cfg.seed}, {"stages", Json::object()}};

  Json summary = Json::object();
  summary["command"] = cfg.command;
  summary["preset"] = cfg.preset.empty() ? Json() : Json(cfg.preset);
  summary["seed"] = cfg.seed;
  summary["realizations"] = cfg.realizations;
  summary["results"] = dispatch(cfg, out, seeds);
  out.json("summary.json", summary);
  out.plot_script();
  fs::remove(cfg.out / "error.json");
  write_manifest(cfg.out, cfg, seeds, started, out.files());
  log().info("wrote {} files and {}", out.files().size(), (cfg.out / kManifestName).string());
  return {cfg.out / kManifestName, out.files(), summary};
}

}  // namespace cbs::cli
