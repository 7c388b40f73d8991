#include "params.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

namespace cbs::cli {

namespace detail {

namespace {

std::function<std::string(double)> positive() {
  return [](double v) { return v > 0 ? "" : "must be positive"; };
}
std::function<std::string(double)> non_negative() {
  return [](double v) { return v >= 0 ? "" : "must be non-negative"; };
}
std::function<std::string(double)> at_least(double lo) {
  return [lo](double v) {
    return v >= lo ? std::string() : "must be at least " + nlohmann::json(lo).dump();
  };
}
std::function<std::string(double)> open_range(double lo, double hi) {
  return [lo, hi](double v) {
    return v > lo && v < hi ? std::string()
                            : "must lie in (" + nlohmann::json(lo).dump() + ", " +
                                  nlohmann::json(hi).dump() + ")";
  };
}
std::function<std::string(double)> closed_range(double lo, double hi) {
  return [lo, hi](double v) {
    return v >= lo && v <= hi ? std::string()
                              : "must lie in [" + nlohmann::json(lo).dump() + ", " +
                                    nlohmann::json(hi).dump() + "]";
  };
}

const std::map<std::string, std::vector<Param>>& tables() {
  static const std::map<std::string, std::vector<Param>> t = {
      {"lineshape",
       {
           {"ell", Kind::real, 9.5, Unit::length, "transport mean free path", {}, positive()},
           {"dim", Kind::integer, 3, Unit::none, "dimension", {"2", "3"}, {}},
           {"max_angle", Kind::real, nullptr, Unit::angle, "largest angle (default 10/(k ell))", {},
            positive()},
           {"points", Kind::integer, 201, Unit::none, "angles from 0 to max_angle", {}, at_least(2)},
       }},
      {"phasescreen",
       {
           {"L", Kind::real, cm_to_lambda(1.1), Unit::length, "diffuser-mirror spacing", {},
            positive()},
           {"theta0", Kind::real, 4.4, Unit::angle, "one-pass far-field 1/e half-width", {},
            open_range(0, 500)},
           {"kind", Kind::text, "gaussian", Unit::none, "screen statistics",
            {"gaussian", "pure_phase"}, {}},
           {"phase_sigma", Kind::real, 8.0, Unit::none, "rms phase of the pure-phase screen (rad)",
            {}, positive()},
           {"detector", Kind::real, 0.0, Unit::angle, "fixed detector angle", {}, {}},
           {"halfwidth", Kind::real, nullptr, Unit::angle, "recorded angular half-range (default 3 theta0)",
            {}, positive()},
           {"fit_window", Kind::real, nullptr, Unit::angle, "fit half-range (default 2 theta0)", {},
            positive()},
           {"delta_a", Kind::real, 0.0, Unit::angle, "detector a angular resolution", {},
            non_negative()},
           {"delta_b", Kind::real, 0.0, Unit::angle, "detector b angular resolution", {},
            non_negative()},
           {"delta_h", Kind::real, 0.0, Unit::angle, "heralding resolution", {}, non_negative()},
           {"n_points", Kind::integer, nullptr, Unit::none, "transverse grid size (default automatic)",
            {}, at_least(16)},
           {"window", Kind::real, nullptr, Unit::length, "periodic window (default automatic)", {},
            positive()},
       }},
      {"rmt",
       {
           {"N", Kind::integer, 32, Unit::none, "number of modes", {}, at_least(2)},
           {"eigenvalues", Kind::real_list, nullptr, Unit::none,
            "reflection eigenvalues (default all ones)", {}, closed_range(0, 1)},
           {"detector", Kind::integer, 0, Unit::none, "fixed mode a", {}, non_negative()},
       }},
      {"fullwave",
       {
           {"width", Kind::real, nullptr, Unit::length, "periodic width W", {}, positive()},
           {"thickness", Kind::real, nullptr, Unit::length, "slab thickness L", {}, positive()},
           {"diameter", Kind::real, nullptr, Unit::length, "cylinder diameter", {}, positive()},
           {"n_cyl", Kind::real, nullptr, Unit::none, "cylinder refractive index", {}, positive()},
           {"dx", Kind::real, nullptr, Unit::length, "grid step", {}, positive()},
           {"ell", Kind::real, nullptr, Unit::length,
            "target transport mean free path; sets the density", {}, positive()},
           {"density", Kind::real, nullptr, Unit::inverse_area,
            "cylinders per unit area; takes precedence over ell", {}, positive()},
           {"columns", Kind::integer, 29, Unit::none, "incident channels around normal incidence",
            {}, at_least(1)},
           {"background_min", Kind::real, 300.0, Unit::angle, "background window start", {},
            positive()},
           {"background_max", Kind::real, 500.0, Unit::angle, "background window end", {},
            positive()},
       }},
      {"fisher",
       {
           {"ell", Kind::real, 9.5, Unit::length, "true transport mean free path", {}, positive()},
           {"form", Kind::text, "diffusive_2d", Unit::none, "lineshape F(q)",
            {"diffusive_2d", "diffusive_3d", "small_q"}, {}},
           {"n_r", Kind::real, 1e5, Unit::none, "disorder realizations per position", {},
            at_least(1)},
           {"rate", Kind::real, 1e8, Unit::none, "mean count at unit normalised profile", {},
            positive()},
           {"positions", Kind::integer, 10, Unit::none, "detector positions", {}, at_least(1)},
           {"max_ql", Kind::real, 0.025, Unit::none, "largest q ell of the positions", {},
            positive()},
           {"angles", Kind::real_list, nullptr, Unit::angle,
            "explicit detector angles; replace positions/max_ql", {}, positive()},
           {"offset", Kind::real, 1.0, Unit::none, "single-scattering offset s", {},
            closed_range(0, 1)},
           {"bracket_lo", Kind::real, 0.2, Unit::none, "ML search lower factor", {}, positive()},
           {"bracket_hi", Kind::real, 5.0, Unit::none, "ML search upper factor", {}, positive()},
           {"ratio_points", Kind::integer, 200, Unit::none, "points of the ratio-vs-angle curve",
            {}, at_least(2)},
           {"exp_check_screens", Kind::integer, 1000, Unit::none,
            "phase screens for the coincidence-distribution check (0 disables)", {},
            non_negative()},
       }},
      {"reproduce", {}},
  };
  return t;
}

}  // namespace

const std::vector<Param>& params_of(const std::string& command) {
  const auto it = tables().find(command);
  if (it == tables().end()) throw KeyError("command", "unknown command '" + command + "'");
  return it->second;
}

std::uint64_t default_realizations(const std::string& command, const std::string& preset) {
  if (command == "phasescreen") return 10000;
  if (command == "rmt") return 100000;
  if (command == "fullwave") return 100;
  if (command == "fisher") return 1000;
  if (command == "reproduce") {
    if (preset == "fig3-widths") return 10000;
    if (preset == "rmt-levels") return 100000;
    if (preset == "fig4-cones") return 100;
    if (preset == "fisher-ratio") return 1000;
  }
  return 0;
}

}  // namespace detail

using namespace detail;

namespace {

const std::vector<std::string> kGlobalKeys = {"command", "preset", "seed", "realizations",
                                              "workers", "out", "resume", "units"};

std::string suggestion(const std::string& key, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const auto& c : candidates) {
    const auto d = edit_distance(key, c);
    if (d < best_d) best_d = d, best = c;
  }
  if (best.empty() || best_d > std::max<std::size_t>(2, key.size() / 3)) return "";
  return "; did you mean '" + best + "'?";
}

[[noreturn]] void unknown_key(const std::string& key, const std::string& where,
                              const std::vector<std::string>& candidates) {
  throw KeyError(key, "unknown key '" + key + "'" + (where.empty() ? "" : " in " + where) +
                          suggestion(key, candidates));
}

double as_number(const std::string& key, const Json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    std::size_t pos = 0;
    double d = 0;
    try {
      d = std::stod(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == s.size() && !s.empty()) return d;
  }
  throw KeyError(key, key + ": expected a number, got " + v.dump());
}

std::uint64_t as_count(const std::string& key, const Json& v) {
  const double d = as_number(key, v);
  if (!(d >= 0) || d != std::floor(d) || d > 9.007199254740992e15)
    throw KeyError(key, key + ": expected a non-negative integer, got " + v.dump());
  return static_cast<std::uint64_t>(d);
}

bool as_bool(const std::string& key, const Json& v) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
  }
  throw KeyError(key, key + ": expected true or false, got " + v.dump());
}

std::string as_text(const std::string& key, const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  throw KeyError(key, key + ": expected a string, got " + v.dump());
}

struct Units {
  double length = 1.0;  // wavelengths per input length unit
};

Units parse_units(const Json& u) {
  Units out;
  if (u.is_null()) return out;
  if (!u.is_object()) throw KeyError("units", "units: expected a section");
  static const std::vector<std::string> keys = {"length", "wavelength_nm"};
  for (const auto& [k, v] : u.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) unknown_key(k, "units", keys);
  const std::string len = u.contains("length") ? as_text("length", u["length"]) : "lambda";
  static const std::map<std::string, double> metres = {
      {"nm", 1e-9}, {"um", 1e-6}, {"mm", 1e-3}, {"cm", 1e-2}, {"m", 1.0}};
  if (len == "lambda") {
    if (u.contains("wavelength_nm"))
      throw KeyError("wavelength_nm", "wavelength_nm: only meaningful with a physical length unit");
    return out;
  }
  const auto it = metres.find(len);
  if (it == metres.end())
    throw KeyError("length", "length: unit must be one of lambda, nm, um, mm, cm, m");
  if (!u.contains("wavelength_nm"))
    throw KeyError("wavelength_nm", "wavelength_nm: required when units.length is " + len);
  const double wl = as_number("wavelength_nm", u["wavelength_nm"]);
  if (!(wl > 0)) throw KeyError("wavelength_nm", "wavelength_nm must be positive");
  out.length = it->second / (wl * 1e-9);
  return out;
}

Json resolve_param(const std::string& command, const Param& p, const Json& raw, const Units& u) {
  auto check = [&](double v) {
    if (!std::isfinite(v)) throw KeyError(p.key, command + ": " + p.key + " must be finite");
    if (p.check) {
      const auto msg = p.check(v);
      if (!msg.empty()) throw KeyError(p.key, command + ": " + p.key + " " + msg);
    }
  };
  auto scale = [&](double v) {
    switch (p.unit) {
      case Unit::length: return v * u.length;
      case Unit::inverse_area: return v / (u.length * u.length);
      default: return v;
    }
  };
  if (raw.is_null()) return nullptr;
  switch (p.kind) {
    case Kind::real: {
      const double v = as_number(p.key, raw);
      check(v);
      return scale(v);
    }
    case Kind::integer: {
      const double v = as_number(p.key, raw);
      if (v != std::floor(v)) throw KeyError(p.key, command + ": " + p.key + " must be an integer");
      check(v);
      if (!p.choices.empty() &&
          std::find(p.choices.begin(), p.choices.end(), std::to_string(static_cast<long long>(v))) ==
              p.choices.end())
        throw KeyError(p.key, command + ": " + p.key + " must be one of " + Json(p.choices).dump());
      return static_cast<long long>(v);
    }
    case Kind::text: {
      const auto s = as_text(p.key, raw);
      if (!p.choices.empty() && std::find(p.choices.begin(), p.choices.end(), s) == p.choices.end())
        throw KeyError(p.key, command + ": " + p.key + " must be one of " + Json(p.choices).dump());
      return s;
    }
    case Kind::real_list: {
      Json items = raw;
      if (raw.is_string()) {
        items = Json::array();
        const auto s = raw.get<std::string>();
        std::size_t start = 0;
        while (start <= s.size()) {
          const auto end = std::min(s.find(',', start), s.size());
          items.push_back(s.substr(start, end - start));
          start = end + 1;
        }
      }
      if (!items.is_array() || items.empty())
        throw KeyError(p.key, command + ": " + p.key + " expects a non-empty list of numbers");
      Json out = Json::array();
      for (const auto& e : items) {
        const double v = as_number(p.key, e);
        check(v);
        out.push_back(scale(v));
      }
      return out;
    }
  }
  return nullptr;
}

}  // namespace

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> c = {"lineshape", "phasescreen", "rmt",
                                             "fullwave",  "fisher",      "reproduce"};
  return c;
}

std::vector<std::string> preset_names(const std::string& command) {
  if (command == "reproduce") return {"fig3-widths", "rmt-levels", "fig4-cones", "fisher-ratio"};
  if (command == "fullwave") return {"desk", "paper-scale"};
  return {};
}

std::vector<std::string> param_keys(const std::string& command) {
  std::vector<std::string> keys;
  for (const auto& p : params_of(command)) keys.push_back(p.key);
  return keys;
}

Json load_config_file(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw KeyError("config", "config: cannot open " + file.string());
  Json doc;
  try {
    doc = Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw KeyError("config", "config: " + file.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw KeyError("config", "config: top level must be an object");
  if (doc.contains("manifest_version")) {
    if (!doc.contains("config")) throw KeyError("config", "config: manifest without a config");
    return doc["config"];
  }
  return doc;
}

RunConfig parse_config(const std::string& command_arg, const Json& file, const Json& overrides) {
  if (!file.is_null() && !file.is_object()) throw KeyError("config", "config must be an object");

  RunConfig cfg;
  cfg.command = command_arg;
  if (file.contains("command")) {
    const auto c = as_text("command", file["command"]);
    if (cfg.command.empty()) cfg.command = c;
    else if (c != cfg.command)
      throw KeyError("command", "command: config is for '" + c + "', not '" + cfg.command + "'");
  }
  if (cfg.command.empty()) throw KeyError("command", "command: no subcommand given");
  const auto& cmds = command_names();
  if (std::find(cmds.begin(), cmds.end(), cfg.command) == cmds.end())
    unknown_key(cfg.command, "commands", cmds);
  const auto& table = params_of(cfg.command);
  const auto keys = param_keys(cfg.command);

  // merged raw values: file section, then flat file keys, then overrides
  Json raw = Json::object();
  Json global = Json::object();
  std::vector<std::string> top_candidates = kGlobalKeys;
  top_candidates.insert(top_candidates.end(), keys.begin(), keys.end());
  top_candidates.insert(top_candidates.end(), cmds.begin(), cmds.end());

  if (file.is_object()) {
    for (const auto& [k, v] : file.items()) {
      if (std::find(cmds.begin(), cmds.end(), k) != cmds.end()) {
        if (!v.is_object()) throw KeyError(k, k + ": section must be an object");
        const auto section_keys = param_keys(k);
        for (const auto& [sk, sv] : v.items()) {
          if (std::find(section_keys.begin(), section_keys.end(), sk) == section_keys.end())
            unknown_key(sk, "section '" + k + "'", section_keys);
          if (k == cfg.command) raw[sk] = sv;
        }
      } else if (std::find(kGlobalKeys.begin(), kGlobalKeys.end(), k) != kGlobalKeys.end()) {
        global[k] = v;
      } else if (std::find(keys.begin(), keys.end(), k) != keys.end()) {
        raw[k] = v;
      } else {
        unknown_key(k, "", top_candidates);
      }
    }
  }
  if (overrides.is_object()) {
    for (const auto& [k, v] : overrides.items()) {
      if (std::find(kGlobalKeys.begin(), kGlobalKeys.end(), k) != kGlobalKeys.end()) global[k] = v;
      else if (std::find(keys.begin(), keys.end(), k) != keys.end()) raw[k] = v;
      else unknown_key(k, "", top_candidates);
    }
  }

  if (global.contains("seed")) cfg.seed = as_count("seed", global["seed"]);
  if (global.contains("workers")) {
    const auto w = as_count("workers", global["workers"]);
    if (w > 4096) throw KeyError("workers", "workers must be at most 4096");
    cfg.workers = static_cast<int>(w);
  }
  if (global.contains("out")) cfg.out = as_text("out", global["out"]);
  if (global.contains("resume")) cfg.resume = as_bool("resume", global["resume"]);
  if (global.contains("preset") && !global["preset"].is_null())
    cfg.preset = as_text("preset", global["preset"]);

  const auto allowed = preset_names(cfg.command);
  if (!cfg.preset.empty() &&
      std::find(allowed.begin(), allowed.end(), cfg.preset) == allowed.end()) {
    if (allowed.empty())
      throw KeyError("preset", "preset: '" + cfg.command + "' takes no preset");
    throw KeyError("preset", "preset: '" + cfg.preset + "' is not one of " + Json(allowed).dump() +
                                 suggestion(cfg.preset, allowed));
  }
  if (cfg.command == "reproduce" && cfg.preset.empty())
    throw KeyError("preset", "preset: reproduce needs one of " + Json(allowed).dump());

  cfg.realizations = default_realizations(cfg.command, cfg.preset);
  if (global.contains("realizations")) {
    cfg.realizations = as_count("realizations", global["realizations"]);
    if (cfg.realizations == 0 && cfg.command != "lineshape")
      throw KeyError("realizations", "realizations must be at least 1");
  }

  const Units units = parse_units(global.contains("units") ? global["units"] : Json());
  cfg.params = Json::object();
  for (const auto& p : table) {
    const Json v = raw.contains(p.key) ? raw[p.key] : Json();
    cfg.params[p.key] = v.is_null() ? p.def : resolve_param(cfg.command, p, v, units);
  }

  // cross-field constraints
  const auto& q = cfg.params;
  if (cfg.command == "rmt") {
    const auto n = q["N"].get<long long>();
    if (q["detector"].get<long long>() >= n)
      throw KeyError("detector", "rmt: detector must be below N");
    if (q["eigenvalues"].is_array() && static_cast<long long>(q["eigenvalues"].size()) != n)
      throw KeyError("eigenvalues", "rmt: eigenvalues needs exactly N entries");
  }
  if (cfg.command == "fullwave") {
    if (q["columns"].get<long long>() % 2 == 0)
      throw KeyError("columns", "fullwave: columns must be odd");
    if (!(q["background_max"].get<double>() > q["background_min"].get<double>()))
      throw KeyError("background_max", "fullwave: background_max must exceed background_min");
  }
  if (cfg.command == "fisher" &&
      !(q["bracket_hi"].get<double>() > 1 && q["bracket_lo"].get<double>() < 1))
    throw KeyError("bracket_lo", "fisher: the ML bracket must contain the true ell");
  if (cfg.command == "lineshape" && 2 * M_PI * q["ell"].get<double>() <= 1)
    throw KeyError("ell", "lineshape: k ell must exceed 1");
  return cfg;
}

Json RunConfig::snapshot() const {
  Json s = Json::object();
  s["command"] = command;
  s["preset"] = preset.empty() ? Json() : Json(preset);
  s["seed"] = seed;
  s["realizations"] = realizations;
  s["units"] = {{"length", "lambda"}};
  if (!params.empty()) s[command] = params;
  return s;
}

}  // namespace cbs::cli
