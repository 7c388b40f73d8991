#include "cbs/cli.hpp"
#include "output.hpp"
#include "params.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

namespace cbs::cli {

ErrorReport describe_current_exception(const std::string& command) {
  ErrorReport r;
  Json err = Json::object();
  err["command"] = command.empty() ? Json() : Json(command);
  try {
    throw;
  } catch (const KeyError& e) {
    r.status = 2;
    err["kind"] = "config";
    err["key"] = e.key();
    err["message"] = e.what();
  } catch (const ConfigError& e) {
    r.status = 2;
    err["kind"] = "config";
    err["message"] = e.what();
  } catch (const NumericalError& e) {
    r.status = 3;
    err["kind"] = "numerical";
    err["message"] = e.what();
    if (!e.diagnostics().empty()) err["diagnostics"] = e.diagnostics();
  } catch (const IoError& e) {
    r.status = 4;
    err["kind"] = "io";
    err["message"] = e.what();
  } catch (const fs::filesystem_error& e) {
    r.status = 4;
    err["kind"] = "io";
    err["message"] = e.what();
  } catch (const std::exception& e) {
    r.status = 1;
    err["kind"] = "internal";
    err["message"] = e.what();
  } catch (...) {
    r.status = 1;
    err["kind"] = "internal";
    err["message"] = "unknown failure";
  }
  r.doc = {{"status", "error"}, {"exit_code", r.status}, {"error", err}};
  return r;
}

int main(int argc, char** argv) {
  CLI::App app{"Coherent backscattering of one- and two-photon light: simulations and analysis",
               "cbs"};
  app.set_version_flag("--version", kVersion);
  std::string config_path, seed, realizations, workers, out, preset, preset_pos;
  bool resume = false, quiet = false;
  app.add_option("--config", config_path, "JSON config file, or a manifest to re-run");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--realizations", realizations, "realizations / trials (e.g. 1e5)");
  app.add_option("--workers", workers, "OpenMP workers; results do not depend on it");
  app.add_option("--out", out, "output directory");
  app.add_option("--preset", preset, "reproduce preset or fullwave geometry preset");
  app.add_flag("--resume", resume, "reuse fullwave checkpoints in <out>/checkpoints");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");
  app.require_subcommand(0, 1);

  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> about = {
      {"lineshape", "diffusive CBS lineshape F(q) and the R, Gamma profiles"},
      {"phasescreen", "double-passage phase-screen Monte Carlo, 1p and 2p cones with fits"},
      {"rmt", "random-matrix ensemble for Gamma_ba and R_ba"},
      {"fullwave", "full-wave 2D slab of dielectric cylinders, cones and transmission"},
      {"fisher", "Fisher information on ell and ML estimation, 1p vs 2p"},
      {"reproduce", "named preset: fig3-widths | rmt-levels | fig4-cones | fisher-ratio"},
  };
  for (const auto& cmd : command_names()) {
    auto* sub = app.add_subcommand(cmd, about.at(cmd));
    sub->fallthrough();
    for (const auto& p : detail::params_of(cmd)) {
      std::string help = p.help;
      if (p.unit == detail::Unit::angle) help += " [mrad]";
      if (p.unit == detail::Unit::length) help += " [length]";
      if (!p.def.is_null()) help += " (default " + p.def.dump() + ")";
      sub->add_option("--" + p.key, values[cmd][p.key], help);
    }
    if (cmd == "reproduce")
      sub->add_option("preset_name", preset_pos, "fig3-widths | rmt-levels | fig4-cones | fisher-ratio");
    subs[cmd] = sub;
  }

  std::string command;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const Json doc = {{"status", "error"},
                      {"exit_code", 2},
                      {"error", {{"command", nullptr}, {"kind", "usage"}, {"message", e.what()}}}};
    std::cout << doc.dump() << std::endl;
    return 2;
  }
  if (quiet) detail::log().set_level(spdlog::level::warn);
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  fs::path out_dir = out;
  try {
    Json overrides = Json::object();
    if (!seed.empty()) overrides["seed"] = seed;
    if (!realizations.empty()) overrides["realizations"] = realizations;
    if (!workers.empty()) overrides["workers"] = workers;
    if (!out.empty()) overrides["out"] = out;
    if (resume) overrides["resume"] = true;
    if (!preset_pos.empty() && !preset.empty() && preset_pos != preset)
      throw KeyError("preset", "preset: given twice with different values");
    if (!preset_pos.empty()) overrides["preset"] = preset_pos;
    else if (!preset.empty()) overrides["preset"] = preset;
    if (!command.empty())
      for (const auto& [key, v] : values[command])
        if (subs[command]->count("--" + key) > 0) overrides[key] = v;

    const Json file = config_path.empty() ? Json() : load_config_file(config_path);
    if (command.empty() && file.is_object() && file.contains("command") && file["command"].is_string())
      command = file["command"].get<std::string>();
    const auto cfg = parse_config(command, file, overrides);
    out_dir = cfg.out;
    command = cfg.command;
    const auto res = run(cfg);
    const Json ok = {{"status", "ok"},
                     {"command", cfg.command},
                     {"out", cfg.out.string()},
                     {"manifest", res.manifest.string()},
                     {"outputs", res.outputs.size()}};
    std::cout << ok.dump() << std::endl;
    return 0;
  } catch (...) {
    const auto rep = describe_current_exception(command);
    std::cout << rep.doc.dump() << std::endl;
    if (!out_dir.empty()) {
      try {
        fs::create_directories(out_dir);
        detail::write_atomic(out_dir / "error.json", rep.doc.dump(2) + "\n");
      } catch (...) {
        detail::log().warn("could not write {}", (out_dir / "error.json").string());
      }
    }
    detail::log().error("{}", rep.doc["error"]["message"].get<std::string>());
    return rep.status;
  }
}

}  // namespace cbs::cli
