#pragma once

#include "cbs/cli.hpp"

#include <spdlog/spdlog.h>

#include <string>
#include <vector>

namespace cbs::cli::detail {

/// Writes artifacts into one directory, each file atomically (tmp + rename),
/// and remembers them for the manifest.
class Output {
 public:
  explicit Output(fs::path dir);

  const fs::path& dir() const noexcept { return dir_; }
  const std::vector<std::string>& files() const noexcept { return files_; }

  /// angle_mrad, value, stderr, n_realizations; labels times `to_mrad`.
  void profile(const std::string& name, const CbsProfile& p, double to_mrad = 1e3);
  void table(const std::string& name, const std::vector<std::string>& header,
             const std::vector<std::vector<double>>& rows);
  void json(const std::string& name, const Json& doc);
  void text(const std::string& name, const std::string& body);
  /// Registers a file written by someone else (e.g. checkpoints).
  void adopt(const std::string& relative);

  /// gnuplot script rendering every profile CSV to PNG.
  void plot_script(const std::string& name = "plot.gp");

 private:
  fs::path dir_;
  std::vector<std::string> files_;
  std::vector<std::string> profiles_;
};

/// Progress logger writing to stderr.
spdlog::logger& log();

std::string format_number(double v);
std::string utc_now();

/// Writes text to `file` through a temporary sibling and a rename.
void write_atomic(const fs::path& file, const std::string& body);

/// Refuses directories holding anything but a previous manifest, its
/// outputs, checkpoints and error.json; removes a previous run's outputs.
void prepare_output_dir(const fs::path& dir);

void write_manifest(const fs::path& dir, const RunConfig& cfg, const Json& seeds,
                    const std::string& started, const std::vector<std::string>& files);

}  // namespace cbs::cli::detail
