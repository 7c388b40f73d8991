#pragma once

#include "cbs/cli.hpp"

#include <functional>
#include <string>
#include <vector>

namespace cbs::cli::detail {

enum class Kind { real, integer, text, real_list };
enum class Unit { none, length, angle, inverse_area };

struct Param {
  std::string key;
  Kind kind = Kind::real;
  Json def;  // null: derived at run time
  Unit unit = Unit::none;
  std::string help;
  std::vector<std::string> choices;
  // empty when the value is acceptable, otherwise the violated constraint
  std::function<std::string(double)> check;
};

const std::vector<Param>& params_of(const std::string& command);

std::uint64_t default_realizations(const std::string& command, const std::string& preset);

inline constexpr double kExperimentWavelengthNm = 808.0;

/// Diffuser-mirror spacing in wavelengths at the experimental wavelength.
inline double cm_to_lambda(double cm) { return cm * 1e-2 / (kExperimentWavelengthNm * 1e-9); }

}  // namespace cbs::cli::detail
