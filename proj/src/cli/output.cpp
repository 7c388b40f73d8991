#include "output.hpp"

#include "cbs/parallel.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

namespace cbs::cli {

namespace detail {

spdlog::logger& log() {
  static const std::shared_ptr<spdlog::logger> l = [] {
    auto existing = spdlog::get("cbs");
    if (existing) return existing;
    auto made = spdlog::stderr_color_mt("cbs");
    made->set_pattern("[%H:%M:%S] %^%l%$ %v");
    return made;
  }();
  return *l;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

std::string utc_now() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

void write_atomic(const fs::path& file, const std::string& body) {
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    os << body;
    if (!os.flush()) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + file.string() + ": " + ec.message());
}

Output::Output(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
}

void Output::profile(const std::string& name, const CbsProfile& p, double to_mrad) {
  std::string body = "angle_mrad,value,stderr,n_realizations\n";
  for (std::size_t i = 0; i < p.size(); ++i)
    body += fmt::format("{},{},{},{}\n", format_number(p.angle[i] * to_mrad),
                        format_number(p.mean[i]), format_number(p.stderr_[i]), p.count[i]);
  text(name, body);
  profiles_.push_back(name);
}

void Output::table(const std::string& name, const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& rows) {
  std::string body = fmt::format("{}\n", fmt::join(header, ","));
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw std::logic_error("table row width mismatch in " + name);
    std::vector<std::string> cells;
    for (double v : r) cells.push_back(format_number(v));
    body += fmt::format("{}\n", fmt::join(cells, ","));
  }
  text(name, body);
}

void Output::json(const std::string& name, const Json& doc) { text(name, doc.dump(2) + "\n"); }

void Output::text(const std::string& name, const std::string& body) {
  write_atomic(dir_ / name, body);
  adopt(name);
}

void Output::adopt(const std::string& relative) {
  if (std::find(files_.begin(), files_.end(), relative) == files_.end())
    files_.push_back(relative);
}

void Output::plot_script(const std::string& name) {
  std::string s =
      "# gnuplot " + name + "\n"
      "set datafile separator ','\n"
      "set terminal pngcairo size 900,600\n"
      "set xlabel 'angle (mrad)'\n"
      "set grid\n";
  for (const auto& p : profiles_) {
    const auto stem = fs::path(p).stem().string();
    s += fmt::format(
        "set output '{0}.png'\nset title '{0}' noenhanced\n"
        "plot '{1}' skip 1 using 1:2:3 with yerrorlines pt 7 ps 0.5 notitle\n",
        stem, p);
  }
  text(name, s);
}

void prepare_output_dir(const fs::path& dir) {
  if (!fs::exists(dir)) return;
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " exists and is not a directory");
  std::set<std::string> known = {kManifestName, kCheckpointDir, "error.json"};
  const auto manifest = dir / kManifestName;
  std::vector<std::string> previous;
  if (fs::exists(manifest)) {
    std::ifstream is(manifest);
    try {
      const auto doc = Json::parse(is);
      for (const auto& o : doc.at("outputs")) previous.push_back(o.at("path").get<std::string>());
    } catch (const std::exception& e) {
      throw IoError("unreadable manifest in " + dir.string() + ": " + e.what());
    }
    for (const auto& p : previous) known.insert(fs::path(p).begin()->string());
  }
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (!known.count(name))
      throw IoError("output directory " + dir.string() + " holds '" + name +
                    "', which no previous run wrote; choose an empty directory");
  }
  for (const auto& p : previous)
    if (fs::path(p).begin()->string() != kCheckpointDir) fs::remove(dir / p);
  fs::remove(manifest);
}

void write_manifest(const fs::path& dir, const RunConfig& cfg, const Json& seeds,
                    const std::string& started, const std::vector<std::string>& files) {
  Json m = Json::object();
  m["manifest_version"] = 1;
  m["tool"] = "cbs";
  m["version"] = kVersion;
  m["command"] = cfg.command;
  m["preset"] = cfg.preset.empty() ? Json() : Json(cfg.preset);
  m["config"] = cfg.snapshot();
  m["seeds"] = seeds;
  m["workers"] = cfg.workers > 0 ? cfg.workers : worker_count();
  m["started_utc"] = started;
  m["finished_utc"] = utc_now();
  Json outs = Json::array();
  for (const auto& f : files) {
    const auto path = dir / f;
    outs.push_back({{"path", f}, {"bytes", fs::file_size(path)}, {"sha256", sha256_file(path)}});
  }
  m["outputs"] = outs;
  write_atomic(dir / kManifestName, m.dump(2) + "\n");
}

}  // namespace detail

std::string sha256_file(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("cannot read " + file.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw IoError("sha256: digest initialisation failed");
  std::vector<char> buf(1 << 20);
  while (is) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (is.gcount() > 0)
      EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  for (unsigned i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

std::vector<std::string> verify_manifest(const fs::path& dir) {
  std::vector<std::string> problems;
  std::size_t manifests = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.path().filename() == kManifestName) ++manifests;
  if (manifests != 1) problems.push_back(fmt::format("{} manifests under {}", manifests, dir.string()));
  std::ifstream is(dir / kManifestName);
  if (!is) {
    problems.push_back("no manifest");
    return problems;
  }
  Json doc;
  try {
    doc = Json::parse(is);
  } catch (const std::exception& e) {
    problems.push_back(std::string("manifest is not JSON: ") + e.what());
    return problems;
  }
  for (const auto& o : doc.at("outputs")) {
    const auto rel = o.at("path").get<std::string>();
    const auto path = dir / rel;
    if (!fs::exists(path)) {
      problems.push_back(rel + ": missing");
      continue;
    }
    if (fs::file_size(path) != o.at("bytes").get<std::uintmax_t>())
      problems.push_back(rel + ": size differs");
    if (sha256_file(path) != o.at("sha256").get<std::string>())
      problems.push_back(rel + ": checksum differs");
  }
  return problems;
}

const std::vector<CsvSchema>& csv_schemas() {
  static const std::vector<CsvSchema> s = {
      {"profile", {"angle_mrad", "value", "stderr", "n_realizations"}},
      {"fig3_widths",
       {"L_cm", "width_1p_mrad", "width_2p_mrad", "prediction_1p_mrad", "prediction_2p_mrad",
        "ratio", "enhancement_2p"}},
      {"rmt_levels",
       {"N", "gamma_aa", "gamma_aa_stderr", "gamma_aa_prediction", "gamma_off", "gamma_off_stderr",
        "gamma_off_prediction", "enhancement", "enhancement_stderr", "enhancement_prediction",
        "r_ratio", "r_ratio_stderr"}},
      {"estimates", {"trial", "ell_1p", "ell_2p"}},
  };
  return s;
}

std::string check_csv(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("csv: cannot open " + file.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
  };
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("csv: empty file " + file.string());
  const auto header = split(line);
  const CsvSchema* schema = nullptr;
  for (const auto& s : csv_schemas())
    if (s.columns == header) schema = &s;
  if (!schema) throw ConfigError("csv: unknown header '" + line + "' in " + file.string());
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw ConfigError(fmt::format("csv: {} row {} has {} fields, expected {}", file.string(), row,
                                    cells.size(), header.size()));
    for (const auto& c : cells) {
      if (c == "nan" || c == "inf" || c == "-inf") continue;
      std::size_t pos = 0;
      try {
        std::stod(c, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != c.size() || c.empty())
        throw ConfigError(fmt::format("csv: {} row {} field '{}' is not numeric", file.string(),
                                      row, c));
    }
  }
  return schema->name;
}

}  // namespace cbs::cli
