#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mitoseg/error.hpp"
#include "mitoseg/grid.hpp"
#include "mitoseg/settings.hpp"

namespace mitoseg {

inline constexpr int kMinThickness = 5;
inline constexpr int kMaxThickness = 500;

/// Run configuration assembled from the command line.
struct RunConfig {
  std::string pattern;
  double psize = 0.0;  // nm/px of the input slices
  int zmin = 0;
  int zmax = 0;
  std::filesystem::path src = ".";
  std::filesystem::path dst = ".";
  std::optional<Rect> roi;
  std::optional<int> phase;
  double valid_threshold = 0.75;
  int thickness = 20;  // FULL already resolved to the range length
  bool thickness_full = false;
  int cores = 1;
  std::optional<std::filesystem::path> settings_file;

  int slice_count() const { return zmax - zmin + 1; }
};

/// Thrown for --help; carries the rendered help text.
struct HelpRequested : Error {
  explicit HelpRequested(const std::string& text) : Error(ExitCode::Success, text) {}
};

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace detail

/// Parse and validate the argument vector (without the program name).
inline RunConfig parse_cli(const std::vector<std::string>& argv) {
  CLI::App app{"Mitochondria boundary segmentation for electron tomography slice stacks", "mitoseg"};
  app.set_help_flag("-h,--help", "Print this help message and exit");

  RunConfig cfg;
  std::vector<int> zrange;
  std::vector<int> roi;
  std::string thick = "20";
  std::string settings_file;
  int phase = 0;

  app.add_option("--pattern", cfg.pattern, "Filename pattern for each slice, C-style (e.g. mito%04d.bmp)")->required();
  app.add_option("--psize", cfg.psize, "Pixel size in nm/px")->required();
  app.add_option("--zrange", zrange, "Range of slice numbers to process (inclusive)")->expected(2)->required();
  app.add_option("--src", cfg.src, "Directory of source images");
  app.add_option("--dst", cfg.dst, "Directory for intermediate and final outputs");
  app.add_option("--roi", roi, "Region of interest: left top width height")->expected(4);
  app.add_option("--phase", phase, "Run only this phase (1, 2 or 3)");
  app.add_option("--valid", cfg.valid_threshold, "Validator threshold in [0, 1]");
  app.add_option("--thick", thick, "Snake thickness in slices (5..500) or 'full'");
  app.add_option("--cores", cfg.cores, "Number of worker threads");
  app.add_option("--settings-file", settings_file, "YAML file overriding algorithm settings");

  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::RequiredError& e) {
    throw UsageError(std::string("missing mandatory argument: ") + e.what());
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  if (!(cfg.psize > 0.0)) throw RangeError("--psize must be > 0");
  cfg.zmin = zrange.at(0);
  cfg.zmax = zrange.at(1);
  if (cfg.zmin > cfg.zmax) throw RangeError("--zrange: zmin must be <= zmax");
  if (cfg.zmin < 0) throw RangeError("--zrange: slice numbers must be >= 0");
  if (!(cfg.valid_threshold >= 0.0 && cfg.valid_threshold <= 1.0)) throw RangeError("--valid must be in [0, 1]");
  if (cfg.cores < 1) throw RangeError("--cores must be >= 1");
  if (app.count("--phase") > 0) {
    if (phase < 1 || phase > 3) throw RangeError("--phase must be 1, 2 or 3");
    cfg.phase = phase;
  }
  if (!roi.empty()) {
    const Rect r{roi[0], roi[1], roi[2], roi[3]};
    if (r.width <= 0 || r.height <= 0) throw RangeError("--roi width and height must be > 0");
    if (r.left < 0 || r.top < 0) throw RangeError("--roi left and top must be >= 0");
    cfg.roi = r;
  }
  if (detail::lower(thick) == "full") {
    cfg.thickness_full = true;
    cfg.thickness = cfg.slice_count();
  } else {
    int t = 0;
    const auto [ptr, ec] = std::from_chars(thick.data(), thick.data() + thick.size(), t);
    if (ec != std::errc{} || ptr != thick.data() + thick.size())
      throw UsageError("--thick expects an integer or 'full', got '" + thick + "'");
    if (t < kMinThickness || t > kMaxThickness)
      throw RangeError("--thick must be between " + std::to_string(kMinThickness) + " and " +
                       std::to_string(kMaxThickness) + " or 'full'");
    cfg.thickness = t;
  }
  if (!settings_file.empty()) cfg.settings_file = settings_file;
  return cfg;
}

/// Substitute `z` into a filename pattern holding exactly one C-style integer
/// conversion (%d, %i, %u with optional flags and width). `%%` is a literal.
inline std::string format_slice_name(const std::string& pattern, int z) {
  std::string out;
  int placeholders = 0;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != '%') {
      out += pattern[i];
      continue;
    }
    if (i + 1 < pattern.size() && pattern[i + 1] == '%') {
      out += '%';
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < pattern.size() && (pattern[j] == '0' || pattern[j] == '-' || pattern[j] == '+' || pattern[j] == ' '))
      ++j;
    while (j < pattern.size() && std::isdigit(static_cast<unsigned char>(pattern[j]))) ++j;
    if (j >= pattern.size() || (pattern[j] != 'd' && pattern[j] != 'i' && pattern[j] != 'u'))
      throw PatternError("unsupported conversion in pattern '" + pattern + "'");
    const std::string spec = pattern.substr(i, j - i) + 'd';
    char buf[64];
    std::snprintf(buf, sizeof buf, spec.c_str(), z);
    out += buf;
    ++placeholders;
    i = j;
  }
  if (placeholders != 1)
    throw PatternError("pattern '" + pattern + "' must contain exactly one integer placeholder, found " +
                       std::to_string(placeholders));
  return out;
}

/// One (z, path) per slice in ascending z. Every file must exist.
inline std::vector<std::pair<int, std::filesystem::path>> expand_slice_paths(const RunConfig& cfg) {
  std::vector<std::pair<int, std::filesystem::path>> paths;
  std::vector<int> missing;
  for (int z = cfg.zmin; z <= cfg.zmax; ++z) {
    auto p = cfg.src / format_slice_name(cfg.pattern, z);
    if (!std::filesystem::exists(p)) missing.push_back(z);
    paths.emplace_back(z, std::move(p));
  }
  if (!missing.empty()) {
    std::string list;
    for (int z : missing) list += (list.empty() ? "" : ", ") + std::to_string(z);
    throw MissingSliceError("missing slices for z = " + list + " (pattern '" + cfg.pattern + "' in '" +
                            cfg.src.string() + "')");
  }
  return paths;
}

}  // namespace mitoseg
