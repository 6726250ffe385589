#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>

#include <yaml-cpp/yaml.h>

#include "mitoseg/error.hpp"

namespace mitoseg {

/// Every tunable knob of the segmentation algorithm. Lengths are in pixels of
/// the resampled image unless the name says otherwise.
struct AlgorithmSettings {
  // preprocessing
  double contrast_low_pct = 1.0;
  double contrast_high_pct = 99.0;
  double target_psize = 2.0;  // nm/px
  double roi_variance_threshold = 2.0;
  int bilateral_diameter = 5;
  double bilateral_sigma_range = 25.0;
  double bilateral_sigma_spatial = 2.0;
  double gaussian_sigma = 1.0;

  // ridges
  double scale_small = 1.5;
  double scale_large = 3.0;
  bool dark_ridges = true;
  double ridge_strength_min = 6.0;

  // curves
  double curve_min_len = 10.0;
  double curve_max_len = 80.0;
  double curve_fit_tol = 0.75;

  // seeding
  double dbscan_eps = 40.0;
  int dbscan_min_pts = 6;
  double seed_flat_curvature = 0.0025;  // |2a| below this counts as straight

  // balloon snake
  int snake_node_count = 64;
  double snake_inflation_weight = 0.1;
  double snake_tension_weight = 0.2;
  double snake_rigidity_weight = 0.05;
  double snake_image_weight = 1.0;
  double snake_step_size = 2.0;
  int snake_max_iters = 1500;
  double snake_convergence_eps = 0.05;
  double snake_strength_norm = 40.0;

  // validator weights (sum to 1)
  double w_boundary_energy = 0.2;
  double w_interior_energy = 0.35;
  double w_area = 0.1;
  double w_discontinuity = 0.15;
  double w_curvature = 0.1;
  double w_signature = 0.1;

  // validator normalization
  double boundary_energy_norm = 20.0;
  double interior_density_norm = 0.02;
  double interior_margin = 6.0;
  double discontinuity_strength_min = 8.0;
  double curvature_norm = 0.5;
  double signature_norm = 4.0;
  double area_min_diam_nm = 100.0;
  double area_low_diam_nm = 150.0;
  double area_high_diam_nm = 800.0;
  double area_max_diam_nm = 1200.0;

  // merging
  double merge_overlap_min = 0.0;

  friend bool operator==(const AlgorithmSettings&, const AlgorithmSettings&) = default;
};

namespace detail {

using SettingsMember = std::variant<double AlgorithmSettings::*, int AlgorithmSettings::*, bool AlgorithmSettings::*>;

struct SettingsField {
  std::string_view key;
  SettingsMember member;
};

#define MITOSEG_FIELD(name) SettingsField{#name, &AlgorithmSettings::name}
inline constexpr std::array kSettingsFields = {
    MITOSEG_FIELD(contrast_low_pct),
    MITOSEG_FIELD(contrast_high_pct),
    MITOSEG_FIELD(target_psize),
    MITOSEG_FIELD(roi_variance_threshold),
    MITOSEG_FIELD(bilateral_diameter),
    MITOSEG_FIELD(bilateral_sigma_range),
    MITOSEG_FIELD(bilateral_sigma_spatial),
    MITOSEG_FIELD(gaussian_sigma),
    MITOSEG_FIELD(scale_small),
    MITOSEG_FIELD(scale_large),
    MITOSEG_FIELD(dark_ridges),
    MITOSEG_FIELD(ridge_strength_min),
    MITOSEG_FIELD(curve_min_len),
    MITOSEG_FIELD(curve_max_len),
    MITOSEG_FIELD(curve_fit_tol),
    MITOSEG_FIELD(dbscan_eps),
    MITOSEG_FIELD(dbscan_min_pts),
    MITOSEG_FIELD(seed_flat_curvature),
    MITOSEG_FIELD(snake_node_count),
    MITOSEG_FIELD(snake_inflation_weight),
    MITOSEG_FIELD(snake_tension_weight),
    MITOSEG_FIELD(snake_rigidity_weight),
    MITOSEG_FIELD(snake_image_weight),
    MITOSEG_FIELD(snake_step_size),
    MITOSEG_FIELD(snake_max_iters),
    MITOSEG_FIELD(snake_convergence_eps),
    MITOSEG_FIELD(snake_strength_norm),
    MITOSEG_FIELD(w_boundary_energy),
    MITOSEG_FIELD(w_interior_energy),
    MITOSEG_FIELD(w_area),
    MITOSEG_FIELD(w_discontinuity),
    MITOSEG_FIELD(w_curvature),
    MITOSEG_FIELD(w_signature),
    MITOSEG_FIELD(boundary_energy_norm),
    MITOSEG_FIELD(interior_density_norm),
    MITOSEG_FIELD(interior_margin),
    MITOSEG_FIELD(discontinuity_strength_min),
    MITOSEG_FIELD(curvature_norm),
    MITOSEG_FIELD(signature_norm),
    MITOSEG_FIELD(area_min_diam_nm),
    MITOSEG_FIELD(area_low_diam_nm),
    MITOSEG_FIELD(area_high_diam_nm),
    MITOSEG_FIELD(area_max_diam_nm),
    MITOSEG_FIELD(merge_overlap_min),
};
#undef MITOSEG_FIELD

inline std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  // keep doubles recognizable as floating point when re-read
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace detail

/// Throws ValidationError when an invariant is broken.
inline void validate(const AlgorithmSettings& s) {
  using detail::require;
  for (const auto& f : detail::kSettingsFields) {
    std::visit(
        [&](auto ptr) {
          using V = std::remove_cvref_t<decltype(s.*ptr)>;
          if constexpr (!std::is_same_v<V, bool>) {
            const double v = static_cast<double>(s.*ptr);
            require(std::isfinite(v), std::string(f.key) + " must be finite");
            require(v >= 0.0, std::string(f.key) + " must be >= 0");
          }
        },
        f.member);
  }
  require(s.contrast_low_pct < s.contrast_high_pct && s.contrast_high_pct <= 100.0,
          "contrast percentiles must satisfy 0 <= contrast_low_pct < contrast_high_pct <= 100");
  require(s.target_psize > 0.0, "target_psize must be > 0");
  require(s.bilateral_diameter >= 1, "bilateral_diameter must be >= 1");
  require(s.bilateral_sigma_range > 0.0 && s.bilateral_sigma_spatial > 0.0, "bilateral sigmas must be > 0");
  require(s.gaussian_sigma > 0.0, "gaussian_sigma must be > 0");
  require(s.scale_small > 0.0 && s.scale_small < s.scale_large, "scales must satisfy 0 < scale_small < scale_large");
  require(s.curve_min_len < s.curve_max_len, "curve_min_len must be < curve_max_len");
  require(s.curve_fit_tol > 0.0, "curve_fit_tol must be > 0");
  require(s.dbscan_eps > 0.0 && s.dbscan_min_pts >= 1, "dbscan_eps must be > 0 and dbscan_min_pts >= 1");
  require(s.snake_node_count >= 8, "snake_node_count must be >= 8");
  require(s.snake_step_size > 0.0 && s.snake_max_iters >= 1, "snake_step_size must be > 0 and snake_max_iters >= 1");
  require(s.snake_strength_norm > 0.0, "snake_strength_norm must be > 0");
  const double wsum = s.w_boundary_energy + s.w_interior_energy + s.w_area + s.w_discontinuity + s.w_curvature +
                      s.w_signature;
  require(std::abs(wsum - 1.0) <= 1e-9, "validator weights must sum to 1 (got " + detail::shortest(wsum) + ")");
  require(s.boundary_energy_norm > 0.0 && s.interior_density_norm > 0.0 && s.curvature_norm > 0.0 &&
              s.signature_norm > 0.0,
          "validator normalization constants must be > 0");
  require(s.area_min_diam_nm <= s.area_low_diam_nm && s.area_low_diam_nm < s.area_high_diam_nm &&
              s.area_high_diam_nm <= s.area_max_diam_nm,
          "area ramp must satisfy area_min <= area_low < area_high <= area_max");
  require(s.merge_overlap_min <= 1.0, "merge_overlap_min must be in [0, 1]");
}

/// Flat `key: value` YAML, one line per field, in declaration order.
inline std::string to_yaml(const AlgorithmSettings& s) {
  std::ostringstream out;
  for (const auto& f : detail::kSettingsFields) {
    out << f.key << ": ";
    std::visit(
        [&](auto ptr) {
          using V = std::remove_cvref_t<decltype(s.*ptr)>;
          if constexpr (std::is_same_v<V, bool>)
            out << (s.*ptr ? "true" : "false");
          else if constexpr (std::is_same_v<V, int>)
            out << s.*ptr;
          else
            out << detail::shortest(s.*ptr);
        },
        f.member);
    out << '\n';
  }
  return out.str();
}

/// Parse YAML text on top of the defaults.
inline AlgorithmSettings settings_from_yaml(const std::string& text, const std::string& origin = "<settings>") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(origin + ": YAML parse error at line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  AlgorithmSettings s;
  if (root.IsNull()) {
    validate(s);
    return s;
  }
  if (!root.IsMap()) throw ValidationError(origin + ": settings must be a flat mapping of scalar keys");
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    const auto it = std::find_if(detail::kSettingsFields.begin(), detail::kSettingsFields.end(),
                                 [&](const auto& f) { return f.key == key; });
    if (it == detail::kSettingsFields.end()) throw ValidationError(origin + ": unknown settings key '" + key + "'");
    if (!kv.second.IsScalar()) throw ValidationError(origin + ": value of '" + key + "' must be a scalar");
    const int line = kv.second.Mark().line + 1;
    std::visit(
        [&](auto ptr) {
          using V = std::remove_cvref_t<decltype(s.*ptr)>;
          try {
            s.*ptr = kv.second.as<V>();
          } catch (const YAML::Exception&) {
            throw ValidationError(origin + ": line " + std::to_string(line) + ": '" + key + "' has invalid value '" +
                                  kv.second.Scalar() + "'");
          }
        },
        it->member);
  }
  validate(s);
  return s;
}

/// Defaults when `path` is empty, otherwise defaults overridden by the file.
inline AlgorithmSettings load_settings(const std::optional<std::filesystem::path>& path) {
  if (!path) {
    AlgorithmSettings s;
    validate(s);
    return s;
  }
  std::ifstream in(*path, std::ios::binary);
  if (!in) throw IoError("cannot read settings file '" + path->string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return settings_from_yaml(buf.str(), path->string());
}

}  // namespace mitoseg
