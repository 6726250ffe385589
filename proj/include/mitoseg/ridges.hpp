#pragma once

#include <cmath>
#include <numbers>
#include <string_view>

#include "mitoseg/grid.hpp"
#include "mitoseg/imaging.hpp"
#include "mitoseg/settings.hpp"

namespace mitoseg {

enum class Scale : std::uint8_t { Small = 0, Large = 1 };

inline std::string_view scale_name(Scale s) { return s == Scale::Small ? "small" : "large"; }

/// Scale-normalized second derivatives (sigma^2 * d2I).
struct HessianField {
  Image xx, xy, yy;
};

/// Per-pixel membrane evidence at one analysis scale.
struct EnergyMap {
  int z = 0;
  Scale scale = Scale::Small;
  Image strength;     // >= 0
  Image orientation;  // ridge tangent angle, [0, pi)
  Image curvature;    // 1/px, signed
  Mask ridge_mask;

  int width() const { return strength.width(); }
  int height() const { return strength.height(); }
  friend bool operator==(const EnergyMap&, const EnergyMap&) = default;
};

inline HessianField hessian(const Image& img, double sigma) {
  const auto g0 = gaussian_kernel(sigma);
  const auto g1 = gaussian_d1_kernel(sigma);
  const auto g2 = gaussian_d2_kernel(sigma);
  HessianField h{correlate_separable(img, g2, g0), correlate_separable(img, g1, g1), correlate_separable(img, g0, g2)};
  const float s2 = static_cast<float>(sigma * sigma);
  for (Image* c : {&h.xx, &h.xy, &h.yy})
    for (auto& v : c->values()) v *= s2;
  return h;
}

namespace detail {

/// Wrap an orientation difference into (-pi/2, pi/2].
inline double wrap_half_turn(double d) {
  constexpr double pi = std::numbers::pi;
  while (d > pi / 2) d -= pi;
  while (d <= -pi / 2) d += pi;
  return d;
}

/// Orientation (mod pi) at a sub-pixel position via the doubled-angle field.
inline double sample_orientation(const Image& cos2, const Image& sin2, double x, double y) {
  const double c = sample_bilinear(cos2, x, y);
  const double s = sample_bilinear(sin2, x, y);
  double a = 0.5 * std::atan2(s, c);
  if (a < 0) a += std::numbers::pi;
  return a;
}

}  // namespace detail

/// Hessian eigen-analysis at one scale: ridge strength, tangent orientation,
/// non-maximum-suppressed ridge mask and curvature of the orientation field.
inline EnergyMap energy_map(const Slice& slice, Scale scale, const AlgorithmSettings& settings) {
  constexpr double pi = std::numbers::pi;
  const double sigma = scale == Scale::Small ? settings.scale_small : settings.scale_large;
  const HessianField h = hessian(slice.pixels, sigma);
  const int w = slice.width(), ht = slice.height();
  // dark membranes give a positive second derivative across the ridge
  const double polarity = settings.dark_ridges ? -1.0 : 1.0;

  EnergyMap m{slice.z, scale, Image(w, ht), Image(w, ht), Image(w, ht), Mask(w, ht)};
  Image normal_x(w, ht), normal_y(w, ht), cos2(w, ht), sin2(w, ht);
  for (int y = 0; y < ht; ++y) {
    for (int x = 0; x < w; ++x) {
      const double a = polarity * h.xx(x, y);
      const double b = polarity * h.xy(x, y);
      const double c = polarity * h.yy(x, y);
      const double mean = 0.5 * (a + c);
      const double dev = std::hypot(0.5 * (a - c), b);
      // eigenvalue with the larger magnitude, and the angle of its eigenvector
      const double lambda1 = mean >= 0 ? mean + dev : mean - dev;
      double normal_angle = 0.5 * std::atan2(2.0 * b, a - c);  // eigenvector of mean + dev
      if (mean < 0) normal_angle += pi / 2;
      double tangent = normal_angle + pi / 2;
      tangent = std::fmod(tangent, pi);
      if (tangent < 0) tangent += pi;
      m.strength(x, y) = static_cast<float>(std::max(0.0, -lambda1));
      m.orientation(x, y) = static_cast<float>(tangent);
      normal_x(x, y) = static_cast<float>(std::cos(normal_angle));
      normal_y(x, y) = static_cast<float>(std::sin(normal_angle));
      cos2(x, y) = static_cast<float>(std::cos(2.0 * tangent));
      sin2(x, y) = static_cast<float>(std::sin(2.0 * tangent));
    }
  }

  const double threshold = settings.ridge_strength_min;
  constexpr double step = 1.0;
  for (int y = 0; y < ht; ++y) {
    for (int x = 0; x < w; ++x) {
      const double s = m.strength(x, y);
      if (s <= 0.0) continue;
      const double nx = normal_x(x, y), ny = normal_y(x, y);
      const double ahead = sample_bilinear(m.strength, x + nx, y + ny);
      const double behind = sample_bilinear(m.strength, x - nx, y - ny);
      if (s >= threshold && s >= ahead && s >= behind && s > std::min(ahead, behind)) m.ridge_mask(x, y) = 1;

      const double t = m.orientation(x, y);
      const double tx = std::cos(t), ty = std::sin(t);
      const double fwd = detail::sample_orientation(cos2, sin2, x + step * tx, y + step * ty);
      const double back = detail::sample_orientation(cos2, sin2, x - step * tx, y - step * ty);
      m.curvature(x, y) = static_cast<float>(detail::wrap_half_turn(fwd - back) / (2.0 * step));
    }
  }
  return m;
}

}  // namespace mitoseg
