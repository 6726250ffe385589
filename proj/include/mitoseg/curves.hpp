#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mitoseg/grid.hpp"
#include "mitoseg/ridges.hpp"
#include "mitoseg/settings.hpp"

namespace mitoseg {

struct Pixel {
  int x = 0;
  int y = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

using Chain = std::vector<Pixel>;

/// Parabolic arc v = a*t^2 in a frame whose v axis points along `theta`
/// and whose origin is the apex `vertex`.
struct CurveSegment {
  int z = 0;
  Scale scale = Scale::Small;
  Vec2 vertex;
  double theta = 0.0;  // symmetry-axis direction, [0, 2pi)
  double a = 0.0;      // 1/px; apex curvature is 2a
  double t_min = 0.0;
  double t_max = 0.0;
  std::vector<Pixel> support;
  double rms_residual = 0.0;

  Vec2 axis() const { return {std::cos(theta), std::sin(theta)}; }
  Vec2 tangent() const { return {std::sin(theta), -std::cos(theta)}; }
  Vec2 point_at(double t) const { return vertex + t * tangent() + (a * t * t) * axis(); }
  Vec2 midpoint() const { return point_at(0.5 * (t_min + t_max)); }

  /// Unit normal at the arc midpoint pointing to the concave side; for a
  /// straight segment this is the +axis direction.
  Vec2 concave_normal() const {
    const double t = 0.5 * (t_min + t_max);
    const double sign = a < 0 ? -1.0 : 1.0;
    // curve derivative in (u, v) is (1, 2at); the normal towards +v is (-2at, 1)
    const double nu = -2.0 * a * t, nv = 1.0;
    const double len = std::hypot(nu, nv);
    return (sign / len) * (nu * tangent() + nv * axis());
  }

  double arc_length() const {
    const auto primitive = [this](double t) {
      if (a == 0.0) return t;
      const double k = 2.0 * a * t;
      return 0.5 * t * std::sqrt(1.0 + k * k) + std::asinh(k) / (4.0 * a);
    };
    return primitive(t_max) - primitive(t_min);
  }

  friend bool operator==(const CurveSegment&, const CurveSegment&) = default;
};

struct FitRejection {
  std::string reason;
};

using FitOutcome = std::variant<CurveSegment, FitRejection>;

namespace detail {

inline int neighbor_count(const Mask& m, int x, int y) {
  int n = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      if ((dx || dy) && m.contains(x + dx, y + dy) && m(x + dx, y + dy)) ++n;
  return n;
}

// Ring of 8 neighbors in circular order starting east.
inline constexpr std::array<std::array<int, 2>, 8> kRing = {
    {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

/// True when p has >= 2 neighbors that stay 8-connected to each other
/// without p (removing p does not split the local curve).
inline bool is_removable(const Mask& m, int x, int y) {
  std::array<bool, 8> on{};
  int count = 0;
  for (int i = 0; i < 8; ++i) {
    const int nx = x + kRing[i][0], ny = y + kRing[i][1];
    on[i] = m.contains(nx, ny) && m(nx, ny);
    count += on[i];
  }
  if (count < 2) return false;
  // union-find over the 8 ring cells; two set cells are adjacent when their
  // offsets differ by at most one in both coordinates
  std::array<int, 8> parent{};
  for (int i = 0; i < 8; ++i) parent[i] = i;
  const auto find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (int i = 0; i < 8; ++i) {
    if (!on[i]) continue;
    for (int j = i + 1; j < 8; ++j) {
      if (!on[j]) continue;
      if (std::abs(kRing[i][0] - kRing[j][0]) <= 1 && std::abs(kRing[i][1] - kRing[j][1]) <= 1)
        parent[find(i)] = find(j);
    }
  }
  int roots = 0;
  for (int i = 0; i < 8; ++i)
    if (on[i] && find(i) == i) ++roots;
  return roots == 1;
}

/// Single raster-order pass removing redundant pixels (staircase corners,
/// double-width runs) so that curve pixels have at most two neighbors.
inline Mask thin(Mask m) {
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m(x, y) && is_removable(m, x, y)) m(x, y) = 0;
  return m;
}

inline double path_length(std::span<const Pixel> chain) {
  double len = 0.0;
  for (std::size_t i = 1; i < chain.size(); ++i)
    len += std::hypot(chain[i].x - chain[i - 1].x, chain[i].y - chain[i - 1].y);
  return len;
}

}  // namespace detail

/// 8-connected ridge chains, split at junction pixels (more than two
/// neighbors), each ordered end to end. Chains under 5 pixels are dropped.
inline std::vector<Chain> trace_ridges(const Mask& mask, std::size_t min_pixels = 5) {
  const Mask thinned = detail::thin(mask);
  const int w = thinned.width(), h = thinned.height();
  Mask usable(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) usable(x, y) = thinned(x, y) && detail::neighbor_count(thinned, x, y) <= 2;

  // 4-neighbors first so walks prefer straight steps
  static constexpr std::array<std::array<int, 2>, 8> order = {
      {{1, 0}, {0, 1}, {-1, 0}, {0, -1}, {1, 1}, {-1, 1}, {-1, -1}, {1, -1}}};
  Mask visited(w, h);
  const auto walk = [&](int x, int y) {
    Chain c;
    while (true) {
      visited(x, y) = 1;
      c.push_back({x, y});
      bool moved = false;
      for (const auto& d : order) {
        const int nx = x + d[0], ny = y + d[1];
        if (usable.contains(nx, ny) && usable(nx, ny) && !visited(nx, ny)) {
          x = nx;
          y = ny;
          moved = true;
          break;
        }
      }
      if (!moved) return c;
    }
  };

  std::vector<Chain> chains;
  const auto keep = [&](Chain c) {
    if (c.size() >= min_pixels) chains.push_back(std::move(c));
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (usable(x, y) && !visited(x, y) && detail::neighbor_count(usable, x, y) <= 1) keep(walk(x, y));
  // whatever remains lies on closed loops
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (usable(x, y) && !visited(x, y)) keep(walk(x, y));
  return chains;
}

namespace detail {

struct QuadraticFit {
  double a = 0.0, b = 0.0, c = 0.0;
  double rss = std::numeric_limits<double>::infinity();
};

/// Weighted least squares v = a u^2 + b u + c in the frame whose u axis has
/// angle `phi`, points taken relative to `origin`.
inline QuadraticFit fit_in_frame(std::span<const Vec2> pts, std::span<const double> w, Vec2 origin, double phi) {
  const double cp = std::cos(phi), sp = std::sin(phi);
  Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec2 d = pts[i] - origin;
    const double u = d.x * cp + d.y * sp;
    const double v = -d.x * sp + d.y * cp;
    const Eigen::Vector3d row(u * u, u, 1.0);
    normal += w[i] * row * row.transpose();
    rhs += w[i] * v * row;
  }
  QuadraticFit f;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(normal);
  if (lu.rank() < 3) return f;
  const Eigen::Vector3d coef = lu.solve(rhs);
  f.a = coef[0];
  f.b = coef[1];
  f.c = coef[2];
  double rss = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec2 d = pts[i] - origin;
    const double u = d.x * cp + d.y * sp;
    const double v = -d.x * sp + d.y * cp;
    const double r = v - (f.a * u * u + f.b * u + f.c);
    rss += w[i] * r * r;
  }
  f.rss = rss;
  return f;
}

inline double principal_angle(std::span<const Vec2> pts, std::span<const double> w, Vec2 mean) {
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec2 d = pts[i] - mean;
    sxx += w[i] * d.x * d.x;
    sxy += w[i] * d.x * d.y;
    syy += w[i] * d.y * d.y;
  }
  return 0.5 * std::atan2(2.0 * sxy, sxx - syy);
}

inline double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a < 0) a += two_pi;
  return a;
}

}  // namespace detail

/// Fit a parabolic arc to weighted points. The tangent direction is refined by
/// golden-section search within +-30 degrees of `initial_tangent` (principal
/// axis of the points when absent); the inner solve is linear least squares.
/// Support pixels are left empty; see the Pixel overload.
inline FitOutcome fit_parabola(std::span<const Vec2> pts, std::span<const double> weights, double tolerance,
                               std::optional<double> initial_tangent = std::nullopt) {
  constexpr double pi = std::numbers::pi;
  if (pts.size() < 5) return FitRejection{"fewer than 5 support points"};
  if (weights.size() != pts.size()) return FitRejection{"weight count does not match support"};

  std::vector<double> w(weights.begin(), weights.end());
  double wsum = 0.0;
  Vec2 mean;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!(w[i] > 0.0)) w[i] = 1e-6;
    wsum += w[i];
    mean += w[i] * pts[i];
  }
  mean = (1.0 / wsum) * mean;
  bool coincident = true;
  for (const auto& p : pts) coincident = coincident && p == pts.front();
  if (coincident) return FitRejection{"degenerate chain: all points coincide"};

  const double phi0 = initial_tangent.value_or(detail::principal_angle(pts, w, mean));
  const auto cost = [&](double phi) { return detail::fit_in_frame(pts, w, mean, phi).rss; };

  // golden-section search; on equal cost the lower angle wins
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = phi0 - pi / 6, hi = phi0 + pi / 6;
  double c = hi - ratio * (hi - lo), d = lo + ratio * (hi - lo);
  double fc = cost(c), fd = cost(d);
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - ratio * (hi - lo);
      fc = cost(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + ratio * (hi - lo);
      fd = cost(d);
    }
  }
  double phi = fc <= fd ? c : d;
  detail::QuadraticFit fit = detail::fit_in_frame(pts, w, mean, phi);
  if (!std::isfinite(fit.rss)) return FitRejection{"singular least-squares system"};

  // re-express about the apex: v = a (u - u0)^2 + v0
  double extent = 0.0;
  for (const auto& p : pts) extent = std::max(extent, norm(p - mean));
  double u0 = 0.0, v0 = fit.c;
  if (std::abs(fit.a) * extent < 1e-9 || std::abs(fit.b / (2.0 * fit.a)) > 1e6 * std::max(extent, 1.0)) {
    // straight: rotate the frame onto the line so the slope vanishes
    phi += std::atan(fit.b);
    fit = detail::fit_in_frame(pts, w, mean, phi);
    fit.a = 0.0;
    v0 = fit.c;
  } else {
    u0 = -fit.b / (2.0 * fit.a);
    v0 = fit.c - fit.b * fit.b / (4.0 * fit.a);
  }
  const Vec2 tu{std::cos(phi), std::sin(phi)};
  const Vec2 tv{-std::sin(phi), std::cos(phi)};

  CurveSegment seg;
  seg.vertex = mean + u0 * tu + v0 * tv;
  seg.theta = detail::normalize_angle(phi + pi / 2);
  seg.a = fit.a;
  double t_min = std::numeric_limits<double>::infinity(), t_max = -t_min, rss = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec2 d = pts[i] - seg.vertex;
    const double t = dot(d, tu);
    const double r = dot(d, tv) - seg.a * t * t;
    rss += w[i] * r * r;
    t_min = std::min(t_min, t);
    t_max = std::max(t_max, t);
  }
  seg.t_min = t_min;
  seg.t_max = t_max;
  seg.rms_residual = std::sqrt(rss / wsum);
  if (!(seg.t_min < seg.t_max)) return FitRejection{"support has no extent along the arc"};
  if (seg.rms_residual > tolerance) return FitRejection{"rms residual above tolerance"};
  return seg;
}

inline FitOutcome fit_parabola(std::span<const Pixel> chain, std::span<const double> weights, double tolerance,
                               std::optional<double> initial_tangent = std::nullopt) {
  std::vector<Vec2> pts;
  pts.reserve(chain.size());
  for (const auto& p : chain) pts.push_back({static_cast<double>(p.x), static_cast<double>(p.y)});
  auto outcome = fit_parabola(std::span<const Vec2>(pts), weights, tolerance, initial_tangent);
  if (auto* seg = std::get_if<CurveSegment>(&outcome)) seg->support.assign(chain.begin(), chain.end());
  return outcome;
}

/// Mean ridge orientation (mod pi) over chain pixels via doubled angles.
inline double mean_orientation(std::span<const Pixel> chain, const EnergyMap& map) {
  double c = 0.0, s = 0.0;
  for (const auto& p : chain) {
    const double t = map.orientation(p.x, p.y);
    c += std::cos(2.0 * t);
    s += std::sin(2.0 * t);
  }
  double a = 0.5 * std::atan2(s, c);
  if (a < 0) a += std::numbers::pi;
  return a;
}

/// Recursive bisection until every piece fits within tolerance and length
/// bounds; pieces shorter than curve_min_len are dropped.
inline std::vector<CurveSegment> split_and_fit(std::span<const Pixel> chain, const EnergyMap& map,
                                               const AlgorithmSettings& settings) {
  std::vector<CurveSegment> out;
  const auto recurse = [&](auto&& self, std::span<const Pixel> piece) -> void {
    if (piece.size() < 5 || detail::path_length(piece) < settings.curve_min_len) return;
    std::vector<double> weights(piece.size());
    for (std::size_t i = 0; i < piece.size(); ++i) weights[i] = map.strength(piece[i].x, piece[i].y);
    auto outcome = fit_parabola(piece, weights, settings.curve_fit_tol, mean_orientation(piece, map));
    if (auto* seg = std::get_if<CurveSegment>(&outcome)) {
      const double len = seg->arc_length();
      if (len <= settings.curve_max_len) {
        if (len > settings.curve_min_len) {
          seg->z = map.z;
          seg->scale = map.scale;
          out.push_back(std::move(*seg));
        }
        return;
      }
    }
    const std::size_t mid = piece.size() / 2;
    self(self, piece.subspan(0, mid));
    self(self, piece.subspan(mid));
  };
  recurse(recurse, chain);
  return out;
}

/// All curve segments of one energy map.
inline std::vector<CurveSegment> extract_curves(const EnergyMap& map, const AlgorithmSettings& settings) {
  std::vector<CurveSegment> all;
  for (const auto& chain : trace_ridges(map.ridge_mask)) {
    auto segs = split_and_fit(chain, map, settings);
    all.insert(all.end(), std::make_move_iterator(segs.begin()), std::make_move_iterator(segs.end()));
  }
  return all;
}

}  // namespace mitoseg
