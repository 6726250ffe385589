#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "mitoseg/grid.hpp"

namespace mitoseg {

using Polygon = std::vector<Vec2>;

/// Shoelace area; positive for counter-clockwise order in (x, y).
inline double signed_area(std::span<const Vec2> poly) {
  double a = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) a += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * a;
}

inline double perimeter(std::span<const Vec2> poly) {
  double p = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) p += norm(poly[(i + 1) % n] - poly[i]);
  return p;
}

inline Vec2 centroid(std::span<const Vec2> poly) {
  const double a = signed_area(poly);
  if (std::abs(a) < 1e-12) {
    Vec2 m;
    for (const auto& p : poly) m += p;
    return (1.0 / static_cast<double>(poly.size())) * m;
  }
  Vec2 c;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Vec2 p = poly[i], q = poly[(i + 1) % n];
    c += cross(p, q) * (p + q);
  }
  return (1.0 / (6.0 * a)) * c;
}

inline void make_counter_clockwise(Polygon& poly) {
  if (signed_area(poly) < 0) std::reverse(poly.begin(), poly.end());
}

/// Resample a closed polygon to `count` nodes evenly spaced by arc length,
/// starting at node 0.
inline Polygon resample_closed(std::span<const Vec2> poly, int count) {
  const std::size_t n = poly.size();
  std::vector<double> cum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + norm(poly[(i + 1) % n] - poly[i]);
  const double total = cum[n];
  Polygon out;
  out.reserve(count);
  if (total <= 0.0) {
    out.assign(count, poly.front());
    return out;
  }
  std::size_t seg = 0;
  for (int k = 0; k < count; ++k) {
    const double s = total * k / count;
    while (seg + 1 < n && cum[seg + 1] <= s) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double t = len > 0 ? (s - cum[seg]) / len : 0.0;
    out.push_back(poly[seg] + t * (poly[(seg + 1) % n] - poly[seg]));
  }
  return out;
}

namespace detail {

inline bool segments_cross(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const double d1 = cross(q2 - q1, p1 - q1);
  const double d2 = cross(q2 - q1, p2 - q1);
  const double d3 = cross(p2 - p1, q1 - p1);
  const double d4 = cross(p2 - p1, q2 - p1);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

}  // namespace detail

/// First pair of properly crossing, non-adjacent edges (i < j), if any.
inline std::optional<std::pair<std::size_t, std::size_t>> find_self_intersection(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (detail::segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return std::pair{i, j};
    }
  }
  return std::nullopt;
}

inline bool is_simple(std::span<const Vec2> poly) { return !find_self_intersection(poly).has_value(); }

/// Remove loops created by crossing edges, keeping the larger-area side each
/// time, until the polygon is simple.
inline Polygon untangle(Polygon poly) {
  while (poly.size() > 3) {
    const auto hit = find_self_intersection(poly);
    if (!hit) break;
    const auto [i, j] = *hit;
    // loop A = nodes i+1..j, loop B = the rest
    Polygon inner(poly.begin() + static_cast<std::ptrdiff_t>(i + 1), poly.begin() + static_cast<std::ptrdiff_t>(j + 1));
    Polygon outer(poly.begin(), poly.begin() + static_cast<std::ptrdiff_t>(i + 1));
    outer.insert(outer.end(), poly.begin() + static_cast<std::ptrdiff_t>(j + 1), poly.end());
    const bool keep_inner = inner.size() >= 3 && std::abs(signed_area(inner)) > std::abs(signed_area(outer));
    poly = keep_inner ? std::move(inner) : std::move(outer);
  }
  return poly;
}

inline bool point_in_polygon(std::span<const Vec2> poly, Vec2 p) {
  bool inside = false;
  for (std::size_t i = 0, n = poly.size(), j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
  }
  return inside;
}

inline double distance_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return norm(p - (a + t * ab));
}

inline double distance_to_boundary(std::span<const Vec2> poly, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) best = std::min(best, distance_to_segment(p, poly[i], poly[(i + 1) % n]));
  return best;
}

/// Pixels whose centers lie inside the polygon (even-odd rule, scanline).
inline Mask rasterize(std::span<const Vec2> poly, int width, int height) {
  Mask m(width, height);
  std::vector<double> xs;
  for (int y = 0; y < height; ++y) {
    xs.clear();
    const double py = y;
    for (std::size_t i = 0, n = poly.size(), j = n - 1; i < n; j = i++) {
      const Vec2 a = poly[i], b = poly[j];
      if ((a.y > py) != (b.y > py)) xs.push_back((b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x);
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int x0 = std::max(0, static_cast<int>(std::ceil(xs[k])));
      const int x1 = std::min(width - 1, static_cast<int>(std::floor(xs[k + 1])));
      for (int x = x0; x <= x1; ++x) m(x, y) = 1;
    }
  }
  return m;
}

inline std::size_t count_set(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.values()) n += v != 0;
  return n;
}

/// Number of 4-connected foreground components.
inline int count_components(const Mask& m) {
  Grid<int> label(m.width(), m.height(), 0);
  int count = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!m(x, y) || label(x, y)) continue;
      ++count;
      stack.push_back({x, y});
      label(x, y) = count;
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        const int d[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (const auto& o : d) {
          const int nx = cx + o[0], ny = cy + o[1];
          if (m.contains(nx, ny) && m(nx, ny) && !label(nx, ny)) {
            label(nx, ny) = count;
            stack.push_back({nx, ny});
          }
        }
      }
    }
  }
  return count;
}

/// Outer boundary of the 4-connected component containing the first set
/// pixel in raster order. The crack boundary (along pixel edges) is traced,
/// then each pair of consecutive edges is replaced by its midpoint chord,
/// which cuts convex corners and fills concave ones; collinear nodes are
/// dropped. Result is counter-clockwise.
inline Polygon trace_outer_boundary(const Mask& m) {
  int sx = -1, sy = -1;
  for (int y = 0; y < m.height() && sx < 0; ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m(x, y)) {
        sx = x;
        sy = y;
        break;
      }
  if (sx < 0) return {};
  const auto on = [&](int x, int y) { return m.contains(x, y) && m(x, y) != 0; };

  // Pixel (x, y) covers [x-0.5, x+0.5] x [y-0.5, y+0.5]; corners are indexed
  // by integer (cx, cy) at (cx-0.5, cy-0.5). Walk with the foreground on the
  // left-hand side in (x right, y down) coordinates.
  struct Dir {
    int dx, dy;
  };
  static constexpr Dir dirs[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};  // E, S, W, N
  // pixels on the left and right of a step leaving corner (cx, cy) in dir d
  const auto left_pixel = [&](int cx, int cy, int d) {
    switch (d) {
      case 0: return std::pair{cx, cy - 1};
      case 1: return std::pair{cx, cy};
      case 2: return std::pair{cx - 1, cy};
      default: return std::pair{cx - 1, cy - 1};
    }
  };
  const auto right_pixel = [&](int cx, int cy, int d) {
    switch (d) {
      case 0: return std::pair{cx, cy};
      case 1: return std::pair{cx - 1, cy};
      case 2: return std::pair{cx - 1, cy - 1};
      default: return std::pair{cx, cy - 1};
    }
  };
  // start at the top edge of the first pixel heading west: foreground (below) on the left
  const int start_cx = sx + 1, start_cy = sy, start_d = 2;
  int cx = start_cx, cy = start_cy, d = start_d;
  std::vector<std::pair<int, int>> corners;
  do {
    corners.push_back({cx, cy});
    cx += dirs[d].dx;
    cy += dirs[d].dy;
    // prefer turning left, then straight, then right
    for (int turn : {3, 0, 1, 2}) {
      const int nd = (d + turn) % 4;
      const auto [lx, ly] = left_pixel(cx, cy, nd);
      const auto [rx, ry] = right_pixel(cx, cy, nd);
      if (on(lx, ly) && !on(rx, ry)) {
        d = nd;
        break;
      }
    }
  } while (!(cx == start_cx && cy == start_cy && d == start_d));

  const std::size_t n = corners.size();
  Polygon mids;
  mids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [ax, ay] = corners[i];
    const auto [bx, by] = corners[(i + 1) % n];
    mids.push_back({0.5 * (ax + bx) - 0.5, 0.5 * (ay + by) - 0.5});
  }
  Polygon out;
  for (std::size_t i = 0; i < mids.size(); ++i) {
    const Vec2 prev = mids[(i + mids.size() - 1) % mids.size()], cur = mids[i], next = mids[(i + 1) % mids.size()];
    if (std::abs(cross(cur - prev, next - cur)) > 1e-12) out.push_back(cur);
  }
  make_counter_clockwise(out);
  return out;
}

/// Fill background regions not connected to the image border.
inline Mask fill_holes(const Mask& m) {
  const int w = m.width(), h = m.height();
  Mask outside(w, h);
  std::vector<std::pair<int, int>> stack;
  const auto push = [&](int x, int y) {
    if (m.contains(x, y) && !m(x, y) && !outside(x, y)) {
      outside(x, y) = 1;
      stack.push_back({x, y});
    }
  };
  for (int x = 0; x < w; ++x) {
    push(x, 0);
    push(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    push(0, y);
    push(w - 1, y);
  }
  while (!stack.empty()) {
    const auto [x, y] = stack.back();
    stack.pop_back();
    push(x + 1, y);
    push(x - 1, y);
    push(x, y + 1);
    push(x, y - 1);
  }
  Mask out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(x, y) = !outside(x, y);
  return out;
}

}  // namespace mitoseg
