#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <vector>

#include "mitoseg/error.hpp"
#include "mitoseg/geometry.hpp"
#include "mitoseg/ridges.hpp"
#include "mitoseg/settings.hpp"
#include "mitoseg/snakes.hpp"

namespace mitoseg {

/// Mitochondrion-likeness criteria, each in [0, 1].
struct RegionScore {
  double boundary_energy = 0.0;
  double interior_energy = 0.0;
  double area_score = 0.0;
  double discontinuity = 0.0;
  double curvature_score = 0.0;
  double signature_score = 0.0;
  double total = 0.0;
  friend bool operator==(const RegionScore&, const RegionScore&) = default;
};

struct Region {
  Polygon contour;  // counter-clockwise
  int block = 0;
  RegionScore score;
  std::vector<int> member_snakes;
  friend bool operator==(const Region&, const Region&) = default;
};

/// Block-level evidence consumed by the validator.
struct BlockEvidence {
  Image boundary_strength;  // mean LARGE strength over the block slices
  Image cristae_density;    // mean SMALL ridge-mask occupancy over the block slices
};

inline BlockEvidence make_evidence(std::span<const EnergyMap> large, std::span<const EnergyMap> small) {
  if (small.empty()) throw ConfigurationError("make_evidence: no SMALL-scale maps");
  BlockEvidence ev{average_strength(large), Image(small.front().width(), small.front().height())};
  auto out = ev.cristae_density.values();
  for (const auto& m : small) {
    const auto in = m.ridge_mask.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i] ? 1.0f : 0.0f;
  }
  const float inv = 1.0f / static_cast<float>(small.size());
  for (auto& v : out) v *= inv;
  return ev;
}

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

/// Trapezoid: 0 below lo0, rising to 1 at lo1, 1 up to hi1, falling to 0 at hi0.
inline double trapezoid(double v, double lo0, double lo1, double hi1, double hi0) {
  if (v < lo0 || v > hi0) return 0.0;
  if (v < lo1) return lo1 > lo0 ? (v - lo0) / (lo1 - lo0) : 1.0;
  if (v > hi1) return hi0 > hi1 ? (hi0 - v) / (hi0 - hi1) : 1.0;
  return 1.0;
}

}  // namespace detail

inline double weighted_total(const RegionScore& s, const AlgorithmSettings& st) {
  return st.w_boundary_energy * s.boundary_energy + st.w_interior_energy * s.interior_energy + st.w_area * s.area_score +
         st.w_discontinuity * s.discontinuity + st.w_curvature * s.curvature_score + st.w_signature * s.signature_score;
}

/// Score a closed contour against the block evidence. Geometry-only criteria
/// (area, curvature, signature) do not look at image data.
inline RegionScore score_contour(std::span<const Vec2> contour, const BlockEvidence& ev, const AlgorithmSettings& st) {
  RegionScore s;
  const std::size_t n = contour.size();
  if (n < 3) return s;
  const double per = perimeter(contour);
  if (!(per > 0.0)) return s;

  // boundary energy and discontinuity from ~1 px samples along the contour
  double strength_integral = 0.0, weak_length = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = contour[i], b = contour[(i + 1) % n];
    const double len = norm(b - a);
    const int steps = std::max(1, static_cast<int>(std::ceil(len)));
    const double ds = len / steps;
    for (int k = 0; k < steps; ++k) {
      const Vec2 p = a + ((k + 0.5) / steps) * (b - a);
      const double v = sample_bilinear(ev.boundary_strength, p.x, p.y);
      strength_integral += v * ds;
      if (v < st.discontinuity_strength_min) weak_length += ds;
    }
  }
  s.boundary_energy = detail::clamp01(strength_integral / per / st.boundary_energy_norm);
  s.discontinuity = detail::clamp01(1.0 - weak_length / per);

  // cristae density over interior pixels away from the membrane
  double xmin = contour[0].x, xmax = xmin, ymin = contour[0].y, ymax = ymin;
  for (const auto& p : contour) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const int w = ev.cristae_density.width(), h = ev.cristae_density.height();
  double density = 0.0;
  std::size_t interior = 0;
  for (int y = std::max(0, static_cast<int>(std::ceil(ymin))); y <= std::min(h - 1, static_cast<int>(ymax)); ++y)
    for (int x = std::max(0, static_cast<int>(std::ceil(xmin))); x <= std::min(w - 1, static_cast<int>(xmax)); ++x) {
      const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
      if (!point_in_polygon(contour, p) || distance_to_boundary(contour, p) <= st.interior_margin) continue;
      density += ev.cristae_density(x, y);
      ++interior;
    }
  s.interior_energy = interior ? detail::clamp01(density / static_cast<double>(interior) / st.interior_density_norm) : 0.0;

  // area as an equivalent-disk diameter in nm
  const double area_nm2 = std::abs(signed_area(contour)) * st.target_psize * st.target_psize;
  const double diameter = 2.0 * std::sqrt(area_nm2 / std::numbers::pi);
  s.area_score = detail::trapezoid(diameter, st.area_min_diam_nm, st.area_low_diam_nm, st.area_high_diam_nm,
                                   st.area_max_diam_nm);

  // kinks: RMS deviation of the turning angle from a uniform turn
  const double orient = signed_area(contour) >= 0 ? 1.0 : -1.0;
  const double uniform = 2.0 * std::numbers::pi / static_cast<double>(n);
  double dev2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 in = contour[i] - contour[(i + n - 1) % n];
    const Vec2 out = contour[(i + 1) % n] - contour[i];
    const double turn = orient * std::atan2(cross(in, out), dot(in, out));
    dev2 += (turn - uniform) * (turn - uniform);
  }
  s.curvature_score = detail::clamp01(1.0 - std::sqrt(dev2 / static_cast<double>(n)) / st.curvature_norm);

  // radial signature smoothness: 1 - normalized total variation of r(node)
  const Vec2 c = centroid(contour);
  double tv = 0.0, rsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r0 = norm(contour[i] - c), r1 = norm(contour[(i + 1) % n] - c);
    tv += std::abs(r1 - r0);
    rsum += r0;
  }
  const double rmean = rsum / static_cast<double>(n);
  s.signature_score = rmean > 0 ? detail::clamp01(1.0 - tv / rmean / st.signature_norm) : 0.0;

  s.total = detail::clamp01(weighted_total(s, st));
  return s;
}

/// Validator score of a snake; border-touching snakes get total 0.
inline RegionScore score_region(const SnakeContour& snake, const BlockEvidence& ev, const AlgorithmSettings& st) {
  RegionScore s = score_contour(snake.nodes, ev, st);
  if (snake.border) s.total = 0.0;
  return s;
}

/// Regions whose total reaches the threshold, in input order.
inline std::vector<Region> filter_valid(std::span<const Region> regions, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw RangeError("validator threshold must be in [0, 1]");
  std::vector<Region> kept;
  for (const auto& r : regions)
    if (r.score.total >= threshold) kept.push_back(r);
  return kept;
}

/// Unite regions (of one block) whose rasterized interiors overlap by more
/// than `min_overlap` of the smaller one, with transitive closure. Merged
/// regions take the outer boundary of the union and the best member score.
inline std::vector<Region> merge_overlapping(std::span<const Region> regions, int width, int height,
                                             double min_overlap) {
  const std::size_t n = regions.size();
  std::vector<Mask> masks;
  std::vector<std::size_t> areas;
  masks.reserve(n);
  for (const auto& r : regions) {
    masks.push_back(rasterize(r.contour, width, height));
    areas.push_back(count_set(masks.back()));
  }
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (regions[i].block != regions[j].block) continue;
      std::size_t inter = 0;
      const auto a = masks[i].values(), b = masks[j].values();
      for (std::size_t k = 0; k < a.size(); ++k) inter += a[k] && b[k];
      const std::size_t smaller = std::min(areas[i], areas[j]);
      if (inter > 0 && smaller > 0 && static_cast<double>(inter) / static_cast<double>(smaller) > min_overlap)
        parent[find(i)] = find(j);
    }

  std::vector<Region> out;
  std::vector<bool> done(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = find(i);
    if (done[root]) continue;
    done[root] = true;
    std::vector<std::size_t> members;
    for (std::size_t j = 0; j < n; ++j)
      if (find(j) == root) members.push_back(j);
    if (members.size() == 1) {
      out.push_back(regions[i]);
      continue;
    }
    Mask united(width, height);
    for (std::size_t j : members) {
      const auto src = masks[j].values();
      auto dst = united.values();
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] = dst[k] || src[k];
    }
    united = fill_holes(united);
    if (count_components(united) != 1) {
      std::ostringstream dump;
      dump << "merge produced " << count_components(united) << " disjoint outer boundaries; members:";
      for (std::size_t j : members) dump << ' ' << j << "(area " << areas[j] << ")";
      throw InternalError(dump.str());
    }
    Region merged;
    merged.contour = trace_outer_boundary(united);
    merged.block = regions[members.front()].block;
    std::size_t best = members.front();
    for (std::size_t j : members) {
      if (regions[j].score.total > regions[best].score.total) best = j;
      merged.member_snakes.insert(merged.member_snakes.end(), regions[j].member_snakes.begin(),
                                  regions[j].member_snakes.end());
    }
    std::sort(merged.member_snakes.begin(), merged.member_snakes.end());
    merged.member_snakes.erase(std::unique(merged.member_snakes.begin(), merged.member_snakes.end()),
                               merged.member_snakes.end());
    merged.score = regions[best].score;
    out.push_back(std::move(merged));
  }
  return out;
}

}  // namespace mitoseg
