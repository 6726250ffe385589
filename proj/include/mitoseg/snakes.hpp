#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <span>
#include <vector>

#include "mitoseg/curves.hpp"
#include "mitoseg/error.hpp"
#include "mitoseg/geometry.hpp"
#include "mitoseg/ridges.hpp"
#include "mitoseg/settings.hpp"

namespace mitoseg {

/// Consecutive run of slices sharing one snake contour.
struct ZBlock {
  int index = 0;
  int z_lo = 0;
  int z_hi = 0;

  int size() const { return z_hi - z_lo + 1; }
  bool contains(int z) const { return z >= z_lo && z <= z_hi; }
  friend bool operator==(const ZBlock&, const ZBlock&) = default;
};

/// Partition [zmin, zmax] into blocks of `thickness` slices. A trailing
/// remainder shorter than 5 slices joins the previous block.
inline std::vector<ZBlock> make_blocks(int zmin, int zmax, int thickness) {
  constexpr int min_block = 5;
  const int length = zmax - zmin + 1;
  if (length < min_block)
    throw ConfigurationError("z range [" + std::to_string(zmin) + ", " + std::to_string(zmax) + "] has fewer than " +
                             std::to_string(min_block) + " slices");
  if (thickness < min_block) throw ConfigurationError("thickness must be >= " + std::to_string(min_block));
  std::vector<ZBlock> blocks;
  for (int lo = zmin; lo <= zmax; lo += thickness)
    blocks.push_back({static_cast<int>(blocks.size()), lo, std::min(zmax, lo + thickness - 1)});
  if (blocks.size() > 1 && blocks.back().size() < min_block) {
    blocks[blocks.size() - 2].z_hi = zmax;
    blocks.pop_back();
  }
  return blocks;
}

struct Seed {
  Vec2 position;
  int block = 0;
  int cluster_size = 0;
  friend bool operator==(const Seed&, const Seed&) = default;
};

/// Mean ridge strength over a segment's support pixels.
inline double segment_strength(const CurveSegment& seg, const EnergyMap& map) {
  if (seg.support.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : seg.support) s += map.strength(p.x, p.y);
  return s / static_cast<double>(seg.support.size());
}

/// Density clustering of arc midpoints. Two arcs are neighbors when their
/// midpoints are within dbscan_eps and their concave sides face a common
/// interior: the normals agree and each lies on the other's concave side.
/// Straight arcs are compatible with everything. Each cluster yields a seed
/// at the weighted midpoint centroid, pushed by 0.5*eps times the mean
/// concave normal.
inline std::vector<Seed> seed_points(std::span<const CurveSegment> segments, std::span<const double> weights,
                                     int block, const AlgorithmSettings& settings) {
  const std::size_t n = segments.size();
  std::vector<Vec2> mid(n), normal(n);
  std::vector<bool> flat(n);
  for (std::size_t i = 0; i < n; ++i) {
    mid[i] = segments[i].midpoint();
    normal[i] = segments[i].concave_normal();
    flat[i] = std::abs(2.0 * segments[i].a) < settings.seed_flat_curvature;
  }
  const double eps = settings.dbscan_eps;
  const auto compatible = [&](std::size_t i, std::size_t j) {
    if (flat[i] || flat[j]) return true;
    if (dot(normal[i], normal[j]) <= 0.0) return false;
    const Vec2 d = mid[j] - mid[i];
    const double slack = -0.25 * norm(d);
    return dot(d, normal[i]) >= slack && dot(-1.0 * d, normal[j]) >= slack;
  };
  const auto neighbors = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j)
      if (norm(mid[j] - mid[i]) <= eps && (i == j || compatible(i, j))) out.push_back(j);
    return out;
  };

  constexpr int unvisited = -2, noise = -1;
  std::vector<int> label(n, unvisited);
  int clusters = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != unvisited) continue;
    auto nb = neighbors(i);
    if (static_cast<int>(nb.size()) < settings.dbscan_min_pts) {
      label[i] = noise;
      continue;
    }
    const int c = clusters++;
    label[i] = c;
    std::deque<std::size_t> queue(nb.begin(), nb.end());
    while (!queue.empty()) {
      const std::size_t j = queue.front();
      queue.pop_front();
      if (label[j] == noise) label[j] = c;
      if (label[j] != unvisited) continue;
      label[j] = c;
      auto nbj = neighbors(j);
      if (static_cast<int>(nbj.size()) >= settings.dbscan_min_pts) queue.insert(queue.end(), nbj.begin(), nbj.end());
    }
  }

  std::vector<Seed> seeds;
  for (int c = 0; c < clusters; ++c) {
    Vec2 center, push;
    double wsum = 0.0, nsum = 0.0;
    int members = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (label[i] != c) continue;
      const double w = i < weights.size() && weights[i] > 0 ? weights[i] : 1.0;
      center += w * mid[i];
      wsum += w;
      if (!flat[i]) {
        push += w * normal[i];
        nsum += w;
      }
      ++members;
    }
    if (members < settings.dbscan_min_pts) continue;
    Vec2 pos = (1.0 / wsum) * center;
    if (nsum > 0) pos += (0.5 * eps / nsum) * push;
    seeds.push_back({pos, block, members});
  }
  return seeds;
}

struct SnakeContour {
  Polygon nodes;
  int block = 0;
  bool converged = false;
  bool border = false;  // touched the image border
  int iterations = 0;
  Seed seed;
  friend bool operator==(const SnakeContour&, const SnakeContour&) = default;
};

/// Block-averaged LARGE-scale strength, normalized, with its gradient.
struct SnakeField {
  Image strength;
  Image grad_x;
  Image grad_y;
  int width() const { return strength.width(); }
  int height() const { return strength.height(); }
};

inline Image average_strength(std::span<const EnergyMap> maps) {
  if (maps.empty()) throw ConfigurationError("average_strength: no energy maps");
  Image avg(maps.front().width(), maps.front().height());
  auto out = avg.values();
  for (const auto& m : maps) {
    const auto in = m.strength.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
  }
  const float inv = 1.0f / static_cast<float>(maps.size());
  for (auto& v : out) v *= inv;
  return avg;
}

inline SnakeField make_snake_field(const Image& mean_strength, double norm_scale) {
  const int w = mean_strength.width(), h = mean_strength.height();
  SnakeField f{Image(w, h), Image(w, h), Image(w, h)};
  const float inv = static_cast<float>(1.0 / norm_scale);
  for (std::size_t i = 0; i < f.strength.size(); ++i) f.strength.values()[i] = mean_strength.values()[i] * inv;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.grad_x(x, y) = 0.5f * (f.strength(reflect_index(x + 1, w), y) - f.strength(reflect_index(x - 1, w), y));
      f.grad_y(x, y) = 0.5f * (f.strength(x, reflect_index(y + 1, h)) - f.strength(x, reflect_index(y - 1, h)));
    }
  return f;
}

/// Per-iteration observations, for diagnostics and tests.
struct SnakeTrace {
  std::vector<double> area;
  std::vector<double> image_energy;  // -integral of strength along the contour
  std::vector<double> energy;        // weighted image term plus balloon term
  std::vector<double> max_displacement;
};

inline double contour_image_energy(const Polygon& nodes, const Image& strength) {
  double e = 0.0;
  for (std::size_t i = 0, n = nodes.size(); i < n; ++i) {
    const Vec2 a = nodes[i], b = nodes[(i + 1) % n];
    const Vec2 m = 0.5 * (a + b);
    e -= sample_bilinear(strength, m.x, m.y) * norm(b - a);
  }
  return e;
}

/// Energy the balloon dynamics descend: the weighted image term minus the
/// inflation weight times the enclosed area. Internal terms are left out;
/// they are constant for evenly spaced nodes on a circle.
inline double snake_energy(const Polygon& nodes, const Image& strength, const AlgorithmSettings& settings) {
  return settings.snake_image_weight * contour_image_energy(nodes, strength) -
         settings.snake_inflation_weight * signed_area(nodes);
}

/// Balloon snake grown from a seed on a block-averaged strength field.
inline SnakeContour grow_snake(const Seed& seed, const SnakeField& field, const AlgorithmSettings& settings,
                               SnakeTrace* trace = nullptr) {
  constexpr double initial_radius = 10.0;
  constexpr double max_step = 1.0;
  constexpr int resample_every = 5;
  constexpr int stable_needed = 10;
  const int count = settings.snake_node_count;
  const int w = field.width(), h = field.height();
  const auto outside = [&](Vec2 p) { return p.x < 1.0 || p.y < 1.0 || p.x > w - 2.0 || p.y > h - 2.0; };

  SnakeContour snake;
  snake.block = seed.block;
  snake.seed = seed;
  for (int k = 0; k < count; ++k) {
    const double t = 2.0 * std::numbers::pi * k / count;
    snake.nodes.push_back(seed.position + Vec2{initial_radius * std::cos(t), initial_radius * std::sin(t)});
  }
  if (outside(seed.position)) {
    snake.border = true;
    return snake;
  }

  int stable = 0;
  Polygon next(count);
  for (int it = 1; it <= settings.snake_max_iters; ++it) {
    auto& x = snake.nodes;
    const std::size_t n = x.size();
    const double spacing = std::max(perimeter(x) / static_cast<double>(n), 1e-3);
    const double inv_h2 = 1.0 / (spacing * spacing);
    double max_disp = 0.0;
    next.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 p2 = x[(i + n - 2) % n], p1 = x[(i + n - 1) % n], c = x[i], n1 = x[(i + 1) % n], n2 = x[(i + 2) % n];
      const Vec2 tension = inv_h2 * (p1 - 2.0 * c + n1);
      const Vec2 rigidity = -inv_h2 * (p2 - 4.0 * p1 + 6.0 * c - 4.0 * n1 + n2);
      const Vec2 t = n1 - p1;
      const double tl = norm(t);
      const Vec2 outward = tl > 0 ? Vec2{t.y / tl, -t.x / tl} : Vec2{};
      const Vec2 image{sample_bilinear(field.grad_x, c.x, c.y), sample_bilinear(field.grad_y, c.x, c.y)};
      Vec2 disp = settings.snake_step_size *
                  (settings.snake_tension_weight * tension + settings.snake_rigidity_weight * rigidity +
                   settings.snake_inflation_weight * outward + settings.snake_image_weight * image);
      const double len = norm(disp);
      if (len > max_step) disp = (max_step / len) * disp;
      max_disp = std::max(max_disp, std::min(len, max_step));
      next[i] = c + disp;
    }
    x.swap(next);

    if (!is_simple(x)) x = resample_closed(untangle(std::move(x)), count);
    if (it % resample_every == 0) x = resample_closed(x, count);
    snake.iterations = it;
    if (trace) {
      trace->area.push_back(signed_area(x));
      trace->image_energy.push_back(contour_image_energy(x, field.strength));
      trace->energy.push_back(snake_energy(x, field.strength, settings));
      trace->max_displacement.push_back(max_disp);
    }

    if (std::any_of(x.begin(), x.end(), outside)) {
      for (auto& p : x) p = {std::clamp(p.x, 0.0, w - 1.0), std::clamp(p.y, 0.0, h - 1.0)};
      snake.border = true;
      snake.converged = false;
      break;
    }
    stable = max_disp < settings.snake_convergence_eps ? stable + 1 : 0;
    if (stable >= stable_needed) {
      snake.converged = true;
      break;
    }
  }
  make_counter_clockwise(snake.nodes);
  return snake;
}

inline SnakeContour grow_snake(const Seed& seed, std::span<const EnergyMap> large_maps, const AlgorithmSettings& settings) {
  return grow_snake(seed, make_snake_field(average_strength(large_maps), settings.snake_strength_norm), settings);
}

}  // namespace mitoseg
