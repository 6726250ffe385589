#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/imgproc.hpp>

#include "mitoseg/binary_io.hpp"
#include "mitoseg/geometry.hpp"
#include "mitoseg/snakes.hpp"
#include "mitoseg/validation.hpp"

namespace mitoseg {

struct Vertex {
  float x = 0.0f, y = 0.0f, z = 0.0f;  // nm
  friend bool operator==(const Vertex&, const Vertex&) = default;
};

using Triangle = std::array<std::uint32_t, 3>;

struct Mesh {
  std::vector<Vertex> vertices;
  std::vector<Triangle> triangles;
  std::vector<int> region_id;  // one per triangle
};

/// Physical scale of the output: in-plane pixel pitch after resampling and
/// the slice pitch of the input stack.
struct MeshScale {
  double pixel_nm = 2.0;
  double slice_nm = 2.0;
};

/// Regions of one block, as handed to the writers.
struct BlockRegions {
  ZBlock block;
  std::vector<Region> regions;
};

namespace detail {

/// Drop repeated and collinear nodes.
inline Polygon clean_polygon(const Polygon& poly) {
  Polygon p;
  for (const auto& v : poly)
    if (p.empty() || norm(v - p.back()) > 1e-9) p.push_back(v);
  while (p.size() > 1 && norm(p.front() - p.back()) <= 1e-9) p.pop_back();
  bool changed = true;
  while (changed && p.size() >= 3) {
    changed = false;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const std::size_t n = p.size();
      const Vec2 a = p[(i + n - 1) % n], b = p[i], c = p[(i + 1) % n];
      if (std::abs(cross(b - a, c - b)) <= 1e-9 * std::max(1.0, norm(b - a) * norm(c - b))) {
        p.erase(p.begin() + static_cast<std::ptrdiff_t>(i));
        changed = true;
        break;
      }
    }
  }
  return p;
}

inline bool inside_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c) {
  return cross(b - a, p - a) >= 0 && cross(c - b, p - b) >= 0 && cross(a - c, p - c) >= 0;
}

}  // namespace detail

/// Ear-clipping triangulation of a simple counter-clockwise polygon; indices
/// refer to `poly`. Empty result on failure.
inline std::vector<Triangle> ear_clip(const Polygon& poly) {
  std::vector<Triangle> tris;
  std::vector<std::uint32_t> idx(poly.size());
  for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
  while (idx.size() > 3) {
    bool clipped = false;
    const std::size_t n = idx.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t ia = idx[(i + n - 1) % n], ib = idx[i], ic = idx[(i + 1) % n];
      const Vec2 a = poly[ia], b = poly[ib], c = poly[ic];
      if (cross(b - a, c - b) <= 1e-12) continue;  // reflex or flat
      bool blocked = false;
      for (std::size_t k = 0; k < n && !blocked; ++k) {
        const std::uint32_t ik = idx[k];
        if (ik == ia || ik == ib || ik == ic) continue;
        if (poly[ik] == a || poly[ik] == b || poly[ik] == c) continue;
        blocked = detail::inside_triangle(poly[ik], a, b, c);
      }
      if (blocked) continue;
      tris.push_back({ia, ib, ic});
      idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(i));
      clipped = true;
      break;
    }
    if (!clipped) return {};
  }
  if (idx.size() == 3) {
    const Vec2 a = poly[idx[0]], b = poly[idx[1]], c = poly[idx[2]];
    if (cross(b - a, c - b) <= 1e-12) return {};
    tris.push_back({idx[0], idx[1], idx[2]});
  }
  return tris;
}

/// Extrude every region of its block from z_lo to z_hi + 1 slice pitch,
/// producing one closed prism per region. Regions that cannot be
/// triangulated are skipped and reported in `warnings`.
inline Mesh extrude_mesh(const std::vector<BlockRegions>& blocks, const MeshScale& scale,
                         std::vector<std::string>* warnings = nullptr) {
  Mesh mesh;
  int region_id = 0;
  for (const auto& br : blocks) {
    for (const auto& region : br.regions) {
      const int id = region_id++;
      Polygon poly = detail::clean_polygon(region.contour);
      make_counter_clockwise(poly);
      const auto caps = poly.size() >= 3 ? ear_clip(poly) : std::vector<Triangle>{};
      if (caps.empty()) {
        if (warnings) warnings->push_back("region " + std::to_string(id) + " in block " + std::to_string(br.block.index) +
                                          " could not be triangulated; skipped");
        continue;
      }
      const auto n = static_cast<std::uint32_t>(poly.size());
      const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
      const float z0 = static_cast<float>(br.block.z_lo * scale.slice_nm);
      const float z1 = static_cast<float>((br.block.z_hi + 1) * scale.slice_nm);
      for (float z : {z0, z1})
        for (const auto& p : poly)
          mesh.vertices.push_back(
              {static_cast<float>(p.x * scale.pixel_nm), static_cast<float>(p.y * scale.pixel_nm), z});
      const auto add = [&](std::uint32_t a, std::uint32_t b, std::uint32_t c) {
        mesh.triangles.push_back({a, b, c});
        mesh.region_id.push_back(id);
      };
      for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t j = (i + 1) % n;
        add(base + i, base + j, base + n + j);
        add(base + i, base + n + j, base + n + i);
      }
      for (const auto& t : caps) {
        add(base + n + t[0], base + n + t[1], base + n + t[2]);  // top, facing +z
        add(base + t[0], base + t[2], base + t[1]);              // bottom, facing -z
      }
    }
  }
  return mesh;
}

/// Every undirected edge of each region's sub-mesh is shared by exactly two
/// triangles.
inline bool is_closed_manifold(const Mesh& mesh) {
  std::map<std::pair<int, std::pair<std::uint32_t, std::uint32_t>>, int> edges;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      auto a = tri[k], b = tri[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edges[{mesh.region_id[t], {a, b}}];
    }
  }
  for (const auto& [e, count] : edges)
    if (count != 2) return false;
  return true;
}

inline double signed_volume(const Mesh& mesh) {
  double v = 0.0;
  for (const auto& t : mesh.triangles) {
    const Vertex &a = mesh.vertices[t[0]], &b = mesh.vertices[t[1]], &c = mesh.vertices[t[2]];
    v += (static_cast<double>(a.x) * (static_cast<double>(b.y) * c.z - static_cast<double>(b.z) * c.y) -
          static_cast<double>(a.y) * (static_cast<double>(b.x) * c.z - static_cast<double>(b.z) * c.x) +
          static_cast<double>(a.z) * (static_cast<double>(b.x) * c.y - static_cast<double>(b.y) * c.x)) /
         6.0;
  }
  return v;
}

namespace detail {

inline void append_float(std::string& out, float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace detail

/// ASCII PLY 1.0 text. Floats use the shortest representation that parses
/// back to the identical value.
inline std::string ply_text(const Mesh& mesh) {
  std::string out;
  out += "ply\nformat ascii 1.0\ncomment mitoseg mesh, coordinates in nm\n";
  out += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  out += "element face " + std::to_string(mesh.triangles.size()) + "\n";
  out += "property list uchar int vertex_indices\nend_header\n";
  for (const auto& v : mesh.vertices) {
    detail::append_float(out, v.x);
    out += ' ';
    detail::append_float(out, v.y);
    out += ' ';
    detail::append_float(out, v.z);
    out += '\n';
  }
  for (const auto& t : mesh.triangles)
    out += "3 " + std::to_string(t[0]) + ' ' + std::to_string(t[1]) + ' ' + std::to_string(t[2]) + '\n';
  return out;
}

inline void write_ply(const Mesh& mesh, const std::filesystem::path& path) { write_file(path, ply_text(mesh)); }

/// Distinct, deterministic color per region index (RGB in [0, 1]).
inline std::array<double, 3> region_color(int index) {
  const double hue = std::fmod(index * 0.618033988749895, 1.0) * 6.0;
  const double f = hue - std::floor(hue);
  const double s = 0.85, v = 0.95;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (static_cast<int>(hue) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

/// Header values of the IMOD model written next to the mesh.
struct ImodInfo {
  int width = 0;   // image size in px
  int height = 0;
  int zmax = 0;    // one past the highest slice number
  double pixel_nm = 2.0;
  double slice_nm = 2.0;
};

/// Binary IMOD model (big-endian, "IMOD" "V1.2"): one object per region,
/// one closed contour per slice of the region's block, then "IEOF".
/// Points are in pixels with z the slice number; pixel size in nm.
inline std::vector<std::uint8_t> imod_bytes(const std::vector<BlockRegions>& blocks, const ImodInfo& info) {
  std::size_t objects = 0;
  for (const auto& b : blocks) objects += b.regions.size();

  ByteWriter w(std::endian::big);
  w.bytes("IMOD");
  w.bytes("V1.2");
  std::string name = "mitoseg";
  name.resize(128, '\0');
  w.bytes(name);
  w.i32(info.width);
  w.i32(info.height);
  w.i32(info.zmax);
  w.i32(static_cast<std::int32_t>(objects));
  w.u32(0);   // flags
  w.i32(1);   // drawmode
  w.i32(0);   // mousemode
  w.i32(0);   // blacklevel
  w.i32(255); // whitelevel
  w.f32(0.0f);
  w.f32(0.0f);
  w.f32(0.0f);  // offsets
  w.f32(1.0f);
  w.f32(1.0f);
  w.f32(static_cast<float>(info.slice_nm / info.pixel_nm));  // z scale
  w.i32(0);
  w.i32(0);
  w.i32(0);  // current object, contour, point
  w.i32(3);  // res
  w.i32(128);  // thresh
  w.f32(static_cast<float>(info.pixel_nm));
  w.i32(-9);  // units: nm
  w.i32(0);   // csum
  w.f32(0.0f);
  w.f32(0.0f);
  w.f32(0.0f);  // alpha, beta, gamma

  int index = 0;
  for (const auto& br : blocks) {
    for (const auto& region : br.regions) {
      const auto color = region_color(index);
      w.bytes("OBJT");
      std::string oname = "mitochondrion " + std::to_string(index + 1);
      oname.resize(64, '\0');
      w.bytes(oname);
      w.zeros(16 * 4);  // extra
      w.i32(br.block.size());
      w.u32(0);  // flags: closed contours, shown
      w.i32(0);  // axis
      w.i32(0);  // drawmode
      w.f32(static_cast<float>(color[0]));
      w.f32(static_cast<float>(color[1]));
      w.f32(static_cast<float>(color[2]));
      w.i32(0);  // pdrawsize
      w.u8(1);   // symbol
      w.u8(3);   // symsize
      w.u8(1);   // linewidth2
      w.u8(1);   // linewidth
      w.u8(0);   // linesty
      w.u8(0);   // symflags
      w.u8(0);   // sympad
      w.u8(0);   // trans
      w.i32(0);  // meshsize
      w.i32(0);  // surfsize
      for (int z = br.block.z_lo; z <= br.block.z_hi; ++z) {
        w.bytes("CONT");
        w.i32(static_cast<std::int32_t>(region.contour.size()));
        w.u32(0);  // flags: closed
        w.i32(0);  // time
        w.i32(0);  // surf
        for (const auto& p : region.contour) {
          w.f32(static_cast<float>(p.x));
          w.f32(static_cast<float>(p.y));
          w.f32(static_cast<float>(z));
        }
      }
      ++index;
    }
  }
  w.bytes("IEOF");
  return w.take();
}

inline void write_imod(const std::vector<BlockRegions>& blocks, const ImodInfo& info, const std::filesystem::path& path) {
  write_file(path, imod_bytes(blocks, info));
}

/// Grayscale slice with each region contour of its block drawn in a
/// distinct color, 2 px stroke.
inline cv::Mat render_overlay(const cv::Mat& gray8, std::span<const Region> regions, int first_color_index) {
  cv::Mat color;
  cv::cvtColor(gray8, color, cv::COLOR_GRAY2BGR);
  int index = first_color_index;
  for (const auto& r : regions) {
    std::vector<cv::Point> pts;
    pts.reserve(r.contour.size());
    for (const auto& p : r.contour) pts.emplace_back(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)));
    const auto c = region_color(index++);
    const cv::Scalar bgr(std::round(c[2] * 255), std::round(c[1] * 255), std::round(c[0] * 255));
    cv::polylines(color, std::vector<std::vector<cv::Point>>{pts}, true, bgr, 2, cv::LINE_8);
  }
  return color;
}

}  // namespace mitoseg
