#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mitoseg/binary_io.hpp"
#include "mitoseg/curves.hpp"
#include "mitoseg/ridges.hpp"
#include "mitoseg/snakes.hpp"
#include "mitoseg/validation.hpp"

// Little-endian intermediate files exchanged between phases.
namespace mitoseg::formats {

inline constexpr std::uint32_t kVersion = 1;

namespace detail {

inline void version(ByteReader& r, const std::string& what) {
  const auto v = r.u32();
  if (v != kVersion) throw FormatError(what + ": unsupported version " + std::to_string(v));
}

inline void finish(const ByteReader& r, const std::string& what) {
  if (!r.at_end()) throw FormatError(what + ": trailing bytes");
}

inline Scale scale_tag(std::uint8_t t, const std::string& what) {
  if (t > 1) throw FormatError(what + ": bad scale tag");
  return static_cast<Scale>(t);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_energy(const EnergyMap& m) {
  ByteWriter w;
  w.bytes("EMAP");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(m.width()));
  w.u32(static_cast<std::uint32_t>(m.height()));
  w.u8(static_cast<std::uint8_t>(m.scale));
  for (const Image* plane : {&m.strength, &m.orientation, &m.curvature})
    for (float v : plane->values()) w.f32(v);
  const auto bits = m.ridge_mask.values();
  for (std::size_t i = 0; i < bits.size(); i += 8) {
    std::uint8_t byte = 0;
    for (std::size_t k = 0; k < 8 && i + k < bits.size(); ++k)
      if (bits[i + k]) byte |= static_cast<std::uint8_t>(1u << k);
    w.u8(byte);
  }
  return w.take();
}

/// The slice number is not stored in the file; pass it from the file name.
inline EnergyMap decode_energy(std::span<const std::uint8_t> data, int z, const std::string& what) {
  ByteReader r(data, what);
  r.expect_magic("EMAP");
  detail::version(r, what);
  const auto w = r.u32(), h = r.u32();
  if (w == 0 || h == 0 || w > 1u << 16 || h > 1u << 16) throw FormatError(what + ": bad dimensions");
  EnergyMap m;
  m.z = z;
  m.scale = detail::scale_tag(r.u8(), what);
  const int iw = static_cast<int>(w), ih = static_cast<int>(h);
  m.strength = Image(iw, ih);
  m.orientation = Image(iw, ih);
  m.curvature = Image(iw, ih);
  m.ridge_mask = Mask(iw, ih);
  for (Image* plane : {&m.strength, &m.orientation, &m.curvature})
    for (float& v : plane->values()) v = r.f32();
  auto bits = m.ridge_mask.values();
  for (std::size_t i = 0; i < bits.size(); i += 8) {
    const std::uint8_t byte = r.u8();
    for (std::size_t k = 0; k < 8 && i + k < bits.size(); ++k) bits[i + k] = (byte >> k) & 1u;
  }
  detail::finish(r, what);
  return m;
}

inline std::vector<std::uint8_t> encode_curves(std::span<const CurveSegment> segments) {
  ByteWriter w;
  w.bytes("CRVS");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(segments.size()));
  for (const auto& s : segments) {
    for (double v : {s.vertex.x, s.vertex.y, s.theta, s.a, s.t_min, s.t_max, s.rms_residual}) w.f64(v);
    w.u32(static_cast<std::uint32_t>(s.support.size()));
    for (const auto& p : s.support) {
      w.u16(static_cast<std::uint16_t>(p.x));
      w.u16(static_cast<std::uint16_t>(p.y));
    }
  }
  return w.take();
}

inline std::vector<CurveSegment> decode_curves(std::span<const std::uint8_t> data, int z, Scale scale,
                                               const std::string& what) {
  ByteReader r(data, what);
  r.expect_magic("CRVS");
  detail::version(r, what);
  const auto count = r.u32();
  std::vector<CurveSegment> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    CurveSegment s;
    s.z = z;
    s.scale = scale;
    s.vertex.x = r.f64();
    s.vertex.y = r.f64();
    s.theta = r.f64();
    s.a = r.f64();
    s.t_min = r.f64();
    s.t_max = r.f64();
    s.rms_residual = r.f64();
    const auto n = r.u32();
    if (n > r.remaining() / 4) throw FormatError(what + ": truncated");
    s.support.resize(n);
    for (auto& p : s.support) {
      p.x = r.u16();
      p.y = r.u16();
    }
    out.push_back(std::move(s));
  }
  detail::finish(r, what);
  return out;
}

inline std::vector<std::uint8_t> encode_snake(const SnakeContour& s) {
  ByteWriter w;
  w.bytes("SNKE");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(s.block));
  w.f64(s.seed.position.x);
  w.f64(s.seed.position.y);
  w.u32(static_cast<std::uint32_t>(s.seed.cluster_size));
  w.u8(s.converged ? 1 : 0);
  w.u8(s.border ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(s.iterations));
  w.u32(static_cast<std::uint32_t>(s.nodes.size()));
  for (const auto& p : s.nodes) {
    w.f64(p.x);
    w.f64(p.y);
  }
  return w.take();
}

inline SnakeContour decode_snake(std::span<const std::uint8_t> data, const std::string& what) {
  ByteReader r(data, what);
  r.expect_magic("SNKE");
  detail::version(r, what);
  SnakeContour s;
  s.block = static_cast<int>(r.u32());
  s.seed.block = s.block;
  s.seed.position.x = r.f64();
  s.seed.position.y = r.f64();
  s.seed.cluster_size = static_cast<int>(r.u32());
  s.converged = r.u8() != 0;
  s.border = r.u8() != 0;
  s.iterations = static_cast<int>(r.u32());
  const auto n = r.u32();
  if (n > r.remaining() / 16) throw FormatError(what + ": truncated");
  s.nodes.resize(n);
  for (auto& p : s.nodes) {
    p.x = r.f64();
    p.y = r.f64();
  }
  detail::finish(r, what);
  return s;
}

inline std::vector<std::uint8_t> encode_regions(int block, std::span<const Region> regions) {
  ByteWriter w;
  w.bytes("RGNS");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(block));
  w.u32(static_cast<std::uint32_t>(regions.size()));
  for (const auto& r : regions) {
    const auto& s = r.score;
    for (double v : {s.boundary_energy, s.interior_energy, s.area_score, s.discontinuity, s.curvature_score,
                     s.signature_score, s.total})
      w.f64(v);
    w.u32(static_cast<std::uint32_t>(r.member_snakes.size()));
    for (int m : r.member_snakes) w.u32(static_cast<std::uint32_t>(m));
    w.u32(static_cast<std::uint32_t>(r.contour.size()));
    for (const auto& p : r.contour) {
      w.f64(p.x);
      w.f64(p.y);
    }
  }
  return w.take();
}

inline std::vector<Region> decode_regions(std::span<const std::uint8_t> data, const std::string& what) {
  ByteReader r(data, what);
  r.expect_magic("RGNS");
  detail::version(r, what);
  const int block = static_cast<int>(r.u32());
  const auto count = r.u32();
  std::vector<Region> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    Region g;
    g.block = block;
    auto& s = g.score;
    for (double* v : {&s.boundary_energy, &s.interior_energy, &s.area_score, &s.discontinuity, &s.curvature_score,
                      &s.signature_score, &s.total})
      *v = r.f64();
    const auto members = r.u32();
    if (members > r.remaining() / 4) throw FormatError(what + ": truncated");
    for (std::uint32_t k = 0; k < members; ++k) g.member_snakes.push_back(static_cast<int>(r.u32()));
    const auto n = r.u32();
    if (n > r.remaining() / 16) throw FormatError(what + ": truncated");
    g.contour.resize(n);
    for (auto& p : g.contour) {
      p.x = r.f64();
      p.y = r.f64();
    }
    out.push_back(std::move(g));
  }
  detail::finish(r, what);
  return out;
}

}  // namespace mitoseg::formats
