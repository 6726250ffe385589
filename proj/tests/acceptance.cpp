// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "mitoseg/mitoseg.hpp"
#include "phantom.hpp"
#include "temp_dir.hpp"

using namespace mitoseg;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;
  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "" : "FAILED ") + what);
  }
};

int failures = 0;
std::map<int, std::string> lines;  // printed in criterion order at the end

void report(int n, const Verdict& v, const std::string& extra = "") {
  if (!v.pass) ++failures;
  std::ostringstream out;
  out << "criterion " << n << ": " << (v.pass ? "PASS" : "FAIL");
  std::string sep = " (";
  for (const auto& note : v.notes) {
    out << sep << note;
    sep = "; ";
  }
  if (!v.notes.empty()) out << ')';
  if (!extra.empty()) out << ' ' << extra;
  lines[n] = out.str();
  std::clog << "[acceptance] criterion " << n << " evaluated" << std::endl;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

/// Run the CLI; returns its exit status.
int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("'") + MITOSEG_CLI + "' " + args + " >" + quote(log) + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != kManifestName) out[e.path().filename().string()] = read_file(e.path());
  return out;
}

std::string diff_summary(const std::map<std::string, std::vector<std::uint8_t>>& a,
                         const std::map<std::string, std::vector<std::uint8_t>>& b) {
  if (a.size() != b.size()) return std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " files";
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end()) return "missing " + name;
    if (it->second != bytes) return "differs: " + name;
  }
  return "identical";
}

std::vector<Region> all_candidates(const fs::path& dst, const std::vector<ZBlock>& blocks) {
  std::vector<Region> out;
  for (const auto& b : blocks) {
    const auto r = formats::decode_regions(read_file(dst / names::regions(b.index)), names::regions(b.index));
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

std::vector<BlockRegions> final_regions(const fs::path& dst, const std::vector<ZBlock>& blocks, double threshold,
                                        int width, int height) {
  std::vector<BlockRegions> out;
  for (const auto& b : blocks) {
    const auto r = formats::decode_regions(read_file(dst / names::regions(b.index)), names::regions(b.index));
    out.push_back({b, merge_overlapping(filter_valid(r, threshold), width, height, AlgorithmSettings{}.merge_overlap_min)});
  }
  return out;
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

// ---- criterion 6 oracles ----------------------------------------------------

double arc_cost(const std::vector<Vec2>& pts, double phi, double a) {
  const double cp = std::cos(phi), sp = std::sin(phi), n = static_cast<double>(pts.size());
  double su = 0, suu = 0, sr = 0, sur = 0;
  std::vector<std::pair<double, double>> ur;
  for (const auto& p : pts) {
    const double u = p.x * cp + p.y * sp, r = -p.x * sp + p.y * cp - a * u * u;
    ur.emplace_back(u, r);
    su += u;
    suu += u * u;
    sr += r;
    sur += u * r;
  }
  const double b = (n * sur - su * sr) / (n * suu - su * su), c = (sr - b * su) / n;
  double cost = 0;
  for (const auto& [u, r] : ur) cost += (r - b * u - c) * (r - b * u - c);
  return cost;
}

void criterion6() {
  Verdict v;
  const AlgorithmSettings st;

  // (a) arc fitting
  auto t = Clock::now();
  std::vector<Vec2> exact;
  for (int u = -20; u <= 20; ++u) exact.push_back({double(u), 0.05 * u * u});
  const auto fit = fit_parabola(std::span<const Vec2>(exact), std::vector<double>(exact.size(), 1.0), 0.75);
  const double a_exact = std::holds_alternative<CurveSegment>(fit) ? std::get<CurveSegment>(fit).a : -1;
  std::mt19937 rng(42);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::vector<Vec2> noisy;
  for (int i = 0; i < 60; ++i) {
    const double u = -30.0 + 60.0 * i / 59.0, w = 0.02 * u * u + noise(rng);
    noisy.push_back({u * std::cos(0.4) - w * std::sin(0.4), u * std::sin(0.4) + w * std::cos(0.4)});
  }
  const auto nfit = fit_parabola(std::span<const Vec2>(noisy), std::vector<double>(noisy.size(), 1.0), 10.0);
  const double a_noisy = std::holds_alternative<CurveSegment>(nfit) ? std::abs(std::get<CurveSegment>(nfit).a) : -1;
  double best = 1e300, a_grid = 0;
  for (double phi = 0.4 - pi / 6; phi <= 0.4 + pi / 6; phi += pi / 1800)
    for (double a = -0.05; a <= 0.05; a += 0.0002)
      if (const double c = arc_cost(noisy, phi, a); c < best) {
        best = c;
        a_grid = std::abs(a);
      }
  v.check(std::abs(a_exact - 0.05) <= 1e-6 && std::abs(a_noisy - a_grid) <= 0.15 * a_grid && seconds_since(t) < 10,
          "a: exact a=" + fmt(a_exact, 9) + ", noisy a=" + fmt(a_noisy, 5) + " vs grid " + fmt(a_grid, 5));

  // (b) Hessian of x^2 / 20 at sigma 2
  t = Clock::now();
  Image quad(80, 40);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 80; ++x) quad(x, y) = static_cast<float>((x - 40.0) * (x - 40.0) / 20.0);
  const auto h = hessian(quad, 2.0);
  const double want = 0.1 * 4.0;
  double worst = 0;
  for (int y = 10; y < 30; ++y)
    for (int x = 12; x < 68; ++x) worst = std::max(worst, std::abs(h.xx(x, y) - want) / want);
  v.check(worst <= 0.01 && seconds_since(t) < 10, "b: Hessian rel. error " + fmt(worst, 5));

  // (c) ring curvature
  t = Clock::now();
  std::string ks;
  bool rings_ok = true;
  for (double r : {20.0, 40.0, 80.0}) {
    const int size = static_cast<int>(2 * r + 40);
    const double c = size / 2.0;
    Slice s{0, 2.0, Image(size, size)};
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double d = std::hypot(x - c, y - c) - r;
        s.pixels(x, y) = static_cast<float>(200.0 - 100.0 * std::exp(-d * d / 2.0));
      }
    const EnergyMap m = energy_map(s, Scale::Small, st);
    double sum = 0;
    int n = 0;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if (m.ridge_mask(x, y)) {
          sum += std::abs(m.curvature(x, y));
          ++n;
        }
    const double k = n ? sum / n : 0.0;
    rings_ok = rings_ok && std::abs(k * r - 1.0) <= 0.2;
    ks += (ks.empty() ? "" : ",") + fmt(k * r, 3);
  }
  v.check(rings_ok && seconds_since(t) < 10, "c: r*kappa = " + ks);

  // (d) snake on a 40 px ring
  t = Clock::now();
  std::vector<EnergyMap> maps;
  for (int z = 0; z < 5; ++z) {
    Slice s{z, 2.0, Image(160, 160)};
    for (int y = 0; y < 160; ++y)
      for (int x = 0; x < 160; ++x) {
        const double d = std::hypot(x - 80.0, y - 80.0) - 40.0;
        s.pixels(x, y) = static_cast<float>(180.0 - 90.0 * std::exp(-d * d / 2.0));
      }
    maps.push_back(energy_map(s, Scale::Large, st));
  }
  const auto snake = grow_snake(Seed{{80, 80}, 0, 8}, std::span<const EnergyMap>(maps), st);
  double rsum = 0;
  for (const auto& p : snake.nodes) rsum += norm(p - Vec2{80, 80});
  const double rmean = rsum / static_cast<double>(snake.nodes.size());
  v.check(snake.converged && std::abs(rmean - 40.0) <= 2.0 && seconds_since(t) < 10,
          "d: snake radius " + fmt(rmean, 2) + (snake.converged ? "" : " not converged"));
  report(6, v);
}

// ---- criterion 7 helpers -----------------------------------------------------

struct PlyData {
  std::size_t nv = 0, nf = 0;
  std::vector<float> coords;
  std::vector<long> faces;
  bool ok = false;
};

PlyData read_ply(const fs::path& path) {
  PlyData d;
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line) || line != "ply") return d;
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string w, kind;
    ls >> w;
    if (w == "element") {
      std::size_t n = 0;
      ls >> kind >> n;
      (kind == "vertex" ? d.nv : d.nf) = n;
    }
  }
  for (std::size_t i = 0; i < 3 * d.nv; ++i) {
    std::string tok;
    in >> tok;
    d.coords.push_back(std::strtof(tok.c_str(), nullptr));
  }
  for (std::size_t i = 0; i < d.nf; ++i) {
    long k, a, b, c;
    in >> k >> a >> b >> c;
    if (k != 3) return d;
    d.faces.insert(d.faces.end(), {a, b, c});
  }
  std::string rest;
  d.ok = !in.fail() && !(in >> rest);
  return d;
}

struct ImodSummary {
  bool magic = false;
  int objects = -1;
  std::vector<std::vector<std::pair<std::uint32_t, std::vector<float>>>> contours;  // per object: (flags, z list)
  bool terminated = false;
};

ImodSummary read_imod(const std::vector<std::uint8_t>& d) {
  ImodSummary s;
  std::size_t pos = 0;
  const auto need = [&](std::size_t n) { return pos + n <= d.size(); };
  const auto be32 = [&] {
    const std::uint32_t v = (std::uint32_t(d[pos]) << 24) | (std::uint32_t(d[pos + 1]) << 16) |
                            (std::uint32_t(d[pos + 2]) << 8) | std::uint32_t(d[pos + 3]);
    pos += 4;
    return v;
  };
  const auto tag = [&] {
    std::string t(d.begin() + static_cast<std::ptrdiff_t>(pos), d.begin() + static_cast<std::ptrdiff_t>(pos + 4));
    pos += 4;
    return t;
  };
  if (!need(8 + 128 + 4 * 26)) return s;
  s.magic = tag() == "IMOD" && tag() == "V1.2";
  pos += 128 + 12;
  s.objects = static_cast<int>(be32());
  pos += 4 * 22;
  for (int o = 0; o < s.objects; ++o) {
    if (!need(4 + 128 + 4 + 4 * 3 + 4 * 3 + 4 + 8 + 8) || tag() != "OBJT") return s;
    pos += 128;
    const auto count = be32();
    pos += 12 + 12 + 4 + 8 + 8;
    auto& obj = s.contours.emplace_back();
    for (std::uint32_t c = 0; c < count; ++c) {
      if (!need(20) || tag() != "CONT") return s;
      const auto npts = be32();
      const auto flags = be32();
      pos += 8;
      if (!need(12 * npts)) return s;
      std::vector<float> zs;
      for (std::uint32_t p = 0; p < npts; ++p) {
        pos += 8;
        const std::uint32_t bits = be32();
        float z;
        std::memcpy(&z, &bits, 4);
        zs.push_back(z);
      }
      obj.emplace_back(flags, std::move(zs));
    }
  }
  s.terminated = need(4) && tag() == "IEOF" && pos == d.size();
  return s;
}

}  // namespace

int run_all() {
  const phantom::Spec spec;
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  TempDir work("mitoseg-acceptance");
  const fs::path src = work / "src";
  phantom::write_stack(spec, src);
  const std::string base = "--pattern " + std::string(phantom::kPattern) + " --psize 2.0 --zrange " +
                           std::to_string(spec.zmin) + " " + std::to_string(spec.zmax) + " --src " + quote(src);
  const auto dst_of = [&](const std::string& name) { return work / name; };
  const auto run_full = [&](const std::string& name, int cores, double* secs = nullptr) {
    const auto t = Clock::now();
    const int code = cli(base + " --dst " + quote(dst_of(name)) + " --cores " + std::to_string(cores), work / (name + ".log"));
    if (secs) *secs = seconds_since(t);
    return code;
  };

  // ---- 2: defaults
  {
    Verdict v;
    const auto t = Clock::now();
    const std::vector<std::string> req = {"--pattern", "m%03d.png", "--psize", "2", "--zrange", "1", "10"};
    const RunConfig cfg = parse_cli(req);
    v.check(cfg.valid_threshold == 0.75 && cfg.thickness == 20 && cfg.cores == 1, "valid=0.75 thick=20 cores=1");
    const auto rejected = [&](std::vector<std::string> extra) {
      auto args = req;
      args.insert(args.end(), extra.begin(), extra.end());
      try {
        parse_cli(args);
        return false;
      } catch (const UsageError&) {
        return true;
      } catch (const RangeError&) {
        return true;
      }
    };
    v.check(rejected({"--thick", "4"}) && rejected({"--thick", "501"}), "--thick 4 / 501 rejected");
    v.check(rejected({"--valid", "1.01"}) && rejected({"--valid", "-0.01"}), "--valid outside [0,1] rejected");
    v.check(seconds_since(t) < 1.0, "< 1 s");
    report(2, v);
  }

  // ---- 3 (and inputs for 1, 4, 5, 7, 8, 9): full phantom run, single core
  double single_secs = 0.0;
  const int code1 = run_full("cores1", 1, &single_secs);
  const fs::path out1 = dst_of("cores1");
  const auto blocks = make_blocks(spec.zmin, spec.zmax, 20);
  std::vector<BlockRegions> finals;
  if (code1 == 0) finals = final_regions(out1, blocks, 0.75, spec.width, spec.height);

  {
    Verdict v;
    v.check(code1 == 0, "full run exit " + std::to_string(code1));
    v.check(single_secs < 120.0, "single-core runtime " + fmt(single_secs, 1) + " s");
    const auto& mitos = spec.bodies;
    bool exact = !finals.empty();
    for (const auto& br : finals) {
      std::set<int> hit;
      for (const auto& r : br.regions) {
        const Vec2 c = centroid(r.contour);
        for (int i = 0; i < 2; ++i)
          if (norm(c - mitos[i].center) < 15.0) hit.insert(i);
      }
      exact = exact && br.regions.size() == 2 && hit.size() == 2;
    }
    v.check(exact, "each block: exactly the two mitochondria");
    double decoy_interior = 0.0, decoy_total = 0.0;
    int decoys = 0;
    if (code1 == 0)
      for (const auto& r : all_candidates(out1, blocks))
        if (point_in_polygon(r.contour, mitos[2].center) && !point_in_polygon(r.contour, mitos[0].center) &&
            !point_in_polygon(r.contour, mitos[1].center)) {
          ++decoys;
          decoy_interior = std::max(decoy_interior, r.score.interior_energy);
          decoy_total = std::max(decoy_total, r.score.total);
        }
    v.check(decoys > 0 && decoy_total < 0.75 && decoy_interior < 0.2,
            std::to_string(decoys) + " decoy candidates, max total " + fmt(decoy_total) + ", max interior " +
                fmt(decoy_interior));
    report(3, v);
  }

  // ---- 1: block layering, and overlays of the first block carry only its contours
  {
    Verdict v;
    const auto t = Clock::now();
    const auto layered = make_blocks(35, 74, 20);
    v.check(layered.size() == 2 && layered[0].z_lo == 35 && layered[0].z_hi == 54 && layered[1].z_lo == 55 &&
                layered[1].z_hi == 74 && seconds_since(t) < 1.0,
            "blocks [35,54] [55,74]");
    bool ok = code1 == 0 && finals.size() == 2;
    std::set<std::array<int, 3>> own, other;
    if (ok) {
      int index = 0;
      for (std::size_t b = 0; b < finals.size(); ++b)
        for (std::size_t r = 0; r < finals[b].regions.size(); ++r, ++index) {
          const auto c = region_color(index);
          std::array<int, 3> bgr = {int(std::lround(c[2] * 255)), int(std::lround(c[1] * 255)), int(std::lround(c[0] * 255))};
          (b == 0 ? own : other).insert(bgr);
        }
      for (int z = 35; z <= 54 && ok; ++z) {
        const cv::Mat img = cv::imread((out1 / names::overlay(z)).string(), cv::IMREAD_COLOR);
        std::set<std::array<int, 3>> seen;
        for (int y = 0; y < img.rows; ++y)
          for (int x = 0; x < img.cols; ++x) {
            const auto p = img.at<cv::Vec3b>(y, x);
            if (p[0] == p[1] && p[1] == p[2]) continue;
            seen.insert({p[0], p[1], p[2]});
          }
        ok = seen == own;
      }
    }
    v.check(ok, "z=35..54 overlays show exactly the block [35,54] contour colors");
    report(1, v);
  }

  // ---- 4: threshold monotonicity
  {
    Verdict v;
    if (code1 == 0) {
      const auto cands = all_candidates(out1, blocks);
      const auto key_set = [&](double thr) {
        std::set<std::pair<int, std::vector<int>>> keys;
        for (const auto& r : filter_valid(cands, thr)) keys.insert({r.block, r.member_snakes});
        return keys;
      };
      const auto s9 = key_set(0.9), s75 = key_set(0.75), s5 = key_set(0.5);
      v.check(std::includes(s75.begin(), s75.end(), s9.begin(), s9.end()) &&
                  std::includes(s5.begin(), s5.end(), s75.begin(), s75.end()),
              "|0.9|=" + std::to_string(s9.size()) + " <= |0.75|=" + std::to_string(s75.size()) +
                  " <= |0.5|=" + std::to_string(s5.size()) + " of " + std::to_string(cands.size()));
    } else {
      v.check(false, "no phantom run");
    }
    report(4, v);
  }

  // ---- 5: determinism and speed-up
  {
    Verdict v;
    const auto reference = snapshot(out1);
    std::set<unsigned> cores = {2, hw, 4};
    for (unsigned c : cores) {
      const std::string name = "cores" + std::to_string(c);
      if (c == 1) continue;
      const int code = run_full(name, static_cast<int>(c));
      v.check(code == 0 && snapshot(dst_of(name)) == reference,
              "cores=" + std::to_string(c) + " " + diff_summary(reference, snapshot(dst_of(name))));
    }
    std::string speed;
    if (hw >= 4) {
      double four_secs = 0.0;
      run_full("speed4", 4, &four_secs);
      const double ratio = four_secs / single_secs;
      v.check(ratio < 0.6, "cores=4 time ratio " + fmt(ratio, 2) + " < 0.6");
    } else {
      speed = "speed-up NOT EVALUATED (hardware_concurrency=" + std::to_string(hw) + " < 4)";
    }
    report(5, v, speed);
  }

  // ---- 6: numeric kernels
  criterion6();

  // ---- 7: formats
  {
    Verdict v;
    if (code1 == 0) {
      const Mesh mesh = extrude_mesh(finals, {2.0, 2.0});
      const PlyData ply = read_ply(out1 / names::kPly);
      bool same = ply.ok && ply.nv == mesh.vertices.size() && ply.nf == mesh.triangles.size();
      for (std::size_t i = 0; same && i < mesh.vertices.size(); ++i)
        same = ply.coords[3 * i] == mesh.vertices[i].x && ply.coords[3 * i + 1] == mesh.vertices[i].y &&
               ply.coords[3 * i + 2] == mesh.vertices[i].z;
      for (std::size_t i = 0; same && i < mesh.triangles.size(); ++i)
        for (int k = 0; k < 3; ++k) same = same && ply.faces[3 * i + k] == static_cast<long>(mesh.triangles[i][k]);
      v.check(same, "final.ply: " + std::to_string(ply.nv) + " vertices, " + std::to_string(ply.nf) + " faces reproduced");

      const ImodSummary mod = read_imod(read_file(out1 / names::kMod));
      std::size_t regions = 0;
      bool contours_ok = mod.magic && mod.terminated;
      int obj = 0;
      for (const auto& br : finals)
        for (std::size_t r = 0; r < br.regions.size(); ++r, ++obj) {
          ++regions;
          if (obj >= static_cast<int>(mod.contours.size()) ||
              mod.contours[obj].size() != static_cast<std::size_t>(br.block.size())) {
            contours_ok = false;
            continue;
          }
          for (int k = 0; k < br.block.size(); ++k) {
            const auto& [flags, zs] = mod.contours[obj][k];
            contours_ok = contours_ok && flags == 0 && !zs.empty() &&
                          std::all_of(zs.begin(), zs.end(), [&](float z) { return z == float(br.block.z_lo + k); });
          }
        }
      v.check(mod.objects == static_cast<int>(regions) && contours_ok,
              "final.mod: " + std::to_string(mod.objects) + " objects, one closed contour per block slice");
    } else {
      v.check(false, "no phantom run");
    }
    Polygon circle;
    for (int k = 0; k < 64; ++k) circle.push_back({100 + 40 * std::cos(2 * pi * k / 64), 100 + 40 * std::sin(2 * pi * k / 64)});
    Region r;
    r.contour = circle;
    const Mesh cyl = extrude_mesh({{{0, 35, 54}, {r}}}, {1.0, 1.0});
    const double expect = pi * 40 * 40 * 20;
    v.check(is_closed_manifold(cyl) && std::abs(signed_volume(cyl) - expect) <= 0.03 * expect,
            "cylinder volume ratio " + fmt(signed_volume(cyl) / expect, 4) + ", closed manifold");
    report(7, v);
  }

  // ---- 8: phase composability
  {
    Verdict v;
    const fs::path phased = dst_of("phased");
    int codes = 0;
    for (int p : {1, 2, 3})
      codes |= cli(base + " --dst " + quote(phased) + " --phase " + std::to_string(p), work / "phased.log");
    v.check(codes == 0 && snapshot(phased) == snapshot(out1), "phased vs full " + diff_summary(snapshot(out1), snapshot(phased)));
    const fs::path empty = dst_of("empty");
    fs::create_directories(empty);
    const int code = cli(base + " --dst " + quote(empty) + " --phase 2", work / "empty.log");
    v.check(code == 3, "--phase 2 on empty dst exits " + std::to_string(code));
    report(8, v);
  }

  // ---- 9: measurement pathway
  {
    Verdict v;
    const Manifest m = Manifest::load(out1);
    std::string found;
    bool ok = true;
    for (int p : {1, 2, 3}) {
      const auto wall = m.get("phase" + std::to_string(p) + ".wall_seconds");
      const auto rss = m.get("phase" + std::to_string(p) + ".peak_rss_kb");
      ok = ok && wall.has_value() && rss.has_value();
      found += " phase" + std::to_string(p) + "=" + wall.value_or("?") + "s/" + rss.value_or("?") + "kB";
    }
    v.check(ok, "manifest records" + found);
    report(9, v);
  }

  for (const auto& [n, line] : lines) std::cout << line << '\n';
  return failures == 0 ? 0 : 1;
}

int main() {
  try {
    return run_all();
  } catch (const std::exception& e) {
    for (const auto& [n, line] : lines) std::cout << line << '\n';
    std::cout << "acceptance aborted: " << e.what() << '\n';
    return 1;
  }
}
