#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mitoseg/config.hpp"
#include "mitoseg/curves.hpp"
#include "mitoseg/formats.hpp"
#include "mitoseg/imaging.hpp"
#include "mitoseg/manifest.hpp"
#include "mitoseg/meshout.hpp"
#include "mitoseg/parallel.hpp"
#include "mitoseg/ridges.hpp"
#include "mitoseg/settings.hpp"
#include "mitoseg/snakes.hpp"
#include "mitoseg/validation.hpp"

namespace mitoseg {

namespace names {

inline std::string printf_name(const char* fmt, int a, const char* b = nullptr) {
  char buf[128];
  if (b)
    std::snprintf(buf, sizeof buf, fmt, a, b);
  else
    std::snprintf(buf, sizeof buf, fmt, a);
  return buf;
}

inline std::string pre(int z) { return printf_name("pre_z%04d.png", z); }
inline std::string energy(int z, Scale s) { return printf_name("energy_z%04d_%s.bin", z, scale_name(s).data()); }
inline std::string ridge_png(int z, Scale s) { return printf_name("ridge_z%04d_%s.png", z, scale_name(s).data()); }
inline std::string curves(int z, Scale s) { return printf_name("curves_z%04d_%s.bin", z, scale_name(s).data()); }
inline std::string curves_png(int z, Scale s) { return printf_name("curves_z%04d_%s.png", z, scale_name(s).data()); }
inline std::string snake(int block, int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "snake_b%02d_%04d.bin", block, index);
  return buf;
}
inline std::string regions(int block) { return printf_name("regions_b%02d.bin", block); }
inline std::string overlay(int z) { return printf_name("out_z%04d.png", z); }

inline constexpr const char* kReport = "validation_report.txt";
inline constexpr const char* kPly = "final.ply";
inline constexpr const char* kMod = "final.mod";

}  // namespace names

/// A file produced by a worker, written later by the coordinator.
struct PendingFile {
  std::string name;
  std::vector<std::uint8_t> bytes;
};

namespace detail {

inline void write_all(const std::filesystem::path& dst, std::vector<PendingFile>& files) {
  for (auto& f : files) write_file(dst / f.name, f.bytes);
}

inline void require_files(const std::filesystem::path& dst, const std::vector<std::string>& expected,
                          const std::string& produced_by, const std::string& glob) {
  std::vector<std::string> missing;
  for (const auto& name : expected)
    if (!std::filesystem::is_regular_file(dst / name)) missing.push_back(name);
  if (missing.empty()) return;
  std::string msg = "missing " + produced_by + " intermediates (" + glob + ") in " + dst.string() + ":";
  const std::size_t shown = std::min<std::size_t>(missing.size(), 8);
  for (std::size_t i = 0; i < shown; ++i) msg += " " + missing[i];
  if (missing.size() > shown) msg += " ... (" + std::to_string(missing.size()) + " files)";
  throw DependencyError(msg);
}

inline cv::Mat read_gray_png(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw IoError("cannot decode " + path.string());
  return m;
}

inline cv::Mat render_ridges(const EnergyMap& m) {
  cv::Mat out(m.height(), m.width(), CV_8UC1, cv::Scalar(0));
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.ridge_mask(x, y)) out.at<std::uint8_t>(y, x) = 255;
  return out;
}

inline cv::Mat render_curves(const cv::Mat& gray8, std::span<const CurveSegment> segments) {
  cv::Mat color;
  cv::cvtColor(gray8, color, cv::COLOR_GRAY2BGR);
  int index = 0;
  for (const auto& s : segments) {
    const auto c = region_color(index++);
    const cv::Scalar bgr(std::round(c[2] * 255), std::round(c[1] * 255), std::round(c[0] * 255));
    std::vector<cv::Point> pts;
    const int steps = std::max(2, static_cast<int>(std::ceil(s.arc_length())));
    for (int k = 0; k <= steps; ++k) {
      const Vec2 p = s.point_at(s.t_min + (s.t_max - s.t_min) * k / steps);
      pts.emplace_back(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)));
    }
    cv::polylines(color, std::vector<std::vector<cv::Point>>{pts}, false, bgr, 1, cv::LINE_8);
  }
  return color;
}

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace detail

/// Outcome of one phase, recorded into the manifest.
struct PhaseStats {
  int phase = 0;
  double wall_seconds = 0.0;
  std::string inputs_sha256;
  std::vector<std::string> warnings;
};

/// Phase 1: load, preprocess, energy maps, curve segments.
inline PhaseStats run_phase1(const RunConfig& cfg, const AlgorithmSettings& st, std::ostream* log = nullptr) {
  PhaseStats stats;
  stats.phase = 1;
  const auto paths = expand_slice_paths(cfg);

  auto loaded = parallel_map(paths.size(), cfg.cores, [&](std::size_t i) {
    const auto bytes = read_file(paths[i].second);
    Slice s = load_slice(paths[i].second, paths[i].first, cfg.psize);
    return std::make_pair(std::move(s), sha256_hex(bytes));
  });
  SliceStack stack;
  std::string input_hashes;
  for (auto& [slice, hash] : loaded) {
    input_hashes += hash;
    stack.slices.push_back(std::move(slice));
  }
  stats.inputs_sha256 = sha256_hex(input_hashes);
  const int w0 = stack.slices.front().width(), h0 = stack.slices.front().height();
  for (const auto& s : stack.slices)
    if (s.width() != w0 || s.height() != h0)
      throw FormatError("slice " + std::to_string(s.z) + " is " + std::to_string(s.width()) + "x" +
                        std::to_string(s.height()) + ", expected " + std::to_string(w0) + "x" + std::to_string(h0));

  if (cfg.roi) {
    const Rect& r = *cfg.roi;
    if (r.left + r.width > w0 || r.top + r.height > h0)
      throw RangeError("--roi exceeds the " + std::to_string(w0) + "x" + std::to_string(h0) + " slice frame");
    stack.roi_applied = r;
  } else {
    stack.roi_applied = auto_roi(stack, st.roi_variance_threshold);
  }
  if (log)
    *log << "phase 1: " << stack.slices.size() << " slices, roi " << stack.roi_applied.left << ',' << stack.roi_applied.top
         << ' ' << stack.roi_applied.width << 'x' << stack.roi_applied.height << '\n';

  auto outputs = parallel_map(stack.slices.size(), cfg.cores, [&](std::size_t i) {
    const Slice pre = preprocess(crop(stack.slices[i], stack.roi_applied), st);
    const int z = pre.z;
    const cv::Mat gray = to_gray8(pre.pixels);
    std::vector<PendingFile> files;
    files.push_back({names::pre(z), encode_png(gray)});
    for (Scale scale : {Scale::Small, Scale::Large}) {
      const EnergyMap map = energy_map(pre, scale, st);
      const auto segments = extract_curves(map, st);
      files.push_back({names::energy(z, scale), formats::encode_energy(map)});
      files.push_back({names::ridge_png(z, scale), encode_png(detail::render_ridges(map))});
      files.push_back({names::curves(z, scale), formats::encode_curves(segments)});
      files.push_back({names::curves_png(z, scale), encode_png(detail::render_curves(gray, segments))});
    }
    return files;
  });
  for (auto& files : outputs) detail::write_all(cfg.dst, files);
  return stats;
}

inline std::vector<std::string> phase1_outputs(const RunConfig& cfg) {
  std::vector<std::string> out;
  for (int z = cfg.zmin; z <= cfg.zmax; ++z) {
    out.push_back(names::energy(z, Scale::Small));
    out.push_back(names::energy(z, Scale::Large));
    out.push_back(names::curves(z, Scale::Large));
  }
  return out;
}

inline std::vector<std::string> phase2_outputs(const RunConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& b : make_blocks(cfg.zmin, cfg.zmax, cfg.thickness)) out.push_back(names::regions(b.index));
  for (int z = cfg.zmin; z <= cfg.zmax; ++z) out.push_back(names::pre(z));
  return out;
}

/// Phase 2: seeds, balloon snakes, validator scores.
inline PhaseStats run_phase2(const RunConfig& cfg, const AlgorithmSettings& st, std::ostream* log = nullptr) {
  PhaseStats stats;
  stats.phase = 2;
  detail::require_files(cfg.dst, phase1_outputs(cfg), "phase-1", "energy_z*.bin, curves_z*.bin");
  const auto blocks = make_blocks(cfg.zmin, cfg.zmax, cfg.thickness);

  struct SliceData {
    EnergyMap small, large;
    std::vector<CurveSegment> curves;
    std::string hash;
  };
  const auto slices = parallel_map(static_cast<std::size_t>(cfg.slice_count()), cfg.cores, [&](std::size_t i) {
    const int z = cfg.zmin + static_cast<int>(i);
    SliceData d;
    std::string hash;
    const auto load = [&](const std::string& name) {
      auto bytes = read_file(cfg.dst / name);
      hash += sha256_hex(bytes);
      return bytes;
    };
    d.small = formats::decode_energy(load(names::energy(z, Scale::Small)), z, names::energy(z, Scale::Small));
    d.large = formats::decode_energy(load(names::energy(z, Scale::Large)), z, names::energy(z, Scale::Large));
    d.curves = formats::decode_curves(load(names::curves(z, Scale::Large)), z, Scale::Large, names::curves(z, Scale::Large));
    d.hash = std::move(hash);
    return d;
  });
  std::string hashes;
  for (const auto& d : slices) hashes += d.hash;
  stats.inputs_sha256 = sha256_hex(hashes);

  struct BlockData {
    SnakeField field;
    BlockEvidence evidence;
    std::vector<Seed> seeds;
  };
  const auto block_data = parallel_map(blocks.size(), cfg.cores, [&](std::size_t bi) {
    const ZBlock& b = blocks[bi];
    std::vector<EnergyMap> large, small;
    std::vector<CurveSegment> segments;
    std::vector<double> weights;
    for (int z = b.z_lo; z <= b.z_hi; ++z) {
      const auto& d = slices[static_cast<std::size_t>(z - cfg.zmin)];
      large.push_back(d.large);
      small.push_back(d.small);
      for (const auto& seg : d.curves) {
        segments.push_back(seg);
        weights.push_back(segment_strength(seg, d.large));
      }
    }
    BlockData bd{make_snake_field(average_strength(large), st.snake_strength_norm), make_evidence(large, small),
                 seed_points(segments, weights, b.index, st)};
    std::sort(bd.seeds.begin(), bd.seeds.end(), [](const Seed& a, const Seed& c) {
      return std::tie(a.position.x, a.position.y) < std::tie(c.position.x, c.position.y);
    });
    return bd;
  });

  struct Task {
    std::size_t block;
    Seed seed;
  };
  std::vector<Task> tasks;
  for (std::size_t bi = 0; bi < blocks.size(); ++bi)
    for (const auto& s : block_data[bi].seeds) tasks.push_back({bi, s});
  if (log) *log << "phase 2: " << blocks.size() << " blocks, " << tasks.size() << " snakes\n";

  const auto grown = parallel_map(tasks.size(), cfg.cores, [&](std::size_t i) {
    const auto& bd = block_data[tasks[i].block];
    SnakeContour snake = grow_snake(tasks[i].seed, bd.field, st);
    RegionScore score = score_region(snake, bd.evidence, st);
    return std::make_pair(std::move(snake), score);
  });

  for (const auto& e : std::filesystem::directory_iterator(cfg.dst)) {
    const auto name = e.path().filename().string();
    if (name.starts_with("snake_b") || name.starts_with("regions_b")) std::filesystem::remove(e.path());
  }

  std::ostringstream report;
  report << "# validator threshold " << detail::fixed(cfg.valid_threshold, 2) << "\n";
  report << "# block snake seed_x seed_y converged border iterations boundary interior area discontinuity curvature "
            "signature total decision\n";
  std::size_t t = 0;
  for (const auto& b : blocks) {
    std::vector<Region> regions;
    int index = 0;
    for (; t < tasks.size() && tasks[t].block == static_cast<std::size_t>(b.index); ++t, ++index) {
      const auto& [snake, score] = grown[t];
      write_file(cfg.dst / names::snake(b.index, index), formats::encode_snake(snake));
      regions.push_back({snake.nodes, b.index, score, {index}});
      report << b.index << ' ' << index << ' ' << detail::fixed(snake.seed.position.x, 2) << ' '
             << detail::fixed(snake.seed.position.y, 2) << ' ' << snake.converged << ' ' << snake.border << ' '
             << snake.iterations << ' ' << detail::fixed(score.boundary_energy) << ' '
             << detail::fixed(score.interior_energy) << ' ' << detail::fixed(score.area_score) << ' '
             << detail::fixed(score.discontinuity) << ' ' << detail::fixed(score.curvature_score) << ' '
             << detail::fixed(score.signature_score) << ' ' << detail::fixed(score.total) << ' '
             << (score.total >= cfg.valid_threshold ? "accept" : "reject") << '\n';
    }
    write_file(cfg.dst / names::regions(b.index), formats::encode_regions(b.index, regions));
  }
  write_file(cfg.dst / names::kReport, report.str());
  return stats;
}

/// Phase 3: threshold, merge, overlays, meshes.
inline PhaseStats run_phase3(const RunConfig& cfg, const AlgorithmSettings& st, std::ostream* log = nullptr) {
  PhaseStats stats;
  stats.phase = 3;
  detail::require_files(cfg.dst, phase2_outputs(cfg), "phase-2", "regions_b*.bin, pre_z*.png");
  const auto blocks = make_blocks(cfg.zmin, cfg.zmax, cfg.thickness);

  const cv::Mat first = detail::read_gray_png(cfg.dst / names::pre(cfg.zmin));
  const int width = first.cols, height = first.rows;

  std::string hashes;
  std::vector<BlockRegions> finals;
  for (const auto& b : blocks) {
    const auto bytes = read_file(cfg.dst / names::regions(b.index));
    hashes += sha256_hex(bytes);
    const auto candidates = formats::decode_regions(bytes, names::regions(b.index));
    const auto valid = filter_valid(candidates, cfg.valid_threshold);
    finals.push_back({b, merge_overlapping(valid, width, height, st.merge_overlap_min)});
  }
  stats.inputs_sha256 = sha256_hex(hashes);

  std::vector<int> first_color(blocks.size(), 0);
  for (std::size_t i = 1; i < blocks.size(); ++i)
    first_color[i] = first_color[i - 1] + static_cast<int>(finals[i - 1].regions.size());

  auto overlays = parallel_map(static_cast<std::size_t>(cfg.slice_count()), cfg.cores, [&](std::size_t i) {
    const int z = cfg.zmin + static_cast<int>(i);
    const cv::Mat gray = detail::read_gray_png(cfg.dst / names::pre(z));
    if (gray.cols != width || gray.rows != height) throw FormatError(names::pre(z) + ": size differs from other slices");
    std::size_t bi = 0;
    while (!blocks[bi].contains(z)) ++bi;
    return PendingFile{names::overlay(z), encode_png(render_overlay(gray, finals[bi].regions, first_color[bi]))};
  });
  detail::write_all(cfg.dst, overlays);

  const Mesh mesh = extrude_mesh(finals, {st.target_psize, cfg.psize}, &stats.warnings);
  write_ply(mesh, cfg.dst / names::kPly);
  write_imod(finals, {width, height, cfg.zmax + 1, st.target_psize, cfg.psize}, cfg.dst / names::kMod);
  if (log) {
    std::size_t total = 0;
    for (const auto& f : finals) total += f.regions.size();
    *log << "phase 3: " << total << " final regions\n";
  }
  return stats;
}

/// Run the selected phases (all three when none is selected) and update the
/// manifest after each one.
inline std::vector<PhaseStats> run(const RunConfig& cfg, const AlgorithmSettings& st, std::ostream* log = nullptr) {
  validate(st);
  std::error_code ec;
  std::filesystem::create_directories(cfg.dst, ec);
  if (ec || !std::filesystem::is_directory(cfg.dst))
    throw IoError("cannot create output directory " + cfg.dst.string());

  std::vector<int> phases = cfg.phase ? std::vector<int>{*cfg.phase} : std::vector<int>{1, 2, 3};
  // fail before any work when a single later phase lacks its inputs
  if (cfg.phase == 2) detail::require_files(cfg.dst, phase1_outputs(cfg), "phase-1", "energy_z*.bin, curves_z*.bin");
  if (cfg.phase == 3) detail::require_files(cfg.dst, phase2_outputs(cfg), "phase-2", "regions_b*.bin, pre_z*.png");

  const std::string settings_hash = sha256_hex(to_yaml(st));
  std::vector<PhaseStats> all;
  for (int p : phases) {
    const auto start = std::chrono::steady_clock::now();
    PhaseStats stats = p == 1 ? run_phase1(cfg, st, log) : p == 2 ? run_phase2(cfg, st, log) : run_phase3(cfg, st, log);
    stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log)
      for (const auto& w : stats.warnings) *log << "warning: " << w << '\n';

    Manifest m = Manifest::load(cfg.dst);
    const std::string prefix = "phase" + std::to_string(p) + ".";
    m.set(prefix + "wall_seconds", detail::fixed(stats.wall_seconds, 6));
    m.set(prefix + "cores", std::to_string(cfg.cores));
    m.set(prefix + "inputs_sha256", stats.inputs_sha256);
    m.set(prefix + "settings_sha256", settings_hash);
    if (const auto rss = peak_rss_kb()) m.set(prefix + "peak_rss_kb", std::to_string(*rss));
    m.hash_directory(cfg.dst);
    m.save(cfg.dst);
    all.push_back(std::move(stats));
  }
  return all;
}

}  // namespace mitoseg
