#include <filesystem>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "mitoseg/formats.hpp"
#include "mitoseg/manifest.hpp"
#include "mitoseg/parallel.hpp"
#include "mitoseg/pipeline.hpp"
#include "phantom.hpp"
#include "temp_dir.hpp"

using namespace mitoseg;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != kManifestName) out[e.path().filename().string()] = read_file(e.path());
  return out;
}

phantom::Spec small_spec() {
  phantom::Spec s;
  s.width = 240;
  s.height = 200;
  s.zmin = 3;
  s.zmax = 12;
  s.bodies = {{{110.0, 100.0}, 62.0, 55.0, true}};
  return s;
}

RunConfig small_config(const fs::path& src, const fs::path& dst) {
  const auto spec = small_spec();
  RunConfig cfg;
  cfg.pattern = phantom::kPattern;
  cfg.psize = 2.0;
  cfg.zmin = spec.zmin;
  cfg.zmax = spec.zmax;
  cfg.src = src;
  cfg.dst = dst;
  cfg.thickness = 5;
  return cfg;
}

template <class F>
void expect_format_error(F&& f) {
  EXPECT_THROW(f(), FormatError);
}

}  // namespace

TEST(ParallelMap, KeepsTaskOrder) {
  for (int cores : {1, 2, 5}) {
    const auto out = parallel_map(50, cores, [](std::size_t i) { return static_cast<int>(i * i); });
    ASSERT_EQ(out.size(), 50u);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
  }
  EXPECT_TRUE(parallel_map(0, 4, [](std::size_t) { return 1; }).empty());
}

TEST(ParallelMap, RethrowsLowestFailure) {
  for (int cores : {1, 4}) {
    try {
      parallel_map(10, cores, [](std::size_t i) -> int {
        if (i == 3 || i == 7) throw IoError("task " + std::to_string(i));
        return 0;
      });
      FAIL() << "no exception";
    } catch (const IoError& e) {
      EXPECT_STREQ(e.what(), "task 3");
    }
  }
}

TEST(Formats, EnergyRoundTrip) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 50.0f);
  EnergyMap m{9, Scale::Large, Image(13, 7), Image(13, 7), Image(13, 7), Mask(13, 7)};
  for (std::size_t i = 0; i < m.strength.size(); ++i) {
    m.strength.values()[i] = u(rng);
    m.orientation.values()[i] = u(rng) / 20.0f;
    m.curvature.values()[i] = u(rng) - 25.0f;
    m.ridge_mask.values()[i] = rng() % 3 == 0;
  }
  const auto bytes = formats::encode_energy(m);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "EMAP");
  EXPECT_EQ(formats::decode_energy(bytes, 9, "e"), m);

  auto cut = bytes;
  cut.pop_back();
  expect_format_error([&] { formats::decode_energy(cut, 9, "e"); });
  auto extra = bytes;
  extra.push_back(0);
  expect_format_error([&] { formats::decode_energy(extra, 9, "e"); });
  auto magic = bytes;
  magic[0] = 'X';
  expect_format_error([&] { formats::decode_energy(magic, 9, "e"); });
}

TEST(Formats, CurvesSnakeRegionsRoundTrip) {
  CurveSegment c;
  c.z = 4;
  c.scale = Scale::Small;
  c.vertex = {1.25, -3.5};
  c.theta = 2.0;
  c.a = 0.0125;
  c.t_min = -7;
  c.t_max = 9;
  c.support = {{1, 2}, {2, 2}, {3, 3}};
  c.rms_residual = 0.3;
  const std::vector<CurveSegment> curves = {c, c};
  const auto cb = formats::encode_curves(curves);
  EXPECT_EQ(formats::decode_curves(cb, 4, Scale::Small, "c"), curves);
  expect_format_error([&] { formats::decode_curves(std::span(cb).first(cb.size() - 3), 4, Scale::Small, "c"); });

  SnakeContour s;
  s.nodes = {{1, 2}, {3, 4.5}, {0.25, 9}};
  s.block = 2;
  s.converged = true;
  s.iterations = 321;
  s.seed = {{40.5, 60.25}, 2, 11};
  const auto sb = formats::encode_snake(s);
  EXPECT_EQ(formats::decode_snake(sb, "s"), s);
  expect_format_error([&] { formats::decode_snake(std::span(sb).first(sb.size() - 1), "s"); });

  Region r;
  r.contour = s.nodes;
  r.block = 1;
  r.score = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  r.member_snakes = {3, 8};
  const std::vector<Region> regions = {r};
  const auto rb = formats::encode_regions(1, regions);
  EXPECT_EQ(formats::decode_regions(rb, "r"), regions);
  EXPECT_TRUE(formats::decode_regions(formats::encode_regions(0, {}), "r").empty());
  for (std::size_t n = 0; n < rb.size(); n += 7)
    expect_format_error([&] { formats::decode_regions(std::span(rb).first(n), "r"); });
}

TEST(Manifest, HashesAndRoundTrip) {
  EXPECT_EQ(sha256_hex(std::string_view("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  TempDir dir;
  write_file(dir / "a.txt", std::string("abc"));
  write_file(dir / "b.bin", std::string(""));
  Manifest m;
  m.set("phase1.cores", "2");
  m.hash_directory(dir.path());
  m.save(dir.path());
  const Manifest back = Manifest::load(dir.path());
  EXPECT_EQ(back.entries(), m.entries());
  EXPECT_EQ(back.get("file.a.txt.sha256"), sha256_hex(std::string_view("abc")));
  EXPECT_EQ(back.get("file.b.bin.sha256"), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_FALSE(back.get("file.manifest.txt.sha256"));

  fs::remove(dir / "b.bin");
  Manifest again = Manifest::load(dir.path());
  again.hash_directory(dir.path());
  EXPECT_FALSE(again.get("file.b.bin.sha256"));
  EXPECT_EQ(again.get("phase1.cores"), "2");
  EXPECT_TRUE(peak_rss_kb().has_value());
}

TEST(Pipeline, LaterPhaseWithoutInputsIsDependencyError) {
  TempDir src, dst;
  RunConfig cfg = small_config(src.path(), dst.path());
  for (int phase : {2, 3}) {
    cfg.phase = phase;
    try {
      run(cfg, AlgorithmSettings{});
      FAIL() << "phase " << phase << " ran without inputs";
    } catch (const DependencyError& e) {
      EXPECT_EQ(e.code(), ExitCode::Dependency);
      EXPECT_NE(std::string(e.what()).find(phase == 2 ? "energy_z" : "regions_b"), std::string::npos) << e.what();
    }
  }
  EXPECT_TRUE(fs::is_empty(dst.path()));
}

TEST(Pipeline, MissingSliceIsIoError) {
  TempDir src, dst;
  phantom::write_stack(small_spec(), src.path());
  fs::remove(src / format_slice_name(phantom::kPattern, 7));
  const RunConfig cfg = small_config(src.path(), dst.path());
  try {
    run(cfg, AlgorithmSettings{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ExitCode::Io);
    EXPECT_NE(std::string(e.what()).find("z = 7"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, PhasedRunMatchesFullRunAndCoreCount) {
  TempDir src, full, phased, wide;
  phantom::write_stack(small_spec(), src.path());
  const AlgorithmSettings st;

  const auto stats = run(small_config(src.path(), full.path()), st);
  ASSERT_EQ(stats.size(), 3u);
  RunConfig cfg = small_config(src.path(), phased.path());
  for (int p : {1, 2, 3}) {
    cfg.phase = p;
    run(cfg, st);
  }
  RunConfig par = small_config(src.path(), wide.path());
  par.cores = 3;
  run(par, st);

  const auto a = snapshot(full.path()), b = snapshot(phased.path()), c = snapshot(wide.path());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);

  // every documented artifact is present
  for (int z = 3; z <= 12; ++z) {
    EXPECT_TRUE(a.contains(names::pre(z)));
    EXPECT_TRUE(a.contains(names::overlay(z)));
    for (Scale s : {Scale::Small, Scale::Large}) {
      EXPECT_TRUE(a.contains(names::energy(z, s)));
      EXPECT_TRUE(a.contains(names::curves(z, s)));
      EXPECT_TRUE(a.contains(names::ridge_png(z, s)));
      EXPECT_TRUE(a.contains(names::curves_png(z, s)));
    }
  }
  for (const char* f : {names::kReport, names::kPly, names::kMod}) EXPECT_TRUE(a.contains(f)) << f;
  EXPECT_TRUE(a.contains(names::regions(0)));
  EXPECT_TRUE(a.contains(names::regions(1)));

  // manifest records every phase and hashes every file
  const Manifest m = Manifest::load(full.path());
  for (const char* key : {"phase1.wall_seconds", "phase2.cores", "phase3.inputs_sha256", "phase1.settings_sha256"})
    EXPECT_TRUE(m.get(key)) << key;
  for (const auto& [name, bytes] : a) EXPECT_EQ(m.get("file." + name + ".sha256"), sha256_hex(bytes)) << name;

  // the mitochondrion is found in both blocks
  const auto r0 = formats::decode_regions(a.at(names::regions(0)), "r0");
  EXPECT_TRUE(std::any_of(r0.begin(), r0.end(), [](const Region& r) { return r.score.total >= 0.75; }));
}

TEST(Pipeline, RoiOutsideFrameIsRangeError) {
  TempDir src, dst;
  phantom::write_stack(small_spec(), src.path());
  RunConfig cfg = small_config(src.path(), dst.path());
  cfg.roi = Rect{200, 100, 100, 50};
  EXPECT_THROW(run(cfg, AlgorithmSettings{}), RangeError);
}
