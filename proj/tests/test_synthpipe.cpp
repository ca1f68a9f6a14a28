#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dpfence/io.hpp"
#include "dpfence/parallel.hpp"
#include "dpfence/synthpipe.hpp"
#include "test_util.hpp"

using namespace dpfence;
using dpfence::testing::max_abs_diff;
using dpfence::testing::TempDir;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Every regular file under `dir`, relative path -> bytes.
std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[std::filesystem::relative(e.path(), dir).generic_string()] = read_file(e.path());
  return files;
}

FenceAsset solid_asset(int w, int h, float mask_value) {
  FenceAsset a{"solid", Image(w, h, 3), MaskImage(w, h, 1, mask_value)};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) a.texture.at(c, y, x) = static_cast<float>(0.1 + 0.25 * c + 0.002 * ((x + 3 * y) % 97));
  return a;
}

std::vector<NamedFrame> small_frames(int n, int size) {
  std::vector<NamedFrame> frames;
  for (int i = 0; i < n; ++i) frames.push_back({"bg" + std::to_string(i), make_clean_scene(size, size, 40 + i)});
  return frames;
}

}  // namespace

TEST_CASE("depth draws stay in range, are deterministic and uniform") {
  SynthConfig cfg;
  cfg.base_seed = 12;
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double d = sample_depth(cfg, i);
    REQUIRE(d >= cfg.depth_min);
    REQUIRE(d < cfg.depth_max);
    sum += d;
  }
  CHECK(sample_depth(cfg, 77) == sample_depth(cfg, 77));
  // Mean of U(0.1, 0.5) is 0.3 with standard error 0.1155 / sqrt(n).
  CHECK(std::abs(sum / n - 0.3) < 4 * 0.11547 / std::sqrt(n));
  SynthConfig other = cfg;
  other.base_seed = 13;
  CHECK(sample_depth(other, 77) != sample_depth(cfg, 77));
}

TEST_CASE("seed streams are distinct") {
  SynthConfig cfg;
  std::set<std::uint64_t> seeds;
  for (auto s : {SeedStream::kDepth, SeedStream::kTile, SeedStream::kAugment, SeedStream::kClean, SeedStream::kAsset})
    seeds.insert(sample_seed(cfg, 3, s));
  CHECK(seeds.size() == 5);
}

TEST_CASE("config validation") {
  SynthConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.depth_min = 0.6;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.augment.scale_min = 2.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.psf_left = "left.json";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("identity augmentation leaves the asset unchanged") {
  const FenceAsset a = make_fence_asset(96, 80, 3);
  const AugmentParams p = AugmentParams::draw(AugmentRanges::none(), 99);
  CHECK(p.is_identity());
  const FenceAsset out = augment_fence(a, AugmentRanges::none(), 99);
  CHECK(out.texture == a.texture);
  CHECK(out.mask == a.mask);
}

TEST_CASE("augmented mask is the geometric transform alone") {
  const FenceAsset a = make_fence_asset(128, 128, 8);
  AugmentParams used;
  int tries = 0;
  const FenceAsset out = augment_fence(a, AugmentRanges{}, 1234, &used, &tries);
  CHECK(tries >= 1);
  AugmentParams geo_only = used;
  geo_only.brightness = 0.0;
  geo_only.contrast = 1.0;
  geo_only.hue_deg = 0.0;
  CHECK(out.mask == warp_asset(a, geo_only).mask);
  // Colour parameters never touch the mask.
  AugmentParams colour = geo_only;
  colour.brightness = 0.3;
  colour.hue_deg = 40.0;
  CHECK(warp_asset(a, colour).mask == out.mask);
}

TEST_CASE("two half turns give back the asset") {
  const FenceAsset a = make_fence_asset(96, 96, 5);
  AugmentParams half;
  half.rotation_deg = 180.0;
  const FenceAsset once = warp_asset(a, half);
  const FenceAsset twice = warp_asset(once, half);
  CHECK(max_abs_diff(twice.texture, a.texture) < 2e-2);
  CHECK(twice.mask == a.mask);
}

TEST_CASE("augmentation that empties the mask is rejected") {
  FenceAsset a = solid_asset(64, 64, 0.0f);
  a.mask.at(32, 32) = 1.0f;  // coverage 1/4096, below the minimum
  CHECK_THROWS_AS(augment_fence(a, AugmentRanges::none(), 1), AugmentRejected);
}

TEST_CASE("hue rotation keeps grey and contrast pivots about 0.5") {
  Image grey(4, 4, 3, 0.4f);
  AugmentParams p;
  p.hue_deg = 33.0;
  CHECK(max_abs_diff(jitter_color(grey, p), grey) < 1e-6);
  p = {};
  p.contrast = 0.5;
  const Image c = jitter_color(grey, p);
  CHECK(std::abs(c.at(0, 0, 0) - 0.45f) < 1e-6);
}

TEST_CASE("compositing: zero mask returns the base exactly") {
  const Image base = make_clean_scene(64, 48, 2).combined;
  const Image fence = dpfence::testing::random_image(64, 48, 3, 3);
  for (double alpha : {0.0, 2.5, 6.0}) {
    const DPGrids g = make_parametric_grids(alpha, 2, 2);
    const Composite c = composite_fence(base, fence, MaskImage(64, 48, 1), g.combined);
    CHECK(c.image == base);
  }
}

TEST_CASE("compositing: full mask without blur returns the fence exactly") {
  const Image base = make_clean_scene(64, 48, 2).combined;
  const Image fence = dpfence::testing::random_image(64, 48, 3, 3);
  const DPGrids g = make_parametric_grids(0.0, 3, 3);
  const Composite c = composite_fence(base, fence, MaskImage(64, 48, 1, 1.0f), g.combined);
  CHECK(c.image == fence);
}

TEST_CASE("pixels outside the blurred footprint keep the clean values") {
  SynthConfig cfg;
  cfg.augment = AugmentRanges::none();
  const DPFrame clean = make_clean_scene(64, 64, 2);
  FenceAsset a = solid_asset(64, 64, 0.0f);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) a.mask.at(y, x) = 1.0f;
  const SynthSample s = synthesize_sample(clean, "c", a, cfg, 0);
  int outside = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (s.soft_mask.at(y, x) != 0.0f) continue;
      ++outside;
      for (int c = 0; c < 3; ++c) REQUIRE(s.occluded.combined.at(c, y, x) == clean.combined.at(c, y, x));
      REQUIRE(s.occluded.left.at(y, x) == clean.left.at(y, x));
      REQUIRE(s.occluded.right.at(y, x) == clean.right.at(y, x));
    }
  CHECK(outside > 64 * 64 / 2);
}

TEST_CASE("binary GT is the blurred mask thresholded at 0.5") {
  SynthConfig cfg;
  cfg.base_seed = 4;
  const SynthSample s = synthesize_sample(make_clean_scene(128, 128, 1), "c", make_fence_asset(128, 128, 2), cfg, 3);
  CHECK(s.binary_mask == threshold_mask(s.soft_mask, 0.5f));
  CHECK(s.record.alpha == doctest::Approx(1.0 / s.record.depth));
  CHECK(s.record.expected_disparity > 0.0);
  CHECK(s.record.mask_coverage == doctest::Approx(mask_coverage(s.binary_mask)));
}

TEST_CASE("soft mask recomputed from the record matches") {
  SynthConfig cfg;
  cfg.base_seed = 21;
  const FenceAsset asset = make_fence_asset(160, 128, 6);
  const SynthSample s = synthesize_sample(make_clean_scene(160, 128, 5), "c", asset, cfg, 9);
  const MaskImage again = recompute_soft_mask(s.record, asset, 160, 128, cfg);
  CHECK(max_abs_diff(again, s.soft_mask) <= 1e-6);
}

TEST_CASE("patch counts") {
  CHECK(patch_count(2016, 1536, 512, 512) == 9);
  CHECK(patch_count(512, 512, 512, 100) == 1);
  CHECK(patch_count(2016, 1536, 512, 376) == 15);
  CHECK_THROWS_AS(patch_count(100, 100, 128, 10), std::invalid_argument);
  CHECK_THROWS_AS(patch_count(100, 100, 32, 0), std::invalid_argument);
  const DPFrame f = make_clean_scene(100, 70, 1);
  const auto patches = extract_patches(f, f, MaskImage(100, 70, 1), MaskImage(100, 70, 1), 32, 20);
  CHECK(static_cast<int>(patches.size()) == patch_count(100, 70, 32, 20));
  CHECK(patches.back().x == 60);
  CHECK(patches.back().y == 20);
  CHECK(patches[1].occluded.combined == crop(f.combined, 20, 0, 32, 32));
}

TEST_CASE("stride calibration for the full dataset") {
  const StrideChoice c = calibrate_stride(2016, 1536, 512, 804, 13700);
  CHECK(c.stride == 376);
  CHECK(c.per_frame == 15);
  CHECK(c.total == 12060);
}

TEST_CASE("test split size") {
  CHECK(test_split_size(904) == 100);
  CHECK(test_split_size(5) == 1);
  CHECK(test_split_size(4) == 0);
  CHECK(test_split_size(100) == 11);
}

TEST_CASE("config JSON round trip and unknown keys") {
  SynthConfig cfg;
  cfg.base_seed = 99;
  cfg.depth_max = 0.4;
  cfg.augment.hue_deg = 3.0;
  const SynthConfig back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(config_from_json("{}").depth_min == 0.10);
  CHECK_THROWS_AS(config_from_json(R"({"depth_mni": 0.2})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"augment": {"rotation": 3}})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"depth_min": "x"})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json("not json"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json(R"({"depth_min": 0.9})"), std::invalid_argument);
}

TEST_CASE("dataset output is deterministic and independent of the thread count") {
  SynthConfig cfg;
  cfg.base_seed = 7;
  const auto frames = small_frames(2, 96);
  const std::vector<FenceAsset> assets{make_fence_asset(96, 96, 1), make_fence_asset(96, 96, 2)};
  DatasetOptions opts;
  opts.n_samples = 4;
  opts.patches = true;
  opts.patch = 64;
  opts.stride = 32;
  TempDir a("synth_a");
  TempDir b("synth_b");
  TempDir c("synth_c");
  set_thread_count(1);
  const std::string ma = generate_dataset(frames, assets, cfg, opts, a.path());
  set_thread_count(4);
  const std::string mb = generate_dataset(frames, assets, cfg, opts, b.path());
  set_thread_count(0);
  generate_dataset(frames, assets, cfg, opts, c.path());
  CHECK(ma == mb);
  CHECK(snapshot(a.path()) == snapshot(b.path()));
  CHECK(snapshot(a.path()) == snapshot(c.path()));

  const auto m = nlohmann::json::parse(ma);
  CHECK(m["n_samples"] == 4);
  CHECK(m["split"]["n_test"] == test_split_size(4));
  CHECK(m["patches"]["per_sample"] == patch_count(96, 96, 64, 32));
  CHECK(m["patches"]["count"] == 4 * patch_count(96, 96, 64, 32));
  CHECK(m["config_hash"] == config_hash(cfg));
  // Stored masks agree with the soft mask on disk.
  const std::string id = m["records"][0]["id"];
  const MaskImage soft = load_pfm(a.path() / "samples" / id / "soft_mask.pfm");
  const MaskImage bin = load_png(a.path() / "samples" / id / "mask.png");
  CHECK(bin == threshold_mask(soft, 0.5f));
}
