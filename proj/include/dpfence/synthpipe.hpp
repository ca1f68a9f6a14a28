#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpfence/formation.hpp"
#include "dpfence/image.hpp"
#include "dpfence/psf.hpp"

namespace dpfence {

// All-in-focus fence photograph and its binary segmentation.
struct FenceAsset {
  std::string id;
  Image texture;  // RGB
  MaskImage mask;

  void validate() const;
};

struct AugmentRanges {
  double rotation_deg = 20.0;  // uniform in [-r, r]
  double scale_min = 0.8;
  double scale_max = 1.25;
  double translate_px = 24.0;  // uniform in [-t, t] per axis
  bool flip_horizontal = true;
  bool flip_vertical = true;
  double brightness = 0.1;  // additive, uniform in [-b, b]
  double contrast = 0.2;    // factor uniform in [1-c, 1+c] around 0.5
  double hue_deg = 15.0;    // chroma rotation, uniform in [-h, h]

  static AugmentRanges none();
};

struct SynthConfig {
  double depth_min = 0.10;  // metres
  double depth_max = 0.50;
  ThinLens lens{};  // focus at infinity; alpha = blur_constant / depth pixels
  GridShape grid{};
  AugmentRanges augment{};
  std::uint64_t base_seed = 0;
  // Optional measured half-aperture grids, captured at blur scale psf_alpha_ref
  // and rescaled by alpha / psf_alpha_ref. Parametric discs are used otherwise.
  std::optional<std::filesystem::path> psf_left;
  std::optional<std::filesystem::path> psf_right;
  double psf_alpha_ref = 4.0;

  void validate() const;
};

// Signals that augmentation kept emptying the mask.
class AugmentRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kMinMaskCoverage = 0.001;
inline constexpr int kMaxAugmentTries = 10;

// Per-sample seed streams.
enum class SeedStream : std::uint64_t { kDepth = 0, kTile = 1, kAugment = 2, kClean = 3, kAsset = 4 };
std::uint64_t sample_seed(const SynthConfig& cfg, std::uint64_t sample_index, SeedStream stream);

double sample_depth(const SynthConfig& cfg, std::uint64_t sample_index);

struct AugmentParams {
  double rotation_deg = 0.0;
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;
  bool flip_h = false;
  bool flip_v = false;
  double brightness = 0.0;
  double contrast = 1.0;
  double hue_deg = 0.0;

  bool is_identity() const;
  static AugmentParams draw(const AugmentRanges& ranges, std::uint64_t seed);
};

// Geometric part only: texture bilinear, mask nearest, both with the same
// map; samples falling outside the asset read as background (mask 0).
FenceAsset warp_asset(const FenceAsset& asset, const AugmentParams& p);
// Colour part only, texture only.
Image jitter_color(const Image& texture, const AugmentParams& p);

// Draws parameters from `seed`, warps and jitters. Throws AugmentRejected
// when the warped mask covers less than kMinMaskCoverage.
FenceAsset augment_fence(const FenceAsset& asset, const AugmentRanges& ranges, std::uint64_t seed,
                         AugmentParams* used = nullptr, int* tries = nullptr);

// Repeats the asset over width x height starting at a random phase.
FenceAsset tile_asset(const FenceAsset& asset, int width, int height, std::uint64_t seed);

struct SampleRecord {
  std::string id;
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  std::string clean_id;
  std::string asset_id;
  double depth = 0.0;
  double alpha = 0.0;
  double expected_disparity = 0.0;  // moment oracle, full-resolution pixels
  double contrast = 0.0;            // |mean fence green - mean covered background green|
  double mask_coverage = 0.0;       // binary GT
  int augment_tries = 0;
  AugmentParams augment;
  // Relative to the manifest directory; empty when not written.
  std::string occluded_dir;
  std::string clean_dir;
  std::string soft_mask_path;
  std::string mask_path;
};

struct SynthSample {
  DPFrame occluded;
  MaskImage soft_mask;    // blurred combined-view mask
  MaskImage binary_mask;  // soft_mask >= 0.5
  FenceAsset fence;       // tiled and augmented, before blurring
  SampleRecord record;
};

struct Composite {
  Image image;
  MaskImage mask_blur;
};
// One view: sharp = base (1 - M) + fence M; out = base (1 - K*M) + (K*sharp) (K*M)
// with K the grid's spatially varying kernel.
Composite composite_fence(const Image& base, const Image& fence, const MaskImage& mask, const PSFGrid& grid);

// Kernel grids used for a given blur scale under `cfg`.
DPGrids sample_grids(const SynthConfig& cfg, double alpha);

// One occluded DP capture. The asset is tiled to the frame, augmented with
// rejection-resampling, composited onto each view and blended through the
// blurred mask.
SynthSample synthesize_sample(const DPFrame& clean, const std::string& clean_id, const FenceAsset& asset,
                              const SynthConfig& cfg, std::uint64_t sample_index);

// Rebuilds the blurred combined-view mask from the record's provenance.
MaskImage recompute_soft_mask(const SampleRecord& record, const FenceAsset& asset, int width, int height,
                              const SynthConfig& cfg);

struct Patch {
  int x = 0;
  int y = 0;
  DPFrame occluded;
  DPFrame clean;
  MaskImage soft_mask;
  MaskImage binary_mask;
};

// floor((H - patch) / stride + 1) * floor((W - patch) / stride + 1).
int patch_count(int width, int height, int patch, int stride);
// Row-major windows at multiples of the stride.
std::vector<Patch> extract_patches(const DPFrame& occluded, const DPFrame& clean, const MaskImage& soft_mask,
                                   const MaskImage& binary_mask, int patch, int stride);

struct StrideChoice {
  int stride = 0;
  int per_frame = 0;
  long long total = 0;
};
// Stride whose total over `frames` frames is closest to `target` (largest
// stride on ties), searched over [1, max(width, height)].
StrideChoice calibrate_stride(int width, int height, int patch, int frames, long long target);

struct NamedFrame {
  std::string id;
  DPFrame frame;
};

struct DatasetOptions {
  int n_samples = 0;
  bool patches = false;
  int patch = 512;
  int stride = 0;  // 0: calibrate
};

// Writes samples/<id>/{occluded,clean}/ frame dirs, soft_mask.pfm and
// mask.png under `out_dir`, plus manifest.json. The manifest carries no
// timestamps, so equal inputs give byte-identical output.
std::string generate_dataset(const std::vector<NamedFrame>& clean, const std::vector<FenceAsset>& assets,
                             const SynthConfig& cfg, const DatasetOptions& opts,
                             const std::filesystem::path& out_dir);

// Test-split size under the 804/100 proportion, rounded half up.
int test_split_size(int n_samples);

// Config <-> JSON, used for manifests, run reports and --config files.
std::string config_to_json(const SynthConfig& cfg);
// Starts from the defaults; unknown keys throw std::invalid_argument.
SynthConfig config_from_json(const std::string& json);
std::string config_hash(const SynthConfig& cfg);

// Loaders for user-supplied inputs: every subdirectory of `dir` that is a
// frame directory; every <name>.png / <name>_mask.png pair for assets.
std::vector<NamedFrame> load_clean_frames(const std::filesystem::path& dir);
std::vector<FenceAsset> load_fence_assets(const std::filesystem::path& dir);

// Procedural inputs for tests and for runs without user data.
// In-focus background: left == right == green(combined).
DPFrame make_clean_scene(int width, int height, std::uint64_t seed);
// Wire fence (square grid or diamond mesh) with shaded metallic texture.
FenceAsset make_fence_asset(int width, int height, std::uint64_t seed);

}  // namespace dpfence
