#include "dpfence/synthpipe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "dpfence/conv.hpp"
#include "dpfence/hash.hpp"
#include "dpfence/io.hpp"

namespace dpfence {

namespace {

using json = nlohmann::ordered_json;

// Uniform in [0,1) from the top 53 bits; independent of the standard
// library's distribution implementations.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

float bilinear(const Image& img, int c, double x, double y) {
  const int w = img.width();
  const int h = img.height();
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, w - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = std::clamp(x - x0, 0.0, 1.0);
  const double fy = std::clamp(y - y0, 0.0, 1.0);
  const double v = (1 - fy) * ((1 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1)) +
                   fy * ((1 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1));
  return static_cast<float>(v);
}

Image blend(const Image& base, const Image& blurred, const Image& weight) {
  // base * (1 - w) + blurred * w, per channel with a shared single-channel weight.
  Image out(base.width(), base.height(), base.channels());
  const std::size_t plane = base.plane_size();
  for (int c = 0; c < base.channels(); ++c) {
    const auto b = base.plane(c);
    const auto f = blurred.plane(c);
    const auto m = weight.plane(0);
    auto o = out.plane(c);
    for (std::size_t i = 0; i < plane; ++i) o[i] = std::clamp(b[i] * (1.0f - m[i]) + f[i] * m[i], 0.0f, 1.0f);
  }
  return out;
}

Image composite_sharp(const Image& base, const Image& fence, const MaskImage& mask) { return blend(base, fence, mask); }

std::string sample_id(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%05llu", static_cast<unsigned long long>(index));
  return buf;
}

json augment_json(const AugmentParams& p) {
  return {{"rotation_deg", p.rotation_deg}, {"scale", p.scale}, {"tx", p.tx}, {"ty", p.ty},
          {"flip_h", p.flip_h}, {"flip_v", p.flip_v}, {"brightness", p.brightness},
          {"contrast", p.contrast}, {"hue_deg", p.hue_deg}};
}

json record_json(const SampleRecord& r) {
  return {{"id", r.id},
          {"index", r.index},
          {"seed", r.seed},
          {"clean_id", r.clean_id},
          {"asset_id", r.asset_id},
          {"depth", r.depth},
          {"alpha", r.alpha},
          {"expected_disparity", r.expected_disparity},
          {"contrast", r.contrast},
          {"mask_coverage", r.mask_coverage},
          {"augment_tries", r.augment_tries},
          {"augment", augment_json(r.augment)},
          {"occluded", r.occluded_dir},
          {"clean", r.clean_dir},
          {"soft_mask", r.soft_mask_path},
          {"mask", r.mask_path}};
}

json config_json(const SynthConfig& cfg) {
  const AugmentRanges& a = cfg.augment;
  json lens;
  if (std::isinf(cfg.lens.focus_distance)) lens["focus_distance"] = "inf";
  else lens["focus_distance"] = cfg.lens.focus_distance;
  lens["blur_constant"] = cfg.lens.blur_constant;
  return {{"depth_min", cfg.depth_min},
          {"depth_max", cfg.depth_max},
          {"lens", lens},
          {"grid", {{"rows", cfg.grid.rows}, {"cols", cfg.grid.cols}}},
          {"augment",
           {{"rotation_deg", a.rotation_deg}, {"scale_min", a.scale_min}, {"scale_max", a.scale_max},
            {"translate_px", a.translate_px}, {"flip_horizontal", a.flip_horizontal},
            {"flip_vertical", a.flip_vertical}, {"brightness", a.brightness}, {"contrast", a.contrast},
            {"hue_deg", a.hue_deg}}},
          {"base_seed", cfg.base_seed},
          {"psf_left", cfg.psf_left ? json(cfg.psf_left->string()) : json(nullptr)},
          {"psf_right", cfg.psf_right ? json(cfg.psf_right->string()) : json(nullptr)},
          {"psf_alpha_ref", cfg.psf_alpha_ref}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void FenceAsset::validate() const {
  if (texture.channels() != 3) throw std::invalid_argument("fence texture must be RGB");
  if (mask.channels() != 1 || mask.width() != texture.width() || mask.height() != texture.height()) {
    throw std::invalid_argument("fence mask must match the texture size");
  }
  if (!is_binary(mask)) throw std::invalid_argument("fence mask must be binary");
}

AugmentRanges AugmentRanges::none() {
  AugmentRanges r;
  r.rotation_deg = 0.0;
  r.scale_min = r.scale_max = 1.0;
  r.translate_px = 0.0;
  r.flip_horizontal = r.flip_vertical = false;
  r.brightness = 0.0;
  r.contrast = 0.0;
  r.hue_deg = 0.0;
  return r;
}

void SynthConfig::validate() const {
  if (!(depth_min > 0.0) || !(depth_min < depth_max)) throw std::invalid_argument("need 0 < depth_min < depth_max");
  if (!(lens.blur_constant > 0.0)) throw std::invalid_argument("blur constant must be positive");
  if (grid.rows <= 0 || grid.cols <= 0) throw std::invalid_argument("grid shape must be positive");
  if (!(augment.scale_min > 0.0) || augment.scale_min > augment.scale_max) {
    throw std::invalid_argument("bad augmentation scale range");
  }
  if (augment.rotation_deg < 0 || augment.translate_px < 0 || augment.brightness < 0 || augment.contrast < 0 ||
      augment.contrast >= 1 || augment.hue_deg < 0) {
    throw std::invalid_argument("augmentation ranges must be non-negative (contrast below 1)");
  }
  if (psf_left.has_value() != psf_right.has_value()) throw std::invalid_argument("give both PSF grids or neither");
  if (!(psf_alpha_ref > 0.0)) throw std::invalid_argument("psf_alpha_ref must be positive");
}

std::uint64_t sample_seed(const SynthConfig& cfg, std::uint64_t sample_index, SeedStream stream) {
  return derive_seed(cfg.base_seed, sample_index, static_cast<std::uint64_t>(stream));
}

double sample_depth(const SynthConfig& cfg, std::uint64_t sample_index) {
  std::mt19937_64 rng(sample_seed(cfg, sample_index, SeedStream::kDepth));
  return uniform(rng, cfg.depth_min, cfg.depth_max);
}

bool AugmentParams::is_identity() const {
  return rotation_deg == 0.0 && scale == 1.0 && tx == 0.0 && ty == 0.0 && !flip_h && !flip_v &&
         brightness == 0.0 && contrast == 1.0 && hue_deg == 0.0;
}

AugmentParams AugmentParams::draw(const AugmentRanges& r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AugmentParams p;
  // Draw every value even when its range is empty so the stream layout is fixed.
  const double rot = uniform(rng, -1.0, 1.0);
  const double sc = unit(rng);
  const double tx = uniform(rng, -1.0, 1.0);
  const double ty = uniform(rng, -1.0, 1.0);
  const bool fh = unit(rng) < 0.5;
  const bool fv = unit(rng) < 0.5;
  const double br = uniform(rng, -1.0, 1.0);
  const double ct = uniform(rng, -1.0, 1.0);
  const double hue = uniform(rng, -1.0, 1.0);
  p.rotation_deg = r.rotation_deg * rot;
  p.scale = r.scale_min == r.scale_max ? r.scale_min : std::exp(std::log(r.scale_min) + sc * std::log(r.scale_max / r.scale_min));
  p.tx = r.translate_px * tx;
  p.ty = r.translate_px * ty;
  p.flip_h = r.flip_horizontal && fh;
  p.flip_v = r.flip_vertical && fv;
  p.brightness = r.brightness * br;
  p.contrast = 1.0 + r.contrast * ct;
  p.hue_deg = r.hue_deg * hue;
  return p;
}

FenceAsset warp_asset(const FenceAsset& asset, const AugmentParams& p) {
  asset.validate();
  const int w = asset.texture.width();
  const int h = asset.texture.height();
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  const double theta = p.rotation_deg * std::numbers::pi / 180.0;
  const double cs = p.rotation_deg == 0.0 ? 1.0 : std::cos(theta);
  const double sn = p.rotation_deg == 0.0 ? 0.0 : std::sin(theta);
  const double fx = p.flip_h ? -1.0 : 1.0;
  const double fy = p.flip_v ? -1.0 : 1.0;
  FenceAsset out{asset.id, Image(w, h, 3), Image(w, h, 1)};
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Inverse map: undo translation, rotation, scale, then flip.
      const double qx = x - cx - p.tx;
      const double qy = y - cy - p.ty;
      const double rx = (cs * qx + sn * qy) / p.scale;
      const double ry = (-sn * qx + cs * qy) / p.scale;
      const double sx = cx + fx * rx;
      const double sy = cy + fy * ry;
      if (sx < -0.5 || sy < -0.5 || sx > w - 0.5 || sy > h - 0.5) continue;
      const int nx = std::clamp(static_cast<int>(std::lround(sx)), 0, w - 1);
      const int ny = std::clamp(static_cast<int>(std::lround(sy)), 0, h - 1);
      out.mask.at(y, x) = asset.mask.at(ny, nx);
      for (int c = 0; c < 3; ++c) out.texture.at(c, y, x) = bilinear(asset.texture, c, sx, sy);
    }
  }
  return out;
}

Image jitter_color(const Image& texture, const AugmentParams& p) {
  if (texture.channels() != 3) throw std::invalid_argument("colour jitter needs an RGB texture");
  if (p.brightness == 0.0 && p.contrast == 1.0 && p.hue_deg == 0.0) return texture;
  // Rotation about the grey axis (Rodrigues).
  const double t = p.hue_deg * std::numbers::pi / 180.0;
  const double c = std::cos(t);
  const double s = std::sin(t);
  const double k = 1.0 / std::sqrt(3.0);
  const double a = c + (1 - c) / 3.0;
  const double b = (1 - c) / 3.0 - s * k;
  const double d = (1 - c) / 3.0 + s * k;
  const double m[3][3] = {{a, b, d}, {d, a, b}, {b, d, a}};
  Image out(texture.width(), texture.height(), 3);
  const std::size_t plane = texture.plane_size();
  for (std::size_t i = 0; i < plane; ++i) {
    const double rgb[3] = {texture.plane(0)[i], texture.plane(1)[i], texture.plane(2)[i]};
    for (int ch = 0; ch < 3; ++ch) {
      const double v = m[ch][0] * rgb[0] + m[ch][1] * rgb[1] + m[ch][2] * rgb[2];
      const double adj = (v - 0.5) * p.contrast + 0.5 + p.brightness;
      out.plane(ch)[i] = static_cast<float>(std::clamp(adj, 0.0, 1.0));
    }
  }
  return out;
}

FenceAsset augment_fence(const FenceAsset& asset, const AugmentRanges& ranges, std::uint64_t seed,
                         AugmentParams* used, int* tries) {
  for (int attempt = 0; attempt < kMaxAugmentTries; ++attempt) {
    const AugmentParams p = AugmentParams::draw(ranges, derive_seed(seed, attempt));
    FenceAsset warped = warp_asset(asset, p);
    if (mask_coverage(warped.mask) < kMinMaskCoverage) continue;
    warped.texture = jitter_color(warped.texture, p);
    if (used) *used = p;
    if (tries) *tries = attempt + 1;
    return warped;
  }
  throw AugmentRejected("augmentation left the fence mask empty after " + std::to_string(kMaxAugmentTries) +
                        " tries (asset " + asset.id + ")");
}

FenceAsset tile_asset(const FenceAsset& asset, int width, int height, std::uint64_t seed) {
  asset.validate();
  std::mt19937_64 rng(seed);
  const int aw = asset.texture.width();
  const int ah = asset.texture.height();
  const int ox = static_cast<int>(unit(rng) * aw);
  const int oy = static_cast<int>(unit(rng) * ah);
  FenceAsset out{asset.id, Image(width, height, 3), Image(width, height, 1)};
  for (int y = 0; y < height; ++y) {
    const int sy = (y + oy) % ah;
    for (int x = 0; x < width; ++x) {
      const int sx = (x + ox) % aw;
      out.mask.at(y, x) = asset.mask.at(sy, sx);
      for (int c = 0; c < 3; ++c) out.texture.at(c, y, x) = asset.texture.at(c, sy, sx);
    }
  }
  return out;
}

Composite composite_fence(const Image& base, const Image& fence, const MaskImage& mask, const PSFGrid& grid) {
  if (!base.same_shape(fence) || mask.channels() != 1 || !mask.same_dims(base)) {
    throw std::invalid_argument("compositing inputs differ in shape");
  }
  const Image sharp = composite_sharp(base, fence, mask);
  const Image blurred = patchwise_conv(sharp, grid);
  Image mask_blur = patchwise_conv(mask, grid);
  return {blend(base, blurred, mask_blur), std::move(mask_blur)};
}

DPGrids sample_grids(const SynthConfig& cfg, double alpha) {
  if (!cfg.psf_left) return make_parametric_grids(alpha, cfg.grid.rows, cfg.grid.cols);
  const double scale = alpha / cfg.psf_alpha_ref;
  PSFGrid left = scale_psf_grid(load_psf_grid(*cfg.psf_left), scale);
  PSFGrid right = scale_psf_grid(load_psf_grid(*cfg.psf_right), scale);
  const int r = std::max(left.radius(), right.radius());
  for (auto& k : left.kernels) k = k.padded_to(r);
  for (auto& k : right.kernels) k = k.padded_to(r);
  PSFGrid combined = combine_grids(left, right);
  return {std::move(left), std::move(right), std::move(combined)};
}

SynthSample synthesize_sample(const DPFrame& clean, const std::string& clean_id, const FenceAsset& asset,
                              const SynthConfig& cfg, std::uint64_t sample_index) {
  cfg.validate();
  clean.validate();
  asset.validate();
  const int w = clean.width();
  const int h = clean.height();

  SynthSample s;
  SampleRecord& rec = s.record;
  rec.id = sample_id(sample_index);
  rec.index = sample_index;
  rec.seed = derive_seed(cfg.base_seed, sample_index);
  rec.clean_id = clean_id;
  rec.asset_id = asset.id;
  rec.depth = sample_depth(cfg, sample_index);
  rec.alpha = blur_scale(cfg.lens, rec.depth);

  const FenceAsset tiled = tile_asset(asset, w, h, sample_seed(cfg, sample_index, SeedStream::kTile));
  s.fence = augment_fence(tiled, cfg.augment, sample_seed(cfg, sample_index, SeedStream::kAugment), &rec.augment,
                          &rec.augment_tries);
  const DPGrids grids = sample_grids(cfg, rec.alpha);
  rec.expected_disparity = grids.expected_disparity();

  const Image& mask = s.fence.mask;
  const Image fence_gray = green_channel(s.fence.texture);
  Composite left = composite_fence(clean.left, fence_gray, mask, grids.left);
  Composite right = composite_fence(clean.right, fence_gray, mask, grids.right);
  Composite combined = composite_fence(clean.combined, s.fence.texture, mask, grids.combined);
  s.occluded = DPFrame{std::move(left.image), std::move(right.image), std::move(combined.image)};
  s.soft_mask = std::move(combined.mask_blur);
  s.binary_mask = threshold_mask(s.soft_mask, 0.5f);

  double fence_sum = 0.0;
  double back_sum = 0.0;
  std::size_t count = 0;
  const Image clean_green = green_channel(clean.combined);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.data()[i] < 0.5f) continue;
    fence_sum += fence_gray.data()[i];
    back_sum += clean_green.data()[i];
    ++count;
  }
  rec.contrast = count ? std::abs(fence_sum - back_sum) / count : 0.0;
  rec.mask_coverage = mask_coverage(s.binary_mask);
  return s;
}

MaskImage recompute_soft_mask(const SampleRecord& record, const FenceAsset& asset, int width, int height,
                              const SynthConfig& cfg) {
  const FenceAsset tiled = tile_asset(asset, width, height, sample_seed(cfg, record.index, SeedStream::kTile));
  const FenceAsset warped = warp_asset(tiled, record.augment);
  return patchwise_conv(warped.mask, sample_grids(cfg, record.alpha).combined);
}

int patch_count(int width, int height, int patch, int stride) {
  if (stride <= 0) throw std::invalid_argument("stride must be positive");
  if (patch <= 0 || patch > width || patch > height) throw std::invalid_argument("patch must fit in the frame");
  return ((height - patch) / stride + 1) * ((width - patch) / stride + 1);
}

std::vector<Patch> extract_patches(const DPFrame& occluded, const DPFrame& clean, const MaskImage& soft_mask,
                                   const MaskImage& binary_mask, int patch, int stride) {
  const int w = occluded.width();
  const int h = occluded.height();
  const int n = patch_count(w, h, patch, stride);
  std::vector<Patch> out;
  out.reserve(n);
  auto cut = [&](const DPFrame& f, int x, int y) {
    return DPFrame{crop(f.left, x, y, patch, patch), crop(f.right, x, y, patch, patch),
                   crop(f.combined, x, y, patch, patch)};
  };
  for (int y = 0; y + patch <= h; y += stride)
    for (int x = 0; x + patch <= w; x += stride)
      out.push_back({x, y, cut(occluded, x, y), cut(clean, x, y), crop(soft_mask, x, y, patch, patch),
                     crop(binary_mask, x, y, patch, patch)});
  return out;
}

StrideChoice calibrate_stride(int width, int height, int patch, int frames, long long target) {
  StrideChoice best;
  long long best_err = -1;
  for (int s = 1; s <= std::max(width, height); ++s) {
    const int n = patch_count(width, height, patch, s);
    const long long total = static_cast<long long>(n) * frames;
    const long long err = std::llabs(total - target);
    if (best_err < 0 || err <= best_err) {
      best = {s, n, total};
      best_err = err;
    }
  }
  return best;
}

int test_split_size(int n_samples) {
  return static_cast<int>(std::floor(n_samples * 100.0 / 904.0 + 0.5));
}

std::string config_to_json(const SynthConfig& cfg) { return config_json(cfg).dump(); }

std::string config_hash(const SynthConfig& cfg) { return sha256_hex(config_to_json(cfg)); }

SynthConfig config_from_json(const std::string& text) {
  SynthConfig cfg;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  auto reject_unknown = [](const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
    for (const auto& [k, v] : obj.items()) {
      if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end()) {
        throw std::invalid_argument("unknown config key: " + where + k);
      }
    }
  };
  try {
    reject_unknown(j, {"depth_min", "depth_max", "lens", "grid", "augment", "base_seed", "psf_left", "psf_right",
                       "psf_alpha_ref"},
                   "");
    cfg.depth_min = j.value("depth_min", cfg.depth_min);
    cfg.depth_max = j.value("depth_max", cfg.depth_max);
    cfg.base_seed = j.value("base_seed", cfg.base_seed);
    cfg.psf_alpha_ref = j.value("psf_alpha_ref", cfg.psf_alpha_ref);
    if (j.contains("lens")) {
      const json& l = j["lens"];
      reject_unknown(l, {"focus_distance", "blur_constant"}, "lens.");
      if (l.contains("focus_distance")) {
        const json& f = l["focus_distance"];
        cfg.lens.focus_distance = f.is_string() && f.get<std::string>() == "inf"
                                      ? std::numeric_limits<double>::infinity()
                                      : f.get<double>();
      }
      cfg.lens.blur_constant = l.value("blur_constant", cfg.lens.blur_constant);
    }
    if (j.contains("grid")) {
      reject_unknown(j["grid"], {"rows", "cols"}, "grid.");
      cfg.grid.rows = j["grid"].value("rows", cfg.grid.rows);
      cfg.grid.cols = j["grid"].value("cols", cfg.grid.cols);
    }
    if (j.contains("augment")) {
      const json& a = j["augment"];
      reject_unknown(a, {"rotation_deg", "scale_min", "scale_max", "translate_px", "flip_horizontal",
                         "flip_vertical", "brightness", "contrast", "hue_deg"},
                     "augment.");
      AugmentRanges& r = cfg.augment;
      r.rotation_deg = a.value("rotation_deg", r.rotation_deg);
      r.scale_min = a.value("scale_min", r.scale_min);
      r.scale_max = a.value("scale_max", r.scale_max);
      r.translate_px = a.value("translate_px", r.translate_px);
      r.flip_horizontal = a.value("flip_horizontal", r.flip_horizontal);
      r.flip_vertical = a.value("flip_vertical", r.flip_vertical);
      r.brightness = a.value("brightness", r.brightness);
      r.contrast = a.value("contrast", r.contrast);
      r.hue_deg = a.value("hue_deg", r.hue_deg);
    }
    for (const char* key : {"psf_left", "psf_right"}) {
      if (j.contains(key) && !j[key].is_null()) {
        (std::string(key) == "psf_left" ? cfg.psf_left : cfg.psf_right) = j[key].get<std::string>();
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string generate_dataset(const std::vector<NamedFrame>& clean, const std::vector<FenceAsset>& assets,
                             const SynthConfig& cfg, const DatasetOptions& opts,
                             const std::filesystem::path& out_dir) {
  cfg.validate();
  if (clean.empty()) throw std::invalid_argument("no clean frames given");
  if (assets.empty()) throw std::invalid_argument("no fence assets given");
  if (opts.n_samples <= 0) throw std::invalid_argument("sample count must be positive");

  int stride = opts.stride;
  if (opts.patches) {
    const DPFrame& f0 = clean.front().frame;
    for (const auto& f : clean) {
      if (f.frame.width() != f0.width() || f.frame.height() != f0.height()) {
        throw std::invalid_argument("patch extraction needs equally sized clean frames");
      }
    }
    if (stride == 0) stride = calibrate_stride(f0.width(), f0.height(), opts.patch, 804, 13700).stride;
    patch_count(f0.width(), f0.height(), opts.patch, stride);  // validates
  }

  std::filesystem::create_directories(out_dir / "samples");
  const int n = opts.n_samples;
  std::vector<SampleRecord> records(n);
  std::vector<std::vector<json>> patch_records(n);
  std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      const auto ci = sample_seed(cfg, i, SeedStream::kClean) % clean.size();
      const auto ai = sample_seed(cfg, i, SeedStream::kAsset) % assets.size();
      const NamedFrame& bg = clean[ci];
      SynthSample s = synthesize_sample(bg.frame, bg.id, assets[ai], cfg, i);
      SampleRecord& rec = s.record;
      const std::filesystem::path rel = std::filesystem::path("samples") / rec.id;
      const std::filesystem::path dir = out_dir / rel;
      std::filesystem::create_directories(dir);
      save_frame(s.occluded, dir / "occluded");
      save_frame(bg.frame, dir / "clean");
      save_pfm(s.soft_mask, dir / "soft_mask.pfm");
      save_png(s.binary_mask, dir / "mask.png", PngDepth::k8);
      rec.occluded_dir = (rel / "occluded").generic_string();
      rec.clean_dir = (rel / "clean").generic_string();
      rec.soft_mask_path = (rel / "soft_mask.pfm").generic_string();
      rec.mask_path = (rel / "mask.png").generic_string();
      if (opts.patches) {
        const auto patches =
            extract_patches(s.occluded, bg.frame, s.soft_mask, s.binary_mask, opts.patch, stride);
        for (std::size_t k = 0; k < patches.size(); ++k) {
          char name[16];
          std::snprintf(name, sizeof name, "p%03zu", k);
          const std::filesystem::path prel = rel / "patches" / name;
          const std::filesystem::path pdir = out_dir / prel;
          std::filesystem::create_directories(pdir);
          save_frame(patches[k].occluded, pdir / "occluded");
          save_frame(patches[k].clean, pdir / "clean");
          save_pfm(patches[k].soft_mask, pdir / "soft_mask.pfm");
          save_png(patches[k].binary_mask, pdir / "mask.png", PngDepth::k8);
          patch_records[i].push_back({{"sample", rec.id}, {"x", patches[k].x}, {"y", patches[k].y},
                                      {"path", prel.generic_string()}});
        }
      }
      records[i] = std::move(rec);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  const int n_test = test_split_size(n);
  json manifest;
  manifest["schema_version"] = 1;
  manifest["generator"] = "dpfence synth";
  manifest["config"] = config_json(cfg);
  manifest["config_hash"] = config_hash(cfg);
  manifest["n_samples"] = n;
  json clean_ids = json::array();
  for (const auto& f : clean) clean_ids.push_back(f.id);
  json asset_ids = json::array();
  for (const auto& a : assets) asset_ids.push_back(a.id);
  manifest["clean_frames"] = clean_ids;
  manifest["assets"] = asset_ids;
  json train = json::array();
  json test = json::array();
  for (int i = 0; i < n; ++i) (i < n - n_test ? train : test).push_back(records[i].id);
  manifest["split"] = {{"rule", "n_test = floor(n * 100 / 904 + 0.5); the last n_test samples by index are test"},
                       {"n_train", n - n_test},
                       {"n_test", n_test},
                       {"train", train},
                       {"test", test}};
  json recs = json::array();
  for (const auto& r : records) recs.push_back(record_json(r));
  manifest["records"] = recs;
  if (opts.patches) {
    const DPFrame& f0 = clean.front().frame;
    json plist = json::array();
    for (const auto& v : patch_records)
      for (const auto& p : v) plist.push_back(p);
    const int per = patch_count(f0.width(), f0.height(), opts.patch, stride);
    manifest["patches"] = {{"size", opts.patch},
                           {"stride", stride},
                           {"stride_calibrated", opts.stride == 0},
                           {"per_sample", per},
                           {"count", plist.size()},
                           {"items", plist}};
  }
  const std::string text = manifest.dump(2) + "\n";
  write_text(out_dir / "manifest.json", text);
  return text;
}

}  // namespace dpfence
