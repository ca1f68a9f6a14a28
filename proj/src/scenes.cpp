#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "dpfence/io.hpp"
#include "dpfence/synthpipe.hpp"

namespace dpfence {

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise on a (cells+1)^2 lattice, smoothly interpolated to w x h.
std::vector<double> value_noise(int w, int h, int cells, std::mt19937_64& rng) {
  const int gw = cells + 1;
  const int gh = std::max(1, cells * h / std::max(1, w)) + 1;
  std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
  for (double& v : lattice) v = unit(rng);
  std::vector<double> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const double gy = static_cast<double>(y) / h * (gh - 1);
    const int y0 = std::min(static_cast<int>(gy), gh - 2);
    const double ty = smooth(gy - y0);
    for (int x = 0; x < w; ++x) {
      const double gx = static_cast<double>(x) / w * (gw - 1);
      const int x0 = std::min(static_cast<int>(gx), gw - 2);
      const double tx = smooth(gx - x0);
      const double a = lattice[y0 * gw + x0] * (1 - tx) + lattice[y0 * gw + x0 + 1] * tx;
      const double b = lattice[(y0 + 1) * gw + x0] * (1 - tx) + lattice[(y0 + 1) * gw + x0 + 1] * tx;
      out[static_cast<std::size_t>(y) * w + x] = a * (1 - ty) + b * ty;
    }
  }
  return out;
}

}  // namespace

DPFrame make_clean_scene(int width, int height, std::uint64_t seed) {
  if (width < 8 || height < 8) throw std::invalid_argument("scene too small");
  std::mt19937_64 rng(seed);
  Image rgb(width, height, 3);
  // Value-noise octaves down to a few pixels, roughly 1/f, mixed towards a
  // shared luminance so colours stay natural.
  std::vector<double> lum(static_cast<std::size_t>(width) * height, 0.0);
  std::array<std::vector<double>, 3> chroma;
  const int base_cells = 3 + static_cast<int>(unit(rng) * 4);
  double amp = 1.0;
  double norm = 0.0;
  for (int cells = base_cells; cells <= width / 3; cells *= 2) {
    const auto n = value_noise(width, height, cells, rng);
    for (std::size_t i = 0; i < lum.size(); ++i) lum[i] += amp * n[i];
    norm += amp;
    amp *= 0.7;
  }
  for (double& v : lum) v = (v / norm - 0.5) * 1.6 + 0.5;
  for (int c = 0; c < 3; ++c) chroma[c] = value_noise(width, height, base_cells, rng);

  // A few soft-edged blocks for object boundaries.
  struct Block {
    double x0, y0, x1, y1, value;
  };
  std::vector<Block> blocks;
  const int nblocks = 2 + static_cast<int>(unit(rng) * 4);
  for (int b = 0; b < nblocks; ++b) {
    const double bw = uniform(rng, 0.1, 0.4) * width;
    const double bh = uniform(rng, 0.1, 0.4) * height;
    const double x0 = uniform(rng, 0.0, width - bw);
    const double y0 = uniform(rng, 0.0, height - bh);
    blocks.push_back({x0, y0, x0 + bw, y0 + bh, uniform(rng, -0.2, 0.2)});
  }
  const double tint[3] = {uniform(rng, 0.8, 1.2), uniform(rng, 0.8, 1.2), uniform(rng, 0.8, 1.2)};
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      double v = 0.2 + 0.6 * lum[i];
      for (const Block& b : blocks) {
        const double e = std::min({x - b.x0, b.x1 - x, y - b.y0, b.y1 - y});
        v += b.value * std::clamp(e / 2.0 + 0.5, 0.0, 1.0);
      }
      for (int c = 0; c < 3; ++c) {
        const double col = v * tint[c] + 0.15 * (chroma[c][i] - 0.5);
        rgb.at(c, y, x) = static_cast<float>(std::clamp(col, 0.02, 0.98));
      }
    }
  const Image g = green_channel(rgb);
  DPFrame frame{g, g, rgb};
  frame.validate();
  return frame;
}

FenceAsset make_fence_asset(int width, int height, std::uint64_t seed) {
  if (width < 16 || height < 16) throw std::invalid_argument("asset too small");
  std::mt19937_64 rng(seed);
  // Each wire family is a set of parallel lines with integer wave numbers so
  // the pattern tiles seamlessly over width x height.
  struct Family {
    double a, b;  // cycles across the width / height
    double half_width;
  };
  const bool diamond = unit(rng) < 0.5;
  const double spacing = uniform(rng, 56.0, 96.0);
  const double wire = uniform(rng, 16.0, 28.0);
  std::vector<Family> fam;
  if (diamond) {
    const double angle = uniform(rng, 35.0, 55.0) * std::numbers::pi / 180.0;
    const double a = std::max(1.0, std::round(width * std::cos(angle) / spacing));
    const double b = std::max(1.0, std::round(height * std::sin(angle) / spacing));
    fam.push_back({a, b, wire / 2});
    fam.push_back({a, -b, wire / 2});
  } else {
    fam.push_back({std::max(1.0, std::round(width / spacing)), 0.0, wire / 2});
    fam.push_back({0.0, std::max(1.0, std::round(height / (spacing * uniform(rng, 0.8, 1.25)))), wire / 2});
  }
  const bool bright = unit(rng) < 0.5;
  const double level = bright ? uniform(rng, 0.75, 0.95) : uniform(rng, 0.04, 0.18);
  const double tint[3] = {uniform(rng, 0.92, 1.08), uniform(rng, 0.92, 1.08), uniform(rng, 0.92, 1.08)};
  const double phase0 = unit(rng);
  const double phase1 = unit(rng);

  FenceAsset asset{"procedural-" + std::to_string(seed), Image(width, height, 3), Image(width, height, 1)};
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double best = 1e9;  // distance to the nearest wire centre, pixels
      double half = 0.0;
      for (std::size_t f = 0; f < fam.size(); ++f) {
        const double kx = fam[f].a / width;
        const double ky = fam[f].b / height;
        const double phase = kx * x + ky * y + (f == 0 ? phase0 : phase1);
        const double frac = phase - std::floor(phase);
        const double dist = std::min(frac, 1.0 - frac) / std::hypot(kx, ky);
        if (dist < best) {
          best = dist;
          half = fam[f].half_width;
        }
      }
      const bool on = best < half;
      asset.mask.at(y, x) = on ? 1.0f : 0.0f;
      // Round-wire shading: brighter along the centre line.
      const double shade = on ? 0.85 + 0.15 * std::cos(0.5 * std::numbers::pi * best / half) : 1.0;
      for (int c = 0; c < 3; ++c)
        asset.texture.at(c, y, x) = static_cast<float>(std::clamp(level * shade * tint[c], 0.0, 1.0));
    }
  asset.validate();
  return asset;
}

std::vector<NamedFrame> load_clean_frames(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> entries;
  for (const auto& e : std::filesystem::directory_iterator(dir)) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  std::vector<NamedFrame> frames;
  for (const auto& p : entries) {
    if (std::filesystem::is_directory(p) && std::filesystem::exists(p / "combined.png")) {
      frames.push_back({p.filename().string(), load_frame(p)});
    } else if (p.extension() == ".png") {
      // A plain RGB photo is taken as an in-focus capture.
      Image rgb = load_png(p);
      if (rgb.channels() == 1) rgb = replicate_to_rgb(rgb);
      const Image g = green_channel(rgb);
      frames.push_back({p.stem().string(), DPFrame{g, g, rgb}});
    }
  }
  if (frames.empty()) throw IoError("no clean frames in " + dir.string());
  return frames;
}

std::vector<FenceAsset> load_fence_assets(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> entries;
  for (const auto& e : std::filesystem::directory_iterator(dir)) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  std::vector<FenceAsset> assets;
  for (const auto& p : entries) {
    const std::string stem = p.stem().string();
    if (p.extension() != ".png" || stem.ends_with("_mask")) continue;
    const auto mask_path = p.parent_path() / (stem + "_mask.png");
    if (!std::filesystem::exists(mask_path)) throw IoError("missing mask for asset " + p.string());
    Image tex = load_png(p);
    if (tex.channels() == 1) tex = replicate_to_rgb(tex);
    Image mask = load_png(mask_path);
    if (mask.channels() == 3) mask = green_channel(mask);
    FenceAsset a{stem, std::move(tex), threshold_mask(mask, 0.5f)};
    a.validate();
    assets.push_back(std::move(a));
  }
  if (assets.empty()) throw IoError("no fence assets in " + dir.string());
  return assets;
}

}  // namespace dpfence
