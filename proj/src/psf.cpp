#include "dpfence/psf.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "dpfence/io.hpp"

namespace dpfence {

PSFKernel::PSFKernel(int radius) : radius_(radius) {
  if (radius < 0) throw std::invalid_argument("kernel radius must be non-negative");
  taps_.assign(static_cast<std::size_t>(size()) * size(), 0.0f);
  taps_[index(0, 0)] = 1.0f;
}

PSFKernel::PSFKernel(int radius, std::vector<float> taps) : radius_(radius), taps_(std::move(taps)) {
  if (radius < 0) throw std::invalid_argument("kernel radius must be non-negative");
  if (taps_.size() != static_cast<std::size_t>(size()) * size()) {
    throw std::invalid_argument("kernel tap count does not match radius");
  }
}

double PSFKernel::sum() const {
  double s = 0.0;
  for (float t : taps_) s += t;
  return s;
}

void PSFKernel::normalize() {
  const double s = sum();
  if (s <= 0.0) {
    *this = PSFKernel(radius_);
    return;
  }
  for (float& t : taps_) t = static_cast<float>(t / s);
}

bool PSFKernel::is_normalized(double tol) const {
  return std::all_of(taps_.begin(), taps_.end(), [](float t) { return t >= 0.0f; }) &&
         std::abs(sum() - 1.0) <= tol;
}

double PSFKernel::centroid_x() const {
  double m = 0.0;
  double s = 0.0;
  for (int dy = -radius_; dy <= radius_; ++dy)
    for (int dx = -radius_; dx <= radius_; ++dx) {
      m += dx * static_cast<double>(at(dx, dy));
      s += at(dx, dy);
    }
  return s > 0.0 ? m / s : 0.0;
}

double PSFKernel::centroid_y() const {
  double m = 0.0;
  double s = 0.0;
  for (int dy = -radius_; dy <= radius_; ++dy)
    for (int dx = -radius_; dx <= radius_; ++dx) {
      m += dy * static_cast<double>(at(dx, dy));
      s += at(dx, dy);
    }
  return s > 0.0 ? m / s : 0.0;
}

PSFKernel PSFKernel::mirrored_x() const {
  PSFKernel out(radius_);
  for (int dy = -radius_; dy <= radius_; ++dy)
    for (int dx = -radius_; dx <= radius_; ++dx) out.at(dx, dy) = at(-dx, dy);
  return out;
}

PSFKernel PSFKernel::padded_to(int radius) const {
  if (radius < radius_) throw std::invalid_argument("padded_to cannot shrink a kernel");
  PSFKernel out(radius);
  out.at(0, 0) = 0.0f;
  for (int dy = -radius_; dy <= radius_; ++dy)
    for (int dx = -radius_; dx <= radius_; ++dx) out.at(dx, dy) = at(dx, dy);
  return out;
}

PSFGrid PSFGrid::uniform(const PSFKernel& k, int rows, int cols, View view) {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("grid shape must be positive");
  PSFGrid g;
  g.rows = rows;
  g.cols = cols;
  g.view = view;
  g.kernels.assign(static_cast<std::size_t>(rows) * cols, k);
  return g;
}

void PSFGrid::validate() const {
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("grid shape must be positive");
  if (kernels.size() != static_cast<std::size_t>(rows) * cols) {
    throw std::invalid_argument("grid cell count does not match its shape");
  }
  const int r = radius();
  for (const auto& k : kernels) {
    if (k.radius() != r) throw std::invalid_argument("grid cells must share one radius");
    if (!k.is_normalized()) throw std::invalid_argument("grid cell kernel is not normalized");
  }
}

double PSFGrid::mean_centroid_x() const {
  double s = 0.0;
  for (const auto& k : kernels) s += k.centroid_x();
  return kernels.empty() ? 0.0 : s / static_cast<double>(kernels.size());
}

double blur_scale(const ThinLens& lens, double depth) {
  if (!(depth > 0.0)) throw std::invalid_argument("depth must be positive");
  if (!(lens.blur_constant > 0.0)) throw std::invalid_argument("blur constant must be positive");
  const double inv_focus = std::isinf(lens.focus_distance) ? 0.0 : 1.0 / lens.focus_distance;
  return lens.blur_constant * std::abs(inv_focus - 1.0 / depth);
}

DPKernels make_dp_psf_pair(double alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("blur scale must be non-negative");
  const int r = static_cast<int>(std::ceil(alpha));
  if (r == 0) return {PSFKernel::delta(), PSFKernel::delta(), PSFKernel::delta()};

  PSFKernel left(r);
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double dist = std::hypot(static_cast<double>(dx), static_cast<double>(dy));
      const double w = std::clamp(alpha + 0.5 - dist, 0.0, 1.0);
      const double half = std::clamp(0.5 - dx, 0.0, 1.0);
      left.at(dx, dy) = static_cast<float>(w * half);
    }
  }
  left.normalize();
  PSFKernel right = left.mirrored_x();
  PSFKernel combined(r);
  for (std::size_t i = 0; i < combined.taps().size(); ++i) {
    const int dx = static_cast<int>(i % combined.size()) - r;
    const int dy = static_cast<int>(i / combined.size()) - r;
    combined.at(dx, dy) = 0.5f * (left.at(dx, dy) + right.at(dx, dy));
  }
  combined.normalize();
  return {std::move(left), std::move(right), std::move(combined)};
}

double expected_disparity(const PSFKernel& left, const PSFKernel& right) {
  return right.centroid_x() - left.centroid_x();
}

PSFKernel scale_psf(const PSFKernel& k, double scale) {
  if (!(scale >= 0.0)) throw std::invalid_argument("scale must be non-negative");
  const int r = static_cast<int>(std::ceil(k.radius() * scale - 1e-9));
  if (scale == 0.0 || r <= 0) return PSFKernel::delta();
  PSFKernel out(r);
  const int kr = k.radius();
  auto tap = [&](int dx, int dy) -> double {
    if (dx < -kr || dx > kr || dy < -kr || dy > kr) return 0.0;
    return k.at(dx, dy);
  };
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double sx = dx / scale;
      const double sy = dy / scale;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      const double v = (1 - fx) * (1 - fy) * tap(x0, y0) + fx * (1 - fy) * tap(x0 + 1, y0) +
                       (1 - fx) * fy * tap(x0, y0 + 1) + fx * fy * tap(x0 + 1, y0 + 1);
      out.at(dx, dy) = static_cast<float>(v);
    }
  }
  out.normalize();
  return out;
}

PSFGrid scale_psf_grid(const PSFGrid& grid, double scale) {
  PSFGrid out = grid;
  int r = 0;
  for (auto& k : out.kernels) {
    k = scale_psf(k, scale);
    r = std::max(r, k.radius());
  }
  for (auto& k : out.kernels)
    if (k.radius() != r) k = k.padded_to(r);
  return out;
}

PSFGrid combine_grids(const PSFGrid& left, const PSFGrid& right) {
  if (left.rows != right.rows || left.cols != right.cols) {
    throw std::invalid_argument("left and right grids differ in shape");
  }
  const int r = std::max(left.radius(), right.radius());
  PSFGrid out = PSFGrid::uniform(PSFKernel(r), left.rows, left.cols, View::kCombined);
  for (std::size_t i = 0; i < out.kernels.size(); ++i) {
    const PSFKernel kl = left.kernels[i].padded_to(r);
    const PSFKernel kr = right.kernels[i].padded_to(r);
    PSFKernel& kc = out.kernels[i];
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) kc.at(dx, dy) = 0.5f * (kl.at(dx, dy) + kr.at(dx, dy));
    kc.normalize();
  }
  return out;
}

double DPGrids::expected_disparity() const {
  return right.mean_centroid_x() - left.mean_centroid_x();
}

DPGrids make_parametric_grids(double alpha, int rows, int cols) {
  const DPKernels k = make_dp_psf_pair(alpha);
  return {PSFGrid::uniform(k.left, rows, cols, View::kLeft),
          PSFGrid::uniform(k.right, rows, cols, View::kRight),
          PSFGrid::uniform(k.combined, rows, cols, View::kCombined)};
}

namespace {

constexpr char kGridMagic[4] = {'D', 'P', 'P', 'G'};
constexpr std::uint16_t kGridVersion = 1;

void put_u16(std::ostream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

std::uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) throw IoError("truncated PSF grid header");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

}  // namespace

PSFGrid load_psf_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kGridMagic, 4) != 0) {
    throw IoError("not a PSF grid file: " + path.string());
  }
  if (get_u16(in) != kGridVersion) throw IoError("unsupported PSF grid version");
  PSFGrid g;
  g.rows = get_u16(in);
  g.cols = get_u16(in);
  const int radius = get_u16(in);
  char tag = 0;
  if (!in.get(tag)) throw IoError("truncated PSF grid header");
  if (tag != 'L' && tag != 'R' && tag != 'C') throw IoError("bad PSF grid view tag");
  g.view = static_cast<View>(tag);
  const std::size_t taps = static_cast<std::size_t>(2 * radius + 1) * (2 * radius + 1);
  for (int i = 0; i < g.rows * g.cols; ++i) {
    std::vector<float> t(taps);
    for (float& v : t) {
      unsigned char b[4];
      if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated PSF grid payload");
      const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
      v = std::bit_cast<float>(bits);
    }
    g.kernels.emplace_back(radius, std::move(t));
  }
  g.validate();
  return g;
}

void save_psf_grid(const PSFGrid& grid, const std::filesystem::path& path) {
  grid.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out.write(kGridMagic, 4);
  put_u16(out, kGridVersion);
  put_u16(out, static_cast<std::uint16_t>(grid.rows));
  put_u16(out, static_cast<std::uint16_t>(grid.cols));
  put_u16(out, static_cast<std::uint16_t>(grid.radius()));
  out.put(static_cast<char>(grid.view));
  for (const auto& k : grid.kernels) {
    for (float v : k.taps()) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
      const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                  static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
      out.write(reinterpret_cast<const char*>(b), 4);
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace dpfence
