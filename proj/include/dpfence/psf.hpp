#pragma once

#include <filesystem>
#include <limits>
#include <vector>

namespace dpfence {

// Square blur kernel with taps indexed by offsets in [-radius, radius].
// Library-produced kernels are non-negative and sum to 1.
class PSFKernel {
 public:
  PSFKernel() : PSFKernel(0) {}
  explicit PSFKernel(int radius);
  PSFKernel(int radius, std::vector<float> taps);

  static PSFKernel delta() { return PSFKernel(0); }

  int radius() const { return radius_; }
  int size() const { return 2 * radius_ + 1; }
  float at(int dx, int dy) const { return taps_[index(dx, dy)]; }
  float& at(int dx, int dy) { return taps_[index(dx, dy)]; }
  const std::vector<float>& taps() const { return taps_; }

  double sum() const;
  // Rescales to unit sum; an all-zero kernel becomes the delta.
  void normalize();
  bool is_normalized(double tol = 1e-6) const;
  // First moments over the taps, in pixels.
  double centroid_x() const;
  double centroid_y() const;
  PSFKernel mirrored_x() const;
  // Re-embeds the taps at a larger radius (zero border).
  PSFKernel padded_to(int radius) const;

  friend bool operator==(const PSFKernel&, const PSFKernel&) = default;

 private:
  std::size_t index(int dx, int dy) const {
    return static_cast<std::size_t>(dy + radius_) * size() + (dx + radius_);
  }
  int radius_;
  std::vector<float> taps_;
};

enum class View : char { kLeft = 'L', kRight = 'R', kCombined = 'C' };

// Grid of per-cell kernels covering an image; cells are row-major and all
// share one radius.
struct PSFGrid {
  int rows = 1;
  int cols = 1;
  View view = View::kCombined;
  std::vector<PSFKernel> kernels;

  static PSFGrid uniform(const PSFKernel& k, int rows, int cols, View view);
  int radius() const { return kernels.empty() ? 0 : kernels.front().radius(); }
  const PSFKernel& cell(int r, int c) const { return kernels[static_cast<std::size_t>(r) * cols + c]; }
  // Throws std::invalid_argument on shape or normalization violations.
  void validate() const;
  // Mean of the per-cell horizontal centroids.
  double mean_centroid_x() const;
};

struct ThinLens {
  double focus_distance = std::numeric_limits<double>::infinity();  // meters
  double blur_constant = 1.0;                                       // pixel * meters
};

// Defocus blur scale |1/d_focus - 1/d| * c. An infinite focus distance gives c/d.
double blur_scale(const ThinLens& lens, double depth);

struct DPKernels {
  PSFKernel left;
  PSFKernel right;
  PSFKernel combined;
};

// Parametric half-aperture model. The combined kernel is a disc of blur
// radius alpha with a one-pixel linear edge; the left kernel keeps the
// x < 0 half of that disc (the x = 0 column at half weight) and is
// renormalized; the right kernel is its mirror; combined == (left+right)/2.
DPKernels make_dp_psf_pair(double alpha);

// Horizontal centroid separation centroid(right) - centroid(left): the
// disparity a scene point at this blur scale shows between the views.
double expected_disparity(const PSFKernel& left, const PSFKernel& right);

// Bilinear spatial rescale by `scale` followed by renormalization.
PSFKernel scale_psf(const PSFKernel& k, double scale);
PSFGrid scale_psf_grid(const PSFGrid& grid, double scale);

// Cellwise (left + right) / 2, radii unified.
PSFGrid combine_grids(const PSFGrid& left, const PSFGrid& right);

struct DPGrids {
  PSFGrid left;
  PSFGrid right;
  PSFGrid combined;
  double expected_disparity() const;
};

DPGrids make_parametric_grids(double alpha, int rows, int cols);

// Binary grid file: "DPPG", u16 version, u16 rows, u16 cols, u16 radius,
// u8 view tag, then little-endian f32 taps, cell-major, row-major taps.
PSFGrid load_psf_grid(const std::filesystem::path& path);
void save_psf_grid(const PSFGrid& grid, const std::filesystem::path& path);

}  // namespace dpfence
