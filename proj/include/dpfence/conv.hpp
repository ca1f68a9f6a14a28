#pragma once

#include <vector>

#include "dpfence/image.hpp"
#include "dpfence/psf.hpp"

namespace dpfence {

// How samples outside the image are read. Periodic keeps both constants and
// total brightness exactly for any kernel, including the one-sided
// half-aperture kernels; reflect (mirror without repeating the edge) keeps
// constants only.
enum class Boundary { kPeriodic, kReflect };

// Spatially varying blur. The image is split into grid.rows x grid.cols
// cells (cell edges at floor(i * size / n)); each cell is convolved with its
// kernel, and neighbouring cells are cross-faded with linear ramps spanning
// one kernel radius centred on the shared edge.
// Throws std::invalid_argument when the kernel radius exceeds a cell.
Image patchwise_conv(const Image& img, const PSFGrid& grid, Boundary boundary = Boundary::kPeriodic);

// Per-axis cross-fade weights for one coordinate: (cell index, weight)
// pairs that sum to 1.
struct CellWeight {
  int cell;
  double weight;
};
std::vector<std::vector<CellWeight>> feather_weights(int length, int cells, int band);

namespace reference {

// Serial cell-major evaluation of the same operator; kept as a test and
// benchmark baseline for the pixel-parallel kernel above.
Image patchwise_conv(const Image& img, const PSFGrid& grid, Boundary boundary = Boundary::kPeriodic);

}  // namespace reference

}  // namespace dpfence
