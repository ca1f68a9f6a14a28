#pragma once

#include "dpfence/image.hpp"
#include "dpfence/psf.hpp"

namespace dpfence {

struct GridShape {
  int rows = 6;
  int cols = 8;
};

// Renders the dual-pixel capture of an all-in-focus RGB image at one blur
// scale: left/right blur the green channel with the half-aperture grids,
// the combined view blurs every channel with the full-aperture grid.
DPFrame form_dp_views(const Image& sharp, const DPGrids& grids);
DPFrame form_dp_views(const Image& sharp, double alpha, GridShape shape = {});

}  // namespace dpfence
