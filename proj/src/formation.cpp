#include "dpfence/formation.hpp"

#include <stdexcept>

#include "dpfence/conv.hpp"

namespace dpfence {

DPFrame form_dp_views(const Image& sharp, const DPGrids& grids) {
  if (sharp.channels() != 3) throw std::invalid_argument("form_dp_views needs an RGB image");
  const Image green = green_channel(sharp);
  DPFrame frame{patchwise_conv(green, grids.left), patchwise_conv(green, grids.right),
                patchwise_conv(sharp, grids.combined)};
  frame.validate();
  return frame;
}

DPFrame form_dp_views(const Image& sharp, double alpha, GridShape shape) {
  return form_dp_views(sharp, make_parametric_grids(alpha, shape.rows, shape.cols));
}

}  // namespace dpfence
