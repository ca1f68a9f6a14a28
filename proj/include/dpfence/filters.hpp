#pragma once

#include <span>
#include <vector>

namespace dpfence {

// Mean over a (2r+1)^2 window with mirror borders; output in double.
std::vector<double> box_mean(std::span<const double> plane, int width, int height, int radius);
std::vector<double> box_mean(std::span<const float> plane, int width, int height, int radius);

// 2x2 average pooling of a plane with even dimensions.
std::vector<float> avg_pool2(std::span<const float> plane, int width, int height);

}  // namespace dpfence
