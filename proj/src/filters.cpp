#include "dpfence/filters.hpp"

#include <stdexcept>

#include "dpfence/image.hpp"

namespace dpfence {

std::vector<double> box_mean(std::span<const double> plane, int width, int height, int radius) {
  if (plane.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("box_mean: plane size mismatch");
  }
  const int k = 2 * radius + 1;
  std::vector<double> tmp(plane.size());
  std::vector<double> out(plane.size());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    const double* row = plane.data() + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      double s = 0.0;
      for (int d = -radius; d <= radius; ++d) s += row[reflect_index(x + d, width)];
      tmp[static_cast<std::size_t>(y) * width + x] = s / k;
    }
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double s = 0.0;
      for (int d = -radius; d <= radius; ++d) s += tmp[static_cast<std::size_t>(reflect_index(y + d, height)) * width + x];
      out[static_cast<std::size_t>(y) * width + x] = s / k;
    }
  }
  return out;
}

std::vector<double> box_mean(std::span<const float> plane, int width, int height, int radius) {
  const std::vector<double> d(plane.begin(), plane.end());
  return box_mean(std::span<const double>(d), width, height, radius);
}

std::vector<float> avg_pool2(std::span<const float> plane, int width, int height) {
  if (width % 2 || height % 2) throw std::invalid_argument("avg_pool2 needs even dimensions");
  const int w = width / 2;
  const int h = height / 2;
  std::vector<float> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(2 * y) * width + 2 * x;
      const double s = static_cast<double>(plane[i]) + plane[i + 1] + plane[i + width] + plane[i + width + 1];
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(0.25 * s);
    }
  return out;
}

}  // namespace dpfence
