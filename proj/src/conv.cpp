#include "dpfence/conv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dpfence {

namespace {

std::vector<int> cell_edges(int length, int cells) {
  std::vector<int> edges(cells + 1);
  for (int i = 0; i <= cells; ++i) {
    edges[i] = static_cast<int>(static_cast<long long>(i) * length / cells);
  }
  return edges;
}

void check_grid(const Image& img, const PSFGrid& grid) {
  grid.validate();
  const int r = grid.radius();
  const auto ye = cell_edges(img.height(), grid.rows);
  const auto xe = cell_edges(img.width(), grid.cols);
  for (int i = 0; i < grid.rows; ++i)
    if (ye[i + 1] - ye[i] < r) throw std::invalid_argument("kernel radius exceeds patch height");
  for (int i = 0; i < grid.cols; ++i)
    if (xe[i + 1] - xe[i] < r) throw std::invalid_argument("kernel radius exceeds patch width");
}

int wrap_index(int i, int n, Boundary b) {
  if (b == Boundary::kReflect) return reflect_index(i, n);
  i %= n;
  return i < 0 ? i + n : i;
}

// Padded copy of one channel, `pad` samples on every side.
std::vector<float> pad_plane(const Image& img, int c, int pad, Boundary b) {
  const int w = img.width();
  const int h = img.height();
  const int pw = w + 2 * pad;
  std::vector<float> out(static_cast<std::size_t>(pw) * (h + 2 * pad));
  for (int y = 0; y < h + 2 * pad; ++y) {
    const int sy = wrap_index(y - pad, h, b);
    for (int x = 0; x < pw; ++x) out[static_cast<std::size_t>(y) * pw + x] = img.at(c, sy, wrap_index(x - pad, w, b));
  }
  return out;
}

}  // namespace

std::vector<std::vector<CellWeight>> feather_weights(int length, int cells, int band) {
  const auto edges = cell_edges(length, cells);
  const double width = std::max(1, band);
  auto ramp = [width](double t, double edge) {
    return std::clamp((t + 0.5 - edge) / width + 0.5, 0.0, 1.0);
  };
  std::vector<std::vector<CellWeight>> out(length);
  for (int t = 0; t < length; ++t) {
    for (int i = 0; i < cells; ++i) {
      const double up = i == 0 ? 1.0 : ramp(t, edges[i]);
      const double down = i == cells - 1 ? 0.0 : ramp(t, edges[i + 1]);
      const double w = up - down;
      if (w > 0.0) out[t].push_back({i, w});
    }
  }
  return out;
}

Image patchwise_conv(const Image& img, const PSFGrid& grid, Boundary boundary) {
  check_grid(img, grid);
  const int r = grid.radius();
  const int w = img.width();
  const int h = img.height();
  const int kw = 2 * r + 1;
  const int pw = w + 2 * r;
  const auto wy = feather_weights(h, grid.rows, r);
  const auto wx = feather_weights(w, grid.cols, r);

  Image out(w, h, img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    const std::vector<float> padded = pad_plane(img, c, r, boundary);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        double wsum = 0.0;
        for (const CellWeight& cy : wy[y]) {
          for (const CellWeight& cx : wx[x]) {
            const auto& taps = grid.cell(cy.cell, cx.cell).taps();
            double s = 0.0;
            // out(y,x) = sum k(dx,dy) * in(y - dy, x - dx)
            for (int ky = 0; ky < kw; ++ky) {
              const float* row = padded.data() + static_cast<std::size_t>(y + 2 * r - ky) * pw + (x + 2 * r);
              const float* krow = taps.data() + static_cast<std::size_t>(ky) * kw;
              for (int kx = 0; kx < kw; ++kx) s += static_cast<double>(krow[kx]) * row[-kx];
            }
            const double cw = cy.weight * cx.weight;
            acc += cw * s;
            wsum += cw;
          }
        }
        out.at(c, y, x) = std::clamp(static_cast<float>(acc / wsum), 0.0f, 1.0f);
      }
    }
  }
  return out;
}

namespace reference {

Image patchwise_conv(const Image& img, const PSFGrid& grid, Boundary boundary) {
  check_grid(img, grid);
  const int r = grid.radius();
  const int w = img.width();
  const int h = img.height();
  const auto wy = feather_weights(h, grid.rows, r);
  const auto wx = feather_weights(w, grid.cols, r);

  Image out(w, h, img.channels());
  std::vector<double> acc(static_cast<std::size_t>(w) * h);
  std::vector<double> wsum(acc.size());
  for (int c = 0; c < img.channels(); ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    std::fill(wsum.begin(), wsum.end(), 0.0);
    for (int gy = 0; gy < grid.rows; ++gy) {
      for (int gx = 0; gx < grid.cols; ++gx) {
        const PSFKernel& k = grid.cell(gy, gx);
        for (int y = 0; y < h; ++y) {
          double fy = 0.0;
          for (const auto& e : wy[y])
            if (e.cell == gy) fy = e.weight;
          if (fy == 0.0) continue;
          for (int x = 0; x < w; ++x) {
            double fx = 0.0;
            for (const auto& e : wx[x])
              if (e.cell == gx) fx = e.weight;
            if (fx == 0.0) continue;
            double s = 0.0;
            for (int dy = -r; dy <= r; ++dy)
              for (int dx = -r; dx <= r; ++dx)
                s += static_cast<double>(k.at(dx, dy)) *
                     img.at(c, wrap_index(y - dy, h, boundary), wrap_index(x - dx, w, boundary));
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            acc[i] += fy * fx * s;
            wsum[i] += fy * fx;
          }
        }
      }
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        out.at(c, y, x) = std::clamp(static_cast<float>(acc[i] / wsum[i]), 0.0f, 1.0f);
      }
  }
  return out;
}

}  // namespace reference

}  // namespace dpfence
