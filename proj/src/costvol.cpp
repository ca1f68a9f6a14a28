#include "dpfence/costvol.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dpfence/fft.hpp"
#include "dpfence/filters.hpp"

namespace dpfence {

namespace {

using fft::Complex;

// Standardize a plane over a (2r+1)^2 window. The stabilizer is taken
// relative to the plane-wide variance so a rescaled input gives the same
// output; an all-zero plane stays zero.
std::vector<float> standardize(const std::vector<double>& raw, int w, int h) {
  std::vector<double> sq(raw.size());
  double total = 0.0;
  double total_sq = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    sq[i] = raw[i] * raw[i];
    total += raw[i];
    total_sq += sq[i];
  }
  const double n = static_cast<double>(raw.size());
  const double global_var = std::max(0.0, total_sq / n - (total / n) * (total / n));
  std::vector<float> out(raw.size(), 0.0f);
  if (global_var <= 0.0) return out;
  const double eps = kFeatureEpsilon * global_var;
  const auto mean = box_mean(std::span<const double>(raw), w, h, kFeatureWindowRadius);
  const auto mean_sq = box_mean(std::span<const double>(sq), w, h, kFeatureWindowRadius);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double var = std::max(0.0, mean_sq[i] - mean[i] * mean[i]);
    out[i] = static_cast<float>((raw[i] - mean[i]) / std::sqrt(var + eps));
  }
  return out;
}

// Phase-ramp multipliers for a length-n row shifted by d (content moves +d).
std::vector<Complex> shift_ramp(int n, double d) {
  const int bins = n / 2 + 1;
  std::vector<Complex> ramp(bins);
  for (int k = 0; k < bins; ++k) {
    if (n % 2 == 0 && k == n / 2) {
      ramp[k] = Complex(std::cos(std::numbers::pi * d), 0.0);
    } else {
      const double phi = -2.0 * std::numbers::pi * k * d / n;
      ramp[k] = Complex(std::cos(phi), std::sin(phi));
    }
  }
  return ramp;
}

void check_volume_args(const FeatureMap& left, const FeatureMap& right, double dmax, double step) {
  if (!left.same_shape(right)) throw std::invalid_argument("feature maps differ in shape");
  if (!(step > 0.0)) throw std::invalid_argument("disparity step must be positive");
  if (!(dmax >= 0.0)) throw std::invalid_argument("max disparity must be non-negative");
}

void check_window(const CostVolume& vol, int window) {
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("aggregation window must be odd");
  if (window > vol.size() || window > vol.scores.height() || window > vol.scores.width()) {
    throw std::invalid_argument("aggregation window larger than the volume");
  }
}

}  // namespace

FeatureMap extract_features(const Image& gray) {
  if (gray.channels() != 1) throw std::invalid_argument("extract_features needs a single-channel image");
  if (gray.width() % 2 || gray.height() % 2 || gray.width() < 4 || gray.height() < 4) {
    throw std::invalid_argument("extract_features needs even dimensions of at least 4");
  }
  const Image half = downsample2(gray);
  const int w = half.width();
  const int h = half.height();
  const std::size_t n = half.plane_size();
  std::vector<double> g(half.data().begin(), half.data().end());

  std::vector<std::vector<double>> raw(kFeatureChannels, std::vector<double>(n));
  const auto local_mean = box_mean(std::span<const double>(g), w, h, kFeatureWindowRadius);
  std::vector<double> g2(n);
  for (std::size_t i = 0; i < n; ++i) g2[i] = g[i] * g[i];
  const auto m3 = box_mean(std::span<const double>(g), w, h, 1);
  const auto m3sq = box_mean(std::span<const double>(g2), w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      auto at = [&](int yy, int xx) { return g[static_cast<std::size_t>(reflect_index(yy, h)) * w + reflect_index(xx, w)]; };
      raw[0][i] = g[i] - local_mean[i];
      raw[1][i] = 0.5 * (at(y, x + 1) - at(y, x - 1));
      raw[2][i] = 0.5 * (at(y + 1, x) - at(y - 1, x));
      raw[3][i] = std::sqrt(std::max(0.0, m3sq[i] - m3[i] * m3[i]));
    }
  }
  FeatureMap out(kFeatureChannels, h, w);
  for (int c = 0; c < kFeatureChannels; ++c) {
    const auto std_plane = standardize(raw[c], w, h);
    std::copy(std_plane.begin(), std_plane.end(), out.plane(c).begin());
  }
  return out;
}

FeatureMap phase_shift(const FeatureMap& feat, double d) {
  const int w = feat.width();
  if (std::abs(d) > w / 2.0) throw std::invalid_argument("phase shift larger than half the row");
  const auto ramp = shift_ramp(w, d);
  FeatureMap out(feat.channels(), feat.height(), w);
  const int rows = feat.channels() * feat.height();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const float* src = feat.data().data() + static_cast<std::size_t>(r) * w;
    std::vector<double> row(src, src + w);
    std::vector<Complex> spec(w / 2 + 1);
    fft::rfft(row, spec);
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= ramp[k];
    fft::irfft(spec, row);
    float* dst = out.data().data() + static_cast<std::size_t>(r) * w;
    for (int x = 0; x < w; ++x) dst[x] = static_cast<float>(row[x]);
  }
  return out;
}

std::vector<double> disparity_grid(double max_disparity, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("disparity step must be positive");
  if (!(max_disparity >= 0.0)) throw std::invalid_argument("max disparity must be non-negative");
  const int count = static_cast<int>(std::floor(max_disparity / step + 1e-9)) + 1;
  std::vector<double> grid(count);
  for (int i = 0; i < count; ++i) grid[i] = i * step;
  return grid;
}

CostVolume build_cost_volume(const FeatureMap& left, const FeatureMap& right, double max_disparity,
                             double step) {
  check_volume_args(left, right, max_disparity, step);
  const int w = left.width();
  const int h = left.height();
  const int channels = left.channels();
  CostVolume vol{disparity_grid(max_disparity, step), {}};
  if (vol.disparities.back() > w / 2.0) throw std::invalid_argument("max disparity exceeds half the width");
  const int planes = vol.size();
  vol.scores = Tensor(planes, h, w);

  // Row spectra of the right features, computed once.
  const int bins = w / 2 + 1;
  const int rows = channels * h;
  std::vector<Complex> spectra(static_cast<std::size_t>(rows) * bins);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const float* src = right.data().data() + static_cast<std::size_t>(r) * w;
    std::vector<double> row(src, src + w);
    fft::rfft(row, std::span<Complex>(spectra).subspan(static_cast<std::size_t>(r) * bins, bins));
  }

#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    // Sample F_R at x + d, i.e. shift its content by -d.
    const auto ramp = shift_ramp(w, -vol.disparities[p]);
    std::vector<Complex> spec(bins);
    std::vector<double> shifted(w);
    std::vector<double> acc(static_cast<std::size_t>(h) * w, 0.0);
    for (int c = 0; c < channels; ++c) {
      for (int y = 0; y < h; ++y) {
        const Complex* s = spectra.data() + (static_cast<std::size_t>(c) * h + y) * bins;
        for (int k = 0; k < bins; ++k) spec[k] = s[k] * ramp[k];
        fft::irfft(spec, shifted);
        double* a = acc.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) a[x] += static_cast<double>(left.at(c, y, x)) * shifted[x];
      }
    }
    std::span<float> out = vol.scores.plane(p);
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);
  }
  return vol;
}

CostVolume aggregate_cost(const CostVolume& vol, int window) {
  check_window(vol, window);
  if (window == 1) return vol;
  const int r = window / 2;
  const int planes = vol.size();
  const int h = vol.scores.height();
  const int w = vol.scores.width();
  const std::size_t n = vol.scores.plane_size();
  std::vector<double> a(vol.scores.data().begin(), vol.scores.data().end());
  std::vector<double> b(a.size());

#pragma omp parallel for schedule(static)
  for (int row = 0; row < planes * h; ++row) {
    const double* src = a.data() + static_cast<std::size_t>(row) * w;
    double* dst = b.data() + static_cast<std::size_t>(row) * w;
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += src[reflect_index(x + k, w)];
      dst[x] = s / window;
    }
  }
#pragma omp parallel for schedule(static)
  for (int row = 0; row < planes * h; ++row) {
    const int p = row / h;
    const int y = row % h;
    double* dst = a.data() + static_cast<std::size_t>(row) * w;
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += b[p * n + static_cast<std::size_t>(reflect_index(y + k, h)) * w + x];
      dst[x] = s / window;
    }
  }
  CostVolume out{vol.disparities, Tensor(planes, h, w)};
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    std::span<float> dst = out.scores.plane(p);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += a[reflect_index(p + k, planes) * n + i];
      dst[i] = static_cast<float>(s / window);
    }
  }
  return out;
}

DisparityEstimate disparity_argmax(const CostVolume& vol) {
  const int planes = vol.size();
  if (planes == 0) throw std::invalid_argument("empty cost volume");
  const int h = vol.scores.height();
  const int w = vol.scores.width();
  const std::size_t n = vol.scores.plane_size();
  const double step = vol.step();
  const double dmax = vol.disparities.back();
  DisparityEstimate est{Tensor(1, h, w), Tensor(1, h, w), Tensor(1, h, w)};

#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    std::vector<double> c(planes);
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      for (int p = 0; p < planes; ++p) c[p] = vol.scores.data()[p * n + i];
      const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
      const int best = static_cast<int>(hi - c.begin());
      const double c1 = *hi;

      double d = vol.disparities[best];
      if (best > 0 && best < planes - 1) {
        const double denom = c[best - 1] - 2.0 * c1 + c[best + 1];
        if (denom < 0.0) d += step * std::clamp(0.5 * (c[best - 1] - c[best + 1]) / denom, -0.5, 0.5);
      }

      double conf = 0.0;
      if (c1 > 0.0 && c1 - *lo > 1e-12 * (std::abs(c1) + 1.0)) {
        double c2 = 0.0;
        for (int p = 0; p < planes; ++p) {
          if (std::abs(p - best) <= 1) continue;
          const bool left_ok = p == 0 || c[p] >= c[p - 1];
          const bool right_ok = p == planes - 1 || c[p] >= c[p + 1];
          if (left_ok && right_ok) c2 = std::max(c2, c[p]);
        }
        conf = std::clamp(1.0 - c2 / c1, 0.0, 1.0);
      }
      est.disparity.data()[i] = static_cast<float>(std::clamp(d, 0.0, dmax));
      est.confidence.data()[i] = static_cast<float>(conf);
      est.max_score.data()[i] = static_cast<float>(c1);
    }
  }
  return est;
}

std::array<Tensor, 3> disp_pyramid(const DisparityEstimate& est) {
  const int h = est.disparity.height();
  const int w = est.disparity.width();
  // Mirror-pad so two 2x poolings divide evenly.
  const int ph = (h + 3) / 4 * 4;
  const int pw = (w + 3) / 4 * 4;
  Tensor level0(3, h, w);
  Tensor padded(3, ph, pw);
  const Tensor* maps[3] = {&est.disparity, &est.confidence, &est.max_score};
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) level0.at(c, y, x) = maps[c]->at(0, y, x);
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) padded.at(c, y, x) = maps[c]->at(0, reflect_index(y, h), reflect_index(x, w));
  }
  Tensor level1(3, ph / 2, pw / 2);
  Tensor level2(3, ph / 4, pw / 4);
  for (int c = 0; c < 3; ++c) {
    const auto p1 = avg_pool2(padded.plane(c), pw, ph);
    std::copy(p1.begin(), p1.end(), level1.plane(c).begin());
    const auto p2 = avg_pool2(p1, pw / 2, ph / 2);
    std::copy(p2.begin(), p2.end(), level2.plane(c).begin());
  }
  return {std::move(level0), std::move(level1), std::move(level2)};
}

std::array<Tensor, 3> disp_pyramid(const CostVolume& vol) { return disp_pyramid(disparity_argmax(vol)); }

DisparityEstimate estimate_disparity(const Image& left, const Image& right, const CostVolumeParams& params) {
  const FeatureMap fl = extract_features(left);
  const FeatureMap fr = extract_features(right);
  CostVolume vol = build_cost_volume(fl, fr, params.max_disparity, params.step);
  if (params.aggregation_window > 1) vol = aggregate_cost(vol, params.aggregation_window);
  return disparity_argmax(vol);
}

namespace reference {

namespace {

// x(n - d) for a real periodic row, by direct DFT sums.
std::vector<double> dft_shift(const float* row, int n, double d) {
  std::vector<double> out(n, 0.0);
  for (int k = 0; k < n; ++k) {
    Complex xk(0.0, 0.0);
    for (int m = 0; m < n; ++m) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) * m / n;
      xk += static_cast<double>(row[m]) * Complex(std::cos(a), std::sin(a));
    }
    const int signed_k = k <= n / 2 ? k : k - n;
    Complex h;
    if (n % 2 == 0 && k == n / 2) {
      h = Complex(std::cos(std::numbers::pi * d), 0.0);
    } else {
      const double a = -2.0 * std::numbers::pi * signed_k * d / n;
      h = Complex(std::cos(a), std::sin(a));
    }
    const Complex yk = xk * h;
    for (int m = 0; m < n; ++m) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) * m / n;
      out[m] += (yk * Complex(std::cos(a), std::sin(a))).real() / n;
    }
  }
  return out;
}

}  // namespace

CostVolume build_cost_volume(const FeatureMap& left, const FeatureMap& right, double max_disparity,
                             double step) {
  check_volume_args(left, right, max_disparity, step);
  const int w = left.width();
  const int h = left.height();
  CostVolume vol{disparity_grid(max_disparity, step), {}};
  vol.scores = Tensor(vol.size(), h, w);
  for (int p = 0; p < vol.size(); ++p) {
    for (int y = 0; y < h; ++y) {
      std::vector<double> acc(w, 0.0);
      for (int c = 0; c < left.channels(); ++c) {
        const float* row = right.data().data() + (static_cast<std::size_t>(c) * h + y) * w;
        const auto shifted = dft_shift(row, w, -vol.disparities[p]);
        for (int x = 0; x < w; ++x) acc[x] += static_cast<double>(left.at(c, y, x)) * shifted[x];
      }
      for (int x = 0; x < w; ++x) vol.scores.at(p, y, x) = static_cast<float>(acc[x]);
    }
  }
  return vol;
}

CostVolume aggregate_cost(const CostVolume& vol, int window) {
  check_window(vol, window);
  const int r = window / 2;
  const int planes = vol.size();
  const int h = vol.scores.height();
  const int w = vol.scores.width();
  CostVolume out{vol.disparities, Tensor(planes, h, w)};
  const double norm = static_cast<double>(window) * window * window;
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int dp = -r; dp <= r; ++dp)
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx)
              s += vol.scores.at(reflect_index(p + dp, planes), reflect_index(y + dy, h), reflect_index(x + dx, w));
        out.scores.at(p, y, x) = static_cast<float>(s / norm);
      }
  return out;
}

}  // namespace reference

}  // namespace dpfence
