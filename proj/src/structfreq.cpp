#include "dpfence/structfreq.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "dpfence/fft.hpp"
#include "dpfence/filters.hpp"
#include "dpfence/io.hpp"

namespace dpfence {

namespace {

using fft::Complex;

void require_size(const std::vector<float>& v, std::size_t n, const char* what) {
  if (v.size() != n) throw std::invalid_argument(std::string(what) + " has the wrong number of weights");
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// 3x3 convolution (correlation form) of `src` channels [c0, c0+n) with mirror
// borders, accumulated into `acc` (out x h x w, double).
void conv3x3_accumulate(const Tensor& src, int c0, int n, const std::vector<float>& k, int out,
                        std::vector<double>& acc) {
  if (n == 0 || out == 0) return;
  const int h = src.height();
  const int w = src.width();
  const std::size_t plane = src.plane_size();
#pragma omp parallel for schedule(static)
  for (int o = 0; o < out; ++o) {
    double* dst = acc.data() + o * plane;
    for (int i = 0; i < n; ++i) {
      const float* kk = k.data() + (static_cast<std::size_t>(o) * n + i) * 9;
      for (int y = 0; y < h; ++y) {
        int ys[3] = {reflect_index(y - 1, h), y, reflect_index(y + 1, h)};
        for (int x = 0; x < w; ++x) {
          const int xs[3] = {reflect_index(x - 1, w), x, reflect_index(x + 1, w)};
          double s = 0.0;
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) s += static_cast<double>(kk[a * 3 + b]) * src.at(c0 + i, ys[a], xs[b]);
          dst[static_cast<std::size_t>(y) * w + x] += s;
        }
      }
    }
  }
}

void conv1x1_accumulate(const Tensor& src, int c0, int n, const std::vector<float>& k, int out,
                        std::vector<double>& acc) {
  if (n == 0 || out == 0) return;
  const std::size_t plane = src.plane_size();
#pragma omp parallel for schedule(static)
  for (int o = 0; o < out; ++o) {
    double* dst = acc.data() + o * plane;
    for (int i = 0; i < n; ++i) {
      const double kv = k[static_cast<std::size_t>(o) * n + i];
      const std::span<const float> s = src.plane(c0 + i);
      for (std::size_t p = 0; p < plane; ++p) dst[p] += kv * s[p];
    }
  }
}

Tensor avg_pool(const Tensor& t) {
  Tensor out(t.channels(), t.height() / 2, t.width() / 2);
  for (int c = 0; c < t.channels(); ++c) {
    const auto p = avg_pool2(t.plane(c), t.width(), t.height());
    std::copy(p.begin(), p.end(), out.plane(c).begin());
  }
  return out;
}

Tensor upsample_nearest(const Tensor& t) {
  Tensor out(t.channels(), t.height() * 2, t.width() * 2);
  for (int c = 0; c < t.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) out.at(c, y, x) = t.at(c, y / 2, x / 2);
  return out;
}

}  // namespace

void FeatureTensor::validate() const {
  if (split < 0 || split > data.channels()) throw std::invalid_argument("feature split out of range");
  if (!data.all_finite()) throw std::invalid_argument("feature tensor has non-finite values");
}

void SpectralWeights::validate() const {
  if (in_channels < 0 || out_channels < 0) throw std::invalid_argument("negative spectral channel count");
  const std::size_t freqs = per_frequency() ? static_cast<std::size_t>(freq_height) * freq_width : 1;
  require_size(mix, freqs * block_size(), "spectral mixing");
  require_size(bias, static_cast<std::size_t>(2) * out_channels, "spectral bias");
}

SpectralWeights SpectralWeights::identity(int channels) {
  SpectralWeights w = zeros(channels, channels);
  for (int r = 0; r < 2 * channels; ++r) w.mix[static_cast<std::size_t>(r) * 2 * channels + r] = 1.0f;
  return w;
}

SpectralWeights SpectralWeights::zeros(int in_channels, int out_channels) {
  SpectralWeights w;
  w.in_channels = in_channels;
  w.out_channels = out_channels;
  w.mix.assign(w.block_size(), 0.0f);
  w.bias.assign(static_cast<std::size_t>(2) * out_channels, 0.0f);
  return w;
}

SpectralWeights SpectralWeights::from_kernel(int channels, int height, int width, const std::vector<float>& kernel,
                                             int kernel_size) {
  if (kernel_size % 2 == 0 || kernel.size() != static_cast<std::size_t>(kernel_size) * kernel_size) {
    throw std::invalid_argument("kernel must be odd and square");
  }
  const int r = kernel_size / 2;
  std::vector<double> placed(static_cast<std::size_t>(height) * width, 0.0);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const int y = ((dy % height) + height) % height;
      const int x = ((dx % width) + width) % width;
      placed[static_cast<std::size_t>(y) * width + x] += kernel[(dy + r) * kernel_size + (dx + r)];
    }
  const int bins = width / 2 + 1;
  std::vector<Complex> spec(static_cast<std::size_t>(height) * bins);
  fft::rfft2(height, width, placed, spec);

  SpectralWeights w = zeros(channels, channels);
  w.freq_height = height;
  w.freq_width = bins;
  const std::size_t block = w.block_size();
  w.mix.assign(spec.size() * block, 0.0f);
  const int n2 = 2 * channels;
  for (std::size_t f = 0; f < spec.size(); ++f) {
    float* m = w.mix.data() + f * block;
    const float a = static_cast<float>(spec[f].real());
    const float b = static_cast<float>(spec[f].imag());
    for (int c = 0; c < channels; ++c) {
      m[c * n2 + c] = a;
      m[c * n2 + channels + c] = -b;
      m[(channels + c) * n2 + c] = b;
      m[(channels + c) * n2 + channels + c] = a;
    }
  }
  return w;
}

FeatureTensor spectral_transform(const FeatureTensor& x, const SpectralWeights& w) {
  x.validate();
  w.validate();
  if (x.split != x.channels()) throw std::invalid_argument("spectral transform needs an all-global input");
  if (w.in_channels != x.channels()) throw std::invalid_argument("spectral weights do not match input channels");
  const int h = x.height();
  const int wd = x.width();
  const int bins = wd / 2 + 1;
  const std::size_t nf = static_cast<std::size_t>(h) * bins;
  if (w.per_frequency() && (w.freq_height != h || w.freq_width != bins)) {
    throw std::invalid_argument("per-frequency weights do not match the input size");
  }
  const int cin = w.in_channels;
  const int cout = w.out_channels;

  std::vector<Complex> spec(static_cast<std::size_t>(cin) * nf);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < cin; ++c) {
    const std::span<const float> p = x.data.plane(c);
    std::vector<double> in(p.begin(), p.end());
    fft::rfft2(h, wd, in, std::span<Complex>(spec).subspan(c * nf, nf));
  }

  std::vector<Complex> mixed(static_cast<std::size_t>(cout) * nf);
  const std::size_t block = w.block_size();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(nf); ++f) {
    const float* m = w.mix.data() + (w.per_frequency() ? f * block : 0);
    for (int o = 0; o < 2 * cout; ++o) {
      const float* row = m + static_cast<std::size_t>(o) * 2 * cin;
      double s = w.bias[o];
      for (int i = 0; i < cin; ++i) {
        const Complex v = spec[i * nf + f];
        s += row[i] * v.real() + row[cin + i] * v.imag();
      }
      Complex& dst = mixed[(o % cout) * nf + f];
      if (o < cout) dst.real(s);
      else dst.imag(s);
    }
  }

  FeatureTensor out{Tensor(cout, h, wd), cout};
#pragma omp parallel for schedule(static)
  for (int c = 0; c < cout; ++c) {
    std::vector<double> res(static_cast<std::size_t>(h) * wd);
    fft::irfft2(h, wd, std::span<const Complex>(mixed).subspan(c * nf, nf), res);
    std::span<float> dst = out.data.plane(c);
    for (std::size_t i = 0; i < res.size(); ++i) dst[i] = static_cast<float>(res[i]);
  }
  return out;
}

void FFCWeights::validate() const {
  const std::size_t il = in_local, ig = in_global, ol = out_local, og = out_global;
  require_size(l2l, ol * il * 9, "local-to-local");
  require_size(g2l, ol * ig * 9, "global-to-local");
  require_size(l2g, og * il, "local-to-global");
  require_size(bias_local, ol, "local bias");
  require_size(bias_global, og, "global bias");
  if (ig > 0 && og > 0) {
    g2g.validate();
    if (g2g.in_channels != in_global || g2g.out_channels != out_global) {
      throw std::invalid_argument("global-to-global weights do not match the stream widths");
    }
  }
}

FFCWeights FFCWeights::zeros(int in_local, int in_global, int out_local, int out_global) {
  FFCWeights w;
  w.in_local = in_local;
  w.in_global = in_global;
  w.out_local = out_local;
  w.out_global = out_global;
  w.l2l.assign(static_cast<std::size_t>(out_local) * in_local * 9, 0.0f);
  w.g2l.assign(static_cast<std::size_t>(out_local) * in_global * 9, 0.0f);
  w.l2g.assign(static_cast<std::size_t>(out_global) * in_local, 0.0f);
  w.g2g = SpectralWeights::zeros(in_global, out_global);
  w.bias_local.assign(out_local, 0.0f);
  w.bias_global.assign(out_global, 0.0f);
  return w;
}

FeatureTensor ffc_block(const FeatureTensor& x, const FFCWeights& w) {
  x.validate();
  w.validate();
  if (x.split != w.in_global || x.local_channels() != w.in_local) {
    throw std::invalid_argument("feature split does not match the block weights");
  }
  const int h = x.height();
  const int wd = x.width();
  const std::size_t plane = x.data.plane_size();
  const int il = w.in_local;

  std::vector<double> local(static_cast<std::size_t>(w.out_local) * plane, 0.0);
  conv3x3_accumulate(x.data, 0, il, w.l2l, w.out_local, local);
  conv3x3_accumulate(x.data, il, w.in_global, w.g2l, w.out_local, local);

  std::vector<double> global(static_cast<std::size_t>(w.out_global) * plane, 0.0);
  conv1x1_accumulate(x.data, 0, il, w.l2g, w.out_global, global);
  if (w.in_global > 0 && w.out_global > 0) {
    FeatureTensor g{Tensor(w.in_global, h, wd), w.in_global};
    for (int c = 0; c < w.in_global; ++c) {
      const auto src = x.data.plane(il + c);
      std::copy(src.begin(), src.end(), g.data.plane(c).begin());
    }
    const FeatureTensor spec = spectral_transform(g, w.g2g);
    for (std::size_t i = 0; i < global.size(); ++i) global[i] += spec.data.data()[i];
  }

  FeatureTensor out{Tensor(w.out_local + w.out_global, h, wd), w.out_global};
  float* dst = out.data.data().data();
  for (int o = 0; o < w.out_local; ++o)
    for (std::size_t p = 0; p < plane; ++p)
      dst[o * plane + p] = static_cast<float>(std::max(0.0, local[o * plane + p] + w.bias_local[o]));
  dst += static_cast<std::size_t>(w.out_local) * plane;
  for (int o = 0; o < w.out_global; ++o)
    for (std::size_t p = 0; p < plane; ++p)
      dst[o * plane + p] = static_cast<float>(std::max(0.0, global[o * plane + p] + w.bias_global[o]));
  return out;
}

void SAMWeights::validate() const {
  require_size(w, static_cast<std::size_t>(out_channels) * in_channels, "attention matrix");
  require_size(b, out_channels, "attention bias");
}

FeatureTensor sam_fuse(const FeatureTensor& ffc, const Tensor& disp, const SAMWeights& w) {
  w.validate();
  if (ffc.height() != disp.height() || ffc.width() != disp.width()) {
    throw std::invalid_argument("attention inputs differ in spatial size");
  }
  if (w.in_channels != disp.channels() || w.out_channels != ffc.channels()) {
    throw std::invalid_argument("attention weights do not match the channel counts");
  }
  FeatureTensor out{Tensor(ffc.channels(), ffc.height(), ffc.width()), ffc.split};
  const std::size_t plane = ffc.data.plane_size();
#pragma omp parallel for schedule(static)
  for (int o = 0; o < w.out_channels; ++o) {
    const std::span<const float> f = ffc.data.plane(o);
    std::span<float> dst = out.data.plane(o);
    for (std::size_t p = 0; p < plane; ++p) {
      double z = w.b[o];
      for (int i = 0; i < w.in_channels; ++i) z += static_cast<double>(w.w[o * w.in_channels + i]) * disp.plane(i)[p];
      dst[p] = static_cast<float>(f[p] * sigmoid(z));
    }
  }
  return out;
}

namespace {

// Score of one window given its full power spectrum (n x n, DC at 0). The
// lattice bins (DC lobe excluded) are written to `lattice` when given.
double lattice_score(const std::vector<double>& power, int n, std::vector<char>* lattice = nullptr) {
  auto freq = [n](int i) { return i <= n / 2 ? i : i - n; };
  auto in_dc_lobe = [&](int u, int v) { return std::abs(freq(u)) <= 1 && std::abs(freq(v)) <= 1; };

  double total = 0.0;
  int counted = 0;
  int best = -1;
  for (int i = 0; i < n * n; ++i) {
    if (in_dc_lobe(i / n, i % n)) continue;
    total += power[i];
    ++counted;
    if (best < 0 || power[i] > power[best]) best = i;
  }
  if (best < 0 || total <= 1e-20) return 0.0;
  const int p1u = freq(best / n);
  const int p1v = freq(best % n);
  const int hmax = kPeriodicityHarmonics;

  auto near_line = [&](int u, int v) {
    for (int m = -hmax; m <= hmax; ++m)
      if (std::abs(u - m * p1u) <= 1 && std::abs(v - m * p1v) <= 1) return true;
    return false;
  };
  int second = -1;
  for (int i = 0; i < n * n; ++i) {
    const int u = freq(i / n);
    const int v = freq(i % n);
    if (in_dc_lobe(i / n, i % n) || near_line(u, v)) continue;
    if (second < 0 || power[i] > power[second]) second = i;
  }
  const int p2u = second < 0 ? 0 : freq(second / n);
  const int p2v = second < 0 ? 0 : freq(second % n);

  std::vector<char> covered(static_cast<std::size_t>(n) * n, 0);
  for (int m = -hmax; m <= hmax; ++m)
    for (int k = -hmax; k <= hmax; ++k) {
      const int cu = m * p1u + k * p2u;
      const int cv = m * p1v + k * p2v;
      if (std::abs(cu) > n / 2 || std::abs(cv) > n / 2) continue;
      for (int du = -1; du <= 1; ++du)
        for (int dv = -1; dv <= 1; ++dv) {
          const int u = ((cu + du) % n + n) % n;
          const int v = ((cv + dv) % n + n) % n;
          covered[static_cast<std::size_t>(u) * n + v] = 1;
        }
    }
  double captured = 0.0;
  int hits = 0;
  for (int i = 0; i < n * n; ++i) {
    if (!covered[i] || in_dc_lobe(i / n, i % n)) continue;
    captured += power[i];
    ++hits;
  }
  if (lattice) {
    for (int i = 0; i < n * n; ++i)
      if (in_dc_lobe(i / n, i % n)) covered[i] = 0;
    *lattice = std::move(covered);
  }
  const double chance = static_cast<double>(hits) / counted;
  if (chance >= 1.0) return 0.0;
  return std::clamp((captured / total - chance) / (1.0 - chance), 0.0, 1.0);
}

std::vector<int> window_starts(int length, int window) {
  std::vector<int> starts;
  const int hop = window / 2;
  for (int s = 0; s + window <= length; s += hop) starts.push_back(s);
  if (starts.back() + window < length) starts.push_back(length - window);
  return starts;
}

double interpolate(const std::vector<double>& centres, double pos, int& i0) {
  if (centres.size() == 1 || pos <= centres.front()) {
    i0 = 0;
    return 0.0;
  }
  if (pos >= centres.back()) {
    i0 = static_cast<int>(centres.size()) - 2;
    return 1.0;
  }
  i0 = static_cast<int>(std::upper_bound(centres.begin(), centres.end(), pos) - centres.begin()) - 1;
  return (pos - centres[i0]) / (centres[i0 + 1] - centres[i0]);
}

}  // namespace

namespace {

struct WindowScan {
  std::vector<int> ys, xs;
  std::vector<double> scores;
  std::vector<std::vector<float>> levels;  // per window, n x n, when requested
};

void check_window_args(const Image& gray, int window) {
  if (gray.channels() != 1) throw std::invalid_argument("periodicity needs a single-channel image");
  if (window < 4 || (window & (window - 1)) != 0) throw std::invalid_argument("window must be a power of two");
  if (window > gray.width() || window > gray.height()) throw std::invalid_argument("window larger than the image");
}

std::vector<double> hann_window(int n) {
  std::vector<double> hann(n);
  for (int i = 0; i < n; ++i) hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (i + 0.5) / n);
  return hann;
}

// Share of the pixels equal to `value` (n x n grid) held by the largest
// 4-connected component.
double largest_component_share(const std::vector<char>& grid, int n, char value) {
  std::vector<char> seen(grid.size(), 0);
  std::vector<int> stack;
  int total = 0;
  int largest = 0;
  for (int start = 0; start < n * n; ++start) {
    if (grid[start] != value || seen[start]) continue;
    int size = 0;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      ++size;
      const int y = i / n;
      const int x = i % n;
      const int nb[4] = {x > 0 ? i - 1 : -1, x + 1 < n ? i + 1 : -1, y > 0 ? i - n : -1, y + 1 < n ? i + n : -1};
      for (int j : nb)
        if (j >= 0 && grid[j] == value && !seen[j]) {
          seen[j] = 1;
          stack.push_back(j);
        }
    }
    total += size;
    largest = std::max(largest, size);
  }
  return total ? static_cast<double>(largest) / total : 0.0;
}

// Normalised fence level of one window: the lattice-filtered patch divided
// by the taper, centred on its two-class split over the window core and
// oriented so the connected phase is high.
std::vector<float> window_level(const std::vector<Complex>& spec, const std::vector<char>& lattice,
                                const std::vector<double>& hann, int n) {
  const int bins = n / 2 + 1;
  std::vector<Complex> kept(spec.size());
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < bins; ++v)
      if (lattice[static_cast<std::size_t>(u) * n + v]) kept[u * bins + v] = spec[u * bins + v];
  std::vector<double> q(static_cast<std::size_t>(n) * n);
  fft::irfft2(n, n, kept, q);
  const double floor_w = 0.25;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) q[y * n + x] /= std::max(hann[y] * hann[x], floor_w);

  std::vector<std::size_t> core;
  for (int y = n / 4; y < n - n / 4; ++y)
    for (int x = n / 4; x < n - n / 4; ++x) core.push_back(static_cast<std::size_t>(y) * n + x);
  // Two-class (Otsu) split of the core values.
  std::vector<double> sorted;
  for (std::size_t i : core) sorted.push_back(q[i]);
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  std::vector<double> prefix(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) prefix[i + 1] = prefix[i] + sorted[i];
  double best_var = -1.0;
  double lo = 0.0;
  double hi = 0.0;
  for (std::size_t k = 1; k < m; ++k) {
    const double w0 = static_cast<double>(k) / m;
    const double m0 = prefix[k] / k;
    const double m1 = (prefix[m] - prefix[k]) / (m - k);
    const double between = w0 * (1 - w0) * (m1 - m0) * (m1 - m0);
    if (between > best_var) {
      best_var = between;
      lo = m0;
      hi = m1;
    }
  }
  std::vector<float> level(static_cast<std::size_t>(n) * n, 0.0f);
  if (hi - lo <= 1e-9) return level;
  const double mid = 0.5 * (lo + hi);

  // The wires form one connected network, the gaps between them separate
  // islands: the fence is the phase held mostly by a single component.
  std::vector<char> high(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) high[i] = q[i] > mid;
  const double sign = largest_component_share(high, n, 1) >= largest_component_share(high, n, 0) ? 1.0 : -1.0;
  for (std::size_t i = 0; i < level.size(); ++i)
    level[i] = static_cast<float>(std::clamp(0.5 + sign * (q[i] - mid) / (hi - lo), 0.0, 1.0));
  return level;
}

WindowScan scan_windows(const Image& gray, int n, bool with_level) {
  const std::vector<double> hann = hann_window(n);
  double wsum = 0.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) wsum += hann[y] * hann[x];

  WindowScan scan;
  scan.ys = window_starts(gray.height(), n);
  scan.xs = window_starts(gray.width(), n);
  const std::size_t count = scan.ys.size() * scan.xs.size();
  scan.scores.resize(count);
  if (with_level) scan.levels.resize(count);
  const int bins = n / 2 + 1;
#pragma omp parallel for schedule(dynamic)
  for (int idx = 0; idx < static_cast<int>(count); ++idx) {
    const int y0 = scan.ys[idx / scan.xs.size()];
    const int x0 = scan.xs[idx % scan.xs.size()];
    // Subtract the window-weighted mean so the DC bin is exactly empty.
    double mean = 0.0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) mean += hann[y] * hann[x] * gray.at(y0 + y, x0 + x);
    mean /= wsum;
    std::vector<double> patch(static_cast<std::size_t>(n) * n);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) patch[y * n + x] = hann[y] * hann[x] * (gray.at(y0 + y, x0 + x) - mean);
    std::vector<Complex> spec(static_cast<std::size_t>(n) * bins);
    fft::rfft2(n, n, patch, spec);
    std::vector<double> power(static_cast<std::size_t>(n) * n);
    for (int u = 0; u < n; ++u)
      for (int v = 0; v < n; ++v) {
        const Complex c = v < bins ? spec[u * bins + v] : std::conj(spec[((n - u) % n) * bins + (n - v)]);
        power[u * n + v] = std::norm(c);
      }
    std::vector<char> lattice;
    scan.scores[idx] = lattice_score(power, n, with_level ? &lattice : nullptr);
    if (with_level) {
      scan.levels[idx] = lattice.empty() ? std::vector<float>(static_cast<std::size_t>(n) * n, 0.0f)
                                         : window_level(spec, lattice, hann, n);
    }
  }
  return scan;
}

Image interpolate_scores(const WindowScan& scan, int n, int width, int height) {
  std::vector<double> cy(scan.ys.size());
  std::vector<double> cx(scan.xs.size());
  for (std::size_t i = 0; i < scan.ys.size(); ++i) cy[i] = scan.ys[i] + (n - 1) / 2.0;
  for (std::size_t i = 0; i < scan.xs.size(); ++i) cx[i] = scan.xs[i] + (n - 1) / 2.0;
  Image out(width, height, 1);
  const int ncx = static_cast<int>(scan.xs.size());
  const auto& sc = scan.scores;
  for (int y = 0; y < height; ++y) {
    int iy = 0;
    const double fy = interpolate(cy, y, iy);
    const int iy1 = std::min(iy + 1, static_cast<int>(scan.ys.size()) - 1);
    for (int x = 0; x < width; ++x) {
      int ix = 0;
      const double fx = interpolate(cx, x, ix);
      const int ix1 = std::min(ix + 1, ncx - 1);
      const double v = (1 - fy) * ((1 - fx) * sc[iy * ncx + ix] + fx * sc[iy * ncx + ix1]) +
                       fy * ((1 - fx) * sc[iy1 * ncx + ix] + fx * sc[iy1 * ncx + ix1]);
      out.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace

Image periodicity_score(const Image& gray, int window) {
  check_window_args(gray, window);
  return interpolate_scores(scan_windows(gray, window, false), window, gray.width(), gray.height());
}

PeriodicLayer periodic_layer(const Image& gray, int window) {
  check_window_args(gray, window);
  const int n = window;
  const WindowScan scan = scan_windows(gray, n, true);
  const std::vector<double> hann = hann_window(n);
  const int w = gray.width();
  const int h = gray.height();
  std::vector<double> num(static_cast<std::size_t>(w) * h, 0.0);
  std::vector<double> den(num.size(), 0.0);
  for (std::size_t idx = 0; idx < scan.levels.size(); ++idx) {
    const int y0 = scan.ys[idx / scan.xs.size()];
    const int x0 = scan.xs[idx % scan.xs.size()];
    const double s = scan.scores[idx];
    const auto& lv = scan.levels[idx];
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double wt = hann[y] * hann[x];
        const std::size_t p = static_cast<std::size_t>(y0 + y) * w + x0 + x;
        num[p] += wt * s * lv[y * n + x];
        den[p] += wt * s;
      }
  }
  PeriodicLayer out{interpolate_scores(scan, n, w, h), Image(w, h, 1)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      out.level.at(y, x) = den[p] > 1e-12 ? static_cast<float>(num[p] / den[p]) : 0.0f;
    }
  return out;
}

namespace {

void fill_normal(std::vector<float>& v, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (float& x : v) x = static_cast<float>(dist(rng));
}

FFCWeights random_ffc(int il, int ig, int ol, int og, std::mt19937_64& rng) {
  FFCWeights w = FFCWeights::zeros(il, ig, ol, og);
  const int fan_local = std::max(1, 9 * (il + ig));
  fill_normal(w.l2l, rng, std::sqrt(2.0 / fan_local));
  fill_normal(w.g2l, rng, std::sqrt(2.0 / fan_local));
  fill_normal(w.l2g, rng, std::sqrt(2.0 / std::max(1, il + ig)));
  fill_normal(w.g2g.mix, rng, std::sqrt(1.0 / std::max(1, 2 * ig)));
  fill_normal(w.bias_local, rng, 0.01);
  fill_normal(w.bias_global, rng, 0.01);
  return w;
}

// Flat weight blocks of one parameter set, named for the weights file.
template <typename Fn>
void for_each_block(FreqDPWeights& w, Fn&& fn) {
  auto ffc = [&](const std::string& name, FFCWeights& f) {
    fn(name + ".l2l", f.l2l);
    fn(name + ".g2l", f.g2l);
    fn(name + ".l2g", f.l2g);
    fn(name + ".g2g.mix", f.g2g.mix);
    fn(name + ".g2g.bias", f.g2g.bias);
    fn(name + ".bias_local", f.bias_local);
    fn(name + ".bias_global", f.bias_global);
  };
  for (int i = 0; i < 3; ++i) ffc("encoder" + std::to_string(i), w.encoder[i]);
  for (int i = 0; i < 3; ++i) ffc("decoder" + std::to_string(i), w.decoder[i]);
  for (int i = 0; i < 3; ++i) {
    fn("sam" + std::to_string(i) + ".w", w.sam[i].w);
    fn("sam" + std::to_string(i) + ".b", w.sam[i].b);
  }
  fn("head", w.head);
}

}  // namespace

FreqDPWeights FreqDPWeights::random(std::uint64_t seed, int width, int split) {
  if (width <= 0 || split < 0 || split > width) throw std::invalid_argument("bad network width or split");
  std::mt19937_64 rng(seed);
  FreqDPWeights w;
  w.seed = seed;
  w.width = width;
  w.split = split;
  const int local = width - split;
  w.encoder[0] = random_ffc(3, 0, local, split, rng);
  for (int i = 1; i < 3; ++i) w.encoder[i] = random_ffc(local, split, local, split, rng);
  for (int i = 0; i < 3; ++i) w.decoder[i] = random_ffc(local, split, local, split, rng);
  for (int i = 0; i < 3; ++i) {
    w.sam[i].in_channels = 3;
    w.sam[i].out_channels = width;
    w.sam[i].w.resize(static_cast<std::size_t>(width) * 3);
    w.sam[i].b.resize(width);
    fill_normal(w.sam[i].w, rng, 1.0);
    fill_normal(w.sam[i].b, rng, 0.5);
  }
  w.head.resize(width);
  fill_normal(w.head, rng, std::sqrt(1.0 / width));
  return w;
}

void save_freqdp_weights(const FreqDPWeights& weights, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  FreqDPWeights w = weights;
  nlohmann::ordered_json header;
  header["format"] = "freqdp-weights";
  header["version"] = 1;
  header["seed"] = w.seed;
  header["width"] = w.width;
  header["split"] = w.split;
  header["head_bias"] = w.head_bias;
  nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
  for_each_block(w, [&](const std::string& name, std::vector<float>& v) {
    const std::string file = name + ".pfm";
    blocks.push_back({{"name", name}, {"size", v.size()}, {"file", file}});
    if (!v.empty()) save_pfm(Tensor(1, 1, static_cast<int>(v.size()), v), dir / file);
  });
  header["blocks"] = blocks;
  std::ofstream out(dir / "weights.json");
  if (!out) throw IoError("cannot write " + (dir / "weights.json").string());
  out << header.dump(2) << '\n';
}

FreqDPWeights load_freqdp_weights(const std::filesystem::path& dir) {
  std::ifstream in(dir / "weights.json");
  if (!in) throw IoError("cannot open " + (dir / "weights.json").string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad weights header: ") + e.what());
  }
  if (header.value("format", "") != "freqdp-weights") throw IoError("not a weights directory");
  FreqDPWeights w = FreqDPWeights::random(0, header.at("width").get<int>(), header.at("split").get<int>());
  w.seed = header.at("seed").get<std::uint64_t>();
  w.head_bias = header.at("head_bias").get<float>();
  const auto& blocks = header.at("blocks");
  std::size_t i = 0;
  for_each_block(w, [&](const std::string& name, std::vector<float>& v) {
    if (i >= blocks.size() || blocks[i].at("name").get<std::string>() != name) {
      throw IoError("weights header does not list block " + name);
    }
    const std::size_t size = blocks[i].at("size").get<std::size_t>();
    if (size != v.size()) throw IoError("block " + name + " has the wrong size");
    if (size > 0) {
      const Tensor t = load_pfm_tensor(dir / blocks[i].at("file").get<std::string>());
      if (t.size() != size) throw IoError("payload for " + name + " has the wrong size");
      v = t.data();
    }
    ++i;
  });
  return w;
}

Image freqdp_forward(const Image& combined, const std::array<Tensor, 3>& disp_pyramid,
                     const FreqDPWeights& weights) {
  if (combined.channels() != 3) throw std::invalid_argument("forward pass needs an RGB image");
  const int h = combined.height();
  const int w = combined.width();
  if (h % 8 || w % 8 || h == 0) throw std::invalid_argument("image dims must be multiples of 8");
  for (int s = 0; s < 3; ++s) {
    const Tensor& p = disp_pyramid[s];
    if (p.height() != h >> (s + 1) || p.width() != w >> (s + 1)) {
      throw std::invalid_argument("disparity pyramid does not match the image size");
    }
  }

  Tensor x(3, h, w);
  std::copy(combined.data().begin(), combined.data().end(), x.data().begin());
  FeatureTensor f{avg_pool(x), 0};
  std::array<FeatureTensor, 3> skips;
  for (int s = 0; s < 3; ++s) {
    if (s > 0) f = FeatureTensor{avg_pool(f.data), f.split};
    f = ffc_block(f, weights.encoder[s]);
    skips[s] = f;
  }
  for (int i = 0; i < 3; ++i) {
    const int s = 2 - i;
    if (i > 0) {
      f = FeatureTensor{upsample_nearest(f.data), f.split};
      for (std::size_t k = 0; k < f.data.size(); ++k) f.data.data()[k] += skips[s].data.data()[k];
    }
    f = ffc_block(sam_fuse(f, disp_pyramid[s], weights.sam[s]), weights.decoder[i]);
  }
  const Tensor full = upsample_nearest(f.data);
  Image mask(w, h, 1);
  const std::size_t plane = full.plane_size();
  for (std::size_t p = 0; p < plane; ++p) {
    double z = weights.head_bias;
    for (int c = 0; c < full.channels(); ++c) z += static_cast<double>(weights.head[c]) * full.plane(c)[p];
    mask.data()[p] = static_cast<float>(sigmoid(z));
  }
  return mask;
}

}  // namespace dpfence
