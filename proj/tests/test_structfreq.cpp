#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dpfence/parallel.hpp"
#include "dpfence/structfreq.hpp"
#include "test_util.hpp"

using namespace dpfence;

namespace {

Tensor random_tensor(int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Tensor t(c, h, w);
  for (float& v : t.data()) v = n(rng);
  return t;
}

double rel_error(const Tensor& got, const Tensor& want) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += std::pow(double(got.data()[i]) - want.data()[i], 2);
    den += std::pow(double(want.data()[i]), 2);
  }
  return std::sqrt(num / std::max(den, 1e-30));
}

Tensor circular_conv(const Tensor& x, const std::vector<float>& k, int ks) {
  const int r = ks / 2;
  const int h = x.height();
  const int w = x.width();
  Tensor out(x.channels(), h, w);
  for (int c = 0; c < x.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx)
            s += k[(dy + r) * ks + dx + r] * double(x.at(c, ((y - dy) % h + h) % h, ((xx - dx) % w + w) % w));
        out.at(c, y, xx) = static_cast<float>(s);
      }
  return out;
}

Image grating(int w, int h, double period, double angle) {
  Image img(w, h, 1);
  const double kx = std::cos(angle) / period;
  const double ky = std::sin(angle) / period;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(y, x) = static_cast<float>(0.5 + 0.4 * std::sin(2 * std::numbers::pi * (kx * x + ky * y)));
  return img;
}

std::array<Tensor, 3> random_pyramid(int h, int w, std::uint64_t seed) {
  return {random_tensor(3, h / 2, w / 2, seed), random_tensor(3, h / 4, w / 4, seed + 1),
          random_tensor(3, h / 8, w / 8, seed + 2)};
}

}  // namespace

TEST_CASE("spectral transform with identity mixing returns the input") {
  const FeatureTensor x{random_tensor(3, 12, 16, 1), 3};
  const FeatureTensor y = spectral_transform(x, SpectralWeights::identity(3));
  CHECK(rel_error(y.data, x.data) < 1e-5);
  double ex = 0.0;
  double ey = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    ex += double(x.data.data()[i]) * x.data.data()[i];
    ey += double(y.data.data()[i]) * y.data.data()[i];
  }
  CHECK(std::abs(ey - ex) / ex < 1e-5);
}

TEST_CASE("spectral transform with zero weights is zero") {
  const FeatureTensor x{random_tensor(2, 8, 8, 2), 2};
  const FeatureTensor y = spectral_transform(x, SpectralWeights::zeros(2, 2));
  for (float v : y.data.data()) CHECK(v == 0.0f);
}

TEST_CASE("per-frequency kernel weights equal circular convolution") {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> k(9);
  for (float& v : k) v = n(rng);
  const SpectralWeights w = SpectralWeights::from_kernel(2, 16, 16, k, 3);
  for (int trial = 0; trial < 5; ++trial) {
    const FeatureTensor x{random_tensor(2, 16, 16, 100 + trial), 2};
    CHECK(rel_error(spectral_transform(x, w).data, circular_conv(x.data, k, 3)) < 1e-5);
  }
}

TEST_CASE("spectral transform is linear") {
  SpectralWeights w = SpectralWeights::zeros(3, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (float& v : w.mix) v = n(rng);
  const Tensor a = random_tensor(3, 10, 12, 5);
  const Tensor b = random_tensor(3, 10, 12, 6);
  Tensor mix(3, 10, 12);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data()[i] = 2.0f * a.data()[i] - 0.5f * b.data()[i];
  const Tensor ta = spectral_transform({a, 3}, w).data;
  const Tensor tb = spectral_transform({b, 3}, w).data;
  Tensor expect(3, 10, 12);
  for (std::size_t i = 0; i < mix.size(); ++i) expect.data()[i] = 2.0f * ta.data()[i] - 0.5f * tb.data()[i];
  CHECK(rel_error(spectral_transform({mix, 3}, w).data, expect) < 1e-5);
}

TEST_CASE("spectral transform errors") {
  FeatureTensor x{random_tensor(2, 8, 8, 7), 1};
  CHECK_THROWS_AS(spectral_transform(x, SpectralWeights::identity(2)), std::invalid_argument);
  x.split = 2;
  x.data.at(0, 0, 0) = std::nanf("");
  CHECK_THROWS_AS(spectral_transform(x, SpectralWeights::identity(2)), std::invalid_argument);
  const FeatureTensor y{random_tensor(2, 8, 8, 8), 2};
  CHECK_THROWS_AS(spectral_transform(y, SpectralWeights::from_kernel(2, 16, 16, std::vector<float>(9, 0.1f), 3)),
                  std::invalid_argument);
}

TEST_CASE("ffc block with only the spectral path is spectral transform plus ReLU") {
  FFCWeights w = FFCWeights::zeros(0, 3, 0, 3);
  w.g2g = SpectralWeights::identity(3);
  const FeatureTensor x{random_tensor(3, 8, 12, 9), 3};
  const FeatureTensor y = ffc_block(x, w);
  CHECK(y.split == 3);
  const FeatureTensor t = spectral_transform(x, w.g2g);
  for (std::size_t i = 0; i < y.data.size(); ++i)
    CHECK(y.data.data()[i] == doctest::Approx(std::max(0.0f, t.data.data()[i])).epsilon(1e-6));
}

TEST_CASE("ffc block with split 0 is a plain 3x3 convolution") {
  FFCWeights w = FFCWeights::zeros(1, 0, 1, 0);
  w.l2l = {0, 0, 0, 0, 1, 0, 0, 0, 0};
  w.bias_local = {0.25f};
  const FeatureTensor x{random_tensor(1, 6, 7, 10), 0};
  const FeatureTensor y = ffc_block(x, w);
  for (std::size_t i = 0; i < y.data.size(); ++i)
    CHECK(y.data.data()[i] == doctest::Approx(std::max(0.0f, x.data.data()[i] + 0.25f)));
  // shifted tap reads the right neighbour with a mirror at the border
  w.l2l = {0, 0, 0, 0, 0, 1, 0, 0, 0};
  w.bias_local = {10.0f};
  const FeatureTensor z = ffc_block(x, w);
  CHECK(z.data.at(0, 2, 3) == doctest::Approx(x.data.at(0, 2, 4) + 10.0f));
  CHECK(z.data.at(0, 2, 6) == doctest::Approx(x.data.at(0, 2, 5) + 10.0f));
}

TEST_CASE("ffc block with zero weights is zero") {
  const FeatureTensor x{random_tensor(6, 8, 8, 11), 3};
  const FeatureTensor y = ffc_block(x, FFCWeights::zeros(3, 3, 2, 4));
  CHECK(y.channels() == 6);
  CHECK(y.split == 4);
  for (float v : y.data.data()) CHECK(v == 0.0f);
}

TEST_CASE("ffc block rejects a mismatched split") {
  const FeatureTensor x{random_tensor(6, 8, 8, 12), 2};
  CHECK_THROWS_AS(ffc_block(x, FFCWeights::zeros(3, 3, 3, 3)), std::invalid_argument);
}

TEST_CASE("attention gate") {
  const FeatureTensor f{random_tensor(2, 4, 5, 13), 1};
  const Tensor d = random_tensor(3, 4, 5, 14);
  SAMWeights w{3, 2, std::vector<float>(6, 0.0f), std::vector<float>(2, 0.0f)};
  const FeatureTensor half = sam_fuse(f, d, w);
  for (std::size_t i = 0; i < f.data.size(); ++i) CHECK(half.data.data()[i] == 0.5f * f.data.data()[i]);
  w.b = {20.0f, 20.0f};
  const FeatureTensor open = sam_fuse(f, d, w);
  for (std::size_t i = 0; i < f.data.size(); ++i) CHECK(std::abs(open.data.data()[i] - f.data.data()[i]) < 1e-6);

  SAMWeights scalar{1, 1, {2.0f}, {-1.0f}};
  const FeatureTensor one{Tensor(1, 1, 1, 0.8f), 0};
  CHECK(sam_fuse(one, Tensor(1, 1, 1, 0.5f), scalar).data.at(0, 0, 0) == doctest::Approx(0.4));

  SAMWeights rnd{3, 2, {}, {}};
  rnd.w = {1.5f, -2.0f, 0.3f, 4.0f, 0.0f, -1.0f};
  rnd.b = {0.2f, -0.7f};
  const FeatureTensor g = sam_fuse(f, d, rnd);
  for (std::size_t i = 0; i < f.data.size(); ++i) CHECK(std::abs(g.data.data()[i]) <= std::abs(f.data.data()[i]));
  CHECK_THROWS_AS(sam_fuse(f, random_tensor(3, 4, 6, 1), rnd), std::invalid_argument);
}

TEST_CASE("periodicity of a constant image is zero") {
  const Image flat(96, 80, 1, 0.6f);
  const Image s = periodicity_score(flat, 32);
  for (float v : s.data()) CHECK(v == 0.0f);
}

TEST_CASE("periodicity of a grating is high everywhere") {
  for (double angle : {0.0, 0.4, 1.1, std::numbers::pi / 2}) {
    const Image s = periodicity_score(grating(160, 128, 7.3, angle), 64);
    float lo = 1.0f;
    for (float v : s.data()) lo = std::min(lo, v);
    CAPTURE(angle);
    CHECK(lo > 0.8f);
  }
}

TEST_CASE("periodicity of white noise is low (calibrated over 100 draws)") {
  std::vector<double> means;
  for (int draw = 0; draw < 100; ++draw) {
    const Image noise = dpfence::testing::random_image(128, 128, 1, 1000 + draw);
    const Image s = periodicity_score(noise, 64);
    double m = 0.0;
    for (float v : s.data()) m += v;
    means.push_back(m / s.size());
  }
  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= means.size();
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  const double sd = std::sqrt(var / (means.size() - 1));
  MESSAGE("noise periodicity mean ", mean, " sd ", sd);
  CHECK(mean + 3 * sd < 0.2);
}

TEST_CASE("periodicity of a wire lattice is high") {
  Image fence(128, 128, 1, 0.2f);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      if (x % 11 < 2 || y % 13 < 2) fence.at(y, x) = 0.9f;
  const Image s = periodicity_score(fence, 64);
  double m = 0.0;
  for (float v : s.data()) m += v;
  MESSAGE("lattice periodicity mean ", m / s.size());
  CHECK(m / s.size() > 0.6);
}

TEST_CASE("periodic layer picks out the wires for either polarity") {
  for (const bool bright_wires : {true, false}) {
    Image fence(256, 256, 1);
    MaskImage wires(256, 256, 1);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> jitter(-0.08f, 0.08f);
    for (int y = 0; y < 256; ++y)
      for (int x = 0; x < 256; ++x) {
        const bool on = x % 32 < 8 || y % 32 < 8;
        wires.at(y, x) = on ? 1.0f : 0.0f;
        const float back = 0.5f + jitter(rng);
        fence.at(y, x) = on ? (bright_wires ? 0.9f : 0.1f) : back;
      }
    const PeriodicLayer layer = periodic_layer(fence, 64);
    CHECK(layer.score == periodicity_score(fence, 64));
    int agree = 0;
    for (std::size_t i = 0; i < wires.size(); ++i)
      agree += (layer.level.data()[i] >= 0.5f) == (wires.data()[i] >= 0.5f);
    CAPTURE(bright_wires);
    CHECK(agree > 0.9 * wires.size());
  }
}

TEST_CASE("periodic layer of a constant image is zero") {
  const PeriodicLayer layer = periodic_layer(Image(64, 64, 1, 0.3f), 32);
  for (float v : layer.level.data()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(periodic_layer(Image(64, 64, 1), 128), std::invalid_argument);
}

TEST_CASE("periodicity argument checks") {
  CHECK_THROWS_AS(periodicity_score(Image(64, 64, 1), 48), std::invalid_argument);
  CHECK_THROWS_AS(periodicity_score(Image(64, 32, 1), 64), std::invalid_argument);
}

TEST_CASE("toy forward pass shape, range and determinism") {
  const Image img = dpfence::testing::random_image(64, 48, 3, 21);
  const auto pyr = random_pyramid(48, 64, 22);
  const FreqDPWeights w = FreqDPWeights::random(5);
  const Image a = freqdp_forward(img, pyr, w);
  CHECK(a.width() == 64);
  CHECK(a.height() == 48);
  CHECK(a.channels() == 1);
  for (float v : a.data()) CHECK((v >= 0.0f && v <= 1.0f));
  const Image b = freqdp_forward(img, pyr, FreqDPWeights::random(5));
  CHECK(a.data() == b.data());
  set_thread_count(1);
  const Image c = freqdp_forward(img, pyr, w);
  set_thread_count(0);
  CHECK(a.data() == c.data());
}

TEST_CASE("toy forward pass depends on the disparity features") {
  const Image img = dpfence::testing::random_image(64, 64, 3, 23);
  const auto pyr = random_pyramid(64, 64, 24);
  const FreqDPWeights w = FreqDPWeights::random(6);
  const std::array<Tensor, 3> zero = {Tensor(3, 32, 32), Tensor(3, 16, 16), Tensor(3, 8, 8)};
  const Image a = freqdp_forward(img, pyr, w);
  const Image b = freqdp_forward(img, zero, w);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a.data()[i] - b.data()[i]);
  CHECK(diff / a.size() > 0.0);
  CHECK_THROWS_AS(freqdp_forward(dpfence::testing::random_image(60, 64, 3, 1), pyr, w), std::invalid_argument);
}

TEST_CASE("weights file round trip") {
  dpfence::testing::TempDir dir("freqdp");
  FreqDPWeights w = FreqDPWeights::random(9);
  w.head_bias = 0.125f;
  save_freqdp_weights(w, dir.path());
  const FreqDPWeights r = load_freqdp_weights(dir.path());
  CHECK(r.seed == 9);
  CHECK(r.head_bias == 0.125f);
  CHECK(r.encoder[1].l2l == w.encoder[1].l2l);
  CHECK(r.decoder[2].g2g.mix == w.decoder[2].g2g.mix);
  CHECK(r.sam[0].w == w.sam[0].w);
  const Image img = dpfence::testing::random_image(32, 32, 3, 3);
  const auto pyr = random_pyramid(32, 32, 4);
  CHECK(freqdp_forward(img, pyr, w).data() == freqdp_forward(img, pyr, r).data());
}
