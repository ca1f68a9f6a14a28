#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <json.hpp>

#include "dpfence/evalkit.hpp"
#include "dpfence/io.hpp"
#include "dpfence/synthpipe.hpp"
#include "test_util.hpp"

using namespace dpfence;
using dpfence::testing::random_image;
using dpfence::testing::TempDir;

namespace {

// Literal sliding-window SSIM with a 2D Gaussian window.
double naive_ssim(const Image& a, const Image& b) {
  double g[11];
  double gs = 0.0;
  for (int i = 0; i < 11; ++i) gs += g[i] = std::exp(-(i - 5.0) * (i - 5.0) / (2 * 1.5 * 1.5));
  const double c1 = 1e-4;
  const double c2 = 9e-4;
  double total = 0.0;
  int count = 0;
  for (int c = 0; c < a.channels(); ++c)
    for (int y = 0; y + 11 <= a.height(); ++y)
      for (int x = 0; x + 11 <= a.width(); ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int j = 0; j < 11; ++j)
          for (int i = 0; i < 11; ++i) {
            const double w = g[j] * g[i] / (gs * gs);
            const double va = a.at(c, y + j, x + i);
            const double vb = b.at(c, y + j, x + i);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        const double num = (2 * ma * mb + c1) * (2 * (sab - ma * mb) + c2);
        const double den = (ma * ma + mb * mb + c1) * ((saa - ma * ma) + (sbb - mb * mb) + c2);
        total += num / den;
        ++count;
      }
  return total / count;
}

MaskImage half_columns(const MaskImage& m) {
  MaskImage out(m.width(), m.height(), 1);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width() / 2; ++x) out.at(y, x) = m.at(y, x);
  return out;
}

Image add_noise(const Image& img, double amp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Image out = img;
  for (auto& v : out.data()) v = static_cast<float>(v + amp * u(rng));
  return out;
}

// Empirical CDFs compared on a fine grid.
double ks_distance(std::span<const float> a, std::span<const float> b) {
  std::vector<float> sa(a.begin(), a.end());
  std::vector<float> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double worst = 0.0;
  for (int k = 0; k <= 4096; ++k) {
    const float t = k / 4096.0f;
    const double fa = static_cast<double>(std::upper_bound(sa.begin(), sa.end(), t) - sa.begin()) / sa.size();
    const double fb = static_cast<double>(std::upper_bound(sb.begin(), sb.end(), t) - sb.begin()) / sb.size();
    worst = std::max(worst, std::abs(fa - fb));
  }
  return worst;
}

}  // namespace

TEST_CASE("precision/recall/F1 closed forms") {
  MaskImage gt(20, 10, 1);
  for (int y = 2; y < 8; ++y)
    for (int x = 0; x < 20; ++x) gt.at(y, x) = 1.0f;
  const SegMetrics same = precision_recall_f1(gt, gt);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  CHECK(same.f1 == 1.0);

  const SegMetrics half = precision_recall_f1(half_columns(gt), gt);
  CHECK(half.precision == 1.0);
  CHECK(half.recall == 0.5);
  CHECK(half.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(half.tp == 60);
  CHECK(half.fn == 60);
  CHECK(half.fp == 0);

  const SegMetrics none = precision_recall_f1(MaskImage(20, 10, 1), gt);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(none.precision_undefined);
  CHECK_FALSE(none.recall_undefined);

  CHECK_THROWS_AS(precision_recall_f1(MaskImage(20, 11, 1), gt), std::invalid_argument);
}

TEST_CASE("F1 is the harmonic mean of precision and recall") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const MaskImage p = threshold_mask(random_image(30, 30, 1, s), 0.6f);
    const MaskImage g = threshold_mask(random_image(30, 30, 1, 100 + s), 0.4f);
    const SegMetrics m = precision_recall_f1(p, g);
    CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)).epsilon(1e-12));
  }
}

TEST_CASE("PSNR closed forms, symmetry and monotonicity") {
  CHECK(psnr(Image(16, 16, 3, 0.3f), Image(16, 16, 3, 0.4f)) == doctest::Approx(20.0).epsilon(1e-5));
  const Image a = random_image(32, 24, 3, 1);
  CHECK(psnr(a, a) == kPsnrCap);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Image b = random_image(32, 24, 3, 10 + s);
    CHECK(psnr(a, b) == psnr(b, a));
  }
  const Image base(64, 64, 3, 0.5f);
  double prev = 1e9;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    const double p = psnr(base, add_noise(base, amp, 3));
    CHECK(p < prev);
    prev = p;
  }
  CHECK_THROWS_AS(psnr(a, random_image(32, 24, 1, 1)), std::invalid_argument);
}

TEST_CASE("masked PSNR only sees masked pixels") {
  Image a(10, 10, 3, 0.5f);
  Image b = a;
  MaskImage m(10, 10, 1);
  m.at(3, 3) = 1.0f;
  for (int c = 0; c < 3; ++c) b.at(c, 3, 3) = 0.6f;
  b.at(0, 7, 7) = 0.0f;  // outside the mask
  CHECK(*masked_psnr(a, b, m) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK_FALSE(masked_psnr(a, b, MaskImage(10, 10, 1)).has_value());
}

TEST_CASE("SSIM: identity, constants, symmetry and the naive reference") {
  const Image a = random_image(40, 30, 3, 5);
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-9);
  const double c1 = 1e-4;
  CHECK(ssim(Image(16, 16, 1, 0.0f), Image(16, 16, 1, 1.0f)) == doctest::Approx(c1 / (1 + c1)).epsilon(1e-9));
  const Image b = random_image(40, 30, 3, 6);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);
  const Image x = random_image(16, 16, 1, 7);
  const Image y = add_noise(x, 0.1, 8);
  CHECK(std::abs(ssim(x, y) - naive_ssim(x, y)) < 1e-7);
  const Image xr = random_image(23, 17, 3, 9);
  const Image yr = random_image(23, 17, 3, 10);
  CHECK(std::abs(ssim(xr, yr) - naive_ssim(xr, yr)) < 1e-7);
  CHECK_THROWS_AS(ssim(Image(10, 16, 1), Image(10, 16, 1)), std::invalid_argument);
}

TEST_CASE("histogram matching: identity, ramp target and monotonicity") {
  Image ramp(256, 64, 1);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 256; ++x) ramp.at(y, x) = static_cast<float>((y * 256 + x) / (256.0 * 64 - 1));
  const Image same = histogram_match(ramp, ramp);
  double worst = 0.0;
  for (std::size_t i = 0; i < ramp.size(); ++i) worst = std::max(worst, std::abs(double(same.data()[i]) - ramp.data()[i]));
  CHECK(worst <= 1.0 / kHistogramBins);
  // Idempotent within the binning tolerance.
  const Image twice = histogram_match(same, ramp);
  for (std::size_t i = 0; i < ramp.size(); ++i) REQUIRE(std::abs(twice.data()[i] - same.data()[i]) <= 1.0 / kHistogramBins);

  Image half = ramp;
  for (auto& v : half.data()) v *= 0.5f;
  const Image out = histogram_match(ramp, half);
  CHECK(ks_distance(out.plane(0), half.plane(0)) < 0.01);
  CHECK(out.in_range());

  const Image noisy = random_image(50, 40, 3, 12);
  const Image target = add_noise(Image(50, 40, 3, 0.3f), 0.2, 13);
  const Image m = histogram_match(noisy, target);
  for (int c = 0; c < 3; ++c) {
    std::vector<std::size_t> idx(noisy.plane_size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto src = noisy.plane(c);
    const auto dst = m.plane(c);
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return src[i] < src[j]; });
    for (std::size_t k = 1; k < idx.size(); ++k) REQUIRE(dst[idx[k]] >= dst[idx[k - 1]]);
  }
  CHECK_THROWS_AS(histogram_match(noisy, ramp), std::invalid_argument);
}

TEST_CASE("evaluate_dataset: perfect predictions, means and missing ids") {
  SynthConfig cfg;
  cfg.base_seed = 21;
  std::vector<NamedFrame> frames;
  for (int i = 0; i < 2; ++i) frames.push_back({"bg" + std::to_string(i), make_clean_scene(96, 80, 300 + i)});
  const std::vector<FenceAsset> assets{make_fence_asset(96, 80, 4)};
  DatasetOptions opts;
  opts.n_samples = 3;
  TempDir data("eval_data");
  TempDir pred("eval_pred");
  const auto manifest = nlohmann::json::parse(generate_dataset(frames, assets, cfg, opts, data.path()));
  std::vector<std::string> ids;
  for (const auto& r : manifest["records"]) {
    const std::string id = r["id"];
    ids.push_back(id);
    std::filesystem::create_directories(pred / id);
    std::filesystem::copy_file(data.path() / r["mask"].get<std::string>(), pred / id / "mask.png");
    std::filesystem::copy_file(data.path() / r["clean"].get<std::string>() / "combined.png",
                               pred / id / "restored.png");
  }
  const auto path = data.path() / "manifest.json";
  EvalReport rep = evaluate_dataset(path, pred.path());
  REQUIRE(rep.ok());
  REQUIRE(rep.samples.size() == 3);
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(rep.samples[i].id == ids[i]);
  CHECK(rep.mean_seg.precision == 1.0);
  CHECK(rep.mean_seg.recall == 1.0);
  CHECK(rep.mean_seg.f1 == 1.0);
  CHECK(rep.mean_psnr == kPsnrCap);
  CHECK(std::abs(rep.mean_ssim - 1.0) < 1e-9);
  CHECK(rep.mean_psnr_input < 40.0);

  // Degrade one prediction; the means are plain averages of the rows.
  const MaskImage gt = load_png(pred / ids[1] / "mask.png");
  save_png(half_columns(gt), pred / ids[1] / "mask.png", PngDepth::k8);
  save_png(add_noise(load_png(pred / ids[1] / "restored.png"), 0.05, 1), pred / ids[1] / "restored.png");
  rep = evaluate_dataset(path, pred.path());
  REQUIRE(rep.ok());
  double f = 0, r = 0, q = 0, s2 = 0;
  for (const auto& e : rep.samples) {
    f += e.seg.f1;
    r += e.seg.recall;
    q += e.psnr;
    s2 += e.ssim;
  }
  CHECK(rep.samples[1].seg.f1 < 1.0);
  CHECK(rep.mean_seg.f1 == doctest::Approx(f / 3).epsilon(1e-12));
  CHECK(rep.mean_seg.recall == doctest::Approx(r / 3).epsilon(1e-12));
  CHECK(rep.mean_psnr == doctest::Approx(q / 3).epsilon(1e-12));
  CHECK(rep.mean_ssim == doctest::Approx(s2 / 3).epsilon(1e-12));
  const auto j = nlohmann::json::parse(rep.to_json());
  CHECK(j["schema_version"] == 1);
  CHECK(j["samples"].size() == 3);
  CHECK(rep.to_table().find("mean") != std::string::npos);

  std::filesystem::remove(pred / ids[2] / "restored.png");
  rep = evaluate_dataset(path, pred.path());
  CHECK_FALSE(rep.ok());
  REQUIRE(rep.errors.size() == 1);
  CHECK(rep.errors[0].find(ids[2]) != std::string::npos);
  CHECK(rep.samples.size() == 2);
  CHECK_THROWS_AS(evaluate_dataset(data.path() / "nope.json", pred.path()), IoError);
}
