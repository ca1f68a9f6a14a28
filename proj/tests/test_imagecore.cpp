#include <doctest.h>

#include <bit>
#include <cstdint>
#include <fstream>

#include "dpfence/io.hpp"
#include "test_util.hpp"

using namespace dpfence;
using dpfence::testing::TempDir;

TEST_CASE("png round trip of a constant image is within one 16-bit step") {
  TempDir dir;
  Image img(2, 2, 1, 0.5f);
  save_png(img, dir / "c.png");
  const Image back = load_png(dir / "c.png");
  REQUIRE(back.same_shape(img));
  CHECK(dpfence::testing::max_abs_diff(img, back) <= 1.0 / 65535.0);
}

TEST_CASE("png round trip keeps zero exactly") {
  TempDir dir;
  Image img(1, 1, 1, 0.0f);
  save_png(img, dir / "z.png");
  CHECK(load_png(dir / "z.png").at(0, 0) == 0.0f);
}

TEST_CASE("png 16-bit ramp keeps rows monotone") {
  TempDir dir;
  Image img(300, 3, 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 300; ++x) img.at(c, y, x) = x / 299.0f;
  save_png(img, dir / "ramp.png");
  const Image back = load_png(dir / "ramp.png");
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 3; ++y)
      for (int x = 1; x < 300; ++x) CHECK(back.at(c, y, x) >= back.at(c, y, x - 1));
  CHECK(dpfence::testing::max_abs_diff(img, back) <= 1.0 / 65535.0);
}

TEST_CASE("png 8-bit output quantizes to 1/255") {
  TempDir dir;
  const Image img = dpfence::testing::random_image(7, 5, 3, 3);
  save_png(img, dir / "e.png", PngDepth::k8);
  CHECK(dpfence::testing::max_abs_diff(img, load_png(dir / "e.png")) <= 0.5 / 255.0 + 1e-7);
}

TEST_CASE("png errors") {
  TempDir dir;
  CHECK_THROWS_AS(load_png(dir / "missing.png"), IoError);
  {
    std::ofstream out(dir / "junk.png");
    out << "not a png at all";
  }
  CHECK_THROWS_AS(load_png(dir / "junk.png"), IoError);
  CHECK_THROWS_AS(save_png(Image(), dir / "empty.png"), IoError);
}

TEST_CASE("pfm round trip is bit exact") {
  TempDir dir;
  Image img = dpfence::testing::random_image(8, 8, 1, 11);
  img.at(3, 4) = 1e-30f;
  save_pfm(img, dir / "r.pfm");
  const Image back = load_pfm(dir / "r.pfm");
  REQUIRE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) {
    CHECK(std::bit_cast<std::uint32_t>(back.data()[i]) == std::bit_cast<std::uint32_t>(img.data()[i]));
  }
  const Image rgb = dpfence::testing::random_image(5, 3, 3, 12);
  save_pfm(rgb, dir / "rgb.pfm");
  CHECK(load_pfm(dir / "rgb.pfm") == rgb);
}

TEST_CASE("pfm tensors allow values outside [0,1]") {
  TempDir dir;
  Tensor t(1, 2, 3);
  t.at(0, 1, 2) = -7.25f;
  save_pfm(t, dir / "t.pfm");
  CHECK(load_pfm_tensor(dir / "t.pfm") == t);
  CHECK_THROWS_AS(load_pfm(dir / "t.pfm"), std::invalid_argument);
}

TEST_CASE("pfm big-endian payloads are read") {
  TempDir dir;
  {
    std::ofstream out(dir / "be.pfm", std::ios::binary);
    out << "Pf\n2 1\n1.0\n";
    for (float v : {0.25f, 0.75f}) {
      const std::uint32_t b = __builtin_bswap32(std::bit_cast<std::uint32_t>(v));
      out.write(reinterpret_cast<const char*>(&b), 4);
    }
  }
  const Image img = load_pfm(dir / "be.pfm");
  CHECK(img.at(0, 0) == 0.25f);
  CHECK(img.at(0, 1) == 0.75f);
}

TEST_CASE("pfm header errors") {
  TempDir dir;
  {
    // Declared single channel, carries three channels' worth of floats.
    std::ofstream out(dir / "mismatch.pfm", std::ios::binary);
    out << "Pf\n2 2\n-1.0\n";
    const float zeros[12] = {};
    out.write(reinterpret_cast<const char*>(zeros), sizeof(zeros));
  }
  CHECK_THROWS_AS(load_pfm(dir / "mismatch.pfm"), IoError);
  {
    std::ofstream out(dir / "trunc.pfm", std::ios::binary);
    out << "PF\n4 4\n-1.0\n";
    const float some[5] = {};
    out.write(reinterpret_cast<const char*>(some), sizeof(some));
  }
  CHECK_THROWS_AS(load_pfm(dir / "trunc.pfm"), IoError);
  {
    std::ofstream out(dir / "bad.pfm", std::ios::binary);
    out << "P6\n4 4\n255\n";
  }
  CHECK_THROWS_AS(load_pfm(dir / "bad.pfm"), IoError);
  CHECK_THROWS_AS(save_pfm(Tensor(2, 2, 2), dir / "two.pfm"), IoError);
}

TEST_CASE("green channel") {
  Image px(1, 1, 3);
  px.at(0, 0, 0) = 0.1f;
  px.at(1, 0, 0) = 0.7f;
  px.at(2, 0, 0) = 0.3f;
  CHECK(green_channel(px).at(0, 0) == 0.7f);

  Image green(4, 3, 3);
  for (float& v : green.plane(1)) v = 1.0f;
  const Image g = green_channel(green);
  for (float v : g.data()) CHECK(v == 1.0f);

  const Image gray = dpfence::testing::random_image(6, 4, 1, 5);
  CHECK(green_channel(replicate_to_rgb(gray)) == gray);
  CHECK_THROWS_AS(green_channel(gray), std::invalid_argument);
}

TEST_CASE("image contracts") {
  CHECK_THROWS_AS(Image(0, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(Image(2, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(Image::from_data(1, 1, 1, {1.5f}), std::invalid_argument);
  Tensor t(1, 1, 2);
  t.at(0, 0, 0) = -1.0f;
  t.at(0, 0, 1) = 3.0f;
  const Image c = Image::clamped_from(t);
  CHECK(c.at(0, 0) == 0.0f);
  CHECK(c.at(0, 1) == 1.0f);
  t.at(0, 0, 0) = std::nanf("");
  CHECK_THROWS_AS(Image::clamped_from(t), std::domain_error);

  DPFrame f{Image(4, 4, 1), Image(4, 4, 1), Image(4, 5, 3)};
  CHECK_THROWS_AS(f.validate(), std::invalid_argument);
}

TEST_CASE("reflect index mirrors without repeating the edge") {
  CHECK(reflect_index(-1, 5) == 1);
  CHECK(reflect_index(-2, 5) == 2);
  CHECK(reflect_index(5, 5) == 3);
  CHECK(reflect_index(6, 5) == 2);
  CHECK(reflect_index(13, 5) == 3);
  CHECK(reflect_index(-3, 1) == 0);
}

TEST_CASE("frame directories round trip and honour vertical disparity") {
  TempDir dir;
  const Image rgb = dpfence::testing::random_image(6, 4, 3, 9);
  DPFrame f{green_channel(rgb), extract_channel(rgb, 0), rgb};
  save_frame(f, dir / "h");
  const DPFrame h = load_frame(dir / "h");
  CHECK(dpfence::testing::max_abs_diff(h.combined, rgb) <= 1.0 / 65535.0);

  save_frame(f, dir / "v", DisparityAxis::kVertical);
  CHECK(load_png(dir / "v" / "left.png").width() == 4);
  DisparityAxis axis{};
  const DPFrame v = load_frame(dir / "v", &axis);
  CHECK(axis == DisparityAxis::kVertical);
  CHECK(v.width() == 6);
  CHECK(dpfence::testing::max_abs_diff(v.left, f.left) <= 1.0 / 65535.0);
}
