#include "dpfence/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dpfence {

namespace {

void check_dims(int channels, int height, int width) {
  if (channels <= 0 || height <= 0 || width <= 0) {
    throw std::invalid_argument("tensor dimensions must be positive, got " +
                                std::to_string(channels) + "x" + std::to_string(height) + "x" +
                                std::to_string(width));
  }
}

void check_image_channels(int channels) {
  if (channels != 1 && channels != 3) {
    throw std::invalid_argument("image must have 1 or 3 channels, got " + std::to_string(channels));
  }
}

}  // namespace

Tensor::Tensor(int channels, int height, int width, float fill)
    : channels_(channels), height_(height), width_(width) {
  check_dims(channels, height, width);
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Tensor::Tensor(int channels, int height, int width, std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  check_dims(channels, height, width);
  if (data_.size() != static_cast<std::size_t>(channels) * height * width) {
    throw std::invalid_argument("tensor data length does not match its shape");
  }
}

std::span<const float> Tensor::plane(int c) const {
  return std::span<const float>(data_).subspan(c * plane_size(), plane_size());
}

std::span<float> Tensor::plane(int c) {
  return std::span<float>(data_).subspan(c * plane_size(), plane_size());
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Image::Image(int width, int height, int channels, float fill) {
  check_image_channels(channels);
  if (!(fill >= 0.0f && fill <= 1.0f)) throw std::invalid_argument("image fill outside [0,1]");
  pixels_ = Tensor(channels, height, width, fill);
}

Image Image::from_data(int width, int height, int channels, std::vector<float> data) {
  check_image_channels(channels);
  Image img;
  img.pixels_ = Tensor(channels, height, width, std::move(data));
  if (!img.in_range()) throw std::invalid_argument("image samples must lie in [0,1]");
  return img;
}

Image Image::from_tensor(const Tensor& t) {
  return from_data(t.width(), t.height(), t.channels(), t.data());
}

Image Image::clamped_from(const Tensor& t) {
  check_image_channels(t.channels());
  Image img;
  img.pixels_ = t;
  img.clamp01();
  return img;
}

bool Image::in_range() const {
  return std::all_of(data().begin(), data().end(),
                     [](float v) { return v >= 0.0f && v <= 1.0f; });
}

void Image::clamp01() {
  for (float& v : pixels_.data()) {
    if (std::isnan(v)) throw std::domain_error("NaN sample in image");
    v = std::clamp(v, 0.0f, 1.0f);
  }
}

bool is_binary(const MaskImage& mask) {
  return std::all_of(mask.data().begin(), mask.data().end(),
                     [](float v) { return v == 0.0f || v == 1.0f; });
}

MaskImage threshold_mask(const MaskImage& soft, float threshold) {
  if (soft.channels() != 1) throw std::invalid_argument("mask must be single-channel");
  MaskImage out(soft.width(), soft.height(), 1);
  std::transform(soft.data().begin(), soft.data().end(), out.data().begin(),
                 [threshold](float v) { return v >= threshold ? 1.0f : 0.0f; });
  return out;
}

double mask_coverage(const MaskImage& mask) {
  if (mask.empty()) return 0.0;
  double s = 0.0;
  for (float v : mask.data()) s += v;
  return s / static_cast<double>(mask.size());
}

void DPFrame::validate() const {
  if (left.channels() != 1 || right.channels() != 1) {
    throw std::invalid_argument("dual-pixel views must be single-channel");
  }
  if (combined.channels() != 3) throw std::invalid_argument("combined image must be RGB");
  if (!left.same_dims(right) || !left.same_dims(combined)) {
    throw std::invalid_argument("dual-pixel frame members differ in size");
  }
}

Image green_channel(const Image& rgb) {
  if (rgb.channels() != 3) throw std::invalid_argument("green_channel needs a 3-channel image");
  return extract_channel(rgb, 1);
}

Image extract_channel(const Image& img, int c) {
  if (c < 0 || c >= img.channels()) throw std::out_of_range("channel index out of range");
  Image out(img.width(), img.height(), 1);
  std::copy(img.plane(c).begin(), img.plane(c).end(), out.data().begin());
  return out;
}

Image replicate_to_rgb(const Image& gray) {
  if (gray.channels() != 1) throw std::invalid_argument("replicate_to_rgb needs 1 channel");
  Image out(gray.width(), gray.height(), 3);
  for (int c = 0; c < 3; ++c) std::copy(gray.data().begin(), gray.data().end(), out.plane(c).begin());
  return out;
}

Image crop(const Image& img, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || width <= 0 || height <= 0 || x0 + width > img.width() ||
      y0 + height > img.height()) {
    throw std::out_of_range("crop window outside image");
  }
  Image out(width, height, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

Image transpose(const Image& img) {
  Image out(img.height(), img.width(), img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) out.at(c, x, y) = img.at(c, y, x);
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.width(), img.height(), img.channels());
  const int w = img.width();
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, w - 1 - x);
  return out;
}

Image downsample2(const Image& img) {
  if (img.width() % 2 != 0 || img.height() % 2 != 0) {
    throw std::invalid_argument("downsample2 needs even dimensions");
  }
  const int w = img.width() / 2;
  const int h = img.height() / 2;
  Image out(w, h, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double s = static_cast<double>(img.at(c, 2 * y, 2 * x)) + img.at(c, 2 * y, 2 * x + 1) +
                         img.at(c, 2 * y + 1, 2 * x) + img.at(c, 2 * y + 1, 2 * x + 1);
        out.at(c, y, x) = static_cast<float>(0.25 * s);
      }
  return out;
}

double channel_mean(const Image& img, int c) {
  double s = 0.0;
  for (float v : img.plane(c)) s += v;
  return s / static_cast<double>(img.plane_size());
}

double mean_value(const Image& img) {
  double s = 0.0;
  for (float v : img.data()) s += v;
  return img.empty() ? 0.0 : s / static_cast<double>(img.size());
}

}  // namespace dpfence
