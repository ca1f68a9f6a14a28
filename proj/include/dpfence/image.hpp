#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace dpfence {

// Planar (channel-major) float raster without a value-range contract. Used for
// feature maps, cost volumes and network activations.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int height, int width, float fill = 0.0f);
  Tensor(int channels, int height, int width, std::vector<float> data);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float at(int c, int y, int x) const { return data_[index(c, y, x)]; }
  float& at(int c, int y, int x) { return data_[index(c, y, x)]; }

  std::span<const float> plane(int c) const;
  std::span<float> plane(int c);
  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  bool same_shape(const Tensor& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Planar image with 1 or 3 channels and samples in [0,1].
//
// Mutable element access exists for construction; every public operation in
// the library hands back images that satisfy the range contract, clamping
// explicitly where arithmetic could leave it.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.0f);

  // Validates range and finiteness; throws std::invalid_argument otherwise.
  static Image from_data(int width, int height, int channels, std::vector<float> data);
  static Image from_tensor(const Tensor& t);
  // Clamps into [0,1]; NaN is rejected rather than clamped.
  static Image clamped_from(const Tensor& t);

  int width() const { return pixels_.width(); }
  int height() const { return pixels_.height(); }
  int channels() const { return pixels_.channels(); }
  std::size_t plane_size() const { return pixels_.plane_size(); }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  float at(int c, int y, int x) const { return pixels_.at(c, y, x); }
  float& at(int c, int y, int x) { return pixels_.at(c, y, x); }
  float at(int y, int x) const { return pixels_.at(0, y, x); }
  float& at(int y, int x) { return pixels_.at(0, y, x); }

  std::span<const float> plane(int c) const { return pixels_.plane(c); }
  std::span<float> plane(int c) { return pixels_.plane(c); }
  const std::vector<float>& data() const { return pixels_.data(); }
  std::vector<float>& data() { return pixels_.data(); }
  const Tensor& tensor() const { return pixels_; }

  bool same_dims(const Image& other) const {
    return width() == other.width() && height() == other.height();
  }
  bool same_shape(const Image& other) const { return pixels_.same_shape(other.pixels_); }
  bool in_range() const;
  // Clamps every sample to [0,1] in place. Throws on NaN.
  void clamp01();

  friend bool operator==(const Image&, const Image&) = default;

 private:
  Tensor pixels_;
};

// Single-channel mask. Soft masks hold values in [0,1]; binary masks only 0 or 1.
using MaskImage = Image;

bool is_binary(const MaskImage& mask);
MaskImage threshold_mask(const MaskImage& soft, float threshold);
double mask_coverage(const MaskImage& mask);

// One dual-pixel capture: two single-channel half-aperture views and the
// three-channel combined image, all of identical size.
struct DPFrame {
  Image left;
  Image right;
  Image combined;

  // Throws std::invalid_argument if the invariants do not hold.
  void validate() const;
  int width() const { return combined.width(); }
  int height() const { return combined.height(); }
};

Image green_channel(const Image& rgb);
Image replicate_to_rgb(const Image& gray);
Image extract_channel(const Image& img, int c);
Image crop(const Image& img, int x0, int y0, int width, int height);
Image transpose(const Image& img);
Image flip_horizontal(const Image& img);
// 2x2 average pooling. Width and height must be even.
Image downsample2(const Image& img);
double mean_value(const Image& img);
double channel_mean(const Image& img, int c);

// Mirror index into [0, n) without repeating the edge sample (…2 1 |0 1 2… n-1| n-2…).
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace dpfence
