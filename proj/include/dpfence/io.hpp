#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "dpfence/image.hpp"

namespace dpfence {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PngDepth { k8 = 8, k16 = 16 };

// Grayscale, gray+alpha, RGB, RGBA and palette PNGs at 8 or 16 bits are read;
// alpha is dropped. Values are scaled to [0,1] by the format maximum.
Image load_png(const std::filesystem::path& path);
void save_png(const Image& img, const std::filesystem::path& path, PngDepth depth = PngDepth::k16);

// Portable float map. "Pf" is single-channel, "PF" three-channel; a negative
// scale marks little-endian payloads, which is what we write. Rows are stored
// bottom-to-top.
Tensor load_pfm_tensor(const std::filesystem::path& path);
void save_pfm(const Tensor& t, const std::filesystem::path& path);
Image load_pfm(const std::filesystem::path& path);
void save_pfm(const Image& img, const std::filesystem::path& path);

enum class DisparityAxis { kHorizontal, kVertical };

// A frame directory holds left.png, right.png and combined.png plus an
// optional frame.json with {"disparity_axis": "horizontal"|"vertical"}.
// Vertical frames are transposed on load so the library only sees
// horizontal disparity, and transposed back on save.
DPFrame load_frame(const std::filesystem::path& dir, DisparityAxis* axis_out = nullptr);
void save_frame(const DPFrame& frame, const std::filesystem::path& dir,
                DisparityAxis axis = DisparityAxis::kHorizontal);

}  // namespace dpfence
