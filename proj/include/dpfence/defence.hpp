#pragma once

#include <string>

#include "dpfence/costvol.hpp"
#include "dpfence/image.hpp"

namespace dpfence {

struct SegmentConfig {
  double disparity_threshold = 1.0;   // tau_d, full-resolution pixels
  double confidence_threshold = 0.2;  // tau_c
  double w_geo = 0.5;
  double w_struct = 0.5;
  int radius = 2;               // morphology at H/2 and dilation before inpainting, pixels
  double mask_threshold = 0.7;  // tau_m
  int periodicity_window = 128; // at H/2; shrunk to the largest power of two that fits
  CostVolumeParams cost{};

  void validate() const;
};

// {"disparity_threshold", ..., "cost": {"max_disparity", "step",
// "aggregation_window"}}. Missing keys keep their defaults; unknown keys and
// wrong types throw std::invalid_argument.
std::string segment_config_to_json(const SegmentConfig& cfg);
SegmentConfig segment_config_from_json(const std::string& json);

// Per-pixel cues at H/2 (after padding odd sizes by one edge row/column).
struct SegmentCues {
  Image geo;        // near-layer evidence from disparity and confidence
  Image structure;  // periodic-layer level
  Image score;      // w_geo * geo + w_struct * structure
};

// geo = ramp(2 d* ; tau_d .. 2 tau_d) * min(1, confidence / tau_c), where d*
// is in half-resolution pixels.
SegmentCues segment_cues(const DPFrame& frame, const SegmentConfig& cfg);

// Threshold the fused score, close then open with a disc of radius r, and
// upsample by nearest to the frame size. Frames too small for the cost
// volume give an empty mask.
MaskImage segment_fence(const DPFrame& frame, const SegmentConfig& cfg = {});

// Binary morphology with a disc {dx^2 + dy^2 <= r^2}; pixels outside the
// image are ignored.
MaskImage dilate_mask(const MaskImage& mask, int radius);
MaskImage erode_mask(const MaskImage& mask, int radius);

inline constexpr double kInpaintTolerance = 1e-4;
inline constexpr int kInpaintMaxIterations = 2000;

// Harmonic fill of the masked pixels from their boundary (red-black SOR,
// reflecting image borders) until the largest update falls below
// kInpaintTolerance or kInpaintMaxIterations sweeps. Unmasked pixels are
// copied bit-exactly. Throws std::invalid_argument when the mask covers the
// whole image.
Image inpaint(const Image& img, const MaskImage& mask);

struct Removal {
  Image restored;
  MaskImage mask;  // dilated mask that was filled
};
Removal remove_fence(const DPFrame& frame, const SegmentConfig& cfg = {});

namespace reference {

// Serial Gauss-Seidel sweeps in raster order, same stopping rule.
Image inpaint(const Image& img, const MaskImage& mask);

}  // namespace reference

}  // namespace dpfence
