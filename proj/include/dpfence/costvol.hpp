#pragma once

#include <array>
#include <vector>

#include "dpfence/image.hpp"

namespace dpfence {

// Feature maps are Tensors at half the input resolution.
using FeatureMap = Tensor;

inline constexpr int kFeatureChannels = 4;
inline constexpr int kFeatureWindowRadius = 4;  // 9x9 normalization window
inline constexpr double kFeatureEpsilon = 1e-6;  // relative to the plane-wide variance

// Fixed filter bank on the 2x average-pooled view: local mean-removed
// intensity, x-gradient, y-gradient and 3x3 local contrast, each
// standardized over a 9x9 window. Both views go through the same function.
FeatureMap extract_features(const Image& gray);

// Shifts every row of every channel by `d` pixels (content moves toward +x)
// with a Fourier phase ramp; circular at the row ends. The Nyquist bin of
// even-length rows is weighted by cos(pi d) so the result stays real.
FeatureMap phase_shift(const FeatureMap& feat, double d);

struct CostVolume {
  std::vector<double> disparities;  // strictly increasing, starts at 0
  Tensor scores;                    // one channel per disparity

  int size() const { return static_cast<int>(disparities.size()); }
  double step() const { return disparities.size() > 1 ? disparities[1] - disparities[0] : 0.0; }
};

std::vector<double> disparity_grid(double max_disparity, double step);

// Correlation volume over unidirectional disparities {0, step, ..., <= dmax}:
// score(d, p) = <F_L(p), F_R(p + d)>, where F_R(p + d) is F_R phase-shifted
// by -d. A right view displaced by +s relative to the left peaks at d = s.
CostVolume build_cost_volume(const FeatureMap& left, const FeatureMap& right, double max_disparity,
                             double step);

// Box average over (x, y, d) with an odd window and mirror borders.
CostVolume aggregate_cost(const CostVolume& vol, int window);

struct DisparityEstimate {
  Tensor disparity;   // 1 channel, fractional pixels at feature resolution
  Tensor confidence;  // 1 channel, in [0,1]
  Tensor max_score;   // 1 channel, best raw score
};

// Discrete argmax refined by a parabola through the neighbouring scores.
// Confidence is 1 - C2/C1 with C1 the best score and C2 the best local
// maximum not adjacent to it (0 if there is none); flat or non-positive
// score profiles get confidence 0.
DisparityEstimate disparity_argmax(const CostVolume& vol);

// d*, confidence and max-score stacked as 3 channels at 1/2, 1/4 and 1/8 of
// the input resolution (the first level is the estimate itself).
std::array<Tensor, 3> disp_pyramid(const DisparityEstimate& est);
std::array<Tensor, 3> disp_pyramid(const CostVolume& vol);

struct CostVolumeParams {
  double max_disparity = 8.0;
  double step = 0.25;
  int aggregation_window = 7;
};

// Features, volume, aggregation and readout for one DP pair.
DisparityEstimate estimate_disparity(const Image& left, const Image& right,
                                     const CostVolumeParams& params = {});

namespace reference {

// Direct evaluation: sub-pixel shifts by an explicit O(N^2) DFT sum and
// serial loops. Test and benchmark baseline.
CostVolume build_cost_volume(const FeatureMap& left, const FeatureMap& right, double max_disparity,
                             double step);
CostVolume aggregate_cost(const CostVolume& vol, int window);

}  // namespace reference

}  // namespace dpfence
