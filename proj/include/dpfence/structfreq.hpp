#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dpfence/image.hpp"

namespace dpfence {

// Channels [0, channels - split) are the local stream and the last `split`
// channels are the global stream. split == channels is all-global,
// split == 0 all-local.
struct FeatureTensor {
  Tensor data;
  int split = 0;

  int channels() const { return data.channels(); }
  int local_channels() const { return data.channels() - split; }
  int height() const { return data.height(); }
  int width() const { return data.width(); }
  void validate() const;
};

// Linear mixing of the stacked (real, imag) spectrum. For each frequency the
// vector [Re X_0..Re X_{n-1}, Im X_0..Im X_{n-1}] is multiplied by a
// (2 out) x (2 in) matrix and `bias` (2 out) is added. The matrix is either
// shared by all frequencies or given per frequency of the height x (width/2+1)
// half spectrum.
struct SpectralWeights {
  int in_channels = 0;
  int out_channels = 0;
  int freq_height = 0;  // 0 when shared
  int freq_width = 0;
  std::vector<float> mix;   // [freq][2 out][2 in], row-major
  std::vector<float> bias;  // [2 out]

  bool per_frequency() const { return freq_height > 0; }
  std::size_t block_size() const { return static_cast<std::size_t>(4) * in_channels * out_channels; }
  void validate() const;

  static SpectralWeights identity(int channels);
  static SpectralWeights zeros(int in_channels, int out_channels);
  // Per-frequency weights equal to multiplication by the DFT of `kernel`
  // (odd square, centred), i.e. circular convolution on height x width.
  static SpectralWeights from_kernel(int channels, int height, int width, const std::vector<float>& kernel,
                                     int kernel_size);
};

// Real 2D FFT per channel, mixing, inverse FFT. Throws on non-finite input or
// when the input is not all-global.
FeatureTensor spectral_transform(const FeatureTensor& x, const SpectralWeights& w);

struct FFCWeights {
  int in_local = 0;
  int in_global = 0;
  int out_local = 0;
  int out_global = 0;
  std::vector<float> l2l;  // [out_local][in_local][3][3]
  std::vector<float> g2l;  // [out_local][in_global][3][3]
  std::vector<float> l2g;  // [out_global][in_local]
  SpectralWeights g2g;     // in_global -> out_global
  std::vector<float> bias_local;   // [out_local]
  std::vector<float> bias_global;  // [out_global]

  void validate() const;
  static FFCWeights zeros(int in_local, int in_global, int out_local, int out_global);
};

// One FFC unit: 3x3 local->local and global->local convolutions (mirror
// borders), 1x1 local->global, spectral global->global; summed per stream,
// then ReLU. Output split is out_global.
FeatureTensor ffc_block(const FeatureTensor& x, const FFCWeights& w);

struct SAMWeights {
  int in_channels = 0;   // disparity feature channels
  int out_channels = 0;  // gated feature channels
  std::vector<float> w;  // [out][in]
  std::vector<float> b;  // [out]

  void validate() const;
};

// out = F_ffc * sigmoid(W F_disp + b), one gate per pixel and channel.
FeatureTensor sam_fuse(const FeatureTensor& ffc, const Tensor& disp, const SAMWeights& w);

inline constexpr int kPeriodicityHarmonics = 4;

// Sliding Hann-windowed FFT (hop window/2). Per window, the two strongest
// peaks outside the DC lobe span a lattice; the energy within +-1 bin of the
// lattice points (harmonics up to kPeriodicityHarmonics) over the total
// energy outside the DC lobe, corrected for the share of bins the lattice
// covers by chance, gives the score. Window scores are bilinearly
// interpolated between window centres. A constant image scores 0.
Image periodicity_score(const Image& gray, int window);

struct PeriodicLayer {
  Image score;  // periodicity_score
  Image level;  // per-pixel fence level in [0, 1], weighted by the window score
};

// Same windows as periodicity_score; each window's lattice bins are kept and
// transformed back, giving the periodic layer. Its sparse phase (the wires)
// is normalised to 1 and overlap-added with the window taper.
PeriodicLayer periodic_layer(const Image& gray, int window);

struct FreqDPWeights {
  std::uint64_t seed = 0;
  int width = 8;  // channels per stage
  int split = 4;  // global channels per stage
  std::array<FFCWeights, 3> encoder;
  std::array<FFCWeights, 3> decoder;  // decoder[0] runs at H/8
  std::array<SAMWeights, 3> sam;      // sam[i] at scale H/2^(i+1)
  std::vector<float> head;            // [width] 1x1 to one channel
  float head_bias = 0.0f;

  static FreqDPWeights random(std::uint64_t seed, int width = 8, int split = 4);
};

void save_freqdp_weights(const FreqDPWeights& w, const std::filesystem::path& dir);
FreqDPWeights load_freqdp_weights(const std::filesystem::path& dir);

// Toy forward pass: encoder of three FFC blocks at H/2, H/4, H/8 (2x average
// pooling in between); decoder of three FFC blocks at H/8, H/4, H/2 with
// additive skips and SAM gating by the disparity pyramid at each scale;
// nearest 2x upsampling, 1x1 head and sigmoid. Input dims must be multiples
// of 8 and the pyramid levels must match H/2, H/4, H/8.
Image freqdp_forward(const Image& combined, const std::array<Tensor, 3>& disp_pyramid,
                     const FreqDPWeights& weights);

}  // namespace dpfence
