#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dpfence/image.hpp"

namespace dpfence {

struct SegMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  // Set when the corresponding denominator was zero and the value defaulted to 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

// Pixel counts over binary masks of equal size.
SegMetrics precision_recall_f1(const MaskImage& pred, const MaskImage& gt);

inline constexpr double kPsnrCap = 99.0;

// 10 log10(peak^2 / MSE) with one MSE over all channels, accumulated in
// double. Identical inputs give kPsnrCap.
double psnr(const Image& a, const Image& b, double peak = 1.0);
// Same, over the pixels where `mask` is set (all channels). Returns
// std::nullopt for an empty mask.
std::optional<double> masked_psnr(const Image& a, const Image& b, const MaskImage& mask, double peak = 1.0);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// Gaussian-windowed SSIM (11x11, sigma 1.5, K1 = 0.01, K2 = 0.03), averaged
// over all fully contained windows and over channels.
double ssim(const Image& a, const Image& b, double peak = 1.0);

inline constexpr int kHistogramBins = 1024;

// Per channel, maps src through its 1024-bin CDF onto the inverse CDF of ref
// (linear within bins). Monotone; output in [0,1].
Image histogram_match(const Image& src, const Image& ref);

struct SampleEval {
  std::string id;
  SegMetrics seg;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> psnr_masked;  // inside the GT mask
  double psnr_input = 0.0;            // occluded vs clean, for reference
};

struct MeanSegMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::vector<SampleEval> samples;  // manifest order
  MeanSegMetrics mean_seg;          // unweighted per-sample averages
  SegMetrics pooled_seg;            // from counts summed over samples
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_psnr_input = 0.0;
  std::optional<double> mean_psnr_masked;
  // "<id>: <problem>" for absent or unreadable predictions.
  std::vector<std::string> errors;

  bool ok() const { return errors.empty(); }
  std::string to_json() const;
  std::string to_table() const;
};

// Reads manifest.json (as written by generate_dataset) and, for each record,
// <pred_dir>/<id>/mask.png and <pred_dir>/<id>/restored.png. Samples are
// evaluated in parallel; the report order follows the manifest. Records
// without usable predictions are listed in `errors` and left out of the
// means. Throws IoError when the manifest itself cannot be read.
EvalReport evaluate_dataset(const std::filesystem::path& manifest_path, const std::filesystem::path& pred_dir);

}  // namespace dpfence
