#include "dpfence/defence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "dpfence/structfreq.hpp"

namespace dpfence {

void SegmentConfig::validate() const {
  if (!(disparity_threshold > 0.0)) throw std::invalid_argument("disparity threshold must be positive");
  if (!(confidence_threshold > 0.0 && confidence_threshold <= 1.0)) {
    throw std::invalid_argument("confidence threshold must be in (0, 1]");
  }
  if (!(w_geo >= 0.0 && w_struct >= 0.0) || std::abs(w_geo + w_struct - 1.0) > 1e-9) {
    throw std::invalid_argument("cue weights must be non-negative and sum to 1");
  }
  if (radius < 0) throw std::invalid_argument("morphology radius must be >= 0");
  if (!(mask_threshold >= 0.0 && mask_threshold <= 1.0)) throw std::invalid_argument("mask threshold must be in [0, 1]");
  if (periodicity_window < 4 || (periodicity_window & (periodicity_window - 1)) != 0) {
    throw std::invalid_argument("periodicity window must be a power of two >= 4");
  }
  if (!(cost.step > 0.0)) throw std::invalid_argument("disparity step must be positive");
  if (!(cost.max_disparity >= cost.step)) throw std::invalid_argument("max disparity must be at least one step");
  if (cost.aggregation_window < 1 || cost.aggregation_window % 2 == 0)
    throw std::invalid_argument("aggregation window must be odd");
}

namespace {

using json = nlohmann::ordered_json;

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) throw std::invalid_argument("config " + where + " must be a JSON object");
  for (const auto& [k, v] : obj.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end())
      throw std::invalid_argument("unknown config key: " + where + k);
  }
}

}  // namespace

std::string segment_config_to_json(const SegmentConfig& cfg) {
  const json j = {{"disparity_threshold", cfg.disparity_threshold},
                  {"confidence_threshold", cfg.confidence_threshold},
                  {"w_geo", cfg.w_geo},
                  {"w_struct", cfg.w_struct},
                  {"radius", cfg.radius},
                  {"mask_threshold", cfg.mask_threshold},
                  {"periodicity_window", cfg.periodicity_window},
                  {"cost",
                   {{"max_disparity", cfg.cost.max_disparity},
                    {"step", cfg.cost.step},
                    {"aggregation_window", cfg.cost.aggregation_window}}}};
  return j.dump(2);
}

SegmentConfig segment_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  SegmentConfig cfg;
  try {
    reject_unknown(j, {"disparity_threshold", "confidence_threshold", "w_geo", "w_struct", "radius",
                       "mask_threshold", "periodicity_window", "cost"},
                   "");
    cfg.disparity_threshold = j.value("disparity_threshold", cfg.disparity_threshold);
    cfg.confidence_threshold = j.value("confidence_threshold", cfg.confidence_threshold);
    cfg.w_geo = j.value("w_geo", cfg.w_geo);
    cfg.w_struct = j.value("w_struct", cfg.w_struct);
    cfg.radius = j.value("radius", cfg.radius);
    cfg.mask_threshold = j.value("mask_threshold", cfg.mask_threshold);
    cfg.periodicity_window = j.value("periodicity_window", cfg.periodicity_window);
    if (j.contains("cost")) {
      const json& c = j["cost"];
      reject_unknown(c, {"max_disparity", "step", "aggregation_window"}, "cost.");
      cfg.cost.max_disparity = c.value("max_disparity", cfg.cost.max_disparity);
      cfg.cost.step = c.value("step", cfg.cost.step);
      cfg.cost.aggregation_window = c.value("aggregation_window", cfg.cost.aggregation_window);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config has a wrong type: ") + e.what());
  }
  return cfg;
}

namespace {

// Repeats the last row/column so both sizes are even.
Image pad_even(const Image& img) {
  const int w = img.width() + (img.width() & 1);
  const int h = img.height() + (img.height() & 1);
  if (w == img.width() && h == img.height()) return img;
  Image out(w, h, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) = img.at(c, std::min(y, img.height() - 1), std::min(x, img.width() - 1));
  return out;
}

int fitting_window(int window, int w, int h) {
  while (window > 4 && (window > w || window > h)) window /= 2;
  return (window <= w && window <= h) ? window : 0;
}

bool cost_volume_fits(int half_w, int half_h, const CostVolumeParams& p) {
  return half_w >= std::max(4, p.aggregation_window) && half_h >= std::max(4, p.aggregation_window);
}

}  // namespace

SegmentCues segment_cues(const DPFrame& frame, const SegmentConfig& cfg) {
  frame.validate();
  cfg.validate();
  const Image left = pad_even(frame.left);
  const Image right = pad_even(frame.right);
  const Image gray = downsample2(pad_even(green_channel(frame.combined)));
  const int w = gray.width();
  const int h = gray.height();
  SegmentCues cues{Image(w, h, 1), Image(w, h, 1), Image(w, h, 1)};

  if (cfg.w_geo > 0.0 && cost_volume_fits(w, h, cfg.cost)) {
    const DisparityEstimate est = estimate_disparity(left, right, cfg.cost);
    const double td = cfg.disparity_threshold;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double d = 2.0 * est.disparity.at(0, y, x);
        const double gd = std::clamp((d - td) / td, 0.0, 1.0);
        const double gc = std::clamp(est.confidence.at(0, y, x) / cfg.confidence_threshold, 0.0, 1.0);
        cues.geo.at(y, x) = static_cast<float>(gd * gc);
      }
  }
  if (cfg.w_struct > 0.0) {
    const int n = fitting_window(cfg.periodicity_window, w, h);
    if (n > 0) cues.structure = periodic_layer(gray, n).level;
  }
  for (std::size_t i = 0; i < cues.score.size(); ++i) {
    const double s = cfg.w_geo * cues.geo.data()[i] + cfg.w_struct * cues.structure.data()[i];
    cues.score.data()[i] = static_cast<float>(std::clamp(s, 0.0, 1.0));
  }
  return cues;
}

MaskImage dilate_mask(const MaskImage& mask, int radius) {
  if (mask.channels() != 1) throw std::invalid_argument("mask must be single-channel");
  if (radius < 0) throw std::invalid_argument("radius must be >= 0");
  if (radius == 0) return mask;
  const int w = mask.width();
  const int h = mask.height();
  MaskImage out(w, h, 1);
  const int r2 = radius * radius;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool hit = false;
      for (int dy = -radius; dy <= radius && !hit; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w || dx * dx + dy * dy > r2) continue;
          if (mask.at(yy, xx) >= 0.5f) {
            hit = true;
            break;
          }
        }
      }
      out.at(y, x) = hit ? 1.0f : 0.0f;
    }
  return out;
}

MaskImage erode_mask(const MaskImage& mask, int radius) {
  if (mask.channels() != 1) throw std::invalid_argument("mask must be single-channel");
  if (radius < 0) throw std::invalid_argument("radius must be >= 0");
  MaskImage inv(mask.width(), mask.height(), 1);
  for (std::size_t i = 0; i < inv.size(); ++i) inv.data()[i] = mask.data()[i] >= 0.5f ? 0.0f : 1.0f;
  MaskImage grown = dilate_mask(inv, radius);
  for (float& v : grown.data()) v = 1.0f - v;
  return grown;
}

MaskImage segment_fence(const DPFrame& frame, const SegmentConfig& cfg) {
  const SegmentCues cues = segment_cues(frame, cfg);
  MaskImage half = threshold_mask(cues.score, static_cast<float>(cfg.mask_threshold));
  half = erode_mask(dilate_mask(half, cfg.radius), cfg.radius);
  half = dilate_mask(erode_mask(half, cfg.radius), cfg.radius);
  MaskImage out(frame.width(), frame.height(), 1);
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x) out.at(y, x) = half.at(y / 2, x / 2);
  return out;
}

namespace {

struct FillSetup {
  std::vector<char> masked;
  double omega = 1.0;
};

// Over-relaxation factor from the thickness of the masked region (largest
// chamfer distance to a known pixel).
FillSetup fill_setup(const Image& img, const MaskImage& mask) {
  if (mask.channels() != 1 || !mask.same_dims(img)) throw std::invalid_argument("mask does not match the image");
  if (!is_binary(mask)) throw std::invalid_argument("inpaint needs a binary mask");
  const int w = img.width();
  const int h = img.height();
  FillSetup s;
  s.masked.resize(static_cast<std::size_t>(w) * h);
  std::size_t count = 0;
  for (std::size_t i = 0; i < s.masked.size(); ++i) {
    s.masked[i] = mask.data()[i] >= 0.5f;
    count += s.masked[i];
  }
  if (count == s.masked.size()) throw std::invalid_argument("mask covers the whole image");
  if (count == 0) return s;

  const int big = w + h;
  std::vector<int> dist(s.masked.size());
  for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = s.masked[i] ? big : 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int& d = dist[static_cast<std::size_t>(y) * w + x];
      if (x > 0) d = std::min(d, dist[static_cast<std::size_t>(y) * w + x - 1] + 1);
      if (y > 0) d = std::min(d, dist[static_cast<std::size_t>(y - 1) * w + x] + 1);
    }
  int far = 0;
  for (int y = h - 1; y >= 0; --y)
    for (int x = w - 1; x >= 0; --x) {
      int& d = dist[static_cast<std::size_t>(y) * w + x];
      if (x + 1 < w) d = std::min(d, dist[static_cast<std::size_t>(y) * w + x + 1] + 1);
      if (y + 1 < h) d = std::min(d, dist[static_cast<std::size_t>(y + 1) * w + x] + 1);
      far = std::max(far, d);
    }
  const double extent = std::min(2.0 * far + 1.0, static_cast<double>(std::max(w, h)));
  s.omega = 2.0 / (1.0 + std::sin(std::numbers::pi / (extent + 1.0)));
  return s;
}

// Masked pixels start at the mean of the known pixels bordering the mask.
std::vector<double> initial_plane(std::span<const float> src, const std::vector<char>& masked, int w, int h) {
  std::vector<double> u(src.begin(), src.end());
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (masked[i]) continue;
      const bool edge = (x > 0 && masked[i - 1]) || (x + 1 < w && masked[i + 1]) || (y > 0 && masked[i - w]) ||
                        (y + 1 < h && masked[i + w]);
      if (edge) {
        sum += src[i];
        ++n;
      }
    }
  const double start = n ? sum / n : 0.5;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (masked[i]) u[i] = start;
  return u;
}

// Average of the in-image 4-neighbours (reflecting borders).
inline double neighbour_mean(const std::vector<double>& u, int x, int y, int w, int h) {
  const std::size_t i = static_cast<std::size_t>(y) * w + x;
  double s = 0.0;
  int n = 0;
  if (x > 0) s += u[i - 1], ++n;
  if (x + 1 < w) s += u[i + 1], ++n;
  if (y > 0) s += u[i - w], ++n;
  if (y + 1 < h) s += u[i + w], ++n;
  return s / n;
}

Image finish(const Image& img, const std::vector<std::vector<double>>& planes, const std::vector<char>& masked) {
  Image out = img;
  for (int c = 0; c < img.channels(); ++c) {
    std::span<float> dst = out.plane(c);
    for (std::size_t i = 0; i < dst.size(); ++i)
      if (masked[i]) dst[i] = static_cast<float>(std::clamp(planes[c][i], 0.0, 1.0));
  }
  return out;
}

}  // namespace

Image inpaint(const Image& img, const MaskImage& mask) {
  const FillSetup setup = fill_setup(img, mask);
  const int w = img.width();
  const int h = img.height();
  std::vector<std::vector<double>> planes;
  for (int c = 0; c < img.channels(); ++c) planes.push_back(initial_plane(img.plane(c), setup.masked, w, h));
  if (std::none_of(setup.masked.begin(), setup.masked.end(), [](char m) { return m; })) return img;

  for (int it = 0; it < kInpaintMaxIterations; ++it) {
    double max_update = 0.0;
    for (int colour = 0; colour < 2; ++colour) {
      for (auto& u : planes) {
#pragma omp parallel for schedule(static) reduction(max : max_update)
        for (int y = 0; y < h; ++y)
          for (int x = (y + colour) & 1; x < w; x += 2) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!setup.masked[i]) continue;
            const double delta = setup.omega * (neighbour_mean(u, x, y, w, h) - u[i]);
            u[i] += delta;
            max_update = std::max(max_update, std::abs(delta));
          }
      }
    }
    if (max_update < kInpaintTolerance) break;
  }
  return finish(img, planes, setup.masked);
}

Removal remove_fence(const DPFrame& frame, const SegmentConfig& cfg) {
  Removal r;
  r.mask = dilate_mask(segment_fence(frame, cfg), cfg.radius);
  if (std::all_of(r.mask.data().begin(), r.mask.data().end(), [](float v) { return v >= 0.5f; })) {
    throw std::runtime_error("fence mask covers the whole frame");
  }
  r.restored = inpaint(frame.combined, r.mask);
  return r;
}

namespace reference {

Image inpaint(const Image& img, const MaskImage& mask) {
  const FillSetup setup = fill_setup(img, mask);
  const int w = img.width();
  const int h = img.height();
  std::vector<std::vector<double>> planes;
  for (int c = 0; c < img.channels(); ++c) planes.push_back(initial_plane(img.plane(c), setup.masked, w, h));
  for (int it = 0; it < kInpaintMaxIterations; ++it) {
    double max_update = 0.0;
    for (auto& u : planes)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          if (!setup.masked[i]) continue;
          const double delta = setup.omega * (neighbour_mean(u, x, y, w, h) - u[i]);
          u[i] += delta;
          max_update = std::max(max_update, std::abs(delta));
        }
    if (max_update < kInpaintTolerance) break;
  }
  return finish(img, planes, setup.masked);
}

}  // namespace reference

}  // namespace dpfence
