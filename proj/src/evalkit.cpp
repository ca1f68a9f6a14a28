#include "dpfence/evalkit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dpfence/io.hpp"

namespace dpfence {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": inputs differ in shape");
}

double psnr_from_mse(double mse, double peak) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

std::array<double, kSsimWindow> gaussian_taps() {
  std::array<double, kSsimWindow> g{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Mean SSIM of one channel over valid windows.
double ssim_plane(std::span<const float> a, std::span<const float> b, int w, int h, double peak) {
  const auto g = gaussian_taps();
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const int ow = w - kSsimWindow + 1;
  const int oh = h - kSsimWindow + 1;
  // Horizontal pass over the five moment images.
  std::vector<std::array<double, 5>> hp(static_cast<std::size_t>(h) * ow);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      std::array<double, 5> s{};
      for (int k = 0; k < kSsimWindow; ++k) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x + k;
        const double va = a[i];
        const double vb = b[i];
        s[0] += g[k] * va;
        s[1] += g[k] * vb;
        s[2] += g[k] * va * va;
        s[3] += g[k] * vb * vb;
        s[4] += g[k] * va * vb;
      }
      hp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> row_sum(oh, 0.0);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < oh; ++y) {
    double acc = 0.0;
    for (int x = 0; x < ow; ++x) {
      std::array<double, 5> s{};
      for (int k = 0; k < kSsimWindow; ++k) {
        const auto& v = hp[static_cast<std::size_t>(y + k) * ow + x];
        for (int m = 0; m < 5; ++m) s[m] += g[k] * v[m];
      }
      const double ma = s[0];
      const double mb = s[1];
      const double va = s[2] - ma * ma;
      const double vb = s[3] - mb * mb;
      const double cov = s[4] - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    row_sum[y] = acc;
  }
  double total = 0.0;
  for (double v : row_sum) total += v;
  return total / (static_cast<double>(ow) * oh);
}

bool on(float v) { return v >= 0.5f; }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

json seg_json(const SegMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
          {"tp", m.tp},               {"fp", m.fp},         {"fn", m.fn},
          {"precision_undefined", m.precision_undefined},   {"recall_undefined", m.recall_undefined}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Image as_rgb(Image img) { return img.channels() == 1 ? replicate_to_rgb(img) : img; }

SegMetrics pooled(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  SegMetrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.precision_undefined = tp + fp == 0;
  m.recall_undefined = tp + fn == 0;
  m.precision = m.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = m.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  const double pr = m.precision + m.recall;
  m.f1 = pr > 0.0 ? 2.0 * m.precision * m.recall / pr : 0.0;
  return m;
}

}  // namespace

SegMetrics precision_recall_f1(const MaskImage& pred, const MaskImage& gt) {
  if (!pred.same_dims(gt)) throw std::invalid_argument("precision_recall_f1: masks differ in size");
  if (pred.channels() != 1 || gt.channels() != 1)
    throw std::invalid_argument("precision_recall_f1: masks must be single-channel");
  std::int64_t tp = 0, fp = 0, fn = 0;
  const auto& p = pred.data();
  const auto& g = gt.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool pi = on(p[i]);
    const bool gi = on(g[i]);
    tp += pi && gi;
    fp += pi && !gi;
    fn += !pi && gi;
  }
  return pooled(tp, fp, fn);
}

double psnr(const Image& a, const Image& b, double peak) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw std::invalid_argument("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
    se += d * d;
  }
  return psnr_from_mse(se / static_cast<double>(a.size()), peak);
}

std::optional<double> masked_psnr(const Image& a, const Image& b, const MaskImage& mask, double peak) {
  require_same_shape(a, b, "masked_psnr");
  if (!a.same_dims(mask) || mask.channels() != 1) throw std::invalid_argument("masked_psnr: mask size mismatch");
  double se = 0.0;
  std::size_t n = 0;
  for (int c = 0; c < a.channels(); ++c) {
    const auto pa = a.plane(c);
    const auto pb = b.plane(c);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!on(mask.data()[i])) continue;
      const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
      se += d * d;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return psnr_from_mse(se / static_cast<double>(n), peak);
}

double ssim(const Image& a, const Image& b, double peak) {
  require_same_shape(a, b, "ssim");
  if (a.width() < kSsimWindow || a.height() < kSsimWindow)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  double sum = 0.0;
  for (int c = 0; c < a.channels(); ++c) sum += ssim_plane(a.plane(c), b.plane(c), a.width(), a.height(), peak);
  return sum / a.channels();
}

Image histogram_match(const Image& src, const Image& ref) {
  if (src.channels() != ref.channels()) throw std::invalid_argument("histogram_match: channel counts differ");
  Image out(src.width(), src.height(), src.channels());
  if (src.empty() || ref.empty()) return src;
  const auto bin_of = [](float v, double& frac) {
    const double s = std::clamp(static_cast<double>(v), 0.0, 1.0) * kHistogramBins;
    const int b = std::min(static_cast<int>(s), kHistogramBins - 1);
    frac = s - b;
    return b;
  };
  const auto cdf_of = [&](std::span<const float> p) {
    std::vector<double> cdf(kHistogramBins, 0.0);
    double frac = 0.0;
    for (float v : p) cdf[bin_of(v, frac)] += 1.0;
    double acc = 0.0;
    for (double& v : cdf) v = (acc += v) / static_cast<double>(p.size());
    return cdf;
  };
  for (int c = 0; c < src.channels(); ++c) {
    const auto cs = cdf_of(src.plane(c));
    const auto cr = cdf_of(ref.plane(c));
    const auto in = src.plane(c);
    float* o = out.plane(c).data();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < in.size(); ++i) {
      // Piecewise-linear CDFs: uniform mass within each bin.
      double frac = 0.0;
      const int b = bin_of(in[i], frac);
      const double lo = b ? cs[b - 1] : 0.0;
      const double q = lo + frac * (cs[b] - lo);
      const int k = static_cast<int>(std::lower_bound(cr.begin(), cr.end(), q) - cr.begin());
      double v = 1.0;
      if (k < kHistogramBins) {
        const double rlo = k ? cr[k - 1] : 0.0;
        const double mass = cr[k] - rlo;
        v = (k + (mass > 0.0 ? (q - rlo) / mass : 0.0)) / kHistogramBins;
      }
      o[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

std::string EvalReport::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["conventions"] = {{"psnr", "joint over RGB channels (one MSE), peak 1, identical inputs capped at 99 dB"},
                      {"psnr_masked", "same, over GT fence pixels only"},
                      {"ssim", "Gaussian window 11x11 sigma 1.5, K1 0.01, K2 0.03, valid windows, channel mean"},
                      {"segmentation", "pixel counts on binary masks (>= 0.5); zero denominators give 0 and set a flag"},
                      {"means", "unweighted averages of per-sample values"}};
  json per = json::array();
  for (const auto& s : samples)
    per.push_back({{"id", s.id},
                   {"segmentation", seg_json(s.seg)},
                   {"psnr", s.psnr},
                   {"ssim", s.ssim},
                   {"psnr_masked", optional_json(s.psnr_masked)},
                   {"psnr_input", s.psnr_input}});
  j["n_evaluated"] = samples.size();
  j["pooled_segmentation"] = seg_json(pooled_seg);
  j["mean"] = {{"segmentation", {{"precision", mean_seg.precision}, {"recall", mean_seg.recall}, {"f1", mean_seg.f1}}},
               {"psnr", mean_psnr},
               {"ssim", mean_ssim},
               {"psnr_masked", optional_json(mean_psnr_masked)},
               {"psnr_input", mean_psnr_input}};
  j["samples"] = per;
  j["errors"] = errors;
  return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %9s %9s %9s   %8s %7s %8s\n", "sample", "Precision", "Recall", "F1",
                "PSNR", "SSIM", "PSNR(m)");
  out += line;
  const auto row = [&](const std::string& id, const auto& m, double p, double s,
                       const std::optional<double>& pm) {
    char masked[32];
    if (pm)
      std::snprintf(masked, sizeof masked, "%8.2f", *pm);
    else
      std::snprintf(masked, sizeof masked, "%8s", "-");
    std::snprintf(line, sizeof line, "%-24s %9.4f %9.4f %9.4f   %8.2f %7.4f %s\n", id.c_str(), m.precision,
                  m.recall, m.f1, p, s, masked);
    out += line;
  };
  for (const auto& s : samples) row(s.id, s.seg, s.psnr, s.ssim, s.psnr_masked);
  out += std::string(86, '-') + "\n";
  row("mean", mean_seg, mean_psnr, mean_ssim, mean_psnr_masked);
  std::snprintf(line, sizeof line, "PSNR is joint over RGB in dB; PSNR(m) is inside the GT mask. Input PSNR %.2f dB\n",
                mean_psnr_input);
  out += line;
  for (const auto& e : errors) out += "error: " + e + "\n";
  return out;
}

EvalReport evaluate_dataset(const fs::path& manifest_path, const fs::path& pred_dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw IoError("cannot parse " + manifest_path.string() + ": " + e.what());
  }
  if (!manifest.contains("records") || !manifest["records"].is_array())
    throw IoError(manifest_path.string() + " has no records array");
  const fs::path root = manifest_path.parent_path();
  const auto& records = manifest["records"];
  const int n = static_cast<int>(records.size());

  struct Slot {
    std::optional<SampleEval> eval;
    std::string error;
  };
  std::vector<Slot> slots(n);
  std::vector<std::string> ids(n);
  for (int i = 0; i < n; ++i) {
    const auto& r = records[i];
    if (!r.contains("id") || !r["id"].is_string()) throw IoError("manifest record " + std::to_string(i) + " has no id");
    ids[i] = r["id"].get<std::string>();
  }

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const auto& r = records[i];
    const std::string& id = ids[i];
    const fs::path mask_file = pred_dir / id / "mask.png";
    const fs::path restored_file = pred_dir / id / "restored.png";
    try {
      std::string missing;
      if (!fs::exists(mask_file)) missing += " mask.png";
      if (!fs::exists(restored_file)) missing += " restored.png";
      if (!missing.empty()) {
        slots[i].error = id + ": missing prediction" + missing;
        continue;
      }
      const MaskImage gt_mask = load_png(root / r.at("mask").get<std::string>());
      const Image clean = as_rgb(load_png(root / r.at("clean").get<std::string>() / "combined.png"));
      const Image occluded = as_rgb(load_png(root / r.at("occluded").get<std::string>() / "combined.png"));
      MaskImage pred_mask = load_png(mask_file);
      if (pred_mask.channels() != 1) pred_mask = extract_channel(pred_mask, 0);
      const Image restored = as_rgb(load_png(restored_file));
      if (!pred_mask.same_dims(gt_mask)) {
        slots[i].error = id + ": mask.png is " + std::to_string(pred_mask.width()) + "x" +
                         std::to_string(pred_mask.height()) + ", expected " + std::to_string(gt_mask.width()) + "x" +
                         std::to_string(gt_mask.height());
        continue;
      }
      if (!restored.same_dims(clean)) {
        slots[i].error = id + ": restored.png size does not match the clean frame";
        continue;
      }
      SampleEval e;
      e.id = id;
      e.seg = precision_recall_f1(pred_mask, gt_mask);
      e.psnr = psnr(restored, clean);
      e.ssim = ssim(restored, clean);
      e.psnr_masked = masked_psnr(restored, clean, gt_mask);
      e.psnr_input = psnr(occluded, clean);
      slots[i].eval = std::move(e);
    } catch (const std::exception& ex) {
      slots[i].error = id + ": " + ex.what();
    }
  }

  EvalReport rep;
  std::vector<double> p, rc, f, q, s, qm, qi;
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (auto& slot : slots) {
    if (!slot.eval) {
      rep.errors.push_back(slot.error);
      continue;
    }
    const SampleEval& e = *slot.eval;
    p.push_back(e.seg.precision);
    rc.push_back(e.seg.recall);
    f.push_back(e.seg.f1);
    q.push_back(e.psnr);
    s.push_back(e.ssim);
    qi.push_back(e.psnr_input);
    if (e.psnr_masked) qm.push_back(*e.psnr_masked);
    tp += e.seg.tp;
    fp += e.seg.fp;
    fn += e.seg.fn;
    rep.samples.push_back(std::move(*slot.eval));
  }
  rep.mean_seg.precision = mean_of(p);
  rep.mean_seg.recall = mean_of(rc);
  rep.mean_seg.f1 = mean_of(f);
  rep.pooled_seg = pooled(tp, fp, fn);
  rep.mean_psnr = mean_of(q);
  rep.mean_ssim = mean_of(s);
  rep.mean_psnr_input = mean_of(qi);
  if (!qm.empty()) rep.mean_psnr_masked = mean_of(qm);
  return rep;
}

}  // namespace dpfence
