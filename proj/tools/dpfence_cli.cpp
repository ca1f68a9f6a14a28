// dpfence: command-line front end for synthesis, disparity, segmentation,
// removal, evaluation and PSF previews.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpfence/costvol.hpp"
#include "dpfence/defence.hpp"
#include "dpfence/evalkit.hpp"
#include "dpfence/hash.hpp"
#include "dpfence/io.hpp"
#include "dpfence/parallel.hpp"
#include "dpfence/psf.hpp"
#include "dpfence/structfreq.hpp"
#include "dpfence/synthpipe.hpp"

#ifndef DPFENCE_VERSION
#define DPFENCE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace dpfence;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Bad flag values or config contents; reported before any output is written.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + p.string());
}

// Top-level config file: {"threads": N, "synth": {...}, "segment": {...}}.
struct FileConfig {
  std::optional<int> threads;
  std::optional<std::string> synth;    // raw JSON for config_from_json
  std::optional<std::string> segment;  // raw JSON for segment_config_from_json
};

FileConfig load_file_config(const std::string& path) {
  FileConfig fc;
  if (path.empty()) return fc;
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw UsageError(path + ": not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError(path + ": config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (k == "threads") {
      if (!v.is_number_integer()) throw UsageError(path + ": threads must be an integer");
      fc.threads = v.get<int>();
    } else if (k == "synth") {
      fc.synth = v.dump();
    } else if (k == "segment") {
      fc.segment = v.dump();
    } else {
      throw UsageError(path + ": unknown config key: " + k);
    }
  }
  return fc;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
};

// Per-run bookkeeping shared by every subcommand.
struct Run {
  std::string subcommand;
  std::vector<std::string> argv;
  std::string config_path;
  std::optional<int> threads_flag;
  FileConfig file;
  int threads = 0;
  json config = json::object();
  json summary = json::object();
  json timings = json::object();
  std::vector<fs::path> outputs;  // hashed in the report
  fs::path output_root;           // report paths are relative to this
  fs::path report_path;

  void resolve_threads() {
    if (threads_flag)
      threads = *threads_flag;
    else if (file.threads)
      threads = *file.threads;
    else
      threads = thread_count_from_env();
    if (threads < 0) throw UsageError("--threads must be >= 0");
    set_thread_count(threads);
  }

  void write_report() const {
    json out = json::object();
    for (const auto& p : outputs) out[fs::relative(p, output_root).generic_string()] = sha256_file(p);
    json r;
    r["tool"] = "dpfence";
    r["version"] = DPFENCE_VERSION;
    r["subcommand"] = subcommand;
    r["argv"] = argv;
    r["config_file"] = config_path.empty() ? json(nullptr) : json(config_path);
    r["threads"] = {{"requested", threads}, {"used", thread_count()}};
    r["config"] = config;
    r["summary"] = summary;
    r["timings_ms"] = timings;
    r["outputs_sha256"] = out;
    write_text(report_path, r.dump(2) + "\n");
  }
};

// Frames may come with a vertical disparity axis; outputs go back to the
// input orientation.
Image orient(const Image& img, DisparityAxis axis) {
  return axis == DisparityAxis::kVertical ? transpose(img) : img;
}

// Top-left w x h of a single-channel tensor, transposed for vertical frames.
Tensor crop_plane(const Tensor& t, int w, int h, DisparityAxis axis) {
  const bool tr = axis == DisparityAxis::kVertical;
  Tensor out(1, tr ? w : h, tr ? h : w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (tr)
        out.at(0, x, y) = t.at(0, y, x);
      else
        out.at(0, y, x) = t.at(0, y, x);
    }
  return out;
}

Image pad_to_multiple(const Image& img, int m) {
  const int w = (img.width() + m - 1) / m * m;
  const int h = (img.height() + m - 1) / m * m;
  if (w == img.width() && h == img.height()) return img;
  Image out(w, h, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) = img.at(c, std::min(y, img.height() - 1), std::min(x, img.width() - 1));
  return out;
}

Image scaled_for_view(const Tensor& v, double lo, double hi) {
  Image out(v.width(), v.height(), 1);
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.data()[i] = static_cast<float>(std::clamp((v.data()[i] - lo) / span, 0.0, 1.0));
  return out;
}

// Black-red-yellow-white ramp.
Image heatmap(const PSFKernel& k, double peak, int scale) {
  const int n = k.size() * scale;
  Image out(n, n, 3);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double t = peak > 0 ? k.at(x / scale - k.radius(), y / scale - k.radius()) / peak : 0.0;
      out.at(0, y, x) = static_cast<float>(std::clamp(3.0 * t, 0.0, 1.0));
      out.at(1, y, x) = static_cast<float>(std::clamp(3.0 * t - 1.0, 0.0, 1.0));
      out.at(2, y, x) = static_cast<float>(std::clamp(3.0 * t - 2.0, 0.0, 1.0));
    }
  return out;
}

void collect_files(const fs::path& root, std::vector<fs::path>& out, const fs::path& skip) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path() != skip) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  out.insert(out.end(), files.begin(), files.end());
}

SegmentConfig resolve_segment_config(const Run& run) {
  if (!run.file.segment) return {};
  try {
    return segment_config_from_json(*run.file.segment);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("segment config: ") + e.what());
  }
}

template <class T>
void override_if(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

struct SegmentFlags {
  std::optional<double> tau_d, tau_c, w_geo, tau_m, dmax, step;
  std::optional<int> radius, window, aggregation;

  void add(CLI::App* app) {
    app->add_option("--tau-d", tau_d, "Disparity threshold (full-resolution px)");
    app->add_option("--tau-c", tau_c, "Confidence threshold");
    app->add_option("--w-geo", w_geo, "Weight of the disparity cue; the structure weight becomes 1 - w");
    app->add_option("--radius", radius, "Morphology and dilation radius (px)");
    app->add_option("--tau-m", tau_m, "Mask threshold on the fused score");
    app->add_option("--periodicity-window", window, "Periodicity window at half resolution");
    app->add_option("--dmax", dmax, "Largest disparity searched (half-resolution px)");
    app->add_option("--step", step, "Disparity step (half-resolution px)");
    app->add_option("--aggregation", aggregation, "Cost aggregation window (odd)");
  }

  void apply(SegmentConfig& c) const {
    override_if(tau_d, c.disparity_threshold);
    override_if(tau_c, c.confidence_threshold);
    if (w_geo) {
      c.w_geo = *w_geo;
      c.w_struct = 1.0 - *w_geo;
    }
    override_if(radius, c.radius);
    override_if(tau_m, c.mask_threshold);
    override_if(window, c.periodicity_window);
    override_if(dmax, c.cost.max_disparity);
    override_if(step, c.cost.step);
    override_if(aggregation, c.cost.aggregation_window);
  }
};

SegmentConfig final_segment_config(const Run& run, const SegmentFlags& flags) {
  SegmentConfig cfg = resolve_segment_config(run);
  flags.apply(cfg);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

DPFrame load_input_frame(const std::string& dir, DisparityAxis& axis) {
  if (!fs::is_directory(dir)) throw UsageError("--frame " + dir + " is not a directory");
  return load_frame(dir, &axis);
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string clean_dir, assets_dir, out;
  int n = 0;
  std::optional<std::uint64_t> seed;
  bool patches = false;
  int patch = 512;
  int stride = 0;
  int width = 512, height = 512, procedural_frames = 4, procedural_assets = 4;
  std::optional<double> depth_min, depth_max;
  std::optional<std::string> psf_left, psf_right;
};

void run_synth(Run& run, const SynthArgs& a) {
  SynthConfig cfg;
  try {
    if (run.file.synth) cfg = config_from_json(*run.file.synth);
    override_if(a.seed, cfg.base_seed);
    override_if(a.depth_min, cfg.depth_min);
    override_if(a.depth_max, cfg.depth_max);
    if (a.psf_left) cfg.psf_left = *a.psf_left;
    if (a.psf_right) cfg.psf_right = *a.psf_right;
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("synth config: ") + e.what());
  }
  if (a.n < 1) throw UsageError("--n must be >= 1");
  if (a.patches && (a.patch < 1 || a.stride < 0)) throw UsageError("--patch must be >= 1 and --stride >= 0");
  if (a.clean_dir.empty() && (a.width < 64 || a.height < 64)) throw UsageError("--width/--height must be >= 64");

  Timer t_in;
  std::vector<NamedFrame> frames;
  std::vector<FenceAsset> assets;
  if (!a.clean_dir.empty()) {
    frames = load_clean_frames(a.clean_dir);
  } else {
    for (int i = 0; i < a.procedural_frames; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "scene%03d", i);
      frames.push_back({id, make_clean_scene(a.width, a.height, derive_seed(cfg.base_seed, i, 101))});
    }
  }
  if (!a.assets_dir.empty()) {
    assets = load_fence_assets(a.assets_dir);
  } else {
    for (int i = 0; i < a.procedural_assets; ++i) {
      FenceAsset f = make_fence_asset(frames.front().frame.width(), frames.front().frame.height(),
                                      derive_seed(cfg.base_seed, i, 202));
      char id[32];
      std::snprintf(id, sizeof id, "fence%03d", i);
      f.id = id;
      assets.push_back(std::move(f));
    }
  }
  if (frames.empty()) throw std::runtime_error("no clean frames found");
  if (assets.empty()) throw std::runtime_error("no fence assets found");
  run.timings["inputs"] = t_in.ms();

  DatasetOptions opts;
  opts.n_samples = a.n;
  opts.patches = a.patches;
  opts.patch = a.patch;
  opts.stride = a.stride;
  run.config = {{"synth", json::parse(config_to_json(cfg))},
                {"clean", a.clean_dir.empty() ? json("procedural") : json(a.clean_dir)},
                {"assets", a.assets_dir.empty() ? json("procedural") : json(a.assets_dir)},
                {"n", a.n},
                {"patches", a.patches},
                {"patch", a.patch},
                {"stride", a.stride}};
  if (a.clean_dir.empty()) run.config["procedural"] = {{"width", a.width}, {"height", a.height},
                                                       {"frames", a.procedural_frames}};
  if (a.assets_dir.empty()) run.config["procedural_assets"] = a.procedural_assets;

  fs::create_directories(a.out);
  Timer t_gen;
  const json manifest = json::parse(generate_dataset(frames, assets, cfg, opts, a.out));
  run.timings["generate"] = t_gen.ms();
  run.summary = {{"n_samples", manifest["n_samples"]}, {"config_hash", manifest["config_hash"]}};
  if (manifest.contains("patches")) run.summary["patches"] = manifest["patches"]["count"];
  collect_files(a.out, run.outputs, run.report_path);
}

// ------------------------------------------------------------ disparity

struct DisparityArgs {
  std::string frame, out;
  double dmax = 8.0, step = 0.25;
  int aggregation = 7;
  bool dump_volume = false;
};

void run_disparity(Run& run, const DisparityArgs& a) {
  CostVolumeParams p{a.dmax, a.step, a.aggregation};
  if (!(p.step > 0.0) || !(p.max_disparity >= p.step)) throw UsageError("need --dmax >= --step > 0");
  if (p.aggregation_window < 1 || p.aggregation_window % 2 == 0) throw UsageError("--aggregation must be odd");
  DisparityAxis axis;
  const DPFrame frame = load_input_frame(a.frame, axis);
  run.config = {{"cost", {{"max_disparity", p.max_disparity}, {"step", p.step}, {"aggregation_window", p.aggregation_window}}},
                {"frame", a.frame},
                {"dump_volume", a.dump_volume}};

  Timer t;
  const Image left = pad_to_multiple(frame.left, 2);
  const Image right = pad_to_multiple(frame.right, 2);
  const FeatureMap fl = extract_features(left);
  const FeatureMap fr = extract_features(right);
  CostVolume vol = build_cost_volume(fl, fr, p.max_disparity, p.step);
  if (p.aggregation_window > 1) vol = aggregate_cost(vol, p.aggregation_window);
  const DisparityEstimate est = disparity_argmax(vol);
  run.timings["estimate"] = t.ms();

  // Crop the padding back off at half resolution.
  const int hw = (frame.width() + 1) / 2;
  const int hh = (frame.height() + 1) / 2;
  const Tensor d = crop_plane(est.disparity, hw, hh, axis);
  const Tensor c = crop_plane(est.confidence, hw, hh, axis);

  const fs::path out(a.out);
  fs::create_directories(out);
  save_pfm(d, out / "disparity.pfm");
  save_pfm(c, out / "confidence.pfm");
  save_png(scaled_for_view(d, 0.0, p.max_disparity), out / "disparity.png", PngDepth::k8);
  save_png(scaled_for_view(c, 0.0, 1.0), out / "confidence.png", PngDepth::k8);
  run.outputs = {out / "disparity.pfm", out / "confidence.pfm", out / "disparity.png", out / "confidence.png"};
  if (a.dump_volume) {
    // Slices stacked along rows: slice k occupies rows [k h, (k + 1) h).
    const int w = vol.scores.width();
    const int h = vol.scores.height();
    Tensor stack(1, h * vol.size(), w);
    for (int k = 0; k < vol.size(); ++k)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) stack.at(0, k * h + y, x) = vol.scores.at(k, y, x);
    save_pfm(stack, out / "cost_volume.pfm");
    const json side = {{"layout", "slices stacked along rows, slice k at rows [k*height, (k+1)*height)"},
                       {"width", w},
                       {"height", h},
                       {"orientation", axis == DisparityAxis::kVertical ? "transposed (disparity along x)" : "as input"},
                       {"disparities", vol.disparities}};
    write_text(out / "cost_volume.json", side.dump(2) + "\n");
    run.outputs.push_back(out / "cost_volume.pfm");
    run.outputs.push_back(out / "cost_volume.json");
  }
  double sum = 0.0;
  for (float v : d.data()) sum += v;
  run.summary = {{"units", "half-resolution pixels (multiply by 2 for full resolution)"},
                 {"width", d.width()},
                 {"height", d.height()},
                 {"mean_disparity", sum / static_cast<double>(d.size())}};
}

// -------------------------------------------------------------- segment

struct SegmentArgs {
  std::string frame, out, mode = "classical", weights;
  std::uint64_t weights_seed = 0;
  SegmentFlags flags;
};

void run_segment(Run& run, const SegmentArgs& a) {
  const SegmentConfig cfg = final_segment_config(run, a.flags);
  if (a.mode == "classical" && !a.weights.empty()) throw UsageError("--weights needs --mode learned-toy");
  DisparityAxis axis;
  const DPFrame frame = load_input_frame(a.frame, axis);
  run.config = {{"segment", json::parse(segment_config_to_json(cfg))}, {"mode", a.mode}, {"frame", a.frame}};
  const fs::path out(a.out);

  if (a.mode == "classical") {
    Timer t;
    const MaskImage mask = segment_fence(frame, cfg);
    run.timings["segment"] = t.ms();
    fs::create_directories(out);
    save_png(orient(mask, axis), out / "mask.png", PngDepth::k8);
    run.outputs = {out / "mask.png"};
    run.summary = {{"mask_coverage", mask_coverage(mask)}};
    return;
  }

  // learned-toy: untrained forward pass; a shape and plumbing check only.
  const FreqDPWeights w = a.weights.empty() ? FreqDPWeights::random(a.weights_seed) : load_freqdp_weights(a.weights);
  run.config["weights"] = a.weights.empty() ? json({{"random_seed", a.weights_seed}}) : json(a.weights);
  Timer t;
  const DPFrame padded{pad_to_multiple(frame.left, 8), pad_to_multiple(frame.right, 8),
                       pad_to_multiple(frame.combined, 8)};
  const DisparityEstimate est = estimate_disparity(padded.left, padded.right, cfg.cost);
  const Image soft_full = freqdp_forward(padded.combined, disp_pyramid(est), w);
  const Image soft = crop(soft_full, 0, 0, frame.width(), frame.height());
  const MaskImage mask = threshold_mask(soft, 0.5f);
  run.timings["forward"] = t.ms();
  fs::create_directories(out);
  save_pfm(orient(soft, axis), out / "soft_mask.pfm");
  save_png(orient(mask, axis), out / "mask.png", PngDepth::k8);
  if (a.weights.empty()) {
    save_freqdp_weights(w, out / "weights");
    collect_files(out / "weights", run.outputs, {});
  }
  run.outputs.insert(run.outputs.begin(), {out / "soft_mask.pfm", out / "mask.png"});
  run.summary = {{"mask_coverage", mask_coverage(mask)}, {"note", "untrained weights; output is not a fence mask"}};
}

// --------------------------------------------------------------- remove

struct RemoveArgs {
  std::string frame, out;
  SegmentFlags flags;
};

void run_remove(Run& run, const RemoveArgs& a) {
  const SegmentConfig cfg = final_segment_config(run, a.flags);
  DisparityAxis axis;
  const DPFrame frame = load_input_frame(a.frame, axis);
  run.config = {{"segment", json::parse(segment_config_to_json(cfg))}, {"frame", a.frame}};
  Timer t_seg;
  const MaskImage seg = segment_fence(frame, cfg);
  run.timings["segment"] = t_seg.ms();
  const MaskImage mask = dilate_mask(seg, cfg.radius);
  if (mask_coverage(mask) >= 1.0) throw std::runtime_error("mask covers the whole frame; nothing to fill from");
  Timer t_fill;
  const Image restored = inpaint(frame.combined, mask);
  run.timings["inpaint"] = t_fill.ms();
  const fs::path out(a.out);
  fs::create_directories(out);
  save_png(orient(mask, axis), out / "mask.png", PngDepth::k8);
  save_png(orient(restored, axis), out / "restored.png");
  run.outputs = {out / "mask.png", out / "restored.png"};
  run.summary = {{"mask_coverage", mask_coverage(mask)}, {"segment_coverage", mask_coverage(seg)}};
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
  std::string manifest, pred, out;
};

int run_eval(Run& run, const EvalArgs& a) {
  if (!fs::is_regular_file(a.manifest)) throw UsageError("--manifest " + a.manifest + " is not a file");
  if (!fs::is_directory(a.pred)) throw UsageError("--pred " + a.pred + " is not a directory");
  run.config = {{"manifest", a.manifest}, {"pred", a.pred}};
  Timer t;
  const EvalReport rep = evaluate_dataset(a.manifest, a.pred);
  run.timings["evaluate"] = t.ms();
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, rep.to_json());
  run.outputs = {out};
  std::cout << rep.to_table();
  run.summary = {{"n_evaluated", rep.samples.size()},
                 {"errors", rep.errors.size()},
                 {"mean_f1", rep.mean_seg.f1},
                 {"mean_psnr", rep.mean_psnr},
                 {"mean_ssim", rep.mean_ssim}};
  for (const auto& e : rep.errors) std::cerr << "dpfence eval: " << e << "\n";
  return rep.ok() ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------- psf-preview

struct PsfArgs {
  double alpha = 4.0;
  std::string out;
  int scale = 8;
  std::string grid_left, grid_right;
  double alpha_ref = 4.0;
};

void run_psf_preview(Run& run, const PsfArgs& a) {
  if (!(a.alpha >= 0.0)) throw UsageError("--alpha must be >= 0");
  if (a.scale < 1 || a.scale > 64) throw UsageError("--scale must be in [1, 64]");
  if (a.grid_left.empty() != a.grid_right.empty()) throw UsageError("--grid-left and --grid-right go together");
  if (!a.grid_left.empty() && !(a.alpha_ref > 0.0)) throw UsageError("--alpha-ref must be positive");
  run.config = {{"alpha", a.alpha}, {"scale", a.scale}};
  DPKernels k;
  if (a.grid_left.empty()) {
    k = make_dp_psf_pair(a.alpha);
    run.config["model"] = "parametric";
  } else {
    // Centre cell of measured grids, rescaled to the requested blur.
    const PSFGrid gl = scale_psf_grid(load_psf_grid(a.grid_left), a.alpha / a.alpha_ref);
    const PSFGrid gr = scale_psf_grid(load_psf_grid(a.grid_right), a.alpha / a.alpha_ref);
    const PSFGrid gc = combine_grids(gl, gr);
    const int r = gl.rows / 2;
    const int c = gl.cols / 2;
    const int rad = gc.radius();
    k = {gl.cell(r, c).padded_to(rad), gr.cell(r, c).padded_to(rad), gc.cell(r, c)};
    run.config["model"] = {{"grid_left", a.grid_left}, {"grid_right", a.grid_right}, {"alpha_ref", a.alpha_ref}};
  }
  double peak = 0.0;
  for (const PSFKernel* p : {&k.left, &k.right, &k.combined})
    for (float v : p->taps()) peak = std::max(peak, static_cast<double>(v));
  const fs::path out(a.out);
  fs::create_directories(out);
  save_png(heatmap(k.left, peak, a.scale), out / "k_L.png", PngDepth::k8);
  save_png(heatmap(k.right, peak, a.scale), out / "k_R.png", PngDepth::k8);
  save_png(heatmap(k.combined, peak, a.scale), out / "k_C.png", PngDepth::k8);
  run.outputs = {out / "k_L.png", out / "k_R.png", out / "k_C.png"};
  run.summary = {{"radius", k.combined.radius()},
                 {"expected_disparity", expected_disparity(k.left, k.right)},
                 {"peak_tap", peak},
                 {"heatmap", "shared scale across the three kernels; each tap drawn as scale x scale pixels"}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-pixel fence segmentation and removal toolkit"};
  app.set_version_flag("--version", DPFENCE_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  Run run;
  for (int i = 0; i < argc; ++i) run.argv.emplace_back(argv[i]);
  std::optional<int> threads;
  std::string report;
  app.add_option("--threads", threads, "Thread cap (default: DP_DEFENCE_THREADS, then all cores)");
  app.add_option("--config", run.config_path, "JSON config: {threads, synth: {...}, segment: {...}}")
      ->check(CLI::ExistingFile);
  app.add_option("--report", report, "Run report path (default: run_report.json in the output directory)");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic occluded dual-pixel dataset");
  s->add_option("--clean", synth.clean_dir, "Directory of clean frame directories (default: procedural scenes)");
  s->add_option("--assets", synth.assets_dir, "Directory of <name>.png + <name>_mask.png fences (default: procedural)");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--n", synth.n, "Number of samples")->required();
  s->add_option("--seed", synth.seed, "Base seed");
  s->add_flag("--patches", synth.patches, "Also write patch crops");
  s->add_option("--patch", synth.patch, "Patch size");
  s->add_option("--stride", synth.stride, "Patch stride (0: calibrate)");
  s->add_option("--width", synth.width, "Procedural frame width");
  s->add_option("--height", synth.height, "Procedural frame height");
  s->add_option("--procedural-frames", synth.procedural_frames, "Number of procedural clean frames")
      ->check(CLI::PositiveNumber);
  s->add_option("--procedural-assets", synth.procedural_assets, "Number of procedural fences")
      ->check(CLI::PositiveNumber);
  s->add_option("--depth-min", synth.depth_min, "Nearest fence depth (m)");
  s->add_option("--depth-max", synth.depth_max, "Farthest fence depth (m)");
  s->add_option("--psf-left", synth.psf_left, "Measured left PSF grid file");
  s->add_option("--psf-right", synth.psf_right, "Measured right PSF grid file");

  DisparityArgs disp;
  auto* d = app.add_subcommand("disparity", "Estimate half-resolution defocus disparity");
  d->add_option("--frame", disp.frame, "Frame directory")->required();
  d->add_option("--out", disp.out, "Output directory")->required();
  d->add_option("--dmax", disp.dmax, "Largest disparity (half-resolution px)");
  d->add_option("--step", disp.step, "Disparity step");
  d->add_option("--aggregation", disp.aggregation, "Aggregation window (odd)");
  d->add_flag("--dump-volume", disp.dump_volume, "Also write the aggregated cost volume");

  SegmentArgs seg;
  auto* g = app.add_subcommand("segment", "Predict a fence mask");
  g->add_option("--frame", seg.frame, "Frame directory")->required();
  g->add_option("--out", seg.out, "Output directory")->required();
  g->add_option("--mode", seg.mode, "classical | learned-toy")->check(CLI::IsMember({"classical", "learned-toy"}));
  g->add_option("--weights", seg.weights, "learned-toy weights directory (default: random)");
  g->add_option("--weights-seed", seg.weights_seed, "Seed for random learned-toy weights");
  seg.flags.add(g);

  RemoveArgs rem;
  auto* r = app.add_subcommand("remove", "Segment the fence and fill it in");
  r->add_option("--frame", rem.frame, "Frame directory")->required();
  r->add_option("--out", rem.out, "Output directory")->required();
  rem.flags.add(r);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predictions against a synthetic dataset");
  e->add_option("--manifest", ev.manifest, "manifest.json")->required();
  e->add_option("--pred", ev.pred, "Directory with <id>/mask.png and <id>/restored.png")->required();
  e->add_option("--out", ev.out, "Report JSON path")->required();

  PsfArgs psf;
  auto* p = app.add_subcommand("psf-preview", "Render the dual-pixel kernels as heatmaps");
  p->add_option("--alpha", psf.alpha, "Blur scale (px)")->required();
  p->add_option("--out", psf.out, "Output directory")->required();
  p->add_option("--scale", psf.scale, "Pixels per tap");
  p->add_option("--grid-left", psf.grid_left, "Measured left grid file");
  p->add_option("--grid-right", psf.grid_right, "Measured right grid file");
  p->add_option("--alpha-ref", psf.alpha_ref, "Blur scale the grids were measured at");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::map<CLI::App*, std::string> names{{s, "synth"}, {d, "disparity"}, {g, "segment"},
                                               {r, "remove"}, {e, "eval"},      {p, "psf-preview"}};
  CLI::App* sub = app.get_subcommands().front();
  run.subcommand = names.at(sub);
  run.threads_flag = threads;
  const std::string out_arg = sub == s ? synth.out : sub == d ? disp.out : sub == g ? seg.out
                              : sub == r ? rem.out : sub == e ? ev.out : psf.out;
  if (sub == e) {
    const fs::path o(out_arg);
    run.output_root = o.has_parent_path() ? o.parent_path() : fs::path(".");
    run.report_path = report.empty() ? run.output_root / (o.stem().string() + ".run_report.json") : fs::path(report);
  } else {
    run.output_root = out_arg;
    run.report_path = report.empty() ? run.output_root / "run_report.json" : fs::path(report);
  }

  int code = kExitOk;
  try {
    run.file = load_file_config(run.config_path);
    run.resolve_threads();
    Timer total;
    if (sub == s) run_synth(run, synth);
    else if (sub == d) run_disparity(run, disp);
    else if (sub == g) run_segment(run, seg);
    else if (sub == r) run_remove(run, rem);
    else if (sub == e) code = run_eval(run, ev);
    else run_psf_preview(run, psf);
    run.timings["total"] = total.ms();
    if (run.report_path.has_parent_path()) fs::create_directories(run.report_path.parent_path());
    run.write_report();
  } catch (const UsageError& err) {
    std::cerr << "dpfence " << run.subcommand << ": " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "dpfence " << run.subcommand << ": " << err.what() << "\n";
    return kExitFailure;
  }
  return code;
}
