#include "dpfence/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <csetjmp>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace dpfence {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

void png_error_handler(png_structp png, png_const_charp msg) {
  auto* slot = static_cast<std::string*>(png_get_error_ptr(png));
  if (slot) *slot = msg;
  png_longjmp(png, 1);
}
void png_warning_handler(png_structp, png_const_charp) {}

struct DecodedPng {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
  int depth = 0;
  std::vector<unsigned char> buffer;
};

// libpng reports errors by longjmp; no object with a destructor is created
// between setjmp and the libpng calls in this frame.
bool decode_png(std::FILE* f, DecodedPng& out, std::string& error) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_handler,
                                           png_warning_handler);
  if (!png) {
    error = "png_create_read_struct failed";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type != PNG_COLOR_TYPE_PALETTE && bit_depth != 8 && bit_depth != 16) {
    error = "unsupported PNG bit depth " + std::to_string(bit_depth);
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_read_update_info(png, info);

  out.channels = png_get_channels(png, info);
  out.depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  out.buffer.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (png_uint_32 y = 0; y < out.height; ++y) rows[y] = out.buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode_png(std::FILE* f, const Image& img, int bits, std::string& error) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_error_handler,
                                            png_warning_handler);
  if (!png) {
    error = "png_create_write_struct failed";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  const int channels = img.channels();
  const std::size_t bytes_per_sample = bits / 8;
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width()) * channels * bytes_per_sample);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, img.width(), img.height(), bits,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bits == 16 && std::endian::native == std::endian::little) png_set_swap(png);

  const double maxv = bits == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < channels; ++c) {
        const double v = std::clamp(static_cast<double>(img.at(c, y, x)), 0.0, 1.0);
        const auto q = static_cast<std::uint32_t>(std::lround(v * maxv));
        const std::size_t k = static_cast<std::size_t>(x) * channels + c;
        if (bits == 16) {
          const auto s = static_cast<std::uint16_t>(q);
          std::memcpy(row.data() + 2 * k, &s, 2);
        } else {
          row[k] = static_cast<unsigned char>(q);
        }
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

Image load_png(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("not a PNG file: " + path.string());
  }
  DecodedPng png;
  std::string error;
  if (!decode_png(f.get(), png, error)) throw IoError(error + ": " + path.string());
  if (png.width == 0 || png.height == 0) throw IoError("PNG has zero dimension: " + path.string());
  if (png.channels != 1 && png.channels != 3) throw IoError("unsupported PNG channel layout");

  const int channels = png.channels;
  const std::size_t rowbytes = png.buffer.size() / png.height;
  Image img(static_cast<int>(png.width), static_cast<int>(png.height), channels);
  const double scale = png.depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
  for (png_uint_32 y = 0; y < png.height; ++y) {
    const unsigned char* row = png.buffer.data() + y * rowbytes;
    for (png_uint_32 x = 0; x < png.width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t k = static_cast<std::size_t>(x) * channels + c;
        double v;
        if (png.depth == 16) {
          std::uint16_t s;
          std::memcpy(&s, row + 2 * k, 2);
          v = s;
        } else {
          v = row[k];
        }
        img.at(c, static_cast<int>(y), static_cast<int>(x)) = static_cast<float>(v * scale);
      }
    }
  }
  return img;
}

void save_png(const Image& img, const fs::path& path, PngDepth depth) {
  if (img.empty()) throw IoError("cannot save an empty image");
  FilePtr f = open_file(path, "wb");
  std::string error;
  if (!encode_png(f.get(), img, static_cast<int>(depth), error)) {
    throw IoError(error + ": " + path.string());
  }
}

Tensor load_pfm_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int width = 0;
  int height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  if (!in || (magic != "Pf" && magic != "PF")) throw IoError("malformed PFM header: " + path.string());
  if (width <= 0 || height <= 0 || scale == 0.0 || !std::isfinite(scale)) {
    throw IoError("malformed PFM header values: " + path.string());
  }
  in.get();  // single whitespace after the scale
  const int channels = magic == "PF" ? 3 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  std::vector<std::uint32_t> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * 4));
  if (static_cast<std::size_t>(in.gcount()) != count * 4) {
    throw IoError("truncated PFM payload: " + path.string());
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError("PFM payload longer than header declares (channel/header mismatch): " +
                  path.string());
  }
  const bool little = scale < 0.0;
  const bool swap = little != (std::endian::native == std::endian::little);
  Tensor t(channels, height, width);
  for (int row = 0; row < height; ++row) {
    const int y = height - 1 - row;
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        std::uint32_t bits = raw[(static_cast<std::size_t>(row) * width + x) * channels + c];
        if (swap) bits = __builtin_bswap32(bits);
        t.at(c, y, x) = std::bit_cast<float>(bits);
      }
    }
  }
  return t;
}

void save_pfm(const Tensor& t, const fs::path& path) {
  if (t.channels() != 1 && t.channels() != 3) {
    throw IoError("PFM holds 1 or 3 channels, got " + std::to_string(t.channels()));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out << (t.channels() == 3 ? "PF" : "Pf") << '\n' << t.width() << ' ' << t.height() << '\n';
  out << (std::endian::native == std::endian::little ? "-1.0" : "1.0") << '\n';
  std::vector<float> row(static_cast<std::size_t>(t.width()) * t.channels());
  for (int y = t.height() - 1; y >= 0; --y) {
    for (int x = 0; x < t.width(); ++x)
      for (int c = 0; c < t.channels(); ++c) row[static_cast<std::size_t>(x) * t.channels() + c] = t.at(c, y, x);
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Image load_pfm(const fs::path& path) { return Image::from_tensor(load_pfm_tensor(path)); }

void save_pfm(const Image& img, const fs::path& path) { save_pfm(img.tensor(), path); }

DPFrame load_frame(const fs::path& dir, DisparityAxis* axis_out) {
  DisparityAxis axis = DisparityAxis::kHorizontal;
  const fs::path meta = dir / "frame.json";
  if (fs::exists(meta)) {
    std::ifstream in(meta);
    const auto j = nlohmann::json::parse(in);
    const std::string a = j.value("disparity_axis", "horizontal");
    if (a == "vertical") {
      axis = DisparityAxis::kVertical;
    } else if (a != "horizontal") {
      throw IoError("frame.json: disparity_axis must be horizontal or vertical");
    }
  }
  DPFrame frame;
  frame.left = load_png(dir / "left.png");
  frame.right = load_png(dir / "right.png");
  frame.combined = load_png(dir / "combined.png");
  if (frame.left.channels() == 3) frame.left = green_channel(frame.left);
  if (frame.right.channels() == 3) frame.right = green_channel(frame.right);
  if (frame.combined.channels() == 1) frame.combined = replicate_to_rgb(frame.combined);
  if (axis == DisparityAxis::kVertical) {
    frame.left = transpose(frame.left);
    frame.right = transpose(frame.right);
    frame.combined = transpose(frame.combined);
  }
  frame.validate();
  if (axis_out) *axis_out = axis;
  return frame;
}

void save_frame(const DPFrame& frame, const fs::path& dir, DisparityAxis axis) {
  frame.validate();
  fs::create_directories(dir);
  const bool vertical = axis == DisparityAxis::kVertical;
  save_png(vertical ? transpose(frame.left) : frame.left, dir / "left.png");
  save_png(vertical ? transpose(frame.right) : frame.right, dir / "right.png");
  save_png(vertical ? transpose(frame.combined) : frame.combined, dir / "combined.png");
  if (vertical) {
    std::ofstream out(dir / "frame.json");
    out << nlohmann::json{{"disparity_axis", "vertical"}}.dump(2) << '\n';
  }
}

}  // namespace dpfence
