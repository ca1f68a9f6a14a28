#include "dpfence/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace dpfence::fft {

namespace {

enum class Kind { kR2C1, kC2R1, kR2C2, kC2R2 };

fftw_plan get_plan(Kind kind, int h, int w) {
  static std::mutex mutex;
  static std::map<std::tuple<Kind, int, int>, fftw_plan> cache;
  std::lock_guard lock(mutex);
  const auto key = std::make_tuple(kind, h, w);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const std::size_t real_n = static_cast<std::size_t>(h) * w;
  const std::size_t cplx_n = static_cast<std::size_t>(h) * (w / 2 + 1);
  double* r = fftw_alloc_real(real_n);
  fftw_complex* c = fftw_alloc_complex(cplx_n);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  fftw_plan plan = nullptr;
  switch (kind) {
    case Kind::kR2C1: plan = fftw_plan_dft_r2c_1d(w, r, c, flags); break;
    case Kind::kC2R1: plan = fftw_plan_dft_c2r_1d(w, c, r, flags); break;
    case Kind::kR2C2: plan = fftw_plan_dft_r2c_2d(h, w, r, c, flags); break;
    case Kind::kC2R2: plan = fftw_plan_dft_c2r_2d(h, w, c, r, flags); break;
  }
  fftw_free(r);
  fftw_free(c);
  if (!plan) throw std::runtime_error("FFTW planning failed");
  cache.emplace(key, plan);
  return plan;
}

void check(std::size_t got, std::size_t want, const char* what) {
  if (got != want) throw std::invalid_argument(std::string("fft: bad buffer size for ") + what);
}

auto* as_fftw(Complex* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace

void rfft(std::span<const double> in, std::span<Complex> out) {
  const int n = static_cast<int>(in.size());
  check(out.size(), n / 2 + 1, "rfft");
  std::vector<double> src(in.begin(), in.end());
  fftw_execute_dft_r2c(get_plan(Kind::kR2C1, 1, n), src.data(), as_fftw(out.data()));
}

void irfft(std::span<const Complex> in, std::span<double> out) {
  const int n = static_cast<int>(out.size());
  check(in.size(), n / 2 + 1, "irfft");
  std::vector<Complex> src(in.begin(), in.end());
  fftw_execute_dft_c2r(get_plan(Kind::kC2R1, 1, n), as_fftw(src.data()), out.data());
  const double s = 1.0 / n;
  for (double& v : out) v *= s;
}

void rfft2(int height, int width, std::span<const double> in, std::span<Complex> out) {
  check(in.size(), static_cast<std::size_t>(height) * width, "rfft2 input");
  check(out.size(), static_cast<std::size_t>(height) * (width / 2 + 1), "rfft2 output");
  std::vector<double> src(in.begin(), in.end());
  fftw_execute_dft_r2c(get_plan(Kind::kR2C2, height, width), src.data(), as_fftw(out.data()));
}

void irfft2(int height, int width, std::span<const Complex> in, std::span<double> out) {
  check(out.size(), static_cast<std::size_t>(height) * width, "irfft2 output");
  check(in.size(), static_cast<std::size_t>(height) * (width / 2 + 1), "irfft2 input");
  std::vector<Complex> src(in.begin(), in.end());
  fftw_execute_dft_c2r(get_plan(Kind::kC2R2, height, width), as_fftw(src.data()), out.data());
  const double s = 1.0 / (static_cast<double>(height) * width);
  for (double& v : out) v *= s;
}

}  // namespace dpfence::fft
