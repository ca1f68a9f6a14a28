#pragma once

#include <complex>
#include <span>

namespace dpfence::fft {

using Complex = std::complex<double>;

// Thin FFTW wrapper. Plans are cached per size for the process lifetime;
// the transforms themselves are safe to call from OpenMP threads.

// Length-n real input to n/2+1 half-spectrum bins (unnormalized).
void rfft(std::span<const double> in, std::span<Complex> out);
// Inverse of rfft, scaled by 1/n so irfft(rfft(x)) == x.
void irfft(std::span<const Complex> in, std::span<double> out);

// Row-major height x width real input to height x (width/2+1) bins.
void rfft2(int height, int width, std::span<const double> in, std::span<Complex> out);
// Inverse of rfft2, scaled by 1/(height*width).
void irfft2(int height, int width, std::span<const Complex> in, std::span<double> out);

}  // namespace dpfence::fft
