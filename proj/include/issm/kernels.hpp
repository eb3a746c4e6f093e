#pragma once

#include "issm/image.hpp"

#include <array>
#include <utility>

namespace issm {

// Execution backend for the data-parallel kernels. Every parallel kernel has
// a serial twin producing identical output; tests compare them and the
// bench_kernels tool times them.
enum class Backend { Serial, OpenMP };

Backend default_backend();
void set_default_backend(Backend b);

// 3x3 convolution with replicate-edge padding, kernel in row-major order.
void convolve3x3(const ImageF& src, const std::array<double, 9>& kernel, ImageF& dst,
                 Backend backend);

// Separable Gaussian blur with replicate-edge padding. sigma == 0 is a copy.
void gaussian_blur(const ImageF& src, double sigma, ImageF& dst, Backend backend);

// Normalized cross-correlation of an RGB (or grayscale) template against a
// search region of the same channel count. Response map has size
// (search.w - tmpl.w + 1) x (search.h - tmpl.h + 1); per-channel maps are
// averaged. Zero-variance windows or templates score 0. The template may be
// the same size as the search region (1x1 response).
ImageF ncc_response(const ImageF& tmpl, const ImageF& search, Backend backend);

struct NccPeak {
    double value = 0;
    int x = 0, y = 0;  // top-left of the best window within the search region
};
NccPeak ncc_peak(const ImageF& response);

}  // namespace issm
