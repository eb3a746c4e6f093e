#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace issm {

// Row-major raster. Channels are interleaved.
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, int c = 1, T fill = T{})
        : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {}

    T& at(int x, int y, int c = 0) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    const T& at(int x, int y, int c = 0) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    size_t pixels() const { return static_cast<size_t>(width) * height; }
    bool same_size(const Image& o) const { return width == o.width && height == o.height; }
};

using ImageU8 = Image<uint8_t>;
using ImageF = Image<double>;

// Lossless 8-bit PNG, RGB (channels == 3) or grayscale (channels == 1).
void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

// Converts RGB8 to a float image with values in [0,1].
ImageF to_float(const ImageU8& img);
ImageU8 to_u8(const ImageF& img);

}  // namespace issm
