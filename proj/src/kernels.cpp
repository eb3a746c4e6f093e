#include "issm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace issm {

namespace {
Backend g_backend = Backend::OpenMP;
}

Backend default_backend() { return g_backend; }
void set_default_backend(Backend b) { g_backend = b; }

void convolve3x3(const ImageF& src, const std::array<double, 9>& kernel, ImageF& dst,
                 Backend backend) {
    if (src.channels != 1) throw std::invalid_argument("convolve3x3: single-channel input expected");
    dst = ImageF(src.width, src.height, 1);
    const int w = src.width, h = src.height;
    auto row_pass = [&](int y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                const int yy = std::clamp(y + dy, 0, h - 1);
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = std::clamp(x + dx, 0, w - 1);
                    acc += kernel[(dy + 1) * 3 + (dx + 1)] * src.at(xx, yy);
                }
            }
            dst.at(x, y) = acc;
        }
    };
    if (backend == Backend::OpenMP) {
#pragma omp parallel for schedule(static)
        for (int y = 0; y < h; ++y) row_pass(y);
    } else {
        for (int y = 0; y < h; ++y) row_pass(y);
    }
}

namespace {

std::vector<double> gaussian_taps(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> taps(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        taps[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += taps[i + radius];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

}  // namespace

void gaussian_blur(const ImageF& src, double sigma, ImageF& dst, Backend backend) {
    if (src.channels != 1) throw std::invalid_argument("gaussian_blur: single-channel input expected");
    if (sigma < 0) throw std::invalid_argument("gaussian_blur: negative sigma");
    if (sigma == 0) {
        dst = src;
        return;
    }
    const auto taps = gaussian_taps(sigma);
    const int radius = (static_cast<int>(taps.size()) - 1) / 2;
    const int w = src.width, h = src.height;
    ImageF tmp(w, h, 1);
    dst = ImageF(w, h, 1);

    auto horizontal = [&](int y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i)
                acc += taps[i + radius] * src.at(std::clamp(x + i, 0, w - 1), y);
            tmp.at(x, y) = acc;
        }
    };
    auto vertical = [&](int y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i)
                acc += taps[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1));
            dst.at(x, y) = acc;
        }
    };
    if (backend == Backend::OpenMP) {
#pragma omp parallel for schedule(static)
        for (int y = 0; y < h; ++y) horizontal(y);
#pragma omp parallel for schedule(static)
        for (int y = 0; y < h; ++y) vertical(y);
    } else {
        for (int y = 0; y < h; ++y) horizontal(y);
        for (int y = 0; y < h; ++y) vertical(y);
    }
}

ImageF ncc_response(const ImageF& tmpl, const ImageF& search, Backend backend) {
    if (tmpl.channels != search.channels)
        throw std::invalid_argument("ncc_response: channel mismatch");
    if (tmpl.width > search.width || tmpl.height > search.height)
        throw std::invalid_argument("ncc_response: template larger than search region");
    const int C = tmpl.channels;
    const int tw = tmpl.width, th = tmpl.height;
    const int ow = search.width - tw + 1, oh = search.height - th + 1;
    const double n = static_cast<double>(tw) * th;

    // Template statistics per channel.
    std::vector<double> tmean(C, 0.0), tnorm(C, 0.0);
    for (int c = 0; c < C; ++c) {
        double s = 0;
        for (int y = 0; y < th; ++y)
            for (int x = 0; x < tw; ++x) s += tmpl.at(x, y, c);
        tmean[c] = s / n;
        double ss = 0;
        for (int y = 0; y < th; ++y)
            for (int x = 0; x < tw; ++x) {
                const double d = tmpl.at(x, y, c) - tmean[c];
                ss += d * d;
            }
        tnorm[c] = std::sqrt(ss);
    }

    ImageF out(ow, oh, 1);
    auto window = [&](int ox, int oy) {
        double avg = 0;
        for (int c = 0; c < C; ++c) {
            double wsum = 0;
            for (int y = 0; y < th; ++y)
                for (int x = 0; x < tw; ++x) wsum += search.at(ox + x, oy + y, c);
            const double wmean = wsum / n;
            double cross = 0, wss = 0;
            for (int y = 0; y < th; ++y)
                for (int x = 0; x < tw; ++x) {
                    const double wd = search.at(ox + x, oy + y, c) - wmean;
                    cross += (tmpl.at(x, y, c) - tmean[c]) * wd;
                    wss += wd * wd;
                }
            const double denom = tnorm[c] * std::sqrt(wss);
            avg += denom > 1e-12 ? cross / denom : 0.0;
        }
        out.at(ox, oy) = avg / C;
    };
    if (backend == Backend::OpenMP) {
#pragma omp parallel for schedule(static)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) window(ox, oy);
    } else {
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) window(ox, oy);
    }
    return out;
}

NccPeak ncc_peak(const ImageF& response) {
    NccPeak peak;
    peak.value = -2.0;
    for (int y = 0; y < response.height; ++y)
        for (int x = 0; x < response.width; ++x)
            if (response.at(x, y) > peak.value) {
                peak.value = response.at(x, y);
                peak.x = x;
                peak.y = y;
            }
    return peak;
}

}  // namespace issm
