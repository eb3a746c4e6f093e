#include "issm/kernels.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace issm;

namespace {

ImageF random_image(int w, int h, int c, uint64_t seed) {
    ImageF img(w, h, c);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : img.data) v = u(rng);
    return img;
}

// Brute-force O(n^4) NCC oracle, one channel at a time, naive double sums.
ImageF ncc_oracle(const ImageF& tmpl, const ImageF& search) {
    const int ow = search.width - tmpl.width + 1;
    const int oh = search.height - tmpl.height + 1;
    const int n = tmpl.width * tmpl.height;
    ImageF out(ow, oh, 1);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            double acc = 0;
            for (int c = 0; c < tmpl.channels; ++c) {
                double mt = 0, mw = 0;
                for (int y = 0; y < tmpl.height; ++y)
                    for (int x = 0; x < tmpl.width; ++x) {
                        mt += tmpl.at(x, y, c);
                        mw += search.at(ox + x, oy + y, c);
                    }
                mt /= n;
                mw /= n;
                double num = 0, dt = 0, dw = 0;
                for (int y = 0; y < tmpl.height; ++y)
                    for (int x = 0; x < tmpl.width; ++x) {
                        const double a = tmpl.at(x, y, c) - mt;
                        const double b = search.at(ox + x, oy + y, c) - mw;
                        num += a * b;
                        dt += a * a;
                        dw += b * b;
                    }
                const double denom = std::sqrt(dt * dw);
                acc += denom > 1e-12 ? num / denom : 0.0;
            }
            out.at(ox, oy) = acc / tmpl.channels;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("convolve3x3 serial equals OpenMP bit for bit") {
    const ImageF src = random_image(97, 61, 1, 1);
    const std::array<double, 9> k = {0.1, -0.2, 0.3, 0.4, 0.5, -0.6, 0.7, 0.8, -0.9};
    ImageF a, b;
    convolve3x3(src, k, a, Backend::Serial);
    convolve3x3(src, k, b, Backend::OpenMP);
    REQUIRE(a.same_size(b));
    CHECK(a.data == b.data);
}

TEST_CASE("convolve3x3 identity kernel copies, constant image is a fixed point") {
    const ImageF src = random_image(20, 15, 1, 2);
    std::array<double, 9> ident{};
    ident[4] = 1.0;
    ImageF out;
    convolve3x3(src, ident, out, Backend::Serial);
    CHECK(out.data == src.data);

    ImageF flat(10, 10, 1);
    for (auto& v : flat.data) v = 0.25;
    std::array<double, 9> box;
    box.fill(1.0 / 9.0);
    convolve3x3(flat, box, out, Backend::Serial);
    for (double v : out.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("convolve3x3 interior pixel matches the direct sum") {
    const ImageF src = random_image(9, 9, 1, 3);
    const std::array<double, 9> k = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    ImageF out;
    convolve3x3(src, k, out, Backend::Serial);
    double want = 0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) want += k[(dy + 1) * 3 + (dx + 1)] * src.at(4 + dx, 4 + dy);
    CHECK(out.at(4, 4) == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("gaussian_blur serial equals OpenMP, preserves constants") {
    const ImageF src = random_image(120, 80, 1, 4);
    ImageF a, b;
    gaussian_blur(src, 2.0, a, Backend::Serial);
    gaussian_blur(src, 2.0, b, Backend::OpenMP);
    CHECK(a.data == b.data);

    ImageF flat(30, 30, 1);
    for (auto& v : flat.data) v = 0.7;
    gaussian_blur(flat, 3.0, a, Backend::Serial);
    for (double v : a.data) CHECK(v == doctest::Approx(0.7).epsilon(1e-5));

    // sigma == 0 copies.
    gaussian_blur(src, 0.0, a, Backend::Serial);
    CHECK(a.data == src.data);
}

TEST_CASE("ncc_response matches the brute-force oracle") {
    for (int channels : {1, 3}) {
        const ImageF tmpl = random_image(7, 5, channels, 10 + channels);
        const ImageF search = random_image(23, 19, channels, 20 + channels);
        const ImageF fast = ncc_response(tmpl, search, Backend::Serial);
        const ImageF want = ncc_oracle(tmpl, search);
        REQUIRE(fast.same_size(want));
        for (size_t i = 0; i < fast.data.size(); ++i)
            CHECK(std::abs(fast.data[i] - want.data[i]) < 1e-10);
    }
}

TEST_CASE("ncc_response serial equals OpenMP bit for bit") {
    const ImageF tmpl = random_image(11, 9, 3, 31);
    const ImageF search = random_image(64, 48, 3, 32);
    const ImageF a = ncc_response(tmpl, search, Backend::Serial);
    const ImageF b = ncc_response(tmpl, search, Backend::OpenMP);
    CHECK(a.data == b.data);
}

TEST_CASE("exact copy of the template peaks at 1 at the right offset") {
    ImageF search = random_image(40, 30, 3, 7);
    ImageF tmpl(9, 7, 3);
    const int px = 13, py = 11;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < tmpl.height; ++y)
            for (int x = 0; x < tmpl.width; ++x) tmpl.at(x, y, c) = search.at(px + x, py + y, c);
    const NccPeak peak = ncc_peak(ncc_response(tmpl, search, Backend::Serial));
    CHECK(peak.value == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(peak.x == px);
    CHECK(peak.y == py);
}

TEST_CASE("photometric negation scores -1") {
    const ImageF tmpl = random_image(8, 8, 1, 55);
    ImageF search(8, 8, 1);
    for (size_t i = 0; i < tmpl.data.size(); ++i) search.data[i] = 1.0 - tmpl.data[i];
    const ImageF resp = ncc_response(tmpl, search, Backend::Serial);
    REQUIRE(resp.data.size() == 1);
    CHECK(resp.data[0] == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("zero-variance windows score exactly 0") {
    ImageF tmpl(5, 5, 1);
    for (auto& v : tmpl.data) v = 0.5;
    const ImageF search = random_image(15, 15, 1, 77);
    const ImageF resp = ncc_response(tmpl, search, Backend::Serial);
    for (double v : resp.data) CHECK(v == 0.0);
}

TEST_CASE("ncc is invariant to affine photometric changes of the window") {
    const ImageF tmpl = random_image(6, 6, 1, 99);
    ImageF search(6, 6, 1);
    for (size_t i = 0; i < tmpl.data.size(); ++i) search.data[i] = 0.4 * tmpl.data[i] + 0.3;
    const ImageF resp = ncc_response(tmpl, search, Backend::Serial);
    CHECK(resp.data[0] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("default backend is settable") {
    const Backend before = default_backend();
    set_default_backend(Backend::Serial);
    CHECK(default_backend() == Backend::Serial);
    set_default_backend(before);
}
