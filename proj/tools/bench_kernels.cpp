// Compares the serial reference kernels against their OpenMP twins.

#include "issm/kernels.hpp"
#include "issm/segmentation.hpp"
#include "issm/synth.hpp"

#include <chrono>
#include <cstdio>
#include <random>

using namespace issm;

namespace {

double time_ms(int repeats, auto&& body) {
    double best = 1e30;
    for (int i = 0; i < repeats; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        body();
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        best = std::min(best, ms);
    }
    return best;
}

void report(const char* name, double serial_ms, double omp_ms) {
    std::printf("%-24s serial %9.3f ms   openmp %9.3f ms   speedup %5.2fx\n", name, serial_ms,
                omp_ms, serial_ms / omp_ms);
}

}  // namespace

int main() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    {
        ImageF field(512, 512, 1);
        for (double& v : field.data) v = u(rng);
        const auto kernel = MrfKernel::make().lambda;
        ImageF out;
        const double s = time_ms(20, [&] { convolve3x3(field, kernel, out, Backend::Serial); });
        const double p = time_ms(20, [&] { convolve3x3(field, kernel, out, Backend::OpenMP); });
        report("convolve3x3 512x512", s, p);
    }
    {
        ImageF field(1278, 958, 1);
        for (double& v : field.data) v = u(rng);
        ImageF out;
        const double s = time_ms(10, [&] { gaussian_blur(field, 2.0, out, Backend::Serial); });
        const double p = time_ms(10, [&] { gaussian_blur(field, 2.0, out, Backend::OpenMP); });
        report("gaussian_blur 1278x958", s, p);
    }
    {
        ImageF tmpl(31, 31, 3), search(161, 161, 3);
        for (double& v : tmpl.data) v = u(rng);
        for (double& v : search.data) v = u(rng);
        const double s = time_ms(5, [&] { ncc_response(tmpl, search, Backend::Serial); });
        const double p = time_ms(5, [&] { ncc_response(tmpl, search, Backend::OpenMP); });
        report("ncc 31x31 in 161x161", s, p);
    }
    {
        SceneSpec spec;
        spec.width = 400;
        spec.height = 300;
        FrameGroundTruth gt;
        const ImageF img = to_float(render_frame(spec, 0, 0, gt));
        const FeatureImage feats = FeatureImage::from_image(img, 50, 50);
        const auto masks =
            build_conditional_priors(rescale_horizon(gt.horizon, 50.0 / 400, 50.0 / 300), 50, 50,
                                     2.0, 25.0, Backend::Serial);
        const auto hyp = build_hyper_priors(gt.horizon, 300, HyperPriorSet::default_template());
        const MrfKernel kernel = MrfKernel::make();
        EmOptions opts;
        opts.backend = Backend::Serial;
        const double s =
            time_ms(5, [&] { em_fit(feats, masks, hyp, std::nullopt, kernel, opts); });
        opts.backend = Backend::OpenMP;
        const double p =
            time_ms(5, [&] { em_fit(feats, masks, hyp, std::nullopt, kernel, opts); });
        report("em_fit 50x50", s, p);
    }
    return 0;
}
