#include "issm/segmentation.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

namespace issm {

using json = nlohmann::json;

FeatureImage FeatureImage::from_image(const ImageF& rgb, int work_width, int work_height) {
    if (rgb.channels != 3) throw std::invalid_argument("FeatureImage: RGB input expected");
    FeatureImage out;
    out.width = work_width;
    out.height = work_height;
    out.features.resize(static_cast<size_t>(work_width) * work_height);
    for (int y = 0; y < work_height; ++y) {
        const int y0 = y * rgb.height / work_height;
        const int y1 = std::max(y0 + 1, (y + 1) * rgb.height / work_height);
        for (int x = 0; x < work_width; ++x) {
            const int x0 = x * rgb.width / work_width;
            const int x1 = std::max(x0 + 1, (x + 1) * rgb.width / work_width);
            double r = 0, g = 0, b = 0;
            for (int yy = y0; yy < y1; ++yy)
                for (int xx = x0; xx < x1; ++xx) {
                    r += rgb.at(xx, yy, 0);
                    g += rgb.at(xx, yy, 1);
                    b += rgb.at(xx, yy, 2);
                }
            const double n = static_cast<double>((y1 - y0) * (x1 - x0));
            Vec5 f;
            f << (x + 0.5) / work_width, (y + 0.5) / work_height, r / n, g / n, b / n;
            out.features[static_cast<size_t>(y) * work_width + x] = f;
        }
    }
    return out;
}

HyperPriorSet HyperPriorSet::default_template() {
    HyperPriorSet set;
    const double d[3] = {-0.25, 0.02, 0.35};
    const double v_var[3] = {0.01, 0.003, 0.02};
    for (int k = 0; k < 3; ++k) {
        set.components[k].displacement = d[k];
        set.components[k].mean << 0.5, 0.5 + d[k], 0.5, 0.5, 0.5;
        set.components[k].spatial_cov = Mat2::Zero();
        set.components[k].spatial_cov(0, 0) = 1.0 / 12.0;  // uniform over [0,1]
        set.components[k].spatial_cov(1, 1) = v_var[k];
    }
    return set;
}

Mat5 HyperPriorSet::precision(int k) const {
    Mat5 P = Mat5::Zero();
    P.topLeftCorner<2, 2>() = components[k].spatial_cov.inverse();
    return P;
}

MrfKernel MrfKernel::make(double sigma) {
    MrfKernel k;
    double sum = 0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            const int i = (dy + 1) * 3 + (dx + 1);
            k.lambda[i] = (dx == 0 && dy == 0)
                              ? 0.0
                              : std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
            sum += k.lambda[i];
        }
    for (double& v : k.lambda) v /= sum;
    k.lambda1 = k.lambda;
    k.lambda1[4] = 1.0;
    return k;
}

HorizonLine rescale_horizon(const HorizonLine& h, double sx, double sy) {
    HorizonLine out = h;
    if (!h.valid) return out;
    out.intercept_row = h.intercept_row * sy;
    out.gamma = std::atan(std::tan(h.gamma) * sy / sx);
    return out;
}

ConditionalPriorMasks build_conditional_priors(const HorizonLine& h, int width, int height,
                                               double blur_sigma, double ref_col, Backend backend) {
    ConditionalPriorMasks out;
    out.width = width;
    out.height = height;
    for (auto& m : out.masks) m = ImageF(width, height, 1, 1.0);
    if (!h.valid) return out;  // uninformative fallback

    ImageF water(width, height, 1), sky(width, height, 1);
    const double slope = std::tan(h.gamma);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double line_row = h.intercept_row + slope * (x - ref_col);
            const bool below = y >= line_row;
            water.at(x, y) = below ? 1.0 : 0.0;
            sky.at(x, y) = below ? 0.0 : 1.0;
        }
    if (blur_sigma > 0) {
        gaussian_blur(water, blur_sigma, out.masks[kWater], backend);
        gaussian_blur(sky, blur_sigma, out.masks[kSky], backend);
    } else {
        out.masks[kWater] = water;
        out.masks[kSky] = sky;
    }
    return out;
}

Mat2 proximal_covariance_projection(const Mat2& cov, double angle) {
    Mat2 R;
    R << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    Mat2 rotated = R * cov * R.transpose();
    rotated(0, 1) = 0;
    rotated(1, 0) = 0;
    return R.transpose() * rotated * R;
}

HyperPriorSet build_hyper_priors(const HorizonLine& h, double image_height,
                                 const HyperPriorSet& learned) {
    if (!h.valid) return learned;
    HyperPriorSet out = learned;
    const double horizon_row = h.intercept_row / image_height;
    for (int k = 0; k < 3; ++k)
        out.components[k].mean(1) = horizon_row + learned.components[k].displacement;
    out.components[kMiddle].spatial_cov =
        proximal_covariance_projection(learned.components[kMiddle].spatial_cov, h.gamma);
    return out;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct GaussianEval {
    Mat5 inv;
    double log_norm;  // log of 1 / ((2pi)^{5/2} sqrt(det))
};

GaussianEval prepare(const GaussianComponent& g, int k) {
    Eigen::SelfAdjointEigenSolver<Mat5> es(g.cov);
    if (es.info() != Eigen::Success || !es.eigenvalues().allFinite() ||
        es.eigenvalues().minCoeff() <= 0)
        throw NumericalDegeneracyError("singular covariance in component " + std::to_string(k));
    GaussianEval e;
    e.inv = g.cov.inverse();
    e.log_norm = -0.5 * (5.0 * std::log(kTwoPi) + std::log(es.eigenvalues().prod()));
    return e;
}

double eval_gaussian(const GaussianEval& e, const Vec5& mean, const Vec5& y) {
    const Vec5 d = y - mean;
    return std::exp(e.log_norm - 0.5 * d.dot(e.inv * d));
}

// Per-component scalar fields at working resolution.
using Fields = std::array<ImageF, 4>;

Fields make_fields(int w, int h) {
    Fields f;
    for (auto& img : f) img = ImageF(w, h, 1);
    return f;
}

void posterior_fields(const MixtureModel& model, const FeatureImage& img,
                      const ConditionalPriorMasks& masks, Fields& out, Backend backend) {
    std::array<GaussianEval, 3> evals;
    for (int k = 0; k < 3; ++k) evals[k] = prepare(model.components[k], k);
    const int w = img.width, h = img.height;
    auto row_pass = [&](int y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            Vec4 p;
            for (int k = 0; k < 3; ++k)
                p(k) = eval_gaussian(evals[k], model.components[k].mean, img.at(x, y)) *
                       model.priors[i](k) * masks.masks[k].at(x, y);
            p(3) = model.uniform_density * model.priors[i](3) * masks.masks[3].at(x, y);
            const double s = p.sum();
            if (s <= 0 || !std::isfinite(s))
                p.setConstant(0.25);  // all terms vanished; fall back to uniform
            else
                p /= s;
            for (int k = 0; k < 4; ++k) out[k].at(x, y) = p(k);
        }
    };
    if (backend == Backend::OpenMP) {
#pragma omp parallel for schedule(static)
        for (int y = 0; y < h; ++y) row_pass(y);
    } else {
        for (int y = 0; y < h; ++y) row_pass(y);
    }
}

// One half of the E-step: f_k -> renormalized (xi o f_k o (f_k * lambda)) * lambda1.
void smooth_fields(const Fields& f, const MrfKernel& kernel, Fields& out, Backend backend) {
    const int w = f[0].width, h = f[0].height;
    Fields conv = make_fields(w, h);
    for (int k = 0; k < 4; ++k) convolve3x3(f[k], kernel.lambda, conv[k], backend);
    Fields mixed = make_fields(w, h);
    auto combine = [&](int y) {
        for (int x = 0; x < w; ++x) {
            double norm = 0;
            for (int k = 0; k < 4; ++k) norm += f[k].at(x, y) * conv[k].at(x, y);
            const double xi = norm > 0 ? 1.0 / norm : 0.0;
            for (int k = 0; k < 4; ++k) mixed[k].at(x, y) = xi * f[k].at(x, y) * conv[k].at(x, y);
        }
    };
    if (backend == Backend::OpenMP) {
#pragma omp parallel for schedule(static)
        for (int y = 0; y < h; ++y) combine(y);
    } else {
        for (int y = 0; y < h; ++y) combine(y);
    }
    for (int k = 0; k < 4; ++k) convolve3x3(mixed[k], kernel.lambda1, out[k], backend);
    auto renorm = [&](int y) {
        for (int x = 0; x < w; ++x) {
            double s = 0;
            for (int k = 0; k < 4; ++k) s += out[k].at(x, y);
            if (s > 0)
                for (int k = 0; k < 4; ++k) out[k].at(x, y) /= s;
            else
                for (int k = 0; k < 4; ++k) out[k].at(x, y) = 0.25;
        }
    };
    if (backend == Backend::OpenMP) {
#pragma omp parallel for schedule(static)
        for (int y = 0; y < h; ++y) renorm(y);
    } else {
        for (int y = 0; y < h; ++y) renorm(y);
    }
}

void m_step(MixtureModel& model, const FeatureImage& img, const HyperPriorSet& hyp,
            const Fields& qhat, const EmOptions& opts) {
    const int w = img.width, h = img.height;
    for (int k = 0; k < 3; ++k) {
        // Fixed-order reductions keep results independent of thread count.
        double beta = 0;
        Vec5 sum_y = Vec5::Zero();
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double q = qhat[k].at(x, y);
                beta += q;
                sum_y += q * img.at(x, y);
            }
        if (beta < 1e-12) continue;  // component starved; keep previous parameters

        const Mat5 cov_inv = model.components[k].cov.inverse();
        const Mat5 prior_prec = hyp.precision(k);
        const Vec5& prior_mean = hyp.components[k].mean;
        Vec5 mean;
        if (opts.mean_update == EmOptions::MeanUpdate::Conjugate) {
            const Mat5 A = beta * cov_inv + prior_prec;
            mean = A.ldlt().solve(cov_inv * sum_y + prior_prec * prior_mean);
        } else {
            const Mat5 lambda_k = (cov_inv + prior_prec).inverse();
            mean = (lambda_k * (cov_inv * sum_y) - prior_prec * prior_mean) / beta;
        }
        Mat5 cov = Mat5::Zero();
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const Vec5 d = img.at(x, y) - mean;
                cov += qhat[k].at(x, y) * (d * d.transpose());
            }
        cov /= beta;
        cov = ((cov + cov.transpose()) / 2).eval();
        Eigen::SelfAdjointEigenSolver<Mat5> es(cov);
        if (es.info() != Eigen::Success || !es.eigenvalues().allFinite())
            throw NumericalDegeneracyError("covariance update failed in component " +
                                           std::to_string(k));
        const Vec5 evals = es.eigenvalues().cwiseMax(opts.covariance_floor);
        model.components[k].mean = mean;
        model.components[k].cov =
            es.eigenvectors() * evals.asDiagonal() * es.eigenvectors().transpose();
    }
}

}  // namespace

MixtureModel init_model(const FeatureImage& img, const ConditionalPriorMasks& masks,
                        const HyperPriorSet& hyp) {
    MixtureModel model;
    model.width = img.width;
    model.height = img.height;
    for (int k = 0; k < 3; ++k) {
        Vec5 mean = hyp.components[k].mean;
        mean(2) = mean(3) = mean(4) = 0.5;
        Mat5 cov = Mat5::Zero();
        cov.topLeftCorner<2, 2>() = hyp.components[k].spatial_cov;
        cov(2, 2) = cov(3, 3) = cov(4, 4) = 0.25;
        model.components[k] = {mean, cov};
    }
    model.priors.resize(img.size());
    model.posteriors.resize(img.size());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const size_t i = static_cast<size_t>(y) * img.width + x;
            Vec4 pi;
            for (int k = 0; k < 4; ++k) pi(k) = masks.masks[k].at(x, y);
            const double s = pi.sum();
            model.priors[i] = s > 0 ? Vec4(pi / s) : Vec4::Constant(0.25);
            model.posteriors[i] = model.priors[i];
        }
    return model;
}

MixtureModel em_fit(const FeatureImage& img, const ConditionalPriorMasks& masks,
                    const HyperPriorSet& hyp, const std::optional<MixtureModel>& warm_start,
                    const MrfKernel& kernel, const EmOptions& opts) {
    if (masks.width != img.width || masks.height != img.height)
        throw std::invalid_argument("em_fit: mask and image dimensions disagree");
    MixtureModel model = warm_start ? *warm_start : init_model(img, masks, hyp);
    const int w = img.width, h = img.height;
    const size_t M = img.size();

    Fields p = make_fields(w, h), pi = make_fields(w, h);
    Fields shat = make_fields(w, h), qhat = make_fields(w, h);
    for (size_t i = 0; i < M; ++i)
        for (int k = 0; k < 4; ++k) pi[k].data[i] = model.priors[i](k);

    for (int iter = 0; iter < opts.max_iters; ++iter) {
        posterior_fields(model, img, masks, p, opts.backend);
        smooth_fields(pi, kernel, shat, opts.backend);
        smooth_fields(p, kernel, qhat, opts.backend);

        // pi_opt = (s + q) o p(x|h) / 4, renormalized to a distribution.
        double delta = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const size_t i = static_cast<size_t>(y) * w + x;
                Vec4 v;
                for (int k = 0; k < 4; ++k)
                    v(k) = (shat[k].at(x, y) + qhat[k].at(x, y)) * masks.masks[k].at(x, y) / 4.0;
                const double s = v.sum();
                v = s > 0 ? Vec4(v / s) : Vec4::Constant(0.25);
                delta += (v - model.priors[i]).cwiseAbs().sum();
                model.priors[i] = v;
                for (int k = 0; k < 4; ++k) {
                    pi[k].data[i] = v(k);
                    model.posteriors[i](k) = qhat[k].data[i];
                }
            }
        delta /= static_cast<double>(M);

        m_step(model, img, hyp, qhat, opts);
        model.iterations = iter + 1;
        model.final_delta = delta;
        if (opts.on_iteration) opts.on_iteration(model, iter);
        if (delta < opts.tol) break;
    }
    return model;
}

std::vector<Vec4> posterior_responsibilities(const MixtureModel& model, const FeatureImage& img,
                                             const ConditionalPriorMasks& masks, Backend backend) {
    Fields p = make_fields(img.width, img.height);
    posterior_fields(model, img, masks, p, backend);
    std::vector<Vec4> out(img.size());
    for (size_t i = 0; i < img.size(); ++i)
        for (int k = 0; k < 4; ++k) out[i](k) = p[k].data[i];
    return out;
}

void save_model_json(const std::string& path, const MixtureModel& model) {
    json comps = json::array();
    for (const auto& c : model.components) {
        json mean = json::array(), cov = json::array();
        for (int i = 0; i < 5; ++i) mean.push_back(c.mean(i));
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) cov.push_back(c.cov(i, j));
        comps.push_back({{"mean", mean}, {"cov", cov}});
    }
    const json j = {{"components", comps},
                    {"uniform_density", model.uniform_density},
                    {"width", model.width},
                    {"height", model.height},
                    {"iterations", model.iterations},
                    {"final_delta", model.final_delta}};
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_model_json: cannot open " + path);
    f << j.dump(2) << '\n';
}

MixtureModel load_model_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_model_json: cannot open " + path);
    const json j = json::parse(f);
    MixtureModel model;
    int k = 0;
    for (const auto& c : j.at("components")) {
        for (int i = 0; i < 5; ++i) model.components[k].mean(i) = c.at("mean")[i].get<double>();
        for (int i = 0; i < 5; ++i)
            for (int jj = 0; jj < 5; ++jj)
                model.components[k].cov(i, jj) = c.at("cov")[i * 5 + jj].get<double>();
        ++k;
    }
    model.uniform_density = j.at("uniform_density").get<double>();
    model.width = j.at("width").get<int>();
    model.height = j.at("height").get<int>();
    model.iterations = j.at("iterations").get<int>();
    model.final_delta = j.at("final_delta").get<double>();
    return model;
}

}  // namespace issm
