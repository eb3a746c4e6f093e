#pragma once

#include "issm/geometry.hpp"
#include "issm/image.hpp"
#include "issm/kernels.hpp"

#include <array>
#include <functional>
#include <optional>

namespace issm {

using Vec4 = Eigen::Vector4d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat5 = Eigen::Matrix<double, 5, 5>;

struct NumericalDegeneracyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Component indices: 0 sky, 1 middle (shore/haze), 2 water, 3 uniform outlier.
inline constexpr int kSky = 0;
inline constexpr int kMiddle = 1;
inline constexpr int kWater = 2;
inline constexpr int kOutlier = 3;

// Per-pixel feature vectors [u, v, r, g, b], all normalized to [0,1].
struct FeatureImage {
    int width = 0, height = 0;
    std::vector<Vec5> features;

    const Vec5& at(int x, int y) const { return features[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return features.size(); }

    // Block-averages an RGB image down to the working grid.
    static FeatureImage from_image(const ImageF& rgb, int work_width, int work_height);
};

struct GaussianComponent {
    Vec5 mean = Vec5::Zero();
    Mat5 cov = Mat5::Identity();
};

struct MixtureModel {
    std::array<GaussianComponent, 3> components;
    double uniform_density = 1.0;  // U(y); features live in the unit hypercube
    int width = 0, height = 0;
    std::vector<Vec4> priors;      // pi, one distribution per pixel
    std::vector<Vec4> posteriors;  // q-hat after fitting
    int iterations = 0;
    double final_delta = 0;
};

// p(x_i = k | h_t) per component.
struct ConditionalPriorMasks {
    int width = 0, height = 0;
    std::array<ImageF, 4> masks;
};

struct ComponentHyperPrior {
    Vec5 mean = Vec5::Zero();            // prior over the component mean
    Mat2 spatial_cov = Mat2::Identity(); // prior covariance of the [u,v] part
    double displacement = 0;  // learned vertical offset from the horizon row,
                              // as a fraction of image height
};

struct HyperPriorSet {
    std::array<ComponentHyperPrior, 3> components;

    // Documented defaults standing in for the unavailable training imagery.
    static HyperPriorSet default_template();
    // 5x5 precision used in the M-step: spatial block inverted, color rows zero.
    Mat5 precision(int k) const;
};

// 3x3 discrete Gaussian with zero center summing to 1 (lambda); lambda1 adds
// the identity tap back.
struct MrfKernel {
    std::array<double, 9> lambda{};
    std::array<double, 9> lambda1{};
    static MrfKernel make(double sigma = 1.0);
};

// Rescales a full-resolution horizon line onto a grid scaled by (sx, sy).
HorizonLine rescale_horizon(const HorizonLine& h, double sx, double sy);

ConditionalPriorMasks build_conditional_priors(const HorizonLine& h, int width, int height,
                                               double blur_sigma, double ref_col,
                                               Backend backend = default_backend());

// Moves the hyper-prior means to the current horizon row (normalized) and
// applies the proximal covariance projection to the middle component.
HyperPriorSet build_hyper_priors(const HorizonLine& h, double image_height,
                                 const HyperPriorSet& learned);

// The proximal projection: rotate by angle, zero off-diagonals, rotate back.
Mat2 proximal_covariance_projection(const Mat2& cov, double angle);

struct EmOptions {
    int max_iters = 10;
    double tol = 1e-3;  // mean absolute change in pi
    enum class MeanUpdate { Conjugate, Literal };
    MeanUpdate mean_update = MeanUpdate::Conjugate;
    double covariance_floor = 1e-6;
    Backend backend = default_backend();
    // Called after every EM iteration; used by tests and diagnostics.
    std::function<void(const MixtureModel&, int iter)> on_iteration;
};

MixtureModel init_model(const FeatureImage& img, const ConditionalPriorMasks& masks,
                        const HyperPriorSet& hyp);

MixtureModel em_fit(const FeatureImage& img, const ConditionalPriorMasks& masks,
                    const HyperPriorSet& hyp, const std::optional<MixtureModel>& warm_start,
                    const MrfKernel& kernel, const EmOptions& opts = {});

// Per-pixel Bayes posteriors p_ik under the current model and masked priors.
std::vector<Vec4> posterior_responsibilities(const MixtureModel& model, const FeatureImage& img,
                                             const ConditionalPriorMasks& masks,
                                             Backend backend = default_backend());

// Model state dump/load (Gaussian parameters + iteration diagnostics).
void save_model_json(const std::string& path, const MixtureModel& model);
MixtureModel load_model_json(const std::string& path);

}  // namespace issm
