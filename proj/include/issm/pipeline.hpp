#pragma once

#include "issm/eval.hpp"
#include "issm/stereo.hpp"
#include "issm/synth.hpp"

namespace issm {

struct PipelineConfig {
    // Paths.
    std::string dataset_dir;       // root with frames/, imu.csv, annotations.json
    std::string calibration_path;  // intrinsics (+ optional extrinsics) JSON
    std::string cloud_path;        // calibration point cloud CSV
    std::string detections_path;   // eval input
    std::string output_dir = ".";

    // Segmentation.
    int work_width = 50, work_height = 50;
    int max_iters = 10;
    double tol = 1e-3;
    double blur_sigma = 2.0;  // px at working resolution
    std::array<double, 3> displacements = {-0.25, 0.02, 0.35};

    // Detection.
    int min_area = 25;
    double merge_dist = 10.0;

    // Stereo.
    double theta_s1 = 1.2, theta_s2 = 3.0, theta_ncc = 0.95;
    double baseline = 0.3;

    // Geometry.
    double alpha_h = 40.0 * 3.14159265358979323846 / 180.0;
    double camera_height = 0.7;
    double dist_threshold = 10.0, inlier_tol = 1.0;
    int calib_max_iters = 1000;

    // Eval.
    double iou_threshold = 0.3;

    uint64_t seed = 0;

    static PipelineConfig from_json_file(const std::string& path);
    HyperPriorSet hyper_template() const;
};

struct FrameResult {
    DetectionSet detections;
    WaterEdge edge;
    HorizonLine horizon;
    int em_iterations = 0;
    double em_delta = 0;
    double seg_ms = 0, det_ms = 0;
};

// Single-camera detection pipeline with frame-to-frame warm start.
class MonoPipeline {
  public:
    MonoPipeline(const PipelineConfig& cfg, const CameraIntrinsics& intr,
                 const CalibrationResult& calib);

    FrameResult process(const ImageF& frame, const ImuReading& imu);
    const std::optional<MixtureModel>& model() const { return model_; }
    void reset() { model_.reset(); }

  private:
    PipelineConfig cfg_;
    CameraIntrinsics intr_;
    CalibrationResult calib_;
    HyperPriorSet template_;
    MrfKernel kernel_;
    std::optional<MixtureModel> model_;
};

struct StereoFrameResult {
    FrameResult left, right;
    VerifiedSet verified;
    double verify_ms = 0;
};

class StereoPipeline {
  public:
    StereoPipeline(const PipelineConfig& cfg, const CameraIntrinsics& intr,
                   const CalibrationResult& calib);

    StereoFrameResult process(const ImageF& left, const ImageF& right, const ImuReading& imu);

  private:
    MonoPipeline left_, right_;
    StereoGeometry geom_;
    VerificationConfig vcfg_;
};

// CLI command bodies; return a process exit code.
int run_calibrate(const PipelineConfig& cfg);
int run_detect(const PipelineConfig& cfg, const std::string& mode);
int run_eval(const PipelineConfig& cfg);
int run_synth(const PipelineConfig& cfg, const std::string& scene_path);
int run_bench(const PipelineConfig& cfg);

SceneSpec scene_from_json_file(const std::string& path);

}  // namespace issm
