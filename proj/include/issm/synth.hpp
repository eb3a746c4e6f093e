#pragma once

#include "issm/detection.hpp"
#include "issm/geometry.hpp"

#include <array>

namespace issm {

struct ObstacleSpec {
    Vec3 position = {0, 0.7, 10};  // USV frame [m]; Y is down, Z forward
    double width_m = 0.5, height_m = 0.5;
    std::array<double, 3> color = {0.8, 0.4, 0.1};
    bool ellipse = false;
};

struct SceneSpec {
    int width = 320, height = 240;
    CameraIntrinsics intrinsics;  // defaulted from width/height if fx == 0
    double camera_height = 0.7;   // meters above water
    double alpha_h = 40.0 * 3.14159265358979323846 / 180.0;
    double baseline = 0.3;  // meters
    int num_frames = 1;

    std::array<double, 3> sky_color = {0.65, 0.78, 0.92};
    std::array<double, 3> middle_color = {0.45, 0.42, 0.35};
    std::array<double, 3> water_color = {0.10, 0.22, 0.40};
    double sky_noise = 0.01, middle_noise = 0.01, water_noise = 0.01;
    double middle_band_frac = 0.12;  // thickness of the middle band, fraction of height

    std::vector<double> roll, pitch;  // per frame [rad]; empty = level boat
    std::vector<ObstacleSpec> obstacles;
    double texture_amplitude = 0.2;  // per-obstacle texture strength

    int glitter_count = 0;
    int glitter_size = 8;  // px
    bool reflection_band = false;
    uint64_t seed = 0;

    CameraIntrinsics resolved_intrinsics() const;
    ImuReading imu_at(int frame) const;
};

struct FrameGroundTruth {
    std::vector<double> edge_rows;  // per column, left camera
    DetectionSet left_boxes, right_boxes;
    HorizonLine horizon;
};

struct GroundTruth {
    std::vector<FrameGroundTruth> frames;
};

struct RenderedSequence {
    std::vector<ImageU8> left, right;
    std::vector<ImuReading> imu;
    GroundTruth gt;
};

struct ArtifactReport {
    std::vector<Vec2> glitter_centers;
};

// Deterministic given the spec seed. Renders both cameras, the IMU trace and
// the ground truth; artifacts (glitter, reflections) are injected afterward.
RenderedSequence render_sequence(const SceneSpec& spec);

// Single clean frame for one camera (0 = left, 1 = right).
ImageU8 render_frame(const SceneSpec& spec, int frame, int camera, FrameGroundTruth& gt);

ArtifactReport inject_artifacts(ImageU8& frame, const SceneSpec& spec, int frame_idx, int camera,
                                const FrameGroundTruth& gt);

// Writes frames/left/NNNNNN.png, frames/right/NNNNNN.png, imu.csv and
// annotations.json under dir.
void write_dataset(const SceneSpec& spec, const std::string& dir);

}  // namespace issm
