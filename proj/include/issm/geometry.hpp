#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace issm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct InvalidInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct BehindCameraError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CalibrationFailedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CameraIntrinsics {
    double fx = 0, fy = 0;   // focal lengths [px]
    double cx = 0, cy = 0;   // principal point [px]
    double k1 = 0, k2 = 0;   // radial distortion
    int width = 0, height = 0;

    void validate() const;
};

// Checks RᵀR = I and det = +1 within 1e-9.
bool is_rotation(const Mat3& R, double tol = 1e-9);

// Elementary rotations. Camera frame: X right, Y down, Z forward (right-handed).
Mat3 rot_x(double a);
Mat3 rot_y(double a);
Mat3 rot_z(double a);

struct ImuReading {
    double timestamp = 0;  // seconds
    double roll = 0, pitch = 0, yaw = 0;  // radians

    // Rotation from the IMU Euler readout. Roll is about the forward (Z)
    // axis, pitch about the lateral (X) axis. Yaw is ignored for horizon
    // estimation but kept for logging.
    Mat3 rotation(bool with_yaw = false) const;
    void validate() const;
};

struct HorizonLine {
    double gamma = 0;           // slope angle in the image plane [rad]
    double intercept_row = 0;   // row at the principal-point column [px]
    bool valid = false;

    // Row of the line at image column u, given the principal-point column.
    double row_at(double u, double cx) const {
        return intercept_row + std::tan(gamma) * (u - cx);
    }
};

struct CalibrationResult {
    Mat3 R_cam_usv = Mat3::Identity();
    Mat3 R_usv_imu = Mat3::Identity();
    int inlier_count = 0;
    double residual_rms = 0;  // meters
};

using PointCloud = std::vector<Vec3>;

struct PlaneFit {
    Vec3 normal = Vec3::UnitZ();  // unit normal
    double d = 0;                 // plane: normal·x + d = 0
    int inlier_count = 0;
    double residual_rms = 0;
    std::vector<int> inliers;
};

// Horizon generation distance from camera height: l_dist = 3.57e3 * sqrt(h).
double horizon_distance(double camera_height_m);

// Two points on the water-parallel plane in the USV frame, generated on the
// IMU XZ-plane at horizontal angles ±alpha_h and depth l_dist, then leveled
// with the IMU rotation.
std::pair<Vec3, Vec3> horizon_world_points(const ImuReading& imu, const CalibrationResult& calib,
                                           double alpha_h, double camera_height);

// Pinhole projection with radial distortion: x = K R_cam_usv X, distorted in
// normalized coordinates. Throws BehindCameraError for depth <= 0.
Vec2 project_point(const Vec3& X_usv, const CalibrationResult& calib, const CameraIntrinsics& intr);

// Radial distortion in pixel coordinates; undistort inverts by fixed-point
// iteration (20 iterations, 1e-10 px tolerance).
Vec2 distort_pixel(const Vec2& px, const CameraIntrinsics& intr);
Vec2 undistort_pixel(const Vec2& px, const CameraIntrinsics& intr);

HorizonLine estimate_horizon(const ImuReading& imu, const CalibrationResult& calib,
                             const CameraIntrinsics& intr, double alpha_h, double camera_height);

// RANSAC plane: 3-point minimal sample, inlier = point-to-plane distance
// <= inlier_tol, least-squares refit on the final inlier set.
PlaneFit fit_plane_ransac(const PointCloud& cloud, double inlier_tol, int max_iters, uint64_t seed);

struct CalibrationOptions {
    double dist_threshold = 10.0;  // range gate on points [m]
    double inlier_tol = 1.0;       // RANSAC point-to-plane tolerance [m]
    int max_iters = 1000;
    double min_inlier_ratio = 0.3;
    uint64_t seed = 0;
};

// Fits the ground plane to points within dist_threshold of the origin and
// builds R_cam_usv from its normal (X and Z rotations only; Y set to zero).
// R_usv_imu is taken directly from the static IMU readout.
CalibrationResult calibrate_camera_imu(const PointCloud& cloud, const ImuReading& imu_static,
                                       const CalibrationOptions& opts);

// CSV / JSON interfaces.
std::vector<ImuReading> load_imu_csv(const std::string& path);
void save_imu_csv(const std::string& path, const std::vector<ImuReading>& readings);
PointCloud load_point_cloud_csv(const std::string& path);
void save_point_cloud_csv(const std::string& path, const PointCloud& cloud);
CameraIntrinsics load_intrinsics_json(const std::string& path);

struct CalibrationFile {
    CameraIntrinsics intrinsics;
    std::optional<CalibrationResult> calibration;
};
CalibrationFile load_calibration_json(const std::string& path);
void save_calibration_json(const std::string& path, const CameraIntrinsics& intr,
                           const std::optional<CalibrationResult>& calib);

}  // namespace issm
