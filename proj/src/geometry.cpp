#include "issm/geometry.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace issm {

using json = nlohmann::json;

void CameraIntrinsics::validate() const {
    if (fx <= 0 || fy <= 0) throw InvalidInputError("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InvalidInputError("intrinsics: image size must be positive");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
        throw InvalidInputError("intrinsics: principal point outside image bounds");
}

bool is_rotation(const Mat3& R, double tol) {
    return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() < tol &&
           std::abs(R.determinant() - 1.0) < tol;
}

Mat3 rot_x(double a) {
    Mat3 R;
    R << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
    return R;
}
Mat3 rot_y(double a) {
    Mat3 R;
    R << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
    return R;
}
Mat3 rot_z(double a) {
    Mat3 R;
    R << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    return R;
}

void ImuReading::validate() const {
    constexpr double pi = std::numbers::pi;
    for (double a : {roll, pitch, yaw})
        if (!std::isfinite(a) || a <= -pi || a > pi)
            throw InvalidInputError("imu: angles must be finite and in (-pi, pi]");
}

Mat3 ImuReading::rotation(bool with_yaw) const {
    Mat3 R = rot_x(pitch) * rot_z(roll);
    if (with_yaw) R = rot_y(yaw) * R;
    return R;
}

double horizon_distance(double camera_height_m) {
    if (camera_height_m <= 0) throw InvalidInputError("horizon_distance: camera height must be positive");
    return 3.57e3 * std::sqrt(camera_height_m);
}

std::pair<Vec3, Vec3> horizon_world_points(const ImuReading& imu, const CalibrationResult& calib,
                                           double alpha_h, double camera_height) {
    imu.validate();
    if (!(alpha_h > 0 && alpha_h < std::numbers::pi / 2))
        throw InvalidInputError("horizon_world_points: alpha_h must be in (0, pi/2)");
    const double l = horizon_distance(camera_height);
    const double x = l * std::tan(alpha_h);
    const Vec3 p1(-x, 0, l), p2(x, 0, l);
    const Mat3 R = imu.rotation() * calib.R_usv_imu.inverse();
    return {R * p1, R * p2};
}

Vec2 distort_pixel(const Vec2& px, const CameraIntrinsics& intr) {
    const double xn = (px.x() - intr.cx) / intr.fx;
    const double yn = (px.y() - intr.cy) / intr.fy;
    const double r2 = xn * xn + yn * yn;
    const double f = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2;
    return {intr.cx + intr.fx * xn * f, intr.cy + intr.fy * yn * f};
}

Vec2 undistort_pixel(const Vec2& px, const CameraIntrinsics& intr) {
    const double xd = (px.x() - intr.cx) / intr.fx;
    const double yd = (px.y() - intr.cy) / intr.fy;
    double x = xd, y = yd;
    for (int i = 0; i < 20; ++i) {
        const double r2 = x * x + y * y;
        const double f = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2;
        const double nx = xd / f, ny = yd / f;
        if (std::abs(nx - x) * intr.fx < 1e-10 && std::abs(ny - y) * intr.fy < 1e-10) {
            x = nx;
            y = ny;
            break;
        }
        x = nx;
        y = ny;
    }
    return {intr.cx + intr.fx * x, intr.cy + intr.fy * y};
}

Vec2 project_point(const Vec3& X_usv, const CalibrationResult& calib, const CameraIntrinsics& intr) {
    const Vec3 Xc = calib.R_cam_usv * X_usv;
    if (!(Xc.z() > 0)) throw BehindCameraError("project_point: point behind camera");
    const Vec2 pinhole(intr.cx + intr.fx * Xc.x() / Xc.z(), intr.cy + intr.fy * Xc.y() / Xc.z());
    return distort_pixel(pinhole, intr);
}

HorizonLine estimate_horizon(const ImuReading& imu, const CalibrationResult& calib,
                             const CameraIntrinsics& intr, double alpha_h, double camera_height) {
    auto [X1, X2] = horizon_world_points(imu, calib, alpha_h, camera_height);
    Vec2 p1, p2;
    try {
        p1 = project_point(X1, calib, intr);
        p2 = project_point(X2, calib, intr);
    } catch (const BehindCameraError&) {
        return {};
    }
    if (!p1.allFinite() || !p2.allFinite()) return {};
    const double du = p2.x() - p1.x();
    const double dv = p2.y() - p1.y();
    if (std::hypot(du, dv) < 1e-9) return {};  // coincident projections
    if (std::abs(du) < 1e-12) return {};       // vertical line has no row form
    HorizonLine h;
    h.gamma = std::atan(dv / du);
    h.intercept_row = p1.y() + dv / du * (intr.cx - p1.x());
    h.valid = true;
    return h;
}

PlaneFit fit_plane_ransac(const PointCloud& cloud, double inlier_tol, int max_iters, uint64_t seed) {
    const int n = static_cast<int>(cloud.size());
    if (n < 3) throw InsufficientDataError("fit_plane_ransac: need at least 3 points");

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, n - 1);

    Vec3 best_normal = Vec3::UnitZ();
    double best_d = 0;
    int best_inliers = -1;
    for (int it = 0; it < max_iters; ++it) {
        int i = pick(rng), j = pick(rng), k = pick(rng);
        while (j == i) j = pick(rng);
        while (k == i || k == j) k = pick(rng);
        const Vec3 nvec = (cloud[j] - cloud[i]).cross(cloud[k] - cloud[i]);
        const double norm = nvec.norm();
        if (norm < 1e-12) continue;  // collinear sample
        const Vec3 nrm = nvec / norm;
        const double d = -nrm.dot(cloud[i]);
        int count = 0;
        for (const Vec3& p : cloud)
            if (std::abs(nrm.dot(p) + d) <= inlier_tol) ++count;
        if (count > best_inliers) {
            best_inliers = count;
            best_normal = nrm;
            best_d = d;
        }
    }
    if (best_inliers < 3) throw InsufficientDataError("fit_plane_ransac: no valid plane hypothesis");

    PlaneFit fit;
    for (int i = 0; i < n; ++i)
        if (std::abs(best_normal.dot(cloud[i]) + best_d) <= inlier_tol) fit.inliers.push_back(i);

    // Least-squares refit: centroid + smallest eigenvector of the scatter.
    Vec3 centroid = Vec3::Zero();
    for (int i : fit.inliers) centroid += cloud[i];
    centroid /= static_cast<double>(fit.inliers.size());
    Mat3 scatter = Mat3::Zero();
    for (int i : fit.inliers) {
        const Vec3 d = cloud[i] - centroid;
        scatter += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(scatter);
    Vec3 nrm = es.eigenvectors().col(0);
    if (nrm.dot(best_normal) < 0) nrm = -nrm;
    fit.normal = nrm;
    fit.d = -nrm.dot(centroid);
    fit.inlier_count = static_cast<int>(fit.inliers.size());
    double ss = 0;
    for (int i : fit.inliers) {
        const double r = nrm.dot(cloud[i]) + fit.d;
        ss += r * r;
    }
    fit.residual_rms = std::sqrt(ss / static_cast<double>(fit.inliers.size()));
    return fit;
}

CalibrationResult calibrate_camera_imu(const PointCloud& cloud, const ImuReading& imu_static,
                                       const CalibrationOptions& opts) {
    imu_static.validate();
    PointCloud near;
    for (const Vec3& p : cloud) {
        if (!p.allFinite()) throw InvalidInputError("calibrate_camera_imu: non-finite point");
        if (p.norm() <= opts.dist_threshold) near.push_back(p);
    }
    if (near.size() < 3)
        throw InsufficientDataError("calibrate_camera_imu: fewer than 3 points within range gate");

    PlaneFit fit = fit_plane_ransac(near, opts.inlier_tol, opts.max_iters, opts.seed);
    if (fit.inlier_count < static_cast<int>(opts.min_inlier_ratio * static_cast<double>(near.size())))
        throw CalibrationFailedError("calibrate_camera_imu: inlier ratio below floor");

    // Ground normal points up; up in the camera frame is -Y.
    Vec3 n = fit.normal;
    if (n.y() > 0) n = -n;

    // Solve R_cam_usv = Rx(tx) Rz(tz) with R * (0,-1,0) = n; rotation about
    // the Y axis is fixed at zero.
    const double tz = std::asin(std::clamp(n.x(), -1.0, 1.0));
    const double tx = std::atan2(-n.z(), -n.y());
    CalibrationResult res;
    res.R_cam_usv = rot_x(tx) * rot_z(tz);
    res.R_usv_imu = imu_static.rotation();
    res.inlier_count = fit.inlier_count;
    res.residual_rms = fit.residual_rms;
    return res;
}

std::vector<ImuReading> load_imu_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_imu_csv: cannot open " + path);
    std::vector<ImuReading> out;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        ImuReading r;
        char comma;
        std::istringstream ss(line);
        if (!(ss >> r.timestamp >> comma >> r.roll >> comma >> r.pitch >> comma >> r.yaw))
            throw std::runtime_error("load_imu_csv: malformed row in " + path + ": " + line);
        if (!out.empty() && r.timestamp <= out.back().timestamp)
            throw std::runtime_error("load_imu_csv: non-monotone timestamps in " + path);
        out.push_back(r);
    }
    return out;
}

void save_imu_csv(const std::string& path, const std::vector<ImuReading>& readings) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_imu_csv: cannot open " + path);
    f << "timestamp,roll,pitch,yaw\n";
    f.precision(17);
    for (const auto& r : readings)
        f << r.timestamp << ',' << r.roll << ',' << r.pitch << ',' << r.yaw << '\n';
}

PointCloud load_point_cloud_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_point_cloud_csv: cannot open " + path);
    PointCloud out;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (first && (line.find("x") != std::string::npos || line.find("X") != std::string::npos)) {
            first = false;
            continue;  // header row
        }
        first = false;
        double x, y, z;
        char comma;
        std::istringstream ss(line);
        if (!(ss >> x >> comma >> y >> comma >> z))
            throw std::runtime_error("load_point_cloud_csv: malformed row in " + path);
        out.emplace_back(x, y, z);
    }
    return out;
}

void save_point_cloud_csv(const std::string& path, const PointCloud& cloud) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_point_cloud_csv: cannot open " + path);
    f << "x,y,z\n";
    f.precision(17);
    for (const Vec3& p : cloud) f << p.x() << ',' << p.y() << ',' << p.z() << '\n';
}

namespace {

Mat3 mat3_from_json(const json& arr) {
    if (!arr.is_array() || arr.size() != 9) throw std::runtime_error("expected 9-element row-major matrix");
    Mat3 R;
    for (int i = 0; i < 9; ++i) R(i / 3, i % 3) = arr[i].get<double>();
    if (!is_rotation(R, 1e-6)) throw std::runtime_error("matrix in file is not a rotation");
    return R;
}

json mat3_to_json(const Mat3& R) {
    json arr = json::array();
    for (int i = 0; i < 9; ++i) arr.push_back(R(i / 3, i % 3));
    return arr;
}

CameraIntrinsics intrinsics_from_json(const json& j) {
    CameraIntrinsics intr;
    intr.fx = j.at("fx").get<double>();
    intr.fy = j.at("fy").get<double>();
    intr.cx = j.at("cx").get<double>();
    intr.cy = j.at("cy").get<double>();
    intr.k1 = j.value("k1", 0.0);
    intr.k2 = j.value("k2", 0.0);
    intr.width = j.at("width").get<int>();
    intr.height = j.at("height").get<int>();
    intr.validate();
    return intr;
}

}  // namespace

CameraIntrinsics load_intrinsics_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_intrinsics_json: cannot open " + path);
    return intrinsics_from_json(json::parse(f));
}

CalibrationFile load_calibration_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_calibration_json: cannot open " + path);
    const json j = json::parse(f);
    CalibrationFile out;
    out.intrinsics = intrinsics_from_json(j);
    if (j.contains("R_cam_usv")) {
        CalibrationResult c;
        c.R_cam_usv = mat3_from_json(j.at("R_cam_usv"));
        c.R_usv_imu = mat3_from_json(j.at("R_usv_imu"));
        c.inlier_count = j.value("inlier_count", 0);
        c.residual_rms = j.value("residual_rms", 0.0);
        out.calibration = c;
    }
    return out;
}

void save_calibration_json(const std::string& path, const CameraIntrinsics& intr,
                           const std::optional<CalibrationResult>& calib) {
    json j = {{"fx", intr.fx}, {"fy", intr.fy}, {"cx", intr.cx}, {"cy", intr.cy},
              {"k1", intr.k1}, {"k2", intr.k2}, {"width", intr.width}, {"height", intr.height}};
    if (calib) {
        j["R_cam_usv"] = mat3_to_json(calib->R_cam_usv);
        j["R_usv_imu"] = mat3_to_json(calib->R_usv_imu);
        j["inlier_count"] = calib->inlier_count;
        j["residual_rms"] = calib->residual_rms;
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_calibration_json: cannot open " + path);
    f << j.dump(2) << '\n';
}

}  // namespace issm
