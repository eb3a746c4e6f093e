#include "issm/synth.hpp"

#include "issm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <random>

namespace issm {

namespace fs = std::filesystem;

CameraIntrinsics SceneSpec::resolved_intrinsics() const {
    if (intrinsics.fx > 0) return intrinsics;
    CameraIntrinsics intr;
    intr.width = width;
    intr.height = height;
    intr.fx = intr.fy = 0.9 * width;
    intr.cx = width / 2.0;
    intr.cy = height / 2.0;
    return intr;
}

ImuReading SceneSpec::imu_at(int frame) const {
    ImuReading r;
    r.timestamp = frame / 10.0;
    r.roll = frame < static_cast<int>(roll.size()) ? roll[frame] : 0.0;
    r.pitch = frame < static_cast<int>(pitch.size()) ? pitch[frame] : 0.0;
    return r;
}

namespace {

// splitmix64; used for the deterministic per-obstacle texture.
uint64_t hash_u64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Texture value in [-1, 1], keyed by object-local pixel coordinates so both
// cameras see identical content.
double texture(uint64_t key, int lx, int ly) {
    const uint64_t h = hash_u64(key ^ (static_cast<uint64_t>(lx) << 32) ^ static_cast<uint64_t>(ly + 1));
    return 2.0 * (h >> 11) * (1.0 / 9007199254740992.0) - 1.0;
}

uint8_t quantize(double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

ImageU8 render_frame(const SceneSpec& spec, int frame, int camera, FrameGroundTruth& gt) {
    const CameraIntrinsics intr = spec.resolved_intrinsics();
    const CalibrationResult calib;  // identity rig
    const ImuReading imu = spec.imu_at(frame);
    const HorizonLine h = estimate_horizon(imu, calib, intr, spec.alpha_h, spec.camera_height);
    const double band_px = spec.middle_band_frac * spec.height;

    ImageU8 img(spec.width, spec.height, 3);
    std::mt19937_64 rng(hash_u64(spec.seed ^ (static_cast<uint64_t>(frame) * 2 + camera + 1)));
    std::normal_distribution<double> gauss(0.0, 1.0);

    const double slope = h.valid ? std::tan(h.gamma) : 0.0;
    const double base_row = h.valid ? h.intercept_row : intr.cy;
    std::vector<double> line_rows(spec.width);
    for (int x = 0; x < spec.width; ++x) line_rows[x] = base_row + slope * (x - intr.cx);

    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            const double line = line_rows[x];
            const std::array<double, 3>* color;
            double sigma;
            if (y < line) {
                color = &spec.sky_color;
                sigma = spec.sky_noise;
            } else if (y < line + band_px) {
                color = &spec.middle_color;
                sigma = spec.middle_noise;
            } else {
                color = &spec.water_color;
                sigma = spec.water_noise;
            }
            for (int c = 0; c < 3; ++c)
                img.at(x, y, c) = quantize((*color)[c] + sigma * gauss(rng));
        }

    if (camera == 0) {
        gt.edge_rows.resize(spec.width);
        for (int x = 0; x < spec.width; ++x)
            gt.edge_rows[x] = std::ceil(line_rows[x] + band_px);
        gt.horizon = h;
    }

    // Obstacles, painter's order.
    DetectionSet& boxes = camera == 0 ? gt.left_boxes : gt.right_boxes;
    boxes.clear();
    for (size_t oi = 0; oi < spec.obstacles.size(); ++oi) {
        const ObstacleSpec& ob = spec.obstacles[oi];
        Vec3 pos = ob.position;
        if (camera == 1) pos.x() -= spec.baseline;
        Vec2 center;
        try {
            center = project_point(pos, calib, intr);
        } catch (const BehindCameraError&) {
            std::cerr << "synth: obstacle " << oi << " behind camera, skipped\n";
            continue;
        }
        const double depth = pos.z();
        const int bw = std::max(1, static_cast<int>(std::lround(intr.fx * ob.width_m / depth)));
        const int bh = std::max(1, static_cast<int>(std::lround(intr.fy * ob.height_m / depth)));
        const int u0 = static_cast<int>(std::lround(center.x() - bw / 2.0));
        const int v0 = static_cast<int>(std::lround(center.y() - bh / 2.0));
        if (u0 + bw <= 0 || v0 + bh <= 0 || u0 >= spec.width || v0 >= spec.height) continue;

        const uint64_t tex_key = hash_u64(spec.seed ^ (0xabcdULL + oi));
        for (int ly = 0; ly < bh; ++ly)
            for (int lx = 0; lx < bw; ++lx) {
                const int x = u0 + lx, y = v0 + ly;
                if (!img.inside(x, y)) continue;
                if (ob.ellipse) {
                    const double ex = (lx + 0.5) / bw - 0.5, ey = (ly + 0.5) / bh - 0.5;
                    if (ex * ex + ey * ey > 0.25) continue;
                }
                const double t = spec.texture_amplitude * texture(tex_key, lx, ly);
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = quantize(ob.color[c] + t);
            }

        Detection d;
        d.u = std::max(0, u0);
        d.v = std::max(0, v0);
        d.w = std::min(spec.width, u0 + bw) - d.u;
        d.h = std::min(spec.height, v0 + bh) - d.v;
        d.pixel_count = d.w * d.h;
        d.camera = camera == 0 ? "left" : "right";
        if (d.w >= 1 && d.h >= 1) boxes.push_back(d);
    }
    return img;
}

ArtifactReport inject_artifacts(ImageU8& frame, const SceneSpec& spec, int frame_idx, int camera,
                                const FrameGroundTruth& gt) {
    ArtifactReport report;
    const int w = frame.width, h = frame.height;

    if (spec.reflection_band && !gt.edge_rows.empty()) {
        // Mirrored environment texture just below the water edge; identical
        // content in both views, so it survives stereo verification.
        const uint64_t key = hash_u64(spec.seed ^ 0x5eefULL ^ static_cast<uint64_t>(frame_idx));
        const int band_h = std::max(4, h / 16);
        for (int x = 0; x < w; ++x) {
            const int y0 = static_cast<int>(gt.edge_rows[std::min(x, static_cast<int>(gt.edge_rows.size()) - 1)]) + 2;
            for (int ly = 0; ly < band_h; ++ly) {
                const int y = y0 + ly;
                if (y < 0 || y >= h) continue;
                const double t = 0.5 + 0.25 * texture(key, x / 2, ly / 2);
                for (int c = 0; c < 3; ++c)
                    frame.at(x, y, c) = quantize(0.5 * spec.middle_color[c] + 0.5 * t);
            }
        }
    }

    if (spec.glitter_count > 0) {
        // Per-view seed: speckles are decorrelated across the stereo pair.
        std::mt19937_64 rng(
            hash_u64(spec.seed ^ 0x911fULL ^ (static_cast<uint64_t>(frame_idx) * 2 + camera)));
        std::uniform_real_distribution<double> ux(0.0, 1.0);
        const int size = spec.glitter_size;
        for (int g = 0; g < spec.glitter_count; ++g) {
            // Place below the water edge with margin for the speckle extent.
            const int x = size + static_cast<int>(ux(rng) * (w - 2 * size));
            const double edge =
                gt.edge_rows.empty() ? h * 0.5 : gt.edge_rows[std::min(x, static_cast<int>(gt.edge_rows.size()) - 1)];
            const int ymin = std::min(h - size - 1, static_cast<int>(edge) + 2 * size);
            const int y = ymin + static_cast<int>(ux(rng) * std::max(1, h - size - ymin));
            report.glitter_centers.emplace_back(x, y);
            const uint64_t key = hash_u64(spec.seed ^ 0x611ULL ^ (static_cast<uint64_t>(g) * 131) ^
                                          (static_cast<uint64_t>(frame_idx) * 2 + camera));
            for (int ly = -size / 2; ly <= size / 2; ++ly)
                for (int lx = -size / 2; lx <= size / 2; ++lx) {
                    const double r = (lx * lx + ly * ly) / (0.25 * size * size);
                    if (r > 1.0) continue;
                    if (!frame.inside(x + lx, y + ly)) continue;
                    const double t = 0.9 + 0.1 * texture(key, lx, ly) - 0.2 * r;
                    for (int c = 0; c < 3; ++c) frame.at(x + lx, y + ly, c) = quantize(t);
                }
        }
    }
    return report;
}

RenderedSequence render_sequence(const SceneSpec& spec) {
    RenderedSequence seq;
    seq.gt.frames.resize(spec.num_frames);
    for (int f = 0; f < spec.num_frames; ++f) {
        FrameGroundTruth& gt = seq.gt.frames[f];
        ImageU8 left = render_frame(spec, f, 0, gt);
        ImageU8 right = render_frame(spec, f, 1, gt);
        inject_artifacts(left, spec, f, 0, gt);
        inject_artifacts(right, spec, f, 1, gt);
        seq.left.push_back(std::move(left));
        seq.right.push_back(std::move(right));
        seq.imu.push_back(spec.imu_at(f));
    }
    return seq;
}

void write_dataset(const SceneSpec& spec, const std::string& dir) {
    const RenderedSequence seq = render_sequence(spec);
    fs::create_directories(fs::path(dir) / "frames" / "left");
    fs::create_directories(fs::path(dir) / "frames" / "right");

    char name[32];
    for (int f = 0; f < spec.num_frames; ++f) {
        std::snprintf(name, sizeof(name), "%06d.png", f);
        write_png((fs::path(dir) / "frames" / "left" / name).string(), seq.left[f]);
        write_png((fs::path(dir) / "frames" / "right" / name).string(), seq.right[f]);
    }
    save_imu_csv((fs::path(dir) / "imu.csv").string(), seq.imu);

    std::vector<FrameAnnotation> annotations;
    for (int f = 0; f < spec.num_frames; ++f) {
        const FrameGroundTruth& gt = seq.gt.frames[f];
        FrameAnnotation ann;
        ann.frame = f;
        for (size_t x = 0; x < gt.edge_rows.size(); ++x)
            ann.edge.emplace_back(static_cast<double>(x), gt.edge_rows[x]);
        ann.small_obstacles = gt.left_boxes;
        ann.right_obstacles = gt.right_boxes;
        if (gt.horizon.valid)
            ann.horizon = {std::tan(gt.horizon.gamma), gt.horizon.intercept_row};
        annotations.push_back(std::move(ann));
    }
    save_annotations_json((fs::path(dir) / "annotations.json").string(), annotations);

    const CameraIntrinsics intr = spec.resolved_intrinsics();
    save_calibration_json((fs::path(dir) / "calibration.json").string(), intr, CalibrationResult{});
}

}  // namespace issm
