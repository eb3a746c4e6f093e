#include "issm/pipeline.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <random>

using namespace issm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "issm_pipeline" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

SceneSpec demo_scene(int frames, bool glitter) {
    SceneSpec spec;
    spec.width = 320;
    spec.height = 240;
    spec.num_frames = frames;
    spec.seed = 31;
    ObstacleSpec obs;
    obs.position = Vec3(0.4, 1.5, 8.0);
    obs.width_m = 0.8;
    obs.height_m = 0.8;
    spec.obstacles.push_back(obs);
    if (glitter) {
        spec.glitter_count = 6;
        spec.glitter_size = 18;
    }
    return spec;
}

// Renders a dataset and returns a config pointing at it.
PipelineConfig make_dataset(const fs::path& dir, const SceneSpec& spec) {
    write_dataset(spec, dir.string());
    PipelineConfig cfg;
    cfg.dataset_dir = dir.string();
    cfg.calibration_path = (dir / "calibration.json").string();
    cfg.output_dir = (dir / "out").string();
    cfg.baseline = spec.baseline;
    cfg.camera_height = spec.camera_height;
    cfg.alpha_h = spec.alpha_h;
    return cfg;
}

}  // namespace

TEST_CASE("config file values override defaults") {
    const fs::path dir = scratch("config");
    const fs::path path = dir / "config.json";
    std::ofstream(path) << R"({"work_width": 64, "theta_ncc": 0.9, "displacements": [-0.3, 0.0, 0.3],
                               "dataset_dir": "somewhere"})";
    const PipelineConfig cfg = PipelineConfig::from_json_file(path.string());
    CHECK(cfg.work_width == 64);
    CHECK(cfg.work_height == 50);  // untouched default
    CHECK(cfg.theta_ncc == 0.9);
    CHECK(cfg.displacements[0] == -0.3);
    CHECK(cfg.dataset_dir == "somewhere");
    CHECK_THROWS(PipelineConfig::from_json_file((dir / "missing.json").string()));
}

TEST_CASE("calibrate: flat ground cloud succeeds with small residual") {
    const fs::path dir = scratch("calibrate");
    // Flat water plane 1.5 m below the camera, slight camera roll.
    PointCloud cloud;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    const Mat3 R = rot_z(5.0 * 3.14159265358979323846 / 180.0);
    const Vec3 up = R * Vec3(0, -1, 0);
    const Vec3 a = up.unitOrthogonal(), b = up.cross(a).normalized();
    for (int i = 0; i < 200; ++i) cloud.push_back(up * -1.5 + a * u(rng) + b * u(rng));
    save_point_cloud_csv((dir / "cloud.csv").string(), cloud);
    save_calibration_json((dir / "intr.json").string(), CameraIntrinsics{500, 500, 160, 120, 0, 0,
                                                                          320, 240},
                          std::nullopt);
    PipelineConfig cfg;
    cfg.cloud_path = (dir / "cloud.csv").string();
    cfg.calibration_path = (dir / "intr.json").string();
    cfg.output_dir = (dir / "out").string();
    CHECK(run_calibrate(cfg) == 0);
    const auto calfile = load_calibration_json((fs::path(cfg.output_dir) / "calibration.json").string());
    REQUIRE(calfile.calibration.has_value());
    CHECK(calfile.calibration->residual_rms < 1e-3);
    CHECK((calfile.calibration->R_cam_usv * Vec3(0, -1, 0) - up).norm() < 0.01);
}

TEST_CASE("calibrate error codes: unreadable and insufficient clouds") {
    const fs::path dir = scratch("calibrate_err");
    PipelineConfig cfg;
    cfg.cloud_path = (dir / "nope.csv").string();
    cfg.calibration_path = (dir / "intr.json").string();
    CHECK(run_calibrate(cfg) == 2);

    std::ofstream(dir / "empty.csv") << "x,y,z\n";
    cfg.cloud_path = (dir / "empty.csv").string();
    CHECK(run_calibrate(cfg) == 3);
}

TEST_CASE("detect mono: runs, writes JSON, and is deterministic") {
    const fs::path dir = scratch("detect_mono");
    const PipelineConfig cfg = make_dataset(dir, demo_scene(3, false));
    REQUIRE(run_detect(cfg, "mono") == 0);
    const std::string first = read_file(fs::path(cfg.output_dir) / "detections.json");
    const json dets = json::parse(first);
    REQUIRE(dets.size() == 3);
    for (const auto& frame : dets) {
        CHECK(frame.contains("frame"));
        CHECK(frame.at("camera") == "left");
        CHECK(frame.contains("boxes"));
    }
    // Diagnostics show warm start carried between frames.
    const json diag = json::parse(read_file(fs::path(cfg.output_dir) / "diagnostics.json"));
    CHECK(diag[0].at("warm_start") == false);
    CHECK(diag[1].at("warm_start") == true);
    CHECK(diag[1].contains("em_iterations"));

    REQUIRE(run_detect(cfg, "mono") == 0);
    CHECK(read_file(fs::path(cfg.output_dir) / "detections.json") == first);
}

TEST_CASE("detect: the rendered obstacle is found in every frame") {
    const fs::path dir = scratch("detect_hit");
    const PipelineConfig cfg = make_dataset(dir, demo_scene(3, false));
    REQUIRE(run_detect(cfg, "mono") == 0);
    const json dets = json::parse(read_file(fs::path(cfg.output_dir) / "detections.json"));
    const auto anns = load_annotations_json((dir / "annotations.json").string());
    for (size_t f = 0; f < dets.size(); ++f) {
        const auto gt_boxes = anns[f].all_obstacles();
        REQUIRE(gt_boxes.size() == 1);
        bool hit = false;
        for (const auto& b : dets[f].at("boxes")) {
            Detection d;
            d.u = b[0].get<int>();
            d.v = b[1].get<int>();
            d.w = b[2].get<int>();
            d.h = b[3].get<int>();
            if (iou(d, gt_boxes[0]) >= 0.3) hit = true;
        }
        CHECK(hit);
    }
}

TEST_CASE("detect stereo: verified output validates and eval produces a report") {
    const fs::path dir = scratch("detect_stereo");
    const PipelineConfig cfg = make_dataset(dir, demo_scene(3, false));
    REQUIRE(run_detect(cfg, "stereo") == 0);
    const json dets = json::parse(read_file(fs::path(cfg.output_dir) / "detections.json"));
    REQUIRE(dets.size() == 3);
    for (const auto& frame : dets) {
        CHECK(frame.at("camera") == "stereo");
        const auto& boxes = frame.at("boxes");
        CHECK(frame.at("pair_id").size() == boxes.size());
        CHECK(frame.at("camera_tag").size() == boxes.size());
        CHECK(frame.at("rescued").size() == boxes.size());
    }

    PipelineConfig eval_cfg = cfg;
    eval_cfg.detections_path = (fs::path(cfg.output_dir) / "detections.json").string();
    REQUIRE(run_eval(eval_cfg) == 0);
    const json report = json::parse(read_file(fs::path(cfg.output_dir) / "report.json"));
    CHECK(report.at("frames") == 3);
    CHECK(report.at("TP").get<int>() >= 1);
}

TEST_CASE("glitter phantoms: mono produces more false positives than stereo") {
    const fs::path dir = scratch("detect_phantoms");
    const PipelineConfig cfg = make_dataset(dir, demo_scene(4, true));

    auto count_fp = [&](const std::string& mode) {
        PipelineConfig run_cfg = cfg;
        run_cfg.output_dir = (dir / ("out_" + mode)).string();
        REQUIRE(run_detect(run_cfg, mode) == 0);
        PipelineConfig eval_cfg = run_cfg;
        eval_cfg.detections_path = (fs::path(run_cfg.output_dir) / "detections.json").string();
        REQUIRE(run_eval(eval_cfg) == 0);
        const json report =
            json::parse(read_file(fs::path(run_cfg.output_dir) / "report.json"));
        return report.at("FP").get<int>();
    };
    const int mono_fp = count_fp("mono");
    const int stereo_fp = count_fp("stereo");
    CHECK(mono_fp > stereo_fp);
}

TEST_CASE("detect: zero frames exits cleanly, count mismatch aborts") {
    const fs::path dir = scratch("detect_empty");
    fs::create_directories(dir / "frames" / "left");
    fs::create_directories(dir / "frames" / "right");
    std::ofstream(dir / "imu.csv") << "timestamp,roll,pitch,yaw\n";
    save_calibration_json((dir / "calibration.json").string(),
                          CameraIntrinsics{500, 500, 160, 120, 0, 0, 320, 240}, std::nullopt);
    PipelineConfig cfg;
    cfg.dataset_dir = dir.string();
    cfg.calibration_path = (dir / "calibration.json").string();
    cfg.output_dir = (dir / "out").string();
    CHECK(run_detect(cfg, "mono") == 0);
    const json dets = json::parse(read_file(fs::path(cfg.output_dir) / "detections.json"));
    CHECK(dets.empty());

    // One IMU row, zero frames: mismatch.
    std::ofstream(dir / "imu.csv") << "timestamp,roll,pitch,yaw\n0,0,0,0\n";
    CHECK(run_detect(cfg, "mono") == 3);
    CHECK(run_detect(cfg, "bogus") == 2);
}

TEST_CASE("synth command: same seed gives byte-identical datasets") {
    const fs::path dir = scratch("synth_cmd");
    const fs::path scene = dir / "scene.json";
    std::ofstream(scene) << R"({"width": 128, "height": 96, "num_frames": 2, "seed": 5,
        "obstacles": [{"position": [0.0, 0.5, 8.0]}]})";
    PipelineConfig cfg;
    cfg.output_dir = (dir / "a").string();
    REQUIRE(run_synth(cfg, scene.string()) == 0);
    cfg.output_dir = (dir / "b").string();
    REQUIRE(run_synth(cfg, scene.string()) == 0);
    for (const char* rel : {"frames/left/000000.png", "frames/right/000001.png", "imu.csv",
                            "annotations.json"}) {
        CHECK(read_file(dir / "a" / rel) == read_file(dir / "b" / rel));
    }
    CHECK(run_synth(cfg, (dir / "missing.json").string()) == 2);
}

TEST_CASE("mono pipeline: horizon, edge and warm start behave") {
    SceneSpec spec = demo_scene(2, false);
    const RenderedSequence seq = render_sequence(spec);
    PipelineConfig cfg;
    const CameraIntrinsics intr = spec.resolved_intrinsics();
    MonoPipeline pipeline(cfg, intr, CalibrationResult{});
    CHECK_FALSE(pipeline.model().has_value());
    const FrameResult r0 = pipeline.process(to_float(seq.left[0]), seq.imu[0]);
    CHECK(pipeline.model().has_value());
    REQUIRE(r0.horizon.valid);
    CHECK(std::abs(r0.horizon.intercept_row - seq.gt.frames[0].horizon.intercept_row) < 1e-9);
    // Water edge near the ground-truth boundary in most columns.
    int close = 0, valid = 0;
    for (int x = 0; x < spec.width; ++x)
        if (r0.edge.valid[x]) {
            ++valid;
            if (std::abs(r0.edge.rows[x] - seq.gt.frames[0].edge_rows[x]) < 15.0) ++close;
        }
    REQUIRE(valid > spec.width / 2);
    CHECK(close > valid * 8 / 10);
    pipeline.reset();
    CHECK_FALSE(pipeline.model().has_value());
}
