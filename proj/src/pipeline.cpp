#include "issm/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace issm {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    const json j = json::parse(f);
    PipelineConfig c;
    c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
    c.calibration_path = j.value("calibration_path", c.calibration_path);
    c.cloud_path = j.value("cloud_path", c.cloud_path);
    c.detections_path = j.value("detections_path", c.detections_path);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.work_width = j.value("work_width", c.work_width);
    c.work_height = j.value("work_height", c.work_height);
    c.max_iters = j.value("max_iters", c.max_iters);
    c.tol = j.value("tol", c.tol);
    c.blur_sigma = j.value("blur_sigma", c.blur_sigma);
    if (j.contains("displacements"))
        for (int k = 0; k < 3; ++k) c.displacements[k] = j.at("displacements")[k].get<double>();
    c.min_area = j.value("min_area", c.min_area);
    c.merge_dist = j.value("merge_dist", c.merge_dist);
    c.theta_s1 = j.value("theta_s1", c.theta_s1);
    c.theta_s2 = j.value("theta_s2", c.theta_s2);
    c.theta_ncc = j.value("theta_ncc", c.theta_ncc);
    c.baseline = j.value("baseline", c.baseline);
    c.alpha_h = j.value("alpha_h", c.alpha_h);
    c.camera_height = j.value("camera_height", c.camera_height);
    c.dist_threshold = j.value("dist_threshold", c.dist_threshold);
    c.inlier_tol = j.value("inlier_tol", c.inlier_tol);
    c.calib_max_iters = j.value("calib_max_iters", c.calib_max_iters);
    c.iou_threshold = j.value("iou_threshold", c.iou_threshold);
    c.seed = j.value("seed", c.seed);
    return c;
}

HyperPriorSet PipelineConfig::hyper_template() const {
    HyperPriorSet set = HyperPriorSet::default_template();
    for (int k = 0; k < 3; ++k) {
        set.components[k].displacement = displacements[k];
        set.components[k].mean(1) = 0.5 + displacements[k];
    }
    return set;
}

MonoPipeline::MonoPipeline(const PipelineConfig& cfg, const CameraIntrinsics& intr,
                           const CalibrationResult& calib)
    : cfg_(cfg),
      intr_(intr),
      calib_(calib),
      template_(cfg.hyper_template()),
      kernel_(MrfKernel::make()) {}

FrameResult MonoPipeline::process(const ImageF& frame, const ImuReading& imu) {
    FrameResult res;
    auto t0 = std::chrono::steady_clock::now();

    res.horizon = estimate_horizon(imu, calib_, intr_, cfg_.alpha_h, cfg_.camera_height);
    const double sx = static_cast<double>(cfg_.work_width) / frame.width;
    const double sy = static_cast<double>(cfg_.work_height) / frame.height;
    const HorizonLine work_h = rescale_horizon(res.horizon, sx, sy);

    const FeatureImage feats = FeatureImage::from_image(frame, cfg_.work_width, cfg_.work_height);
    const ConditionalPriorMasks masks = build_conditional_priors(
        work_h, cfg_.work_width, cfg_.work_height, cfg_.blur_sigma, intr_.cx * sx);
    const HyperPriorSet hyp = build_hyper_priors(res.horizon, frame.height, template_);

    EmOptions opts;
    opts.max_iters = cfg_.max_iters;
    opts.tol = cfg_.tol;
    MixtureModel model = em_fit(feats, masks, hyp, model_, kernel_, opts);
    res.em_iterations = model.iterations;
    res.em_delta = model.final_delta;
    res.seg_ms = ms_since(t0);

    t0 = std::chrono::steady_clock::now();
    const WaterMask mask = water_mask(model.posteriors, cfg_.work_width, cfg_.work_height,
                                      frame.width, frame.height);
    const ObstacleMap map = extract_obstacle_map(mask);
    res.detections = suppress_and_box(map, cfg_.min_area, cfg_.merge_dist);
    res.edge = water_edge(map);
    res.det_ms = ms_since(t0);

    model_ = std::move(model);
    return res;
}

StereoPipeline::StereoPipeline(const PipelineConfig& cfg, const CameraIntrinsics& intr,
                               const CalibrationResult& calib)
    : left_(cfg, intr, calib),
      right_(cfg, intr, calib),
      geom_(StereoGeometry::from_calibrated(intr, intr, cfg.baseline)) {
    vcfg_.theta_s1 = cfg.theta_s1;
    vcfg_.theta_s2 = cfg.theta_s2;
    vcfg_.theta_ncc = cfg.theta_ncc;
}

StereoFrameResult StereoPipeline::process(const ImageF& left, const ImageF& right,
                                          const ImuReading& imu) {
    StereoFrameResult res;
    res.left = left_.process(left, imu);
    res.right = right_.process(right, imu);
    for (auto& d : res.left.detections) d.camera = "left";
    for (auto& d : res.right.detections) d.camera = "right";
    auto t0 = std::chrono::steady_clock::now();
    res.verified = consolidate(res.left.detections, res.right.detections, left, right, geom_, vcfg_);
    res.verify_ms = ms_since(t0);
    return res;
}

namespace {

std::vector<std::string> list_frames(const fs::path& dir) {
    std::vector<std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

json frame_result_json(int frame, const std::string& camera, const FrameResult& r) {
    json boxes = json::array();
    for (const Detection& d : r.detections) boxes.push_back({d.u, d.v, d.w, d.h});
    return {{"frame", frame}, {"camera", camera}, {"boxes", boxes}};
}

}  // namespace

int run_calibrate(const PipelineConfig& cfg) {
    PointCloud cloud;
    try {
        cloud = load_point_cloud_csv(cfg.cloud_path);
    } catch (const std::exception& e) {
        std::cerr << "calibrate: " << e.what() << '\n';
        return 2;
    }
    if (cloud.size() < 3) {
        std::cerr << "calibrate: insufficient data, " << cloud.size() << " points in "
                  << cfg.cloud_path << '\n';
        return 3;
    }
    ImuReading imu_static;
    const fs::path imu_path = fs::path(cfg.dataset_dir) / "imu.csv";
    if (fs::exists(imu_path)) {
        const auto readings = load_imu_csv(imu_path.string());
        if (!readings.empty()) imu_static = readings.front();
    }
    CalibrationOptions opts;
    opts.dist_threshold = cfg.dist_threshold;
    opts.inlier_tol = cfg.inlier_tol;
    opts.max_iters = cfg.calib_max_iters;
    opts.seed = cfg.seed;
    try {
        const CameraIntrinsics intr = load_calibration_json(cfg.calibration_path).intrinsics;
        const CalibrationResult result = calibrate_camera_imu(cloud, imu_static, opts);
        fs::create_directories(cfg.output_dir);
        save_calibration_json((fs::path(cfg.output_dir) / "calibration.json").string(), intr, result);
        std::cout << "calibrate: " << result.inlier_count << " inliers, residual RMS "
                  << result.residual_rms << " m\n";
    } catch (const InsufficientDataError& e) {
        std::cerr << "calibrate: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "calibrate: " << e.what() << '\n';
        return 4;
    }
    return 0;
}

int run_detect(const PipelineConfig& cfg, const std::string& mode) {
    if (mode != "mono" && mode != "stereo") {
        std::cerr << "detect: unknown mode " << mode << '\n';
        return 2;
    }
    const CalibrationFile calfile = load_calibration_json(cfg.calibration_path);
    const CalibrationResult calib = calfile.calibration.value_or(CalibrationResult{});
    const auto left_frames = list_frames(fs::path(cfg.dataset_dir) / "frames" / "left");
    const auto right_frames = list_frames(fs::path(cfg.dataset_dir) / "frames" / "right");
    const auto imu = load_imu_csv((fs::path(cfg.dataset_dir) / "imu.csv").string());

    if (left_frames.size() != imu.size()) {
        std::cerr << "detect: frame/IMU count mismatch: " << left_frames.size() << " frames, "
                  << imu.size() << " IMU rows\n";
        return 3;
    }
    if (mode == "stereo" && right_frames.size() != left_frames.size()) {
        std::cerr << "detect: left/right frame count mismatch: " << left_frames.size() << " vs "
                  << right_frames.size() << '\n';
        return 3;
    }
    if (left_frames.empty()) std::cout << "detect: 0 frames\n";

    fs::create_directories(cfg.output_dir);
    json detections = json::array();
    json diagnostics = json::array();

    if (mode == "mono") {
        MonoPipeline pipeline(cfg, calfile.intrinsics, calib);
        for (size_t f = 0; f < left_frames.size(); ++f) {
            ImageF img;
            try {
                img = to_float(read_png(left_frames[f]));
            } catch (const std::exception& e) {
                std::cerr << "detect: skipping frame " << f << ": " << e.what() << '\n';
                diagnostics.push_back({{"frame", f}, {"skipped", true}, {"reason", e.what()}});
                continue;
            }
            const FrameResult r = pipeline.process(img, imu[f]);
            detections.push_back(frame_result_json(static_cast<int>(f), "left", r));
            diagnostics.push_back({{"frame", f},
                                   {"seg_ms", r.seg_ms},
                                   {"det_ms", r.det_ms},
                                   {"em_iterations", r.em_iterations},
                                   {"em_delta", r.em_delta},
                                   {"warm_start", f > 0}});
        }
    } else {
        StereoPipeline pipeline(cfg, calfile.intrinsics, calib);
        for (size_t f = 0; f < left_frames.size(); ++f) {
            ImageF left, right;
            try {
                left = to_float(read_png(left_frames[f]));
                right = to_float(read_png(right_frames[f]));
            } catch (const std::exception& e) {
                std::cerr << "detect: skipping frame " << f << ": " << e.what() << '\n';
                diagnostics.push_back({{"frame", f}, {"skipped", true}, {"reason", e.what()}});
                continue;
            }
            const StereoFrameResult r = pipeline.process(left, right, imu[f]);
            detections.push_back(json::parse(verified_to_json(static_cast<int>(f), r.verified)));
            diagnostics.push_back({{"frame", f},
                                   {"seg_ms", r.left.seg_ms + r.right.seg_ms},
                                   {"det_ms", r.left.det_ms + r.right.det_ms},
                                   {"verify_ms", r.verify_ms},
                                   {"em_iterations", r.left.em_iterations},
                                   {"em_delta", r.left.em_delta},
                                   {"warm_start", f > 0}});
        }
    }
    std::ofstream out(fs::path(cfg.output_dir) / "detections.json");
    out << detections.dump(2) << '\n';
    std::ofstream diag(fs::path(cfg.output_dir) / "diagnostics.json");
    diag << diagnostics.dump(2) << '\n';
    return 0;
}

int run_eval(const PipelineConfig& cfg) {
    std::vector<FrameAnnotation> anns;
    json detections;
    int height = 0;
    try {
        anns = load_annotations_json((fs::path(cfg.dataset_dir) / "annotations.json").string());
        std::ifstream f(cfg.detections_path);
        if (!f) throw std::runtime_error("cannot open " + cfg.detections_path);
        detections = json::parse(f);
        height = load_calibration_json(cfg.calibration_path).intrinsics.height;
    } catch (const std::exception& e) {
        std::cerr << "eval: " << e.what() << '\n';
        return 2;
    }

    std::vector<FrameScore> scores;
    for (const auto& det_frame : detections) {
        const int frame = det_frame.at("frame").get<int>();
        const FrameAnnotation* ann = nullptr;
        for (const auto& a : anns)
            if (a.frame == frame) ann = &a;
        if (!ann) {
            std::cerr << "eval: no annotation for frame " << frame << '\n';
            return 3;
        }
        DetectionSet pred;
        const auto& boxes = det_frame.at("boxes");
        for (size_t i = 0; i < boxes.size(); ++i) {
            // Stereo exports tag each box; score the left camera only.
            if (det_frame.contains("camera_tag") &&
                det_frame.at("camera_tag")[i].get<std::string>() != "left")
                continue;
            Detection d;
            d.u = boxes[i][0].get<int>();
            d.v = boxes[i][1].get<int>();
            d.w = boxes[i][2].get<int>();
            d.h = boxes[i][3].get<int>();
            pred.push_back(d);
        }
        FrameScore score;
        const MatchCounts counts = match_detections(pred, ann->all_obstacles(), cfg.iou_threshold);
        score.tp = counts.tp;
        score.fp = counts.fp;
        score.fn = counts.fn;
        scores.push_back(score);
    }
    if (scores.empty()) {
        std::cerr << "eval: no frames scored\n";
        return 3;
    }
    const SequenceReport report = aggregate(scores);
    fs::create_directories(cfg.output_dir);
    save_report_json((fs::path(cfg.output_dir) / "report.json").string(), report);
    save_report_csv((fs::path(cfg.output_dir) / "report.csv").string(), report);
    std::cout << "eval: TP " << report.tp << " FP " << report.fp << " FN " << report.fn
              << " F " << report.f_score << '\n';
    return 0;
}

SceneSpec scene_from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("scene: cannot open " + path);
    const json j = json::parse(f);
    SceneSpec s;
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.camera_height = j.value("camera_height", s.camera_height);
    s.alpha_h = j.value("alpha_h", s.alpha_h);
    s.baseline = j.value("baseline", s.baseline);
    s.num_frames = j.value("num_frames", s.num_frames);
    s.middle_band_frac = j.value("middle_band_frac", s.middle_band_frac);
    s.glitter_count = j.value("glitter_count", s.glitter_count);
    s.glitter_size = j.value("glitter_size", s.glitter_size);
    s.reflection_band = j.value("reflection_band", s.reflection_band);
    s.texture_amplitude = j.value("texture_amplitude", s.texture_amplitude);
    s.sky_noise = j.value("sky_noise", s.sky_noise);
    s.middle_noise = j.value("middle_noise", s.middle_noise);
    s.water_noise = j.value("water_noise", s.water_noise);
    s.seed = j.value("seed", s.seed);
    if (j.contains("roll")) s.roll = j.at("roll").get<std::vector<double>>();
    if (j.contains("pitch")) s.pitch = j.at("pitch").get<std::vector<double>>();
    auto color = [&](const char* key, std::array<double, 3>& dst) {
        if (j.contains(key))
            for (int c = 0; c < 3; ++c) dst[c] = j.at(key)[c].get<double>();
    };
    color("sky_color", s.sky_color);
    color("middle_color", s.middle_color);
    color("water_color", s.water_color);
    if (j.contains("obstacles"))
        for (const auto& o : j.at("obstacles")) {
            ObstacleSpec ob;
            for (int c = 0; c < 3; ++c) ob.position(c) = o.at("position")[c].get<double>();
            ob.width_m = o.value("width_m", ob.width_m);
            ob.height_m = o.value("height_m", ob.height_m);
            ob.ellipse = o.value("ellipse", false);
            if (o.contains("color"))
                for (int c = 0; c < 3; ++c) ob.color[c] = o.at("color")[c].get<double>();
            s.obstacles.push_back(ob);
        }
    return s;
}

int run_synth(const PipelineConfig& cfg, const std::string& scene_path) {
    try {
        SceneSpec spec = scene_from_json_file(scene_path);
        if (cfg.seed != 0) spec.seed = cfg.seed;
        write_dataset(spec, cfg.output_dir);
        std::cout << "synth: wrote " << spec.num_frames << " frame pairs to " << cfg.output_dir
                  << '\n';
    } catch (const std::exception& e) {
        std::cerr << "synth: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

int run_bench(const PipelineConfig& cfg) {
    SceneSpec spec;
    spec.width = 1278;
    spec.height = 958;
    spec.num_frames = 1;
    spec.seed = cfg.seed;
    spec.obstacles.push_back({{-1.5, 0.9, 12.0}, 0.6, 0.6, {0.85, 0.3, 0.1}, false});
    spec.obstacles.push_back({{2.0, 0.8, 18.0}, 0.8, 0.8, {0.2, 0.7, 0.2}, false});
    FrameGroundTruth gt;
    const ImageF left = to_float(render_frame(spec, 0, 0, gt));
    const ImageF right = to_float(render_frame(spec, 0, 1, gt));
    const CameraIntrinsics intr = spec.resolved_intrinsics();
    const ImuReading imu = spec.imu_at(0);

    PipelineConfig bench_cfg = cfg;
    auto run = [&](int repeats, auto&& body) {
        std::vector<double> t;
        for (int i = 0; i < repeats; ++i) {
            auto t0 = std::chrono::steady_clock::now();
            body();
            t.push_back(ms_since(t0));
        }
        std::sort(t.begin(), t.end());
        return t[t.size() / 2];
    };

    MonoPipeline mono(bench_cfg, intr, CalibrationResult{});
    const double mono_ms = run(7, [&] { mono.process(left, imu); });
    StereoPipeline stereo(bench_cfg, intr, CalibrationResult{});
    double verify_ms = 0;
    const double stereo_ms = run(7, [&] {
        const auto r = stereo.process(left, right, imu);
        verify_ms = r.verify_ms;
    });
    std::cout << "bench: mono dt " << mono_ms << " ms (" << 1000.0 / mono_ms << " fps)\n";
    std::cout << "bench: stereo dt " << stereo_ms << " ms (" << 1000.0 / stereo_ms
              << " fps), verification " << verify_ms << " ms\n";
    return 0;
}

}  // namespace issm
