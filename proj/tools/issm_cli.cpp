#include "issm/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"IMU-assisted semantic segmentation for maritime obstacle detection"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("-c,--config", config_path, "pipeline config JSON");

    // Flag overrides; these take precedence over the config file.
    std::optional<std::string> dataset_dir, calibration_path, cloud_path, detections_path,
        output_dir;
    std::optional<uint64_t> seed;
    app.add_option("--dataset", dataset_dir, "dataset directory");
    app.add_option("--calibration", calibration_path, "intrinsics/calibration JSON");
    app.add_option("--cloud", cloud_path, "point-cloud CSV (calibrate)");
    app.add_option("--detections", detections_path, "detections JSON (eval)");
    app.add_option("-o,--output", output_dir, "output directory");
    app.add_option("--seed", seed, "random seed");

    auto* calibrate = app.add_subcommand("calibrate", "camera-IMU calibration from a point cloud");
    std::string mode = "mono";
    auto* detect = app.add_subcommand("detect", "run obstacle detection over a sequence");
    detect->add_option("--mode", mode, "mono|stereo")->check(CLI::IsMember({"mono", "stereo"}));
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string scene_path;
    synth->add_option("--scene", scene_path, "scene spec JSON")->required();
    auto* eval = app.add_subcommand("eval", "score detections against annotations");
    auto* bench = app.add_subcommand("bench", "per-stage timing report");

    CLI11_PARSE(app, argc, argv);

    try {
        issm::PipelineConfig cfg;
        if (!config_path.empty()) cfg = issm::PipelineConfig::from_json_file(config_path);
        if (dataset_dir) cfg.dataset_dir = *dataset_dir;
        if (calibration_path) cfg.calibration_path = *calibration_path;
        if (cloud_path) cfg.cloud_path = *cloud_path;
        if (detections_path) cfg.detections_path = *detections_path;
        if (output_dir) cfg.output_dir = *output_dir;
        if (seed) cfg.seed = *seed;

        if (calibrate->parsed()) return issm::run_calibrate(cfg);
        if (detect->parsed()) return issm::run_detect(cfg, mode);
        if (synth->parsed()) return issm::run_synth(cfg, scene_path);
        if (eval->parsed()) return issm::run_eval(cfg);
        if (bench->parsed()) return issm::run_bench(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
