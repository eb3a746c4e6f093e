#pragma once

#include "issm/detection.hpp"

#include <optional>

namespace issm {

struct HorizonAnnotation {
    double slope = 0;
    double intercept = 0;
};

struct FrameAnnotation {
    int frame = 0;
    std::vector<std::pair<double, double>> edge;  // polyline vertices [col, row]
    DetectionSet large_obstacles, small_obstacles;
    DetectionSet right_obstacles;  // present for synthetic stereo datasets
    std::optional<HorizonAnnotation> horizon;

    DetectionSet all_obstacles() const {
        DetectionSet all = large_obstacles;
        all.insert(all.end(), small_obstacles.begin(), small_obstacles.end());
        return all;
    }
};

std::vector<FrameAnnotation> load_annotations_json(const std::string& path);
void save_annotations_json(const std::string& path, const std::vector<FrameAnnotation>& anns);

struct FrameScore {
    double edge_rmse = 0;  // normalized by image height
    bool edge_valid = false;
    int tp = 0, fp = 0, fn = 0;
};

struct SequenceReport {
    double mu_edg = 0, sigma_edg = 0;
    int tp = 0, fp = 0, fn = 0;
    double f_score = 0;
    double alpha_fp = 0;
    int frame_count = 0;
};

// Resamples a polyline to one row per integer column (linear interpolation);
// columns outside the vertex span are invalid.
WaterEdge resample_polyline(const std::vector<std::pair<double, double>>& polyline, int width);

// Normalized RMSE over columns valid in both edges. Returns nullopt when no
// mutually valid column exists.
std::optional<double> edge_error(const WaterEdge& pred, const WaterEdge& gt, int height);

double iou(const Detection& a, const Detection& b);

struct MatchCounts {
    int tp = 0, fp = 0, fn = 0;
};
// Greedy one-to-one matching by descending IoU; pairs at or above the
// threshold are TP.
MatchCounts match_detections(const DetectionSet& pred, const DetectionSet& gt,
                             double overlap_threshold);

double f_score(int tp, int fp, int fn);

SequenceReport aggregate(const std::vector<FrameScore>& scores);

void save_report_json(const std::string& path, const SequenceReport& report);
void save_report_csv(const std::string& path, const SequenceReport& report);

}  // namespace issm
