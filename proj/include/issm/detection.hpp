#pragma once

#include "issm/segmentation.hpp"

#include <string>
#include <vector>

namespace issm {

struct WaterMask {
    ImageU8 mask;  // 1 = water
};

struct Blob {
    int min_x = 0, min_y = 0, max_x = 0, max_y = 0;  // inclusive bounds
    int pixel_count = 0;
    double centroid_x = 0, centroid_y = 0;
};

struct ObstacleMap {
    ImageU8 region;  // largest 8-connected water component
    std::vector<Blob> blobs;
};

struct Detection {
    int u = 0, v = 0, w = 1, h = 1;  // top-left corner, width, height [px]
    int pixel_count = 0;
    std::string camera;  // "left" / "right" / "" for mono

    int area() const { return w * h; }
    double center_u() const { return u + w / 2.0; }
    double center_v() const { return v + h / 2.0; }
    double diagonal() const { return std::hypot(static_cast<double>(w), static_cast<double>(h)); }
};

using DetectionSet = std::vector<Detection>;

struct WaterEdge {
    std::vector<double> rows;   // per column
    std::vector<bool> valid;
};

// Upsamples working-resolution posteriors to full resolution (nearest
// neighbor) and labels each pixel by posterior argmax; ties break toward
// non-water.
WaterMask water_mask(const std::vector<Vec4>& posteriors, int work_width, int work_height,
                     int full_width, int full_height);
WaterMask water_mask(const std::vector<Vec4>& posteriors, int width, int height);

ObstacleMap extract_obstacle_map(const WaterMask& mask);

DetectionSet suppress_and_box(const ObstacleMap& map, int min_area, double merge_dist);

WaterEdge water_edge(const ObstacleMap& map);

// JSON export: {frame, camera, boxes: [[u,v,w,h], ...]}.
std::string detections_to_json(int frame, const std::string& camera, const DetectionSet& dets);

}  // namespace issm
