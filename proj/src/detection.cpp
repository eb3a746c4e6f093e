#include "issm/detection.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>
#include <queue>

namespace issm {

WaterMask water_mask(const std::vector<Vec4>& posteriors, int width, int height) {
    return water_mask(posteriors, width, height, width, height);
}

WaterMask water_mask(const std::vector<Vec4>& posteriors, int work_width, int work_height,
                     int full_width, int full_height) {
    if (posteriors.size() != static_cast<size_t>(work_width) * work_height)
        throw std::invalid_argument("water_mask: posterior count does not match grid");
    WaterMask out;
    out.mask = ImageU8(full_width, full_height, 1);
    for (int y = 0; y < full_height; ++y) {
        const int wy = std::min(y * work_height / full_height, work_height - 1);
        for (int x = 0; x < full_width; ++x) {
            const int wx = std::min(x * work_width / full_width, work_width - 1);
            const Vec4& q = posteriors[static_cast<size_t>(wy) * work_width + wx];
            // Water wins only a strict maximum; ties go to non-water.
            const double water = q(kWater);
            bool is_water = true;
            for (int k = 0; k < 4; ++k)
                if (k != kWater && q(k) >= water) is_water = false;
            out.mask.at(x, y) = is_water ? 1 : 0;
        }
    }
    return out;
}

namespace {

constexpr int kDx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
constexpr int kDy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};

// 8-connected component labeling by BFS. Labels start at 1; 0 = unlabeled.
int label_components(const ImageU8& mask, uint8_t value, std::vector<int>& labels) {
    const int w = mask.width, h = mask.height;
    labels.assign(static_cast<size_t>(w) * h, 0);
    int next = 0;
    std::vector<int> stack;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            if (mask.at(x, y) != value || labels[i] != 0) continue;
            ++next;
            labels[i] = next;
            stack.assign(1, static_cast<int>(i));
            while (!stack.empty()) {
                const int cur = stack.back();
                stack.pop_back();
                const int cx = cur % w, cy = cur / w;
                for (int d = 0; d < 8; ++d) {
                    const int nx = cx + kDx[d], ny = cy + kDy[d];
                    if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                    const size_t ni = static_cast<size_t>(ny) * w + nx;
                    if (mask.at(nx, ny) == value && labels[ni] == 0) {
                        labels[ni] = next;
                        stack.push_back(ni);
                    }
                }
            }
        }
    return next;
}

}  // namespace

ObstacleMap extract_obstacle_map(const WaterMask& mask) {
    const int w = mask.mask.width, h = mask.mask.height;
    ObstacleMap out;
    out.region = ImageU8(w, h, 1);

    std::vector<int> water_labels;
    const int n_water = label_components(mask.mask, 1, water_labels);
    if (n_water == 0) return out;

    std::vector<int> sizes(n_water + 1, 0);
    for (int l : water_labels)
        if (l > 0) ++sizes[l];
    const int largest =
        static_cast<int>(std::max_element(sizes.begin() + 1, sizes.end()) - sizes.begin());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.region.at(x, y) = water_labels[static_cast<size_t>(y) * w + x] == largest ? 1 : 0;

    // Water edge rows, needed for the enclosure test below.
    std::vector<double> edge_rows(w, -1.0);
    for (int x = 0; x < w; ++x)
        for (int y = 0; y < h; ++y)
            if (out.region.at(x, y)) {
                edge_rows[x] = y;
                break;
            }

    std::vector<int> hole_labels;
    const int n_holes = label_components(out.region, 0, hole_labels);
    std::vector<Blob> blobs(n_holes);
    std::vector<int> boundary_water(n_holes, 0), boundary_total(n_holes, 0);
    for (auto& b : blobs) {
        b.min_x = w;
        b.min_y = h;
        b.max_x = -1;
        b.max_y = -1;
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int l = hole_labels[static_cast<size_t>(y) * w + x];
            if (l == 0) continue;
            Blob& b = blobs[l - 1];
            b.min_x = std::min(b.min_x, x);
            b.min_y = std::min(b.min_y, y);
            b.max_x = std::max(b.max_x, x);
            b.max_y = std::max(b.max_y, y);
            ++b.pixel_count;
            b.centroid_x += x;
            b.centroid_y += y;
            for (int d = 0; d < 8; ++d) {
                const int nx = x + kDx[d], ny = y + kDy[d];
                if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                if (hole_labels[static_cast<size_t>(ny) * w + nx] == l) continue;
                ++boundary_total[l - 1];
                if (out.region.at(nx, ny)) ++boundary_water[l - 1];
            }
        }

    for (int l = 0; l < n_holes; ++l) {
        Blob& b = blobs[l];
        b.centroid_x /= b.pixel_count;
        b.centroid_y /= b.pixel_count;
        if (boundary_total[l] == 0) continue;  // blob fills the image
        const double water_frac =
            static_cast<double>(boundary_water[l]) / static_cast<double>(boundary_total[l]);
        const int col = std::clamp(static_cast<int>(b.centroid_x), 0, w - 1);
        const bool below_edge = edge_rows[col] >= 0 && b.centroid_y >= edge_rows[col];
        if (water_frac >= 0.6 && below_edge) out.blobs.push_back(b);
    }
    return out;
}

namespace {

// One union-find pass: boxes whose edge-to-edge distance is within merge_dist
// collapse into their union box (transitive closure of the proximity graph).
std::vector<Blob> merge_pass(const std::vector<Blob>& blobs, double merge_dist) {
    const int n = static_cast<int>(blobs.size());
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    auto gap = [](int a0, int a1, int b0, int b1) {
        if (b0 > a1) return static_cast<double>(b0 - a1);
        if (a0 > b1) return static_cast<double>(a0 - b1);
        return 0.0;
    };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double dx = gap(blobs[i].min_x, blobs[i].max_x, blobs[j].min_x, blobs[j].max_x);
            const double dy = gap(blobs[i].min_y, blobs[i].max_y, blobs[j].min_y, blobs[j].max_y);
            if (std::hypot(dx, dy) <= merge_dist) parent[find(i)] = find(j);
        }
    std::vector<Blob> out;
    std::vector<int> root_index(n, -1);
    for (int i = 0; i < n; ++i) {
        const int r = find(i);
        if (root_index[r] < 0) {
            root_index[r] = static_cast<int>(out.size());
            out.push_back(blobs[i]);
        } else {
            Blob& b = out[root_index[r]];
            b.min_x = std::min(b.min_x, blobs[i].min_x);
            b.min_y = std::min(b.min_y, blobs[i].min_y);
            b.max_x = std::max(b.max_x, blobs[i].max_x);
            b.max_y = std::max(b.max_y, blobs[i].max_y);
            b.pixel_count += blobs[i].pixel_count;
        }
    }
    return out;
}

}  // namespace

DetectionSet suppress_and_box(const ObstacleMap& map, int min_area, double merge_dist) {
    if (min_area < 1) throw std::invalid_argument("suppress_and_box: min_area must be >= 1");
    std::vector<Blob> kept;
    for (const Blob& b : map.blobs)
        if (b.pixel_count >= min_area) kept.push_back(b);

    // Union boxes can move within merge_dist of further boxes, so the merge
    // repeats until a fixed point; this makes the operation idempotent.
    for (;;) {
        std::vector<Blob> merged = merge_pass(kept, merge_dist);
        const bool stable = merged.size() == kept.size();
        kept = std::move(merged);
        if (stable) break;
    }

    std::vector<Detection> out;
    for (const Blob& b : kept) {
        Detection d;
        d.u = b.min_x;
        d.v = b.min_y;
        d.w = b.max_x - b.min_x + 1;
        d.h = b.max_y - b.min_y + 1;
        d.pixel_count = b.pixel_count;
        out.push_back(d);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Detection& a, const Detection& b) { return a.area() > b.area(); });
    return out;
}

WaterEdge water_edge(const ObstacleMap& map) {
    const int w = map.region.width, h = map.region.height;
    WaterEdge edge;
    edge.rows.assign(w, 0.0);
    edge.valid.assign(w, false);
    for (int x = 0; x < w; ++x)
        for (int y = 0; y < h; ++y)
            if (map.region.at(x, y)) {
                edge.rows[x] = y;
                edge.valid[x] = true;
                break;
            }
    return edge;
}

std::string detections_to_json(int frame, const std::string& camera, const DetectionSet& dets) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const Detection& d : dets) boxes.push_back({d.u, d.v, d.w, d.h});
    return nlohmann::json{{"frame", frame}, {"camera", camera}, {"boxes", boxes}}.dump();
}

}  // namespace issm
