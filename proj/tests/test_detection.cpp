#include "issm/detection.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <deque>
#include <random>
#include <set>

using namespace issm;

namespace {

std::vector<Vec4> constant_posteriors(int n, const Vec4& row) { return {static_cast<size_t>(n), row}; }

ImageU8 mask_from_string(const std::vector<std::string>& rows) {
    const int h = static_cast<int>(rows.size());
    const int w = static_cast<int>(rows[0].size());
    ImageU8 m(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.at(x, y) = rows[y][x] == '#' ? 1 : 0;
    return m;
}

// Independent flood-fill oracle: all 8-connected components of `value` pixels.
std::vector<std::set<std::pair<int, int>>> flood_components(const ImageU8& img, uint8_t value) {
    std::vector<std::set<std::pair<int, int>>> comps;
    std::vector<char> seen(img.data.size(), 0);
    for (int sy = 0; sy < img.height; ++sy)
        for (int sx = 0; sx < img.width; ++sx) {
            const size_t si = static_cast<size_t>(sy) * img.width + sx;
            if (seen[si] || img.at(sx, sy) != value) continue;
            std::set<std::pair<int, int>> comp;
            std::deque<std::pair<int, int>> todo{{sx, sy}};
            seen[si] = 1;
            while (!todo.empty()) {
                auto [x, y] = todo.front();
                todo.pop_front();
                comp.insert({x, y});
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= img.width || ny >= img.height) continue;
                        const size_t ni = static_cast<size_t>(ny) * img.width + nx;
                        if (!seen[ni] && img.at(nx, ny) == value) {
                            seen[ni] = 1;
                            todo.push_back({nx, ny});
                        }
                    }
            }
            comps.push_back(std::move(comp));
        }
    return comps;
}

ImageU8 random_mask(int w, int h, double water_frac, uint64_t seed) {
    ImageU8 m(w, h, 1);
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution water(water_frac);
    for (auto& v : m.data) v = water(rng) ? 1 : 0;
    return m;
}

}  // namespace

TEST_CASE("water_mask: pure water posteriors give an all-ones mask") {
    const auto post = constant_posteriors(12, Vec4(0, 0, 1, 0));
    const WaterMask wm = water_mask(post, 4, 3);
    for (uint8_t v : wm.mask.data) CHECK(v == 1);
}

TEST_CASE("water_mask: ties break toward non-water") {
    const auto post = constant_posteriors(4, Vec4(0, 0, 0.5, 0.5));
    const WaterMask wm = water_mask(post, 2, 2);
    for (uint8_t v : wm.mask.data) CHECK(v == 0);
}

TEST_CASE("water_mask equals a naive argmax loop oracle") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int w = 37, h = 23;
    std::vector<Vec4> post(static_cast<size_t>(w) * h);
    for (auto& row : post) {
        Vec4 r(u(rng), u(rng), u(rng), u(rng));
        row = r / r.sum();
    }
    const WaterMask wm = water_mask(post, w, h);
    for (size_t i = 0; i < post.size(); ++i) {
        bool water_wins = true;
        for (int k = 0; k < 4; ++k)
            if (k != kWater && post[i](k) >= post[i](kWater)) water_wins = false;
        CHECK(wm.mask.data[i] == (water_wins ? 1 : 0));
    }
}

TEST_CASE("water_mask upsampling is nearest neighbor") {
    // 2x2 working grid onto 4x4 full grid: each posterior covers a 2x2 block.
    std::vector<Vec4> post = {Vec4(0, 0, 1, 0), Vec4(1, 0, 0, 0), Vec4(1, 0, 0, 0),
                              Vec4(0, 0, 1, 0)};
    const WaterMask wm = water_mask(post, 2, 2, 4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const int wx = x / 2, wy = y / 2;
            const bool water = (wx == 0 && wy == 0) || (wx == 1 && wy == 1);
            CHECK(wm.mask.at(x, y) == (water ? 1 : 0));
        }
}

TEST_CASE("extract_obstacle_map: full water with a 5x5 hole yields one 25 px blob") {
    ImageU8 m(20, 20, 1);
    for (auto& v : m.data) v = 1;
    for (int y = 7; y < 12; ++y)
        for (int x = 6; x < 11; ++x) m.at(x, y) = 0;
    const ObstacleMap map = extract_obstacle_map(WaterMask{m});
    REQUIRE(map.blobs.size() == 1);
    CHECK(map.blobs[0].pixel_count == 25);
    CHECK(map.blobs[0].min_x == 6);
    CHECK(map.blobs[0].max_x == 10);
    CHECK(map.blobs[0].min_y == 7);
    CHECK(map.blobs[0].max_y == 11);
}

TEST_CASE("extract_obstacle_map keeps the largest water component") {
    // Top strip 10x10 water (100 px), separated band of 0s, then 10x4 water (40 px).
    ImageU8 m(10, 20, 1);
    for (auto& v : m.data) v = 0;
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) m.at(x, y) = 1;
    for (int y = 14; y < 18; ++y)
        for (int x = 0; x < 10; ++x) m.at(x, y) = 1;
    const ObstacleMap map = extract_obstacle_map(WaterMask{m});
    int kept = 0;
    for (uint8_t v : map.region.data) kept += v;
    CHECK(kept == 100);
    for (int x = 0; x < 10; ++x) {
        CHECK(map.region.at(x, 0) == 1);
        CHECK(map.region.at(x, 15) == 0);
    }
}

TEST_CASE("extract_obstacle_map: empty water mask") {
    ImageU8 m(8, 8, 1);
    for (auto& v : m.data) v = 0;
    const ObstacleMap map = extract_obstacle_map(WaterMask{m});
    CHECK(map.blobs.empty());
    for (uint8_t v : map.region.data) CHECK(v == 0);
}

TEST_CASE("blob enumeration matches the flood-fill oracle on random masks") {
    for (uint64_t seed = 0; seed < 500; ++seed) {
        const ImageU8 m = random_mask(24, 16, 0.7, seed);
        const ObstacleMap map = extract_obstacle_map(WaterMask{m});

        // Oracle: largest water component, then non-water components fully
        // inside the mask that satisfy the enclosure rule of the implementation
        // is detection-level logic; here we check the partition facts instead:
        // every blob is 8-connected, disjoint from the region, and its pixels
        // are non-water.
        const auto water_comps = flood_components(m, 1);
        size_t largest = 0;
        for (const auto& c : water_comps) largest = std::max(largest, c.size());
        int region_px = 0;
        for (uint8_t v : map.region.data) region_px += v;
        CHECK(static_cast<size_t>(region_px) == (water_comps.empty() ? 0 : largest));

        // Holes are connected components of the complement of the kept region
        // (minor water components count as potential obstacle pixels).
        const auto hole_comps = flood_components(map.region, 0);
        for (const auto& blob : map.blobs) {
            // Every reported blob must exactly equal one flood-fill component.
            bool matched = false;
            for (const auto& c : hole_comps) {
                if (static_cast<int>(c.size()) != blob.pixel_count) continue;
                int minx = 1 << 20, miny = 1 << 20, maxx = -1, maxy = -1;
                for (auto [x, y] : c) {
                    minx = std::min(minx, x);
                    maxx = std::max(maxx, x);
                    miny = std::min(miny, y);
                    maxy = std::max(maxy, y);
                }
                if (minx == blob.min_x && maxx == blob.max_x && miny == blob.min_y &&
                    maxy == blob.max_y) {
                    matched = true;
                    break;
                }
            }
            CHECK(matched);
        }
    }
}

TEST_CASE("suppress_and_box merges blobs within merge_dist") {
    ObstacleMap map;
    map.region = ImageU8(40, 40, 1);
    Blob a{5, 5, 10, 10, 36, 7.5, 7.5};
    Blob b{13, 5, 18, 10, 36, 15.5, 7.5};  // 2 px gap to a
    Blob c{30, 30, 35, 35, 36, 32.5, 32.5};
    map.blobs = {a, b, c};
    const DetectionSet dets = suppress_and_box(map, 1, 5.0);
    REQUIRE(dets.size() == 2);
    // Merged union box of a and b.
    CHECK(dets[0].u == 5);
    CHECK(dets[0].v == 5);
    CHECK(dets[0].w == 14);
    CHECK(dets[0].h == 6);
    CHECK(dets[0].pixel_count == 72);
}

TEST_CASE("suppress_and_box drops blobs below min_area") {
    ObstacleMap map;
    map.region = ImageU8(20, 20, 1);
    map.blobs = {Blob{0, 0, 2, 2, 9, 1, 1}, Blob{10, 10, 17, 17, 64, 13.5, 13.5}};
    const DetectionSet dets = suppress_and_box(map, 25, 0.0);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].pixel_count == 64);
}

TEST_CASE("merging equals a transitive-closure oracle on random layouts") {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> pos(0, 50), size(1, 8);
    for (int trial = 0; trial < 200; ++trial) {
        ObstacleMap map;
        map.region = ImageU8(70, 70, 1);
        const int n = 2 + static_cast<int>(rng() % 7);
        for (int i = 0; i < n; ++i) {
            Blob b;
            b.min_x = pos(rng);
            b.min_y = pos(rng);
            b.max_x = b.min_x + size(rng);
            b.max_y = b.min_y + size(rng);
            b.pixel_count = (b.max_x - b.min_x + 1) * (b.max_y - b.min_y + 1);
            b.centroid_x = (b.min_x + b.max_x) / 2.0;
            b.centroid_y = (b.min_y + b.max_y) / 2.0;
            map.blobs.push_back(b);
        }
        const double merge_dist = 6.0;
        const DetectionSet dets = suppress_and_box(map, 1, merge_dist);

        // Oracle: transitive closure of the edge-to-edge distance graph, union
        // boxes per class, repeated until no class count change (merged union
        // boxes may come within merge_dist of further boxes).
        auto gap = [](const Blob& p, const Blob& q) {
            const double dx = std::max({0, p.min_x - q.max_x, q.min_x - p.max_x});
            const double dy = std::max({0, p.min_y - q.max_y, q.min_y - p.max_y});
            return std::hypot(dx, dy);
        };
        std::vector<Blob> boxes = map.blobs;
        for (;;) {
            std::vector<int> cls(boxes.size());
            for (size_t i = 0; i < cls.size(); ++i) cls[i] = static_cast<int>(i);
            bool changed = true;
            while (changed) {
                changed = false;
                for (size_t i = 0; i < cls.size(); ++i)
                    for (size_t j = 0; j < cls.size(); ++j)
                        if (gap(boxes[i], boxes[j]) <= merge_dist && cls[i] != cls[j]) {
                            const int lo = std::min(cls[i], cls[j]);
                            cls[i] = cls[j] = lo;
                            changed = true;
                        }
            }
            std::set<int> classes(cls.begin(), cls.end());
            std::vector<Blob> next;
            for (int c : classes) {
                Blob u;
                u.min_x = 1 << 20;
                u.min_y = 1 << 20;
                u.max_x = -1;
                u.max_y = -1;
                for (size_t i = 0; i < cls.size(); ++i)
                    if (cls[i] == c) {
                        u.min_x = std::min(u.min_x, boxes[i].min_x);
                        u.max_x = std::max(u.max_x, boxes[i].max_x);
                        u.min_y = std::min(u.min_y, boxes[i].min_y);
                        u.max_y = std::max(u.max_y, boxes[i].max_y);
                    }
                next.push_back(u);
            }
            const bool stable = next.size() == boxes.size();
            boxes = std::move(next);
            if (stable) break;
        }
        CHECK(dets.size() == boxes.size());
        std::multiset<std::array<int, 4>> want, got;
        for (const auto& b : boxes)
            want.insert({b.min_x, b.min_y, b.max_x - b.min_x + 1, b.max_y - b.min_y + 1});
        for (const auto& d : dets) got.insert({d.u, d.v, d.w, d.h});
        CHECK(want == got);
    }
}

TEST_CASE("suppress_and_box is idempotent") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> pos(0, 40), size(1, 6);
    for (int trial = 0; trial < 50; ++trial) {
        ObstacleMap map;
        map.region = ImageU8(60, 60, 1);
        for (int i = 0; i < 6; ++i) {
            Blob b;
            b.min_x = pos(rng);
            b.min_y = pos(rng);
            b.max_x = b.min_x + size(rng);
            b.max_y = b.min_y + size(rng);
            b.pixel_count = (b.max_x - b.min_x + 1) * (b.max_y - b.min_y + 1);
            map.blobs.push_back(b);
        }
        const DetectionSet once = suppress_and_box(map, 1, 5.0);
        // Feed the output back in as blobs.
        ObstacleMap map2;
        map2.region = map.region;
        for (const auto& d : once)
            map2.blobs.push_back(
                {d.u, d.v, d.u + d.w - 1, d.v + d.h - 1, d.pixel_count, 0.0, 0.0});
        const DetectionSet twice = suppress_and_box(map2, 1, 5.0);
        REQUIRE(twice.size() == once.size());
        for (size_t i = 0; i < once.size(); ++i) {
            CHECK(twice[i].u == once[i].u);
            CHECK(twice[i].v == once[i].v);
            CHECK(twice[i].w == once[i].w);
            CHECK(twice[i].h == once[i].h);
        }
    }
}

TEST_CASE("water_edge: lower half-plane water gives a constant edge") {
    ImageU8 m(16, 16, 1);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) m.at(x, y) = y >= 8 ? 1 : 0;
    const ObstacleMap map = extract_obstacle_map(WaterMask{m});
    const WaterEdge edge = water_edge(map);
    REQUIRE(edge.rows.size() == 16);
    for (int x = 0; x < 16; ++x) {
        CHECK(edge.valid[x]);
        CHECK(edge.rows[x] == 8.0);
    }
}

TEST_CASE("water_edge: empty water marks all columns invalid") {
    ImageU8 m(8, 8, 1);
    for (auto& v : m.data) v = 0;
    const WaterEdge edge = water_edge(extract_obstacle_map(WaterMask{m}));
    for (bool v : edge.valid) CHECK_FALSE(v);
}

TEST_CASE("water_edge equals the per-column scan oracle on a coastline") {
    // Synthetic coastline: edge row varies sinusoidally per column.
    const int w = 40, h = 30;
    ImageU8 m(w, h, 1);
    for (int x = 0; x < w; ++x) {
        const int top = 10 + static_cast<int>(5.0 * std::sin(x * 0.4));
        for (int y = 0; y < h; ++y) m.at(x, y) = y >= top ? 1 : 0;
    }
    const ObstacleMap map = extract_obstacle_map(WaterMask{m});
    const WaterEdge edge = water_edge(map);
    for (int x = 0; x < w; ++x) {
        int top = -1;
        for (int y = 0; y < h; ++y)
            if (map.region.at(x, y)) {
                top = y;
                break;
            }
        if (top < 0) {
            CHECK_FALSE(edge.valid[x]);
        } else {
            CHECK(edge.valid[x]);
            CHECK(edge.rows[x] == static_cast<double>(top));
        }
    }
}

TEST_CASE("adding water pixels never lowers the edge") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        ImageU8 m = random_mask(20, 20, 0.6, 900 + trial);
        // Keep the bottom row water so the largest component is stable-ish.
        for (int x = 0; x < 20; ++x) m.at(x, 19) = 1;
        const WaterEdge before = water_edge(extract_obstacle_map(WaterMask{m}));
        ImageU8 grown = m;
        std::uniform_int_distribution<int> pick(0, 19);
        for (int i = 0; i < 30; ++i) grown.at(pick(rng), pick(rng)) = 1;
        const WaterEdge after = water_edge(extract_obstacle_map(WaterMask{grown}));
        for (int x = 0; x < 20; ++x)
            if (before.valid[x] && after.valid[x]) CHECK(after.rows[x] <= before.rows[x]);
    }
}

TEST_CASE("partition: region, blobs, and exterior cover every pixel once") {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        const ImageU8 m = random_mask(30, 20, 0.75, 2000 + seed);
        const ObstacleMap map = extract_obstacle_map(WaterMask{m});
        // Blob pixels: reconstruct via flood fill over non-water holes whose
        // bounds match a reported blob.
        std::vector<char> in_blob(m.data.size(), 0);
        for (const auto& c : flood_components(map.region, 0)) {
            int minx = 1 << 20, miny = 1 << 20, maxx = -1, maxy = -1;
            for (auto [x, y] : c) {
                minx = std::min(minx, x);
                maxx = std::max(maxx, x);
                miny = std::min(miny, y);
                maxy = std::max(maxy, y);
            }
            for (const auto& b : map.blobs)
                if (b.min_x == minx && b.max_x == maxx && b.min_y == miny && b.max_y == maxy &&
                    b.pixel_count == static_cast<int>(c.size()))
                    for (auto [x, y] : c) in_blob[static_cast<size_t>(y) * m.width + x] = 1;
        }
        for (size_t i = 0; i < m.data.size(); ++i) {
            const bool region = map.region.data[i] == 1;
            const bool blob = in_blob[i] == 1;
            CHECK_FALSE((region && blob));  // disjoint
        }
    }
}

TEST_CASE("detections_to_json shape") {
    DetectionSet dets = {{3, 4, 10, 8, 55, "left"}};
    const auto j = nlohmann::json::parse(detections_to_json(7, "left", dets));
    CHECK(j["frame"] == 7);
    CHECK(j["camera"] == "left");
    REQUIRE(j["boxes"].size() == 1);
    CHECK(j["boxes"][0] == nlohmann::json::array({3, 4, 10, 8}));
}
