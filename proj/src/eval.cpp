#include "issm/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace issm {

using json = nlohmann::json;

namespace {

json boxes_to_json(const DetectionSet& dets) {
    json arr = json::array();
    for (const Detection& d : dets) arr.push_back({d.u, d.v, d.w, d.h});
    return arr;
}

DetectionSet boxes_from_json(const json& arr) {
    DetectionSet out;
    for (const auto& b : arr) {
        Detection d;
        d.u = b[0].get<int>();
        d.v = b[1].get<int>();
        d.w = b[2].get<int>();
        d.h = b[3].get<int>();
        out.push_back(d);
    }
    return out;
}

}  // namespace

std::vector<FrameAnnotation> load_annotations_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_annotations_json: cannot open " + path);
    const json j = json::parse(f);
    std::vector<FrameAnnotation> out;
    for (const auto& frame : j) {
        FrameAnnotation ann;
        ann.frame = frame.at("frame").get<int>();
        for (const auto& v : frame.at("edge"))
            ann.edge.emplace_back(v[0].get<double>(), v[1].get<double>());
        ann.large_obstacles = boxes_from_json(frame.value("large_obstacles", json::array()));
        ann.small_obstacles = boxes_from_json(frame.value("small_obstacles", json::array()));
        ann.right_obstacles = boxes_from_json(frame.value("right_obstacles", json::array()));
        if (frame.contains("horizon") && !frame.at("horizon").is_null())
            ann.horizon = HorizonAnnotation{frame.at("horizon").at("slope").get<double>(),
                                            frame.at("horizon").at("intercept").get<double>()};
        out.push_back(std::move(ann));
    }
    return out;
}

void save_annotations_json(const std::string& path, const std::vector<FrameAnnotation>& anns) {
    json j = json::array();
    for (const auto& ann : anns) {
        json edge = json::array();
        for (const auto& [c, r] : ann.edge) edge.push_back({c, r});
        json frame = {{"frame", ann.frame},
                      {"edge", edge},
                      {"large_obstacles", boxes_to_json(ann.large_obstacles)},
                      {"small_obstacles", boxes_to_json(ann.small_obstacles)}};
        if (!ann.right_obstacles.empty())
            frame["right_obstacles"] = boxes_to_json(ann.right_obstacles);
        if (ann.horizon)
            frame["horizon"] = {{"slope", ann.horizon->slope}, {"intercept", ann.horizon->intercept}};
        j.push_back(std::move(frame));
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_annotations_json: cannot open " + path);
    f << j.dump(2) << '\n';
}

WaterEdge resample_polyline(const std::vector<std::pair<double, double>>& polyline, int width) {
    WaterEdge edge;
    edge.rows.assign(width, 0.0);
    edge.valid.assign(width, false);
    if (polyline.size() < 2) {
        if (polyline.size() == 1) {
            const int c = static_cast<int>(std::lround(polyline[0].first));
            if (c >= 0 && c < width) {
                edge.rows[c] = polyline[0].second;
                edge.valid[c] = true;
            }
        }
        return edge;
    }
    auto sorted = polyline;
    std::sort(sorted.begin(), sorted.end());
    for (size_t s = 0; s + 1 < sorted.size(); ++s) {
        const auto& [c0, r0] = sorted[s];
        const auto& [c1, r1] = sorted[s + 1];
        const int start = std::max(0, static_cast<int>(std::ceil(c0)));
        const int stop = std::min(width - 1, static_cast<int>(std::floor(c1)));
        for (int c = start; c <= stop; ++c) {
            const double t = c1 > c0 ? (c - c0) / (c1 - c0) : 0.0;
            edge.rows[c] = r0 + t * (r1 - r0);
            edge.valid[c] = true;
        }
    }
    return edge;
}

std::optional<double> edge_error(const WaterEdge& pred, const WaterEdge& gt, int height) {
    const size_t n = std::min(pred.rows.size(), gt.rows.size());
    double ss = 0;
    int count = 0;
    for (size_t c = 0; c < n; ++c) {
        if (!pred.valid[c] || !gt.valid[c]) continue;
        const double d = pred.rows[c] - gt.rows[c];
        ss += d * d;
        ++count;
    }
    if (count == 0) return std::nullopt;
    return std::sqrt(ss / count) / height;
}

double iou(const Detection& a, const Detection& b) {
    const int x0 = std::max(a.u, b.u), y0 = std::max(a.v, b.v);
    const int x1 = std::min(a.u + a.w, b.u + b.w), y1 = std::min(a.v + a.h, b.v + b.h);
    const int inter = std::max(0, x1 - x0) * std::max(0, y1 - y0);
    const int uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

MatchCounts match_detections(const DetectionSet& pred, const DetectionSet& gt,
                             double overlap_threshold) {
    struct Cand {
        double score;
        int p, g;
    };
    std::vector<Cand> cands;
    for (size_t p = 0; p < pred.size(); ++p)
        for (size_t g = 0; g < gt.size(); ++g) {
            const double s = iou(pred[p], gt[g]);
            if (s >= overlap_threshold) cands.push_back({s, static_cast<int>(p), static_cast<int>(g)});
        }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.p != b.p) return a.p < b.p;
        return a.g < b.g;
    });
    std::vector<bool> p_used(pred.size(), false), g_used(gt.size(), false);
    MatchCounts counts;
    for (const Cand& c : cands) {
        if (p_used[c.p] || g_used[c.g]) continue;
        p_used[c.p] = true;
        g_used[c.g] = true;
        ++counts.tp;
    }
    counts.fp = static_cast<int>(pred.size()) - counts.tp;
    counts.fn = static_cast<int>(gt.size()) - counts.tp;
    return counts;
}

double f_score(int tp, int fp, int fn) {
    const double denom = 2.0 * tp + fp + fn;
    return denom > 0 ? 2.0 * tp / denom : 0.0;
}

SequenceReport aggregate(const std::vector<FrameScore>& scores) {
    if (scores.empty()) throw std::invalid_argument("aggregate: empty score list");
    SequenceReport rep;
    rep.frame_count = static_cast<int>(scores.size());
    double sum = 0;
    int edge_frames = 0;
    for (const FrameScore& s : scores) {
        rep.tp += s.tp;
        rep.fp += s.fp;
        rep.fn += s.fn;
        if (s.edge_valid) {
            sum += s.edge_rmse;
            ++edge_frames;
        }
    }
    if (edge_frames > 0) {
        rep.mu_edg = sum / edge_frames;
        double ss = 0;
        for (const FrameScore& s : scores)
            if (s.edge_valid) ss += (s.edge_rmse - rep.mu_edg) * (s.edge_rmse - rep.mu_edg);
        rep.sigma_edg = std::sqrt(ss / edge_frames);
    }
    rep.f_score = f_score(rep.tp, rep.fp, rep.fn);
    rep.alpha_fp = static_cast<double>(rep.fp) / rep.frame_count;
    return rep;
}

void save_report_json(const std::string& path, const SequenceReport& rep) {
    const json j = {{"mu_edg", rep.mu_edg}, {"sigma_edg", rep.sigma_edg}, {"TP", rep.tp},
                    {"FP", rep.fp},         {"FN", rep.fn},               {"F_score", rep.f_score},
                    {"alpha_FP", rep.alpha_fp}, {"frames", rep.frame_count}};
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_report_json: cannot open " + path);
    f << j.dump(2) << '\n';
}

void save_report_csv(const std::string& path, const SequenceReport& rep) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_report_csv: cannot open " + path);
    f << "mu_edg,sigma_edg,TP,FP,FN,F_score,alpha_FP\n";
    f << rep.mu_edg << ',' << rep.sigma_edg << ',' << rep.tp << ',' << rep.fp << ',' << rep.fn
      << ',' << rep.f_score << ',' << rep.alpha_fp << '\n';
}

}  // namespace issm
