#include "issm/stereo.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>

namespace issm {

StereoGeometry StereoGeometry::from_calibrated(const CameraIntrinsics& left,
                                               const CameraIntrinsics& right, double baseline) {
    if (baseline <= 0) throw InvalidInputError("StereoGeometry: baseline must be positive");
    Mat3 K1 = Mat3::Identity(), K2 = Mat3::Identity();
    K1(0, 0) = left.fx;
    K1(1, 1) = left.fy;
    K1(0, 2) = left.cx;
    K1(1, 2) = left.cy;
    K2(0, 0) = right.fx;
    K2(1, 1) = right.fy;
    K2(0, 2) = right.cx;
    K2(1, 2) = right.cy;
    // X_right = X_left + t with t = (-baseline, 0, 0).
    Mat3 tx = Mat3::Zero();
    tx(1, 2) = baseline;
    tx(2, 1) = -baseline;
    StereoGeometry geom;
    geom.F = K2.inverse().transpose() * tx * K1.inverse();
    geom.width = left.width;
    geom.height = left.height;
    geom.check_rank();
    return geom;
}

void StereoGeometry::check_rank() {
    Eigen::JacobiSVD<Mat3> svd(F);
    const auto& s = svd.singularValues();
    degenerate = !(s(1) > 1e-12 * s(0)) || !F.allFinite();
}

void VerificationConfig::validate() const {
    if (!(theta_s2 >= theta_s1 && theta_s1 >= 1.0))
        throw InvalidInputError("VerificationConfig: need theta_s2 >= theta_s1 >= 1");
    if (!(theta_ncc > 0 && theta_ncc < 1))
        throw InvalidInputError("VerificationConfig: theta_ncc must be in (0,1)");
}

std::vector<int> epipolar_candidates(const Detection& det, const StereoGeometry& geom,
                                     const DetectionSet& others, bool left_to_right) {
    std::vector<int> out;
    if (geom.degenerate) {
        out.resize(others.size());
        for (size_t i = 0; i < others.size(); ++i) out[i] = static_cast<int>(i);
        return out;
    }
    const Vec3 x(det.center_u(), det.center_v(), 1.0);
    const Vec3 line = left_to_right ? Vec3(geom.F * x) : Vec3(geom.F.transpose() * x);
    const double norm = std::hypot(line(0), line(1));
    if (norm < 1e-12) {
        for (size_t i = 0; i < others.size(); ++i) out.push_back(static_cast<int>(i));
        return out;
    }
    const double diag = det.diagonal();
    for (size_t i = 0; i < others.size(); ++i) {
        const Vec3 c(others[i].center_u(), others[i].center_v(), 1.0);
        if (std::abs(line.dot(c)) / norm <= diag) out.push_back(static_cast<int>(i));
    }
    return out;
}

NccPeak ncc_match(const ImageF& tmpl, const ImageF& search, Backend backend) {
    return ncc_peak(ncc_response(tmpl, search, backend));
}

namespace {

ImageF crop(const ImageF& img, int x0, int y0, int w, int h) {
    ImageF out(w, h, img.channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
    return out;
}

// Search region of `scale` times (w,h) centered at (cu,cv), clipped to the
// image. Returns false if the clipped region cannot contain the template.
bool search_region(const ImageF& img, double cu, double cv, int w, int h, double scale,
                   int tmpl_w, int tmpl_h, int& x0, int& y0, int& rw, int& rh) {
    const int want_w = std::max(static_cast<int>(std::lround(w * scale)), tmpl_w + 2);
    const int want_h = std::max(static_cast<int>(std::lround(h * scale)), tmpl_h + 2);
    x0 = std::max(0, static_cast<int>(std::lround(cu - want_w / 2.0)));
    y0 = std::max(0, static_cast<int>(std::lround(cv - want_h / 2.0)));
    const int x1 = std::min(img.width, x0 + want_w);
    const int y1 = std::min(img.height, y0 + want_h);
    x0 = std::max(0, std::min(x0, x1 - want_w));
    y0 = std::max(0, std::min(y0, y1 - want_h));
    rw = x1 - x0;
    rh = y1 - y0;
    return rw > tmpl_w && rh > tmpl_h;
}

struct ScoredPair {
    int left, right;
    double peak;
    double peak_u, peak_v;
};

}  // namespace

PairResult verify_pair(const DetectionSet& left, const DetectionSet& right, const ImageF& left_img,
                       const ImageF& right_img, const StereoGeometry& geom,
                       const VerificationConfig& cfg) {
    cfg.validate();
    PairResult out;
    std::map<std::pair<int, int>, ScoredPair> scores;

    auto run_direction = [&](const DetectionSet& from, const DetectionSet& to,
                             const ImageF& from_img, const ImageF& to_img, bool left_to_right) {
        for (size_t i = 0; i < from.size(); ++i) {
            const Detection& d = from[i];
            if (d.w >= from_img.width || d.h >= from_img.height) continue;
            const ImageF tmpl = crop(from_img, d.u, d.v, d.w, d.h);
            for (int j : epipolar_candidates(d, geom, to, left_to_right)) {
                const Detection& c = to[j];
                int x0, y0, rw, rh;
                if (!search_region(to_img, c.center_u(), c.center_v(), c.w, c.h, cfg.theta_s1,
                                   d.w, d.h, x0, y0, rw, rh))
                    continue;
                const NccPeak peak = ncc_match(tmpl, crop(to_img, x0, y0, rw, rh), cfg.backend);
                if (peak.value < cfg.theta_ncc) continue;
                const int li = left_to_right ? static_cast<int>(i) : j;
                const int ri = left_to_right ? j : static_cast<int>(i);
                auto key = std::make_pair(li, ri);
                auto it = scores.find(key);
                if (it == scores.end() || peak.value > it->second.peak)
                    scores[key] = {li, ri, peak.value, static_cast<double>(x0 + peak.x),
                                   static_cast<double>(y0 + peak.y)};
            }
        }
    };
    run_direction(left, right, left_img, right_img, true);
    run_direction(right, left, right_img, left_img, false);

    std::vector<ScoredPair> ranked;
    for (const auto& [key, sp] : scores) ranked.push_back(sp);
    std::sort(ranked.begin(), ranked.end(), [](const ScoredPair& a, const ScoredPair& b) {
        if (a.peak != b.peak) return a.peak > b.peak;
        if (a.left != b.left) return a.left < b.left;
        return a.right < b.right;
    });

    std::vector<bool> left_used(left.size(), false), right_used(right.size(), false);
    int pair_id = 0;
    for (const ScoredPair& sp : ranked) {
        if (left_used[sp.left] || right_used[sp.right]) continue;
        left_used[sp.left] = true;
        right_used[sp.right] = true;
        MatchResult m;
        m.left_index = sp.left;
        m.right_index = sp.right;
        m.ncc_peak = sp.peak;
        m.peak_u = sp.peak_u;
        m.peak_v = sp.peak_v;
        m.accepted = true;
        out.matches.push_back(m);
        VerifiedDetection vl{left[sp.left], pair_id, sp.peak, false};
        vl.detection.camera = "left";
        VerifiedDetection vr{right[sp.right], pair_id, sp.peak, false};
        vr.detection.camera = "right";
        out.verified.push_back(vl);
        out.verified.push_back(vr);
        ++pair_id;
    }
    for (size_t i = 0; i < left.size(); ++i)
        if (!left_used[i]) out.unmatched_left.push_back(static_cast<int>(i));
    for (size_t j = 0; j < right.size(); ++j)
        if (!right_used[j]) out.unmatched_right.push_back(static_cast<int>(j));
    return out;
}

RescueResult rescue_unmatched(const DetectionSet& unmatched, const ImageF& own_img,
                              const ImageF& opposite_img, const VerificationConfig& cfg) {
    cfg.validate();
    RescueResult out;
    for (size_t i = 0; i < unmatched.size(); ++i) {
        const Detection& d = unmatched[i];
        if (d.w >= own_img.width || d.h >= own_img.height) {
            out.outcomes.push_back(RescueOutcome::BorderClipped);
            out.peaks.push_back(0.0);
            continue;
        }
        const ImageF tmpl = crop(own_img, d.u, d.v, d.w, d.h);
        int x0, y0, rw, rh;
        if (!search_region(opposite_img, d.center_u(), d.center_v(), d.w, d.h, cfg.theta_s2,
                           d.w, d.h, x0, y0, rw, rh)) {
            out.outcomes.push_back(RescueOutcome::BorderClipped);
            out.peaks.push_back(0.0);
            continue;
        }
        const NccPeak peak = ncc_match(tmpl, crop(opposite_img, x0, y0, rw, rh), cfg.backend);
        out.peaks.push_back(peak.value);
        if (peak.value >= cfg.theta_ncc) {
            out.outcomes.push_back(RescueOutcome::Accepted);
            out.accepted.push_back(static_cast<int>(i));
        } else {
            out.outcomes.push_back(RescueOutcome::BelowThreshold);
        }
    }
    return out;
}

VerifiedSet consolidate(const DetectionSet& left, const DetectionSet& right, const ImageF& left_img,
                        const ImageF& right_img, const StereoGeometry& geom,
                        const VerificationConfig& cfg) {
    PairResult pairs = verify_pair(left, right, left_img, right_img, geom, cfg);
    VerifiedSet out = pairs.verified;

    auto rescue_side = [&](const std::vector<int>& indices, const DetectionSet& dets,
                           const ImageF& own, const ImageF& opposite, const char* camera) {
        DetectionSet subset;
        for (int i : indices) subset.push_back(dets[i]);
        RescueResult res = rescue_unmatched(subset, own, opposite, cfg);
        for (int i : res.accepted) {
            VerifiedDetection v{subset[i], -1, res.peaks[i], true};
            v.detection.camera = camera;
            out.push_back(v);
        }
    };
    rescue_side(pairs.unmatched_left, left, left_img, right_img, "left");
    rescue_side(pairs.unmatched_right, right, right_img, left_img, "right");
    return out;
}

std::string verified_to_json(int frame, const VerifiedSet& dets) {
    nlohmann::json boxes = nlohmann::json::array();
    nlohmann::json pair_ids = nlohmann::json::array(), peaks = nlohmann::json::array(),
                   rescued = nlohmann::json::array(), cameras = nlohmann::json::array();
    for (const VerifiedDetection& v : dets) {
        boxes.push_back({v.detection.u, v.detection.v, v.detection.w, v.detection.h});
        pair_ids.push_back(v.pair_id);
        peaks.push_back(v.ncc_peak);
        rescued.push_back(v.rescued);
        cameras.push_back(v.detection.camera);
    }
    return nlohmann::json{{"frame", frame}, {"camera", "stereo"},   {"boxes", boxes},
                          {"pair_id", pair_ids}, {"ncc_peak", peaks}, {"rescued", rescued},
                          {"camera_tag", cameras}}
        .dump();
}

}  // namespace issm
