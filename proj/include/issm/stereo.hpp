#pragma once

#include "issm/detection.hpp"
#include "issm/geometry.hpp"

namespace issm {

struct StereoGeometry {
    Mat3 F = Mat3::Zero();  // fundamental matrix, left pixel -> right epipolar line
    int width = 0, height = 0;
    bool degenerate = false;

    // F = K2^-T [t]x R K1^-1; for our rig R = I and t = (-baseline, 0, 0)
    // expressed in the right camera frame.
    static StereoGeometry from_calibrated(const CameraIntrinsics& left,
                                          const CameraIntrinsics& right, double baseline);
    void check_rank();
};

struct VerificationConfig {
    double theta_s1 = 1.2;   // search-region scale, epipolar pass
    double theta_s2 = 3.0;   // search-region scale, rescue pass
    double theta_ncc = 0.95;
    Backend backend = default_backend();

    void validate() const;
};

struct MatchResult {
    int left_index = -1;
    int right_index = -1;  // -1 = unmatched
    double ncc_peak = 0;
    double peak_u = 0, peak_v = 0;
    bool accepted = false;
};

enum class RescueOutcome { Accepted, BelowThreshold, BorderClipped };

struct VerifiedDetection {
    Detection detection;
    int pair_id = -1;   // -1 for rescued singletons
    double ncc_peak = 0;
    bool rescued = false;
};

using VerifiedSet = std::vector<VerifiedDetection>;

// Detections from the opposite camera whose centers lie within the
// bounding-box diagonal of det's epipolar line (closed boundary). If F is
// rank-degenerate all candidates are returned and the geometry is flagged.
std::vector<int> epipolar_candidates(const Detection& det, const StereoGeometry& geom,
                                     const DetectionSet& others, bool left_to_right = true);

// Averaged per-channel NCC. Returns the peak and its location in search
// coordinates.
NccPeak ncc_match(const ImageF& tmpl, const ImageF& search,
                  Backend backend = default_backend());

struct PairResult {
    VerifiedSet verified;
    std::vector<int> unmatched_left;
    std::vector<int> unmatched_right;
    std::vector<MatchResult> matches;
};

PairResult verify_pair(const DetectionSet& left, const DetectionSet& right, const ImageF& left_img,
                       const ImageF& right_img, const StereoGeometry& geom,
                       const VerificationConfig& cfg);

struct RescueResult {
    std::vector<int> accepted;  // indices into the unmatched set
    std::vector<RescueOutcome> outcomes;
    std::vector<double> peaks;
};

// Revisits unmatched detections: NCC at mirrored coordinates in the opposite
// image with a theta_s2-scaled region. Regions clipped below template size
// are discarded with a border reason.
RescueResult rescue_unmatched(const DetectionSet& unmatched, const ImageF& own_img,
                              const ImageF& opposite_img, const VerificationConfig& cfg);

// Full consolidation: epipolar+NCC pairing, then a rescue pass for singletons.
VerifiedSet consolidate(const DetectionSet& left, const DetectionSet& right, const ImageF& left_img,
                        const ImageF& right_img, const StereoGeometry& geom,
                        const VerificationConfig& cfg);

std::string verified_to_json(int frame, const VerifiedSet& dets);

}  // namespace issm
