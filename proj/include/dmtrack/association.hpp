#pragma once

#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "dmtrack/kalman.hpp"

namespace dmtrack {

struct Detection {
    Vec4 box = Vec4::Zero();  // [cx, cy, a, h]
    double confidence = 0.0;
    int frame = 0;

    // Enforced at the data boundaries (file readers, synthesizer).
    void validate() const;
};

struct Corners {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// w = a*h, corners = center +/- half extent.
Corners cxcyah_to_corners(const Vec4& box);
Vec4 corners_to_cxcyah(const Corners& c);

double iou(const Corners& a, const Corners& b);

enum class TrendSign {
    as_printed,  // v_det = predicted center minus detection center
    reversed,
};

// Cosine similarity between the track's predicted direction of motion and the
// prediction-to-detection direction. Either vector with norm < 1e-9 yields 0.
double trend_sim(const Vec8& x_pred_t, const Vec8& x_pred_prev, const Vec4& det_box,
                 TrendSign sign = TrendSign::as_printed);

// exp(-||pred_center - det_center||^2 / sigma_bar^2) with
// sigma_bar = (sigma_cx + sigma_cy)/2 and sigma_bar^2 floored at 1e-4.
double uncertainty_penalty(const Vec8& x_pred, const Vec8& sigma_fuse, const Vec4& det_box);

// 0.7*iou + 0.2*trend + 0.1*penalty.
double match_score(double iou_term, double trend_term, double penalty_term);

constexpr double kIouGate = 0.3;

// rows = tracks, cols = detections. Gated pairs hold the -inf sentinel in
// score; the companion IoU matrix always holds the raw overlap.
struct ScoreMatrix {
    static constexpr double kGated = -std::numeric_limits<double>::infinity();

    std::size_t rows = 0, cols = 0;
    std::vector<double> score;
    std::vector<double> iou;

    ScoreMatrix() = default;
    ScoreMatrix(std::size_t r, std::size_t c)
        : rows(r), cols(c), score(r * c, kGated), iou(r * c, 0.0) {}

    double& score_at(std::size_t r, std::size_t c) { return score[r * cols + c]; }
    double score_at(std::size_t r, std::size_t c) const { return score[r * cols + c]; }
    double& iou_at(std::size_t r, std::size_t c) { return iou[r * cols + c]; }
    double iou_at(std::size_t r, std::size_t c) const { return iou[r * cols + c]; }
};

struct Assignment {
    std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track, detection)
    std::vector<std::size_t> unmatched_tracks;
    std::vector<std::size_t> unmatched_detections;
};

// Maximum-total-score assignment over non-gated pairs (Hungarian on negated
// scores, padded square with zero-cost escape cells). Pairs with non-positive
// score are treated as unmatchable, since matching them can only lower the
// total. Rows are processed in ascending track index and ties resolve to the
// lowest detection index reachable first, so equal-score solutions are
// deterministic (a uniform matrix yields the identity pairing).
Assignment solve_assignment(const ScoreMatrix& scores);

}  // namespace dmtrack
