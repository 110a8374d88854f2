#pragma once

#include <string>

#include "dmtrack/mot_io.hpp"

namespace dmtrack {

struct FrameMatching {
    long tp = 0, fp = 0, fn = 0, idsw = 0;
    long gt_total = 0;
};

struct MotSummary {
    double mota = 0.0;
    double idf1 = 0.0;
    long idsw = 0, fp = 0, fn = 0, tp = 0;
    long gt_total = 0;
};

// CLEAR per-frame matching: correspondences from the previous frame persist
// greedily while their IoU stays >= the threshold, then remaining pairs get an
// optimal assignment maximizing IoU (pairs below the threshold excluded). An
// ID switch is counted when a ground-truth id's matched track id differs from
// its last known correspondence.
FrameMatching match_frames(const MotSequence& gt, const MotSequence& results,
                           double iou_threshold = 0.5);

// 1 - (FN + FP + IDSW)/GT. Zero ground-truth boxes is undefined.
double mota(const FrameMatching& m);

// Identity F1: global bipartite matching between gt and track identities over
// whole-sequence frame-overlap counts (IoU >= threshold), then
// 2*IDTP / (2*IDTP + IDFP + IDFN).
double idf1(const MotSequence& gt, const MotSequence& results, double iou_threshold = 0.5);

MotSummary evaluate(const MotSequence& gt, const MotSequence& results,
                    double iou_threshold = 0.5);

// Aligned plain-text table plus a CSV line, both embedding the same numbers.
std::string format_summary_table(const MotSummary& s);
std::string format_summary_csv(const MotSummary& s);

}  // namespace dmtrack
