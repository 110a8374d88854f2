#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmtrack/mot_io.hpp"

namespace dmtrack {

enum class SegmentKind { ConstantVelocity, ConstantTurn, LinearAccel, Stop };

const char* segment_kind_name(SegmentKind kind);

// One phase of an object's motion program, `duration` frames long.
struct MotionSegment {
    SegmentKind kind = SegmentKind::ConstantVelocity;
    int duration = 0;
    double turn_rate = 0.0;  // radians per frame, ConstantTurn only
    double accel_x = 0.0;    // px per frame^2, LinearAccel only
    double accel_y = 0.0;
};

// Occlusion window [start, start + length) in 1-based frame numbers; the
// object emits neither ground truth nor detections inside it.
struct OcclusionWindow {
    int start = 0;
    int length = 0;
};

struct ObjectProgram {
    double x0 = 0, y0 = 0;    // initial box center
    double vx0 = 0, vy0 = 0;  // initial velocity, px per frame
    double width = 0, height = 0;
    std::vector<MotionSegment> segments;  // durations sum to the frame count
    std::vector<OcclusionWindow> occlusions;
};

struct MotionScenario {
    std::string name = "custom";
    int frames = 0;
    double extent_w = 1280.0;
    double extent_h = 720.0;
    double sigma_det = 1.0;  // px, isotropic center noise on detections
    double p_miss = 0.05;
    double fp_rate = 0.5;  // expected false positives per frame (Poisson)
    double v_max = 25.0;   // speed cap, px per frame
    std::uint64_t seed = 1;
    std::vector<ObjectProgram> programs;
};

// Generated sequence plus the scenario echo. Detections carry a parallel
// source tag: the ground-truth id they were derived from, or -1 for an
// injected false positive.
struct SyntheticSequence {
    MotionScenario scenario;
    std::vector<MotRow> gt;          // frame-major, id ascending; conf = 1
    std::vector<MotRow> detections;  // frame-major, true detections then FPs
    std::vector<int> det_source;
};

// Built-in presets: "linear", "turns", "occlusion", "crowd", "uav-mix".
// frames/objects of 0 keep the preset's defaults. Throws DomainError on an
// unknown name.
MotionScenario make_scenario_preset(const std::string& name, std::uint64_t seed,
                                    int frames = 0, int objects = 0);

// Deterministic in the scenario seed. Throws DomainError on infeasible
// scenarios (zero frames, segment durations not summing to the frame count,
// boxes larger than the extent, out-of-range probabilities or windows).
SyntheticSequence generate(const MotionScenario& scenario);

// Writes gt.txt, det.txt, and scenario.json into `dir` (created if needed).
// I/O failures raise DataError naming the path.
void export_sequence(const SyntheticSequence& seq, const std::string& dir);

std::string scenario_to_json(const MotionScenario& scenario);

}  // namespace dmtrack
