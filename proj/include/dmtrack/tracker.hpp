#pragma once

#include <vector>

#include "dmtrack/association.hpp"
#include "dmtrack/kalman.hpp"
#include "dmtrack/model.hpp"
#include "dmtrack/mot_io.hpp"

namespace dmtrack {

enum class TrackStatus { Tentative, Confirmed, Removed };

// How the per-track prediction is formed each frame. Learned runs the full
// predictor + gate; KalmanOnly skips the networks entirely (alpha = 1, the
// filter prior is the prediction); Average runs both branches but pins
// alpha = 0.5.
enum class GateMode { Learned, KalmanOnly, Average };

struct TrackerConfig {
    double tau_high = 0.6;   // stage-1 confidence floor
    double tau_low = 0.1;    // below this a detection is discarded outright
    double iou_gate = kIouGate;
    int n_init = 3;          // hits needed to confirm
    int max_age = 30;        // misses tolerated before removal
    TrendSign trend_sign = TrendSign::as_printed;
    GateMode gate_mode = GateMode::Learned;
    bool parallel = true;

    // Throws DomainError unless 0 <= tau_low < tau_high <= 1,
    // 0 <= iou_gate <= 1, n_init >= 1 and max_age >= 1.
    void validate() const;
};

struct Track {
    int id = 0;
    TrackStatus status = TrackStatus::Tentative;
    KalmanTrackState kalman;
    std::vector<MotionState> history;  // newest last, at most kWindowLen entries
    FusedPrediction last_fused;
    int hits = 0;
    int time_since_update = 0;
    int class_label = 0;
    double last_conf = 0.0;
};

// Appends the position/size part of `mean` to the track history. Velocity
// slots of the stored entry are finite differences of consecutive pushed
// means (zero on the first push); the velocity dims of `mean` itself are
// ignored. Keeps only the newest kWindowLen entries.
void history_push(Track& track, const Vec8& mean);

// Two-stage tracking-by-detection over one detection stream. Frames must be
// fed in strictly increasing order; each step predicts every live track
// (Kalman prior plus, per gate_mode, the learned branch), associates
// detections in two confidence bands, updates matched tracks, coasts missed
// ones on their fused prediction, spawns Tentative tracks from unmatched
// high-confidence detections, and returns the boxes of Confirmed tracks that
// matched this frame. Track ids start at 1 and are never reused.
class Tracker {
public:
    Tracker(const TrackerConfig& config, DeformMamba predictor, MotionGate gate);

    // Returns result rows (frame, id, box, confidence) for this frame.
    // Throws DataError on a frame index <= the last one seen or on a
    // detection stamped with a different frame.
    std::vector<MotRow> step(int frame, const std::vector<Detection>& detections);

    const std::vector<Track>& tracks() const { return tracks_; }
    int last_frame() const { return last_frame_; }

private:
    void predict_all();
    void apply_match(Track& track, const Detection& det);
    void apply_miss(Track& track);
    Track spawn(const Detection& det);

    TrackerConfig config_;
    DeformMamba predictor_;
    MotionGate gate_;
    KalmanFilter filter_;
    std::vector<Track> tracks_;
    int next_id_ = 1;
    int last_frame_ = 0;
};

}  // namespace dmtrack
