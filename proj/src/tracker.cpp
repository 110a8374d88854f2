#include "dmtrack/tracker.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "dmtrack/errors.hpp"
#include "dmtrack/parallel.hpp"
#include "dmtrack/tensor.hpp"

namespace dmtrack {

namespace {

Vec8 row_to_vec(const Tensor& row) {
    Vec8 v;
    for (int i = 0; i < 8; ++i) v(i) = row.at(0, static_cast<std::size_t>(i));
    return v;
}

}  // namespace

void TrackerConfig::validate() const {
    if (!(tau_low >= 0.0 && tau_low < tau_high && tau_high <= 1.0)) {
        throw DomainError("tracker config: need 0 <= tau_low < tau_high <= 1, got tau_low=" +
                          std::to_string(tau_low) + " tau_high=" + std::to_string(tau_high));
    }
    if (!(iou_gate >= 0.0 && iou_gate <= 1.0)) {
        throw DomainError("tracker config: iou_gate " + std::to_string(iou_gate) +
                          " outside [0,1]");
    }
    if (n_init < 1) {
        throw DomainError("tracker config: n_init must be >= 1, got " + std::to_string(n_init));
    }
    if (max_age < 1) {
        throw DomainError("tracker config: max_age must be >= 1, got " + std::to_string(max_age));
    }
}

void history_push(Track& track, const Vec8& mean) {
    MotionState state;
    state.x = mean(0);
    state.y = mean(1);
    state.a = mean(2);
    state.h = mean(3);
    if (!track.history.empty()) {
        const MotionState& prev = track.history.back();
        state.vx = state.x - prev.x;
        state.vy = state.y - prev.y;
        state.va = state.a - prev.a;
        state.vh = state.h - prev.h;
    }
    track.history.push_back(state);
    if (track.history.size() > kWindowLen) track.history.erase(track.history.begin());
}

Tracker::Tracker(const TrackerConfig& config, DeformMamba predictor, MotionGate gate)
    : config_(config), predictor_(std::move(predictor)), gate_(std::move(gate)) {
    config_.validate();
}

void Tracker::predict_all() {
    par::parallel_for(
        tracks_.size(),
        [&](std::size_t i) {
            Track& track = tracks_[i];
            track.kalman = filter_.predict(track.kalman);
            const Vec8 x_kal = track.kalman.mean;
            const Vec8 sigma_kal = KalmanFilter::sigma_diag(track.kalman);
            if (config_.gate_mode == GateMode::KalmanOnly) {
                track.last_fused = {x_kal, sigma_kal, Vec8::Ones()};
                return;
            }
            Tape tape(false);
            const TrajectoryWindow window = TrajectoryWindow::from_history(track.history);
            const GatedPrediction pred =
                gated_forward(tape, predictor_, gate_, window, x_kal, sigma_kal,
                              /*parallel=*/false);
            if (config_.gate_mode == GateMode::Average) {
                const Vec8 half = Vec8::Constant(0.5);
                track.last_fused = fuse(x_kal, sigma_kal, row_to_vec(pred.x_mam), half,
                                        row_to_vec(pred.sigma_mam));
            } else {
                track.last_fused = {row_to_vec(pred.x_fuse), row_to_vec(pred.sigma_fuse),
                                    row_to_vec(pred.alpha)};
            }
        },
        config_.parallel);
}

void Tracker::apply_match(Track& track, const Detection& det) {
    track.kalman = filter_.update(track.kalman, det.box);
    history_push(track, track.kalman.mean);
    track.hits += 1;
    track.time_since_update = 0;
    track.last_conf = det.confidence;
    if (track.status == TrackStatus::Tentative && track.hits >= config_.n_init) {
        track.status = TrackStatus::Confirmed;
    }
}

void Tracker::apply_miss(Track& track) {
    track.time_since_update += 1;
    if (track.status == TrackStatus::Tentative) {
        track.status = TrackStatus::Removed;
        return;
    }
    if (track.time_since_update > config_.max_age) {
        track.status = TrackStatus::Removed;
        return;
    }
    history_push(track, track.last_fused.x_fuse);
}

Track Tracker::spawn(const Detection& det) {
    Track track;
    track.id = next_id_++;
    track.status = TrackStatus::Tentative;
    track.kalman = filter_.initiate(det.box);
    track.last_fused = {track.kalman.mean, KalmanFilter::sigma_diag(track.kalman), Vec8::Ones()};
    history_push(track, track.kalman.mean);
    track.hits = 1;
    track.time_since_update = 0;
    track.last_conf = det.confidence;
    if (track.hits >= config_.n_init) track.status = TrackStatus::Confirmed;
    return track;
}

std::vector<MotRow> Tracker::step(int frame, const std::vector<Detection>& detections) {
    if (frame <= last_frame_) {
        throw DataError("tracker: frame " + std::to_string(frame) + " fed after frame " +
                        std::to_string(last_frame_) + "; frames must strictly increase");
    }
    for (const Detection& det : detections) {
        det.validate();
        if (det.frame != frame) {
            throw DataError("tracker: detection stamped frame " + std::to_string(det.frame) +
                            " fed during frame " + std::to_string(frame));
        }
    }
    last_frame_ = frame;

    predict_all();

    std::vector<std::size_t> high, low;
    for (std::size_t d = 0; d < detections.size(); ++d) {
        const double conf = detections[d].confidence;
        if (conf >= config_.tau_high) {
            high.push_back(d);
        } else if (conf >= config_.tau_low) {
            low.push_back(d);
        }
    }

    // Stage 1: every live track against high-confidence detections, full score.
    ScoreMatrix stage1(tracks_.size(), high.size());
    for (std::size_t r = 0; r < tracks_.size(); ++r) {
        const Track& track = tracks_[r];
        const Vec8& pred = track.last_fused.x_fuse;
        const Vec8 prev = track.history.back().to_vec();
        const Corners pred_box = cxcyah_to_corners(pred.head<4>());
        for (std::size_t c = 0; c < high.size(); ++c) {
            const Detection& det = detections[high[c]];
            const double overlap = iou(pred_box, cxcyah_to_corners(det.box));
            stage1.iou_at(r, c) = overlap;
            if (overlap < config_.iou_gate) continue;
            const double trend = trend_sim(pred, prev, det.box, config_.trend_sign);
            const double penalty = uncertainty_penalty(pred, track.last_fused.sigma_fuse, det.box);
            stage1.score_at(r, c) = match_score(overlap, trend, penalty);
        }
    }
    const Assignment first = solve_assignment(stage1);

    // Stage 2: leftover tracks against low-confidence detections, IoU alone.
    ScoreMatrix stage2(first.unmatched_tracks.size(), low.size());
    for (std::size_t r = 0; r < first.unmatched_tracks.size(); ++r) {
        const Track& track = tracks_[first.unmatched_tracks[r]];
        const Corners pred_box = cxcyah_to_corners(track.last_fused.x_fuse.head<4>());
        for (std::size_t c = 0; c < low.size(); ++c) {
            const double overlap = iou(pred_box, cxcyah_to_corners(detections[low[c]].box));
            stage2.iou_at(r, c) = overlap;
            if (overlap >= config_.iou_gate) stage2.score_at(r, c) = overlap;
        }
    }
    const Assignment second = solve_assignment(stage2);

    std::vector<char> matched(tracks_.size(), 0);
    for (const auto& [r, c] : first.matches) {
        apply_match(tracks_[r], detections[high[c]]);
        matched[r] = 1;
    }
    for (const auto& [r, c] : second.matches) {
        const std::size_t track_index = first.unmatched_tracks[r];
        apply_match(tracks_[track_index], detections[low[c]]);
        matched[track_index] = 1;
    }
    for (std::size_t r = 0; r < tracks_.size(); ++r) {
        if (!matched[r]) apply_miss(tracks_[r]);
    }
    for (const std::size_t c : first.unmatched_detections) {
        tracks_.push_back(spawn(detections[high[c]]));
    }

    std::vector<MotRow> rows;
    for (const Track& track : tracks_) {
        if (track.status != TrackStatus::Confirmed || track.time_since_update != 0) continue;
        rows.push_back(MotRow::from_cxcyah(frame, track.id, track.kalman.mean.head<4>(),
                                           track.last_conf));
    }

    tracks_.erase(std::remove_if(tracks_.begin(), tracks_.end(),
                                 [](const Track& t) { return t.status == TrackStatus::Removed; }),
                  tracks_.end());
    return rows;
}

}  // namespace dmtrack
