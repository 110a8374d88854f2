#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmtrack/kalman.hpp"
#include "dmtrack/model.hpp"
#include "dmtrack/synth.hpp"
#include "dmtrack/tensor.hpp"

namespace dmtrack {

// One supervised step: an 8-frame ground-truth window, the next frame's
// ground-truth state as target, and the Kalman prior for that next frame
// obtained by filtering the same track's ground-truth boxes from its start.
struct TrainingSample {
    TrajectoryWindow window;
    MotionState target;
    Vec8 x_kal = Vec8::Zero();
    Vec8 sigma_kal = Vec8::Zero();
};

struct WindowBuildStats {
    std::size_t samples = 0;
    std::size_t tracks_used = 0;
    std::size_t tracks_skipped = 0;  // ids without a single 9-frame contiguous run
};

// Slides 8-frame windows over every contiguous ground-truth run of every
// track. Velocities are finite differences within the run (zero for the run's
// first frame); the target is the 9th consecutive frame. Occlusion gaps split
// a track into separate runs, and the Kalman context filter coasts through
// them on predictions alone.
std::vector<TrainingSample> build_windows(const std::vector<SyntheticSequence>& sequences,
                                          WindowBuildStats* stats = nullptr);

// Which prediction the state loss supervises. Fused trains the predictor and
// the gate through the blend; Mamba reads the raw predictor head; Both sums
// the two terms.
enum class StateLossTarget { Fused, Mamba, Both };

struct TrainConfig {
    double lr = 1e-4;
    int batch = 64;
    int epochs = 50;
    int warmup_epochs = 2;
    double lambda1 = 1.0;
    double lambda2 = 0.2;
    double clip_norm = 5.0;  // global gradient norm cap, 0 disables clipping
    double weight_decay = 0.0;
    StateLossTarget state_loss_target = StateLossTarget::Fused;
    std::uint64_t seed = 0;

    // Throws DomainError on lr <= 0, batch < 1, epochs < 1, warmup_epochs < 0
    // or any negative weight.
    void validate() const;
};

// Sum over 8 dims of |x_pred - x_gt|.
double loss_state(const Vec8& x_pred, const Vec8& x_gt);
// Sum over 8 dims of 0.5*(x - x_gt)^2/sigma^2 + log(sigma). Requires sigma > 0.
double loss_conf(const Vec8& x, const Vec8& x_gt, const Vec8& sigma);
// lambda1*l_state + lambda2*l_conf.
double loss_total(double l_state, double l_conf, const TrainConfig& config);

// Tape forms of the same losses over {1, kStateDim} tensors, scalar results.
Tensor loss_state(Tape& tape, const Tensor& x_pred, const Tensor& x_gt);
Tensor loss_conf(Tape& tape, const Tensor& x, const Tensor& x_gt, const Tensor& sigma);
Tensor loss_total(Tape& tape, const Tensor& l_state, const Tensor& l_conf,
                  const TrainConfig& config);

// Linear warm-up: at 1-based optimizer step s the rate is
// lr*s/(warmup_epochs*steps_per_epoch) until the ramp ends, lr afterwards.
double warmup_lr(const TrainConfig& config, long step, long steps_per_epoch);

struct EpochStats {
    int epoch = 0;
    double mean_state_loss = 0.0;
    double mean_conf_loss = 0.0;
    double mean_total = 0.0;
};

struct TrainResult {
    DeformMamba model;
    MotionGate gate;
    std::vector<EpochStats> curve;
    bool diverged = false;  // when set, model/gate hold the last finite epoch's weights
    long steps = 0;         // completed optimizer steps
};

// Seeded-shuffle mini-batch AdamW over the joint predictor + gate parameter
// set. The batch loss is the mean of per-sample totals; gradients are clipped
// at clip_norm before each step. A non-finite batch loss aborts training and
// restores the last end-of-epoch snapshot. The two-argument form draws fresh
// initial weights from config.seed.
TrainResult train(const std::vector<TrainingSample>& samples, const TrainConfig& config);
TrainResult train(const std::vector<TrainingSample>& samples, const TrainConfig& config,
                  const DeformMamba& start_model, const MotionGate& start_gate);

// CSV "epoch,mean_state_loss,mean_conf_loss,mean_total", one row per epoch.
void write_loss_curve(const std::string& path, const std::vector<EpochStats>& curve);

// Model + gate weights, and when an optimizer is given also its moments
// ("adamw.m.<name>", "adamw.v.<name>") and the step counter ("trainer.step").
void save_training_checkpoint(const std::string& path, const DeformMamba& model,
                              const MotionGate& gate, const AdamW* optimizer = nullptr,
                              long step = 0);

// Loads weights by name (extra records ignored); when an optimizer is given
// and the file carries moments they are restored too. Returns the stored step
// counter, 0 when absent.
long load_training_checkpoint(const std::string& path, DeformMamba& model, MotionGate& gate,
                              AdamW* optimizer = nullptr);

struct PredictionMetrics {
    double ade_fused = 0.0;
    double fde_fused = 0.0;
    double ade_kalman = 0.0;
    double fde_kalman = 0.0;
    std::size_t count = 0;
};

// Mean center L2 error of the fused prediction vs the target over the given
// samples, next to the same error for the raw Kalman prior. At this single
// step horizon FDE equals ADE; both are reported for interface completeness.
PredictionMetrics evaluate_prediction(const DeformMamba& model, const MotionGate& gate,
                                      const std::vector<TrainingSample>& samples);

}  // namespace dmtrack
