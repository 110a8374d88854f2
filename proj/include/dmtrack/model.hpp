#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dmtrack/kalman.hpp"
#include "dmtrack/rng.hpp"
#include "dmtrack/tensor.hpp"

namespace dmtrack {

inline constexpr std::size_t kWindowLen = 8;     // trajectory history length T
inline constexpr std::size_t kNumKeyframes = 4;  // learned offsets K
inline constexpr std::size_t kStateDim = 8;      // motion state dimension
inline constexpr std::size_t kTokenDim = 64;     // token width d'
inline constexpr std::size_t kInnerDim = 128;    // SSM channel count
inline constexpr std::size_t kSsmStateDim = 16;  // SSM state size per channel
inline constexpr std::size_t kNumSsmBlocks = 3;
inline constexpr double kSigmaEps = 1e-6;

// Fixed-length motion history, oldest state first. Histories shorter than
// kWindowLen are left-padded by repeating the oldest real state with its
// velocity components zeroed; valid_count records how many entries are real.
struct TrajectoryWindow {
    std::array<MotionState, kWindowLen> states{};
    int valid_count = 0;

    // Pads or truncates (keeping the newest kWindowLen entries) as needed.
    // Throws DomainError when history is empty.
    static TrajectoryWindow from_history(const std::vector<MotionState>& history);

    // {kWindowLen, kStateDim} constant tensor, rows oldest -> newest.
    Tensor to_tensor() const;

    const MotionState& newest() const { return states.back(); }
};

// Dense layer computing x·W + b with W shaped {in, out} and b shaped {1, out}.
struct Linear {
    Tensor weight;
    Tensor bias;

    static Linear create(std::size_t in, std::size_t out);
    Tensor apply(Tape& tape, const Tensor& x) const;
};

// One gated selective-SSM layer: pre-norm, input projection split into a scan
// branch and a gate branch, token-dependent (delta, B, C), diagonal A, scan,
// silu gating, output projection, residual add.
struct SsmBlock {
    Tensor norm_gain;   // {1, kTokenDim}
    Tensor norm_bias;   // {1, kTokenDim}
    Linear in_proj;     // kTokenDim -> 2*kInnerDim
    Linear delta_proj;  // kInnerDim -> kInnerDim
    Linear b_proj;      // kInnerDim -> kSsmStateDim
    Linear c_proj;      // kInnerDim -> kSsmStateDim
    Tensor a_log;       // {kInnerDim, kSsmStateDim}; A = -exp(a_log)
    Tensor skip_d;      // {1, kInnerDim}
    Linear out_proj;    // kInnerDim -> kTokenDim
};

// Learned next-state predictor. Works in window-relative coordinates: the
// position/size dimensions of every input state are expressed as deltas from
// the newest state in the window (the anchor), and the head's output is
// shifted back by the anchor, so the network only ever sees and produces
// local displacements. A two-layer MLP on the flattened window picks K
// fractional frame offsets, linear interpolation at those offsets yields K
// keyframes, and a three-block selective-SSM stack over the tokenized
// keyframes feeds the prediction head.
struct DeformMamba {
    Linear offset_l1;       // kWindowLen*kStateDim -> 64
    Linear offset_l2;       // 64 -> kNumKeyframes
    Linear tokenizer;       // kStateDim -> kTokenDim
    Tensor token_norm_gain; // {1, kTokenDim}
    Tensor token_norm_bias; // {1, kTokenDim}
    std::array<SsmBlock, kNumSsmBlocks> blocks;
    Linear head;            // kTokenDim -> kStateDim

    // Fresh parameters drawn from `stream` in declaration order; weight draws
    // are documented in model.cpp. Every parameter requires gradients.
    static DeformMamba init(Rng& stream);

    // Absolute predicted next state, shape {1, kStateDim}.
    Tensor forward(Tape& tape, const TrajectoryWindow& window, bool parallel = true) const;

    // Fractional keyframe offsets in [0, kWindowLen-1], shape
    // {1, kNumKeyframes}. Input is the centered window matrix.
    Tensor predict_offsets(Tape& tape, const Tensor& centered_window) const;

    // One SSM block applied to a {K, kTokenDim} token matrix. Throws
    // NumericalError naming the block and token on non-finite activations.
    Tensor run_block(Tape& tape, std::size_t index, const Tensor& tokens,
                     bool parallel = true) const;

    // Checkpoint names ("deform_mamba.*") paired with the live tensors, in a
    // fixed order shared by the optimizer and the checkpoint format.
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;

    DeformMamba clone() const;
};

// Confidence gate blending the Kalman and learned predictions per dimension.
struct MotionGate {
    Linear shared;      // 3*kStateDim -> 64
    Linear alpha_head;  // 64 -> kStateDim
    Linear sigma_head;  // 64 -> kStateDim

    static MotionGate init(Rng& stream);

    // alpha in (0,1)^8 and sigma_mam >= kSigmaEps, both {1, kStateDim}.
    // Inputs are {1, kStateDim}; non-finite input values raise NumericalError
    // naming the offending input and dimension.
    std::pair<Tensor, Tensor> gate_forward(Tape& tape, const Tensor& x_kal,
                                           const Tensor& sigma_kal,
                                           const Tensor& x_mam) const;

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;

    MotionGate clone() const;
};

// Convex blend of the two predictions and their uncertainties.
struct FusedPrediction {
    Vec8 x_fuse = Vec8::Zero();
    Vec8 sigma_fuse = Vec8::Zero();
    Vec8 alpha = Vec8::Zero();
};

FusedPrediction fuse(const Vec8& x_kal, const Vec8& sigma_kal, const Vec8& x_mam,
                     const Vec8& alpha, const Vec8& sigma_mam);

// Tape-level fuse used by training: x_fuse = alpha*x_kal + (1-alpha)*x_mam and
// the same blend for sigma. All inputs {1, kStateDim}.
struct FusedTensors {
    Tensor x_fuse;
    Tensor sigma_fuse;
};

FusedTensors fuse_tensors(Tape& tape, const Tensor& x_kal, const Tensor& sigma_kal,
                          const Tensor& x_mam, const Tensor& alpha,
                          const Tensor& sigma_mam);

// Full prediction pipeline for one track: DeformMamba forward, gate on the
// window-relative versions of both predictions (sigmas untouched), fuse in
// absolute coordinates. Tensors live on `tape`.
struct GatedPrediction {
    Tensor x_fuse;      // {1, 8} absolute
    Tensor sigma_fuse;  // {1, 8}
    Tensor alpha;       // {1, 8}
    Tensor x_mam;       // {1, 8} absolute
    Tensor sigma_mam;   // {1, 8}
};

GatedPrediction gated_forward(Tape& tape, const DeformMamba& predictor,
                              const MotionGate& gate, const TrajectoryWindow& window,
                              const Vec8& x_kal, const Vec8& sigma_kal,
                              bool parallel = true);

}  // namespace dmtrack
