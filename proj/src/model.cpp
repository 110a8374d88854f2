#include "dmtrack/model.hpp"

#include <cmath>
#include <cstdio>

#include "dmtrack/errors.hpp"

namespace dmtrack {

namespace {

// Window-relative anchor: the newest state's position/size with zeroed
// velocity slots, so subtracting it shifts dims 0..3 and leaves 4..7 alone.
Tensor anchor_row(const TrajectoryWindow& window) {
    const MotionState& s = window.newest();
    return Tensor::row({s.x, s.y, s.a, s.h, 0.0, 0.0, 0.0, 0.0});
}

Tensor row_from_vec(const Vec8& v) {
    return Tensor::row(std::vector<double>(v.data(), v.data() + 8));
}

double xavier_std(std::size_t in, std::size_t out) {
    return std::sqrt(2.0 / static_cast<double>(in + out));
}

Linear draw_linear(Rng& stream, std::size_t in, std::size_t out, double weight_std) {
    Linear l = Linear::create(in, out);
    fill_normal(l.weight, stream, weight_std);
    return l;
}

void throw_if_non_finite(const Tensor& t, std::size_t block_index) {
    const auto vals = t.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (!std::isfinite(vals[i])) {
            throw NumericalError("ssm_block " + std::to_string(block_index) +
                                 ": non-finite activation at token " +
                                 std::to_string(i / t.cols()) + ", channel " +
                                 std::to_string(i % t.cols()));
        }
    }
}

void check_gate_input(const Tensor& t, const char* name) {
    const auto vals = t.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (!std::isfinite(vals[i])) {
            throw NumericalError(std::string("motion gate: non-finite ") + name +
                                 " at dim " + std::to_string(i));
        }
    }
}

void append_linear(std::vector<std::pair<std::string, Tensor>>& out,
                   const std::string& prefix, const Linear& l) {
    out.emplace_back(prefix + ".weight", l.weight);
    out.emplace_back(prefix + ".bias", l.bias);
}

Linear clone_linear(const Linear& l) {
    return Linear{l.weight.clone(), l.bias.clone()};
}

}  // namespace

TrajectoryWindow TrajectoryWindow::from_history(const std::vector<MotionState>& history) {
    if (history.empty()) {
        throw DomainError("trajectory window: history must contain at least one state");
    }
    TrajectoryWindow w;
    const std::size_t real = std::min(history.size(), kWindowLen);
    const std::size_t first = history.size() - real;
    const std::size_t pad = kWindowLen - real;

    MotionState oldest = history[first];
    oldest.vx = oldest.vy = oldest.va = oldest.vh = 0.0;
    for (std::size_t i = 0; i < pad; ++i) {
        w.states[i] = oldest;
    }
    for (std::size_t i = 0; i < real; ++i) {
        w.states[pad + i] = history[first + i];
    }
    w.valid_count = static_cast<int>(real);
    return w;
}

Tensor TrajectoryWindow::to_tensor() const {
    std::vector<double> data;
    data.reserve(kWindowLen * kStateDim);
    for (const MotionState& s : states) {
        const Vec8 v = s.to_vec();
        data.insert(data.end(), v.data(), v.data() + 8);
    }
    return Tensor::from({kWindowLen, kStateDim}, std::move(data));
}

Linear Linear::create(std::size_t in, std::size_t out) {
    Linear l;
    l.weight = Tensor::zeros({in, out}, true);
    l.bias = Tensor::zeros({1, out}, true);
    return l;
}

Tensor Linear::apply(Tape& tape, const Tensor& x) const {
    return add_row(tape, matmul(tape, x, weight), bias);
}

// Draw order is a compatibility contract: offset_l1.w, offset_l2.w,
// tokenizer.w, then per block (in_proj.w, delta_proj.w, 128 uniform delta-bias
// draws, b_proj.w, c_proj.w, out_proj.w), then head.w. Biases start at zero
// except delta_proj's, which is softplus^-1 of a log-uniform step size in
// [1e-3, 1e-1] so the scan starts with small, well-conditioned updates.
DeformMamba DeformMamba::init(Rng& stream) {
    DeformMamba m;
    m.offset_l1 = draw_linear(stream, kWindowLen * kStateDim, 64, 0.01);
    m.offset_l2 = draw_linear(stream, 64, kNumKeyframes, 0.01);
    m.tokenizer = draw_linear(stream, kStateDim, kTokenDim, xavier_std(kStateDim, kTokenDim));
    m.token_norm_gain = Tensor::full({1, kTokenDim}, 1.0, true);
    m.token_norm_bias = Tensor::zeros({1, kTokenDim}, true);

    for (SsmBlock& blk : m.blocks) {
        blk.norm_gain = Tensor::full({1, kTokenDim}, 1.0, true);
        blk.norm_bias = Tensor::zeros({1, kTokenDim}, true);
        blk.in_proj = draw_linear(stream, kTokenDim, 2 * kInnerDim,
                                  xavier_std(kTokenDim, 2 * kInnerDim));
        blk.delta_proj = draw_linear(stream, kInnerDim, kInnerDim, 0.01);
        {
            auto bias = blk.delta_proj.bias.values_mut();
            const double lo = std::log(1e-3);
            const double hi = std::log(1e-1);
            for (std::size_t j = 0; j < kInnerDim; ++j) {
                const double dt = std::exp(stream.uniform(lo, hi));
                bias[j] = std::log(std::expm1(dt));
            }
        }
        blk.b_proj = draw_linear(stream, kInnerDim, kSsmStateDim,
                                 xavier_std(kInnerDim, kSsmStateDim));
        blk.c_proj = draw_linear(stream, kInnerDim, kSsmStateDim,
                                 xavier_std(kInnerDim, kSsmStateDim));
        blk.a_log = Tensor::zeros({kInnerDim, kSsmStateDim}, true);
        {
            auto vals = blk.a_log.values_mut();
            for (std::size_t ch = 0; ch < kInnerDim; ++ch) {
                for (std::size_t n = 0; n < kSsmStateDim; ++n) {
                    vals[ch * kSsmStateDim + n] = std::log(static_cast<double>(n + 1));
                }
            }
        }
        blk.skip_d = Tensor::full({1, kInnerDim}, 1.0, true);
        blk.out_proj = draw_linear(stream, kInnerDim, kTokenDim,
                                   xavier_std(kInnerDim, kTokenDim));
    }

    m.head = draw_linear(stream, kTokenDim, kStateDim, 0.01);
    return m;
}

Tensor DeformMamba::predict_offsets(Tape& tape, const Tensor& centered_window) const {
    const Tensor flat = reshape(tape, centered_window, {1, kWindowLen * kStateDim});
    const Tensor hidden = relu(tape, offset_l1.apply(tape, flat));
    const Tensor logits = offset_l2.apply(tape, hidden);
    return mul_scalar(tape, sigmoid(tape, logits),
                      static_cast<double>(kWindowLen - 1));
}

Tensor DeformMamba::run_block(Tape& tape, std::size_t index, const Tensor& tokens,
                              bool parallel) const {
    const SsmBlock& blk = blocks.at(index);
    const Tensor normed = layernorm(tape, tokens, blk.norm_gain, blk.norm_bias);
    const Tensor proj = blk.in_proj.apply(tape, normed);
    const Tensor x = slice_cols(tape, proj, 0, kInnerDim);
    const Tensor z = slice_cols(tape, proj, kInnerDim, kInnerDim);
    const Tensor delta = softplus(tape, blk.delta_proj.apply(tape, x));
    const Tensor b = blk.b_proj.apply(tape, x);
    const Tensor c = blk.c_proj.apply(tape, x);
    const Tensor a = neg(tape, exp_(tape, blk.a_log));
    const Tensor y = selective_scan(tape, x, delta, a, b, c, blk.skip_d, parallel);
    const Tensor gated = mul(tape, y, silu(tape, z));
    const Tensor out = add(tape, tokens, blk.out_proj.apply(tape, gated));
    throw_if_non_finite(out, index);
    return out;
}

Tensor DeformMamba::forward(Tape& tape, const TrajectoryWindow& window,
                            bool parallel) const {
    const Tensor raw = window.to_tensor();
    const Tensor anchor = anchor_row(window);
    const Tensor centered = sub_row(tape, raw, anchor);

    const Tensor offsets = predict_offsets(tape, centered);
    const Tensor keyframes = interp_rows(tape, centered, offsets);
    Tensor tokens = layernorm(tape, tokenizer.apply(tape, keyframes),
                              token_norm_gain, token_norm_bias);
    for (std::size_t i = 0; i < kNumSsmBlocks; ++i) {
        tokens = run_block(tape, i, tokens, parallel);
    }
    const Tensor last = slice_rows(tape, tokens, kNumKeyframes - 1, 1);
    const Tensor local = head.apply(tape, last);
    return add(tape, local, anchor);
}

std::vector<std::pair<std::string, Tensor>> DeformMamba::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    append_linear(out, "deform_mamba.offset_mlp.l1", offset_l1);
    append_linear(out, "deform_mamba.offset_mlp.l2", offset_l2);
    append_linear(out, "deform_mamba.tokenizer", tokenizer);
    out.emplace_back("deform_mamba.tokenizer.norm_gain", token_norm_gain);
    out.emplace_back("deform_mamba.tokenizer.norm_bias", token_norm_bias);
    for (std::size_t i = 0; i < kNumSsmBlocks; ++i) {
        const std::string p = "deform_mamba.block" + std::to_string(i);
        const SsmBlock& blk = blocks[i];
        out.emplace_back(p + ".norm_gain", blk.norm_gain);
        out.emplace_back(p + ".norm_bias", blk.norm_bias);
        append_linear(out, p + ".in_proj", blk.in_proj);
        append_linear(out, p + ".delta_proj", blk.delta_proj);
        append_linear(out, p + ".b_proj", blk.b_proj);
        append_linear(out, p + ".c_proj", blk.c_proj);
        out.emplace_back(p + ".a_log", blk.a_log);
        out.emplace_back(p + ".skip_d", blk.skip_d);
        append_linear(out, p + ".out_proj", blk.out_proj);
    }
    append_linear(out, "deform_mamba.head", head);
    return out;
}

std::vector<Tensor> DeformMamba::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) {
        (void)name;
        out.push_back(t);
    }
    return out;
}

DeformMamba DeformMamba::clone() const {
    DeformMamba m;
    m.offset_l1 = clone_linear(offset_l1);
    m.offset_l2 = clone_linear(offset_l2);
    m.tokenizer = clone_linear(tokenizer);
    m.token_norm_gain = token_norm_gain.clone();
    m.token_norm_bias = token_norm_bias.clone();
    for (std::size_t i = 0; i < kNumSsmBlocks; ++i) {
        const SsmBlock& src = blocks[i];
        SsmBlock& dst = m.blocks[i];
        dst.norm_gain = src.norm_gain.clone();
        dst.norm_bias = src.norm_bias.clone();
        dst.in_proj = clone_linear(src.in_proj);
        dst.delta_proj = clone_linear(src.delta_proj);
        dst.b_proj = clone_linear(src.b_proj);
        dst.c_proj = clone_linear(src.c_proj);
        dst.a_log = src.a_log.clone();
        dst.skip_d = src.skip_d.clone();
        dst.out_proj = clone_linear(src.out_proj);
    }
    m.head = clone_linear(head);
    return m;
}

MotionGate MotionGate::init(Rng& stream) {
    MotionGate g;
    g.shared = draw_linear(stream, 3 * kStateDim, 64, 0.01);
    g.alpha_head = draw_linear(stream, 64, kStateDim, 0.01);
    g.sigma_head = draw_linear(stream, 64, kStateDim, 0.01);
    return g;
}

std::pair<Tensor, Tensor> MotionGate::gate_forward(Tape& tape, const Tensor& x_kal,
                                                   const Tensor& sigma_kal,
                                                   const Tensor& x_mam) const {
    check_gate_input(x_kal, "x_kal");
    check_gate_input(sigma_kal, "sigma_kal");
    check_gate_input(x_mam, "x_mam");

    const Tensor joined = concat_cols(tape, {x_kal, sigma_kal, x_mam});
    const Tensor h = gelu(tape, shared.apply(tape, joined));
    const Tensor alpha = sigmoid(tape, alpha_head.apply(tape, h));
    const Tensor sigma =
        add_scalar(tape, softplus(tape, sigma_head.apply(tape, h)), kSigmaEps);
    return {alpha, sigma};
}

std::vector<std::pair<std::string, Tensor>> MotionGate::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    append_linear(out, "motion_gate.shared", shared);
    append_linear(out, "motion_gate.alpha_head", alpha_head);
    append_linear(out, "motion_gate.sigma_head", sigma_head);
    return out;
}

std::vector<Tensor> MotionGate::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) {
        (void)name;
        out.push_back(t);
    }
    return out;
}

MotionGate MotionGate::clone() const {
    MotionGate g;
    g.shared = clone_linear(shared);
    g.alpha_head = clone_linear(alpha_head);
    g.sigma_head = clone_linear(sigma_head);
    return g;
}

FusedPrediction fuse(const Vec8& x_kal, const Vec8& sigma_kal, const Vec8& x_mam,
                     const Vec8& alpha, const Vec8& sigma_mam) {
    FusedPrediction out;
    for (int i = 0; i < 8; ++i) {
        out.x_fuse(i) = alpha(i) * x_kal(i) + (1.0 - alpha(i)) * x_mam(i);
        out.sigma_fuse(i) = alpha(i) * sigma_kal(i) + (1.0 - alpha(i)) * sigma_mam(i);
        out.alpha(i) = alpha(i);
    }
    return out;
}

FusedTensors fuse_tensors(Tape& tape, const Tensor& x_kal, const Tensor& sigma_kal,
                          const Tensor& x_mam, const Tensor& alpha,
                          const Tensor& sigma_mam) {
    const Tensor one = Tensor::full({1, kStateDim}, 1.0);
    const Tensor inv = sub(tape, one, alpha);
    FusedTensors out;
    out.x_fuse = add(tape, mul(tape, alpha, x_kal), mul(tape, inv, x_mam));
    out.sigma_fuse =
        add(tape, mul(tape, alpha, sigma_kal), mul(tape, inv, sigma_mam));
    return out;
}

GatedPrediction gated_forward(Tape& tape, const DeformMamba& predictor,
                              const MotionGate& gate, const TrajectoryWindow& window,
                              const Vec8& x_kal, const Vec8& sigma_kal,
                              bool parallel) {
    GatedPrediction out;
    out.x_mam = predictor.forward(tape, window, parallel);

    const Tensor anchor = anchor_row(window);
    const Tensor kal_row = row_from_vec(x_kal);
    const Tensor sigma_row = row_from_vec(sigma_kal);
    const Tensor kal_local = sub(tape, kal_row, anchor);
    const Tensor mam_local = sub(tape, out.x_mam, anchor);

    auto [alpha, sigma_mam] = gate.gate_forward(tape, kal_local, sigma_row, mam_local);
    out.alpha = alpha;
    out.sigma_mam = sigma_mam;

    const FusedTensors fused =
        fuse_tensors(tape, kal_row, sigma_row, out.x_mam, alpha, sigma_mam);
    out.x_fuse = fused.x_fuse;
    out.sigma_fuse = fused.sigma_fuse;
    return out;
}

}  // namespace dmtrack
