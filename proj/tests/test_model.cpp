#include <cmath>
#include <string>
#include <vector>

#include "dmtrack/errors.hpp"
#include "dmtrack/gradcheck.hpp"
#include "dmtrack/model.hpp"
#include "dmtrack/rng.hpp"
#include "dmtrack/tensor.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace dmtrack;

namespace {

MotionState make_state(double x, double y, double a, double h, double vx = 0,
                       double vy = 0, double va = 0, double vh = 0) {
    MotionState s;
    s.x = x;
    s.y = y;
    s.a = a;
    s.h = h;
    s.vx = vx;
    s.vy = vy;
    s.va = va;
    s.vh = vh;
    return s;
}

// Constant-velocity history of `n` states ending near (120, 90).
std::vector<MotionState> cv_history(std::size_t n, double vx = 3.0, double vy = -2.0) {
    std::vector<MotionState> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i);
        out.push_back(make_state(120.0 - vx * (n - 1 - i), 90.0 - vy * (n - 1 - i),
                                 0.5, 40.0 + 0.1 * t, vx, vy, 0.0, 0.1));
    }
    return out;
}

TrajectoryWindow random_window(Rng& rng) {
    std::vector<MotionState> hist;
    const std::size_t n = 1 + rng.below(8);
    double x = rng.uniform(50.0, 500.0);
    double y = rng.uniform(50.0, 500.0);
    for (std::size_t i = 0; i < n; ++i) {
        x += rng.uniform(-5.0, 5.0);
        y += rng.uniform(-5.0, 5.0);
        hist.push_back(make_state(x, y, rng.uniform(0.3, 0.8), rng.uniform(20.0, 80.0),
                                  rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0),
                                  rng.uniform(-0.01, 0.01), rng.uniform(-0.5, 0.5)));
    }
    return TrajectoryWindow::from_history(hist);
}

void zero_tensor(Tensor& t) {
    for (double& v : t.values_mut()) v = 0.0;
}

void zero_linear(Linear& l) {
    zero_tensor(l.weight);
    zero_tensor(l.bias);
}

}  // namespace

TEST_CASE("window padding repeats the oldest state with zero velocities") {
    const auto hist = cv_history(3);
    const TrajectoryWindow w = TrajectoryWindow::from_history(hist);

    CHECK(w.valid_count == 3);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(w.states[i].x == hist[0].x);
        CHECK(w.states[i].y == hist[0].y);
        CHECK(w.states[i].h == hist[0].h);
        CHECK(w.states[i].vx == 0.0);
        CHECK(w.states[i].vy == 0.0);
        CHECK(w.states[i].va == 0.0);
        CHECK(w.states[i].vh == 0.0);
    }
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(w.states[5 + i].x == hist[i].x);
        CHECK(w.states[5 + i].vx == hist[i].vx);
    }
    CHECK(w.newest().x == hist.back().x);
}

TEST_CASE("window keeps the newest eight states of a long history") {
    const auto hist = cv_history(12);
    const TrajectoryWindow w = TrajectoryWindow::from_history(hist);

    CHECK(w.valid_count == 8);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(w.states[i].x == hist[4 + i].x);
    }
}

TEST_CASE("window from empty history is a domain error") {
    CHECK_THROWS_AS(TrajectoryWindow::from_history({}), DomainError);
}

TEST_CASE("window tensor lays out states oldest to newest") {
    const auto hist = cv_history(8);
    const Tensor t = TrajectoryWindow::from_history(hist).to_tensor();

    REQUIRE(t.shape() == Shape{8, 8});
    CHECK(t.at(0, 0) == hist[0].x);
    CHECK(t.at(7, 0) == hist[7].x);
    CHECK(t.at(7, 4) == hist[7].vx);
    CHECK(t.at(3, 3) == hist[3].h);
}

TEST_CASE("offsets stay inside the window range") {
    Rng stream(11);
    const DeformMamba model = DeformMamba::init(stream);
    Rng rng(202);

    for (int trial = 0; trial < 100; ++trial) {
        const TrajectoryWindow w = random_window(rng);
        Tape tape(false);
        const Tensor centered = sub_row(tape, w.to_tensor(),
                                        Tensor::row({w.newest().x, w.newest().y,
                                                     w.newest().a, w.newest().h, 0, 0,
                                                     0, 0}));
        const Tensor offsets = model.predict_offsets(tape, centered);
        REQUIRE(offsets.shape() == Shape{1, 4});
        for (const double o : offsets.values()) {
            CHECK(o >= 0.0);
            CHECK(o <= 7.0);
        }
    }
}

TEST_CASE("zero offset weights pin every offset to the window midpoint") {
    Rng stream(12);
    DeformMamba model = DeformMamba::init(stream);
    zero_linear(model.offset_l1);
    zero_linear(model.offset_l2);

    const TrajectoryWindow w = TrajectoryWindow::from_history(cv_history(8));
    Tape tape(false);
    const Tensor centered = sub_row(tape, w.to_tensor(),
                                    Tensor::row({w.newest().x, w.newest().y,
                                                 w.newest().a, w.newest().h, 0, 0, 0,
                                                 0}));
    const Tensor offsets = model.predict_offsets(tape, centered);
    for (const double o : offsets.values()) {
        CHECK(o == 3.5);
    }

    const Tensor keyframes = interp_rows(tape, centered, offsets);
    const Tensor tokens = layernorm(tape, model.tokenizer.apply(tape, keyframes),
                                    model.token_norm_gain, model.token_norm_bias);
    for (std::size_t r = 1; r < 4; ++r) {
        for (std::size_t c = 0; c < 8; ++c) {
            CHECK(keyframes.at(r, c) == keyframes.at(0, c));
        }
        for (std::size_t c = 0; c < kTokenDim; ++c) {
            CHECK(tokens.at(r, c) == tokens.at(0, c));
        }
    }
}

TEST_CASE("keyframe interpolation hits exact rows at integer offsets") {
    const auto hist = cv_history(8);
    const Tensor table = TrajectoryWindow::from_history(hist).to_tensor();
    Tape tape(false);

    const Tensor at2 = interp_rows(tape, table, Tensor::row({2.0}));
    for (std::size_t c = 0; c < 8; ++c) {
        CHECK(at2.at(0, c) == table.at(2, c));
    }

    const Tensor mid = interp_rows(tape, table, Tensor::row({1.5}));
    CHECK(mid.at(0, 0) ==
          doctest::Approx(0.5 * (table.at(1, 0) + table.at(2, 0))).epsilon(1e-15));

    const Tensor last = interp_rows(tape, table, Tensor::row({7.0}));
    for (std::size_t c = 0; c < 8; ++c) {
        CHECK(last.at(0, c) == table.at(7, c));
    }
}

TEST_CASE("discretization approaches identity linearly in the step size") {
    // Two-impulse scan with b = c = 1, d = 0 exposes the discretized
    // transition: y0 = b_hat, y1 = a_hat * b_hat.
    for (const double dt : {1e-2, 1e-3, 1e-4}) {
        Tape tape(false);
        const Tensor x = Tensor::from({2, 1}, {1.0, 0.0});
        const Tensor delta = Tensor::full({2, 1}, dt);
        const Tensor a = Tensor::full({1, 1}, -1.0);
        const Tensor b = Tensor::full({2, 1}, 1.0);
        const Tensor c = Tensor::full({2, 1}, 1.0);
        const Tensor d = Tensor::zeros({1, 1});
        const Tensor y = selective_scan(tape, x, delta, a, b, c, d, false);

        const double a_hat = y.at(1, 0) / y.at(0, 0);
        const double err = std::abs(a_hat - 1.0);
        CHECK(err <= dt + dt * dt);
        CHECK(std::abs(err / dt - 1.0) <= 2.0 * dt);
    }
}

TEST_CASE("ssm block passes zeros through when biases are zero") {
    Rng stream(13);
    DeformMamba model = DeformMamba::init(stream);
    for (SsmBlock& blk : model.blocks) {
        zero_tensor(blk.in_proj.bias);
        zero_tensor(blk.delta_proj.bias);
        zero_tensor(blk.b_proj.bias);
        zero_tensor(blk.c_proj.bias);
        zero_tensor(blk.out_proj.bias);
        zero_tensor(blk.norm_bias);
    }

    Tape tape(false);
    const Tensor zeros = Tensor::zeros({4, kTokenDim});
    for (std::size_t i = 0; i < kNumSsmBlocks; ++i) {
        const Tensor out = model.run_block(tape, i, zeros);
        for (const double v : out.values()) {
            CHECK(v == 0.0);
        }
    }
}

TEST_CASE("single token scan matches the one-step closed form at block dimensions") {
    Rng rng(404);
    const std::size_t dc = kInnerDim, ds = kSsmStateDim;

    Tensor x = Tensor::zeros({1, dc});
    Tensor delta = Tensor::zeros({1, dc});
    Tensor a = Tensor::zeros({dc, ds});
    Tensor b = Tensor::zeros({1, ds});
    Tensor c = Tensor::zeros({1, ds});
    Tensor d = Tensor::zeros({1, dc});
    for (double& v : x.values_mut()) v = rng.normal();
    for (double& v : delta.values_mut()) v = 0.05 + std::abs(rng.normal()) * 0.1;
    for (double& v : a.values_mut()) v = -std::exp(rng.uniform(0.0, 2.0));
    for (double& v : b.values_mut()) v = rng.normal();
    for (double& v : c.values_mut()) v = rng.normal();
    for (double& v : d.values_mut()) v = rng.normal();

    Tape tape(false);
    const Tensor y = selective_scan(tape, x, delta, a, b, c, d, false);

    for (std::size_t ch = 0; ch < dc; ++ch) {
        const double dt = delta.at(0, ch);
        const double xv = x.at(0, ch);
        double acc = 0.0;
        for (std::size_t n = 0; n < ds; ++n) {
            const double u = dt * a.at(ch, n) / 2.0;
            const double b_hat = dt * b.at(0, n) / (1.0 - u);
            acc += c.at(0, n) * b_hat * xv;
        }
        acc += d.at(0, ch) * xv;
        CHECK(y.at(0, ch) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("token order changes the block output") {
    Rng stream(14);
    const DeformMamba model = DeformMamba::init(stream);
    Rng rng(505);

    Tensor tokens = Tensor::zeros({4, kTokenDim});
    for (double& v : tokens.values_mut()) v = rng.normal();
    Tensor reversed = Tensor::zeros({4, kTokenDim});
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < kTokenDim; ++c) {
            reversed.values_mut()[r * kTokenDim + c] = tokens.at(3 - r, c);
        }
    }

    Tape tape(false);
    const Tensor out = model.run_block(tape, 0, tokens);
    const Tensor out_rev = model.run_block(tape, 0, reversed);

    double max_diff = 0.0;
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < kTokenDim; ++c) {
            max_diff = std::max(max_diff,
                                std::abs(out.at(3 - r, c) - out_rev.at(r, c)));
        }
    }
    CHECK(max_diff > 1e-9);
}

TEST_CASE("forward emits a deterministic eight-dim absolute state") {
    Rng stream(15);
    const DeformMamba model = DeformMamba::init(stream);
    const TrajectoryWindow w = TrajectoryWindow::from_history(cv_history(8));

    Tape t1(false), t2(false);
    const Tensor out1 = model.forward(t1, w);
    const Tensor out2 = model.forward(t2, w);

    REQUIRE(out1.shape() == Shape{1, 8});
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(std::isfinite(out1.values()[i]));
        CHECK(out1.values()[i] == out2.values()[i]);
    }
    // Small head init keeps the initial prediction near the anchor state.
    CHECK(std::abs(out1.at(0, 0) - w.newest().x) < 30.0);
    CHECK(std::abs(out1.at(0, 1) - w.newest().y) < 30.0);
}

TEST_CASE("gradient flows through the offset path") {
    Rng stream(16);
    const DeformMamba model = DeformMamba::init(stream);
    const TrajectoryWindow w = TrajectoryWindow::from_history(cv_history(6));

    for (auto& [name, t] : model.named_parameters()) {
        (void)name;
        t.zero_grad();
    }
    Tape tape(true);
    const Tensor out = model.forward(tape, w);
    const Tensor loss = sum(tape, mul(tape, out, out));
    tape.backward(loss);

    double max_abs = 0.0;
    for (const double g : model.offset_l2.weight.grad()) {
        max_abs = std::max(max_abs, std::abs(g));
    }
    CHECK(max_abs > 0.0);
}

TEST_CASE("forward gradients match finite differences across every parameter group") {
    Rng stream(17);
    const DeformMamba model = DeformMamba::init(stream);
    const TrajectoryWindow w = TrajectoryWindow::from_history(cv_history(7));

    const auto loss_fn = [&](Tape& tape) {
        const Tensor out = model.forward(tape, w, false);
        return sum(tape, mul(tape, out, out));
    };

    Rng picker(99);
    GradCheckOptions opts;
    opts.coords_per_tensor = 4;
    const GradCheckReport report =
        check_gradients(loss_fn, model.named_parameters(), picker, opts);

    CHECK(report.checked >= 4 * 50);
    CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("block activations blowing up raise a named diagnostic") {
    Rng stream(18);
    DeformMamba model = DeformMamba::init(stream);
    model.blocks[1].out_proj.weight.values_mut()[5] =
        std::numeric_limits<double>::quiet_NaN();

    const TrajectoryWindow w = TrajectoryWindow::from_history(cv_history(8));
    Tape tape(false);
    try {
        model.forward(tape, w);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("ssm_block 1") != std::string::npos);
        CHECK(msg.find("token") != std::string::npos);
    }
}

TEST_CASE("motion gate at zero weights outputs exactly half and log two plus epsilon") {
    MotionGate gate;
    gate.shared = Linear::create(3 * kStateDim, 64);
    gate.alpha_head = Linear::create(64, kStateDim);
    gate.sigma_head = Linear::create(64, kStateDim);

    Tape tape(false);
    const Tensor x_kal = Tensor::row({1.0, -2.0, 0.5, 40.0, 3.0, -1.0, 0.0, 0.2});
    const Tensor sigma_kal = Tensor::row({2.0, 2.0, 0.1, 2.0, 1.0, 1.0, 0.1, 1.0});
    const Tensor x_mam = Tensor::row({1.5, -2.5, 0.4, 41.0, 2.0, -1.5, 0.01, 0.1});
    const auto [alpha, sigma] = gate.gate_forward(tape, x_kal, sigma_kal, x_mam);

    for (const double a : alpha.values()) {
        CHECK(a == 0.5);
    }
    for (const double s : sigma.values()) {
        CHECK(s == doctest::Approx(std::log(2.0) + 1e-6).epsilon(1e-12));
    }
}

TEST_CASE("gate output alpha stays strictly inside zero one") {
    Rng stream(19);
    const MotionGate gate = MotionGate::init(stream);
    Rng rng(606);

    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> xk(8), sk(8), xm(8);
        for (int i = 0; i < 8; ++i) {
            xk[i] = rng.uniform(-50.0, 50.0);
            sk[i] = std::abs(rng.normal()) * 5.0;
            xm[i] = rng.uniform(-50.0, 50.0);
        }
        Tape tape(false);
        const auto [alpha, sigma] =
            gate.gate_forward(tape, Tensor::row(xk), Tensor::row(sk), Tensor::row(xm));
        for (const double a : alpha.values()) {
            CHECK(a > 0.0);
            CHECK(a < 1.0);
        }
        for (const double s : sigma.values()) {
            CHECK(s >= 1e-6);
        }
    }
}

TEST_CASE("gate gradients match finite differences for inputs and weights") {
    Rng stream(20);
    const MotionGate gate = MotionGate::init(stream);

    Tensor x_kal = Tensor::row({1.2, -0.7, 0.1, 2.0, 0.5, -0.3, 0.02, 0.4}, true);
    Tensor sigma_kal = Tensor::row({2.0, 1.5, 0.1, 2.5, 1.0, 1.0, 0.1, 1.0}, true);
    Tensor x_mam = Tensor::row({0.9, -0.9, 0.15, 1.8, 0.6, -0.2, 0.0, 0.3}, true);

    std::vector<std::pair<std::string, Tensor>> params = {
        {"x_kal", x_kal},   {"sigma_kal", sigma_kal}, {"x_mam", x_mam},
    };
    for (auto& [name, t] : gate.named_parameters()) {
        params.emplace_back(name, t);
    }

    GradCheckOptions opts;
    opts.coords_per_tensor = 0;
    for (const bool sigma_loss : {false, true}) {
        const auto loss_fn = [&](Tape& tape) {
            const auto [alpha, sigma] = gate.gate_forward(tape, x_kal, sigma_kal, x_mam);
            return sum(tape, sigma_loss ? sigma : alpha);
        };
        Rng picker(7);
        const GradCheckReport report = check_gradients(loss_fn, params, picker, opts);
        CHECK(report.checked == 24 + 1600 + 520 + 520);
        CHECK(report.max_rel_err < 1e-4);
    }
}

TEST_CASE("fused state lies between the kalman and learned predictions") {
    Rng stream(21);
    const MotionGate gate = MotionGate::init(stream);
    Rng rng(707);

    for (int trial = 0; trial < 1000; ++trial) {
        Vec8 xk, sk, xm;
        for (int i = 0; i < 8; ++i) {
            xk(i) = rng.uniform(-100.0, 100.0);
            sk(i) = std::abs(rng.normal()) * 4.0;
            xm(i) = rng.uniform(-100.0, 100.0);
        }
        Tape tape(false);
        const auto [alpha_t, sigma_t] = gate.gate_forward(
            tape, Tensor::row(std::vector<double>(xk.data(), xk.data() + 8)),
            Tensor::row(std::vector<double>(sk.data(), sk.data() + 8)),
            Tensor::row(std::vector<double>(xm.data(), xm.data() + 8)));

        Vec8 alpha, sm;
        for (int i = 0; i < 8; ++i) {
            alpha(i) = alpha_t.values()[i];
            sm(i) = sigma_t.values()[i];
        }
        const FusedPrediction fused = fuse(xk, sk, xm, alpha, sm);
        for (int i = 0; i < 8; ++i) {
            CHECK(fused.x_fuse(i) >= std::min(xk(i), xm(i)) - 1e-12);
            CHECK(fused.x_fuse(i) <= std::max(xk(i), xm(i)) + 1e-12);
            CHECK(fused.sigma_fuse(i) >= std::min(sk(i), sm(i)) - 1e-12);
            CHECK(fused.sigma_fuse(i) <= std::max(sk(i), sm(i)) + 1e-12);
        }
    }
}

TEST_CASE("fuse saturates exactly at the endpoints") {
    Vec8 xk, sk, xm, sm;
    for (int i = 0; i < 8; ++i) {
        xk(i) = 2.0 + i;
        sk(i) = 0.5 + 0.1 * i;
        xm(i) = 4.0 + i;
        sm(i) = 1.5 + 0.1 * i;
    }

    const FusedPrediction kal = fuse(xk, sk, xm, Vec8::Ones(), sm);
    const FusedPrediction mam = fuse(xk, sk, xm, Vec8::Zero(), sm);
    const FusedPrediction mid = fuse(xk, sk, xm, Vec8::Constant(0.5), sm);
    for (int i = 0; i < 8; ++i) {
        CHECK(kal.x_fuse(i) == xk(i));
        CHECK(kal.sigma_fuse(i) == sk(i));
        CHECK(mam.x_fuse(i) == xm(i));
        CHECK(mam.sigma_fuse(i) == sm(i));
    }
    CHECK(mid.x_fuse(0) == 3.0);
}

TEST_CASE("swapping the kalman and learned inputs changes the gate") {
    Rng stream(22);
    const MotionGate gate = MotionGate::init(stream);

    const Tensor a = Tensor::row({3.0, -1.0, 0.2, 2.5, 0.7, -0.4, 0.01, 0.6});
    const Tensor b = Tensor::row({-2.0, 4.0, 0.1, 1.0, -0.5, 0.8, 0.02, -0.3});
    const Tensor s = Tensor::row({1.0, 1.0, 0.1, 1.0, 0.5, 0.5, 0.1, 0.5});

    Tape tape(false);
    const auto [alpha_ab, sig_ab] = gate.gate_forward(tape, a, s, b);
    const auto [alpha_ba, sig_ba] = gate.gate_forward(tape, b, s, a);

    double max_diff = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
        max_diff = std::max(max_diff,
                            std::abs(alpha_ab.values()[i] - alpha_ba.values()[i]));
    }
    CHECK(max_diff > 1e-12);
}

TEST_CASE("gate rejects non-finite inputs with a diagnostic") {
    Rng stream(23);
    const MotionGate gate = MotionGate::init(stream);

    Tensor bad = Tensor::row({1.0, 2.0, 3.0, std::numeric_limits<double>::quiet_NaN(),
                              5.0, 6.0, 7.0, 8.0});
    const Tensor ok = Tensor::row({1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0});

    Tape tape(false);
    try {
        gate.gate_forward(tape, bad, ok, ok);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("x_kal") != std::string::npos);
        CHECK(msg.find("3") != std::string::npos);
    }
}

TEST_CASE("gated forward blends in absolute coordinates") {
    Rng stream(24);
    const DeformMamba predictor = DeformMamba::init(stream);
    const MotionGate gate = MotionGate::init(stream);
    const TrajectoryWindow w = TrajectoryWindow::from_history(cv_history(8));

    Vec8 x_kal, sigma_kal;
    x_kal << 123.0, 88.5, 0.5, 40.6, 3.0, -2.0, 0.0, 0.1;
    sigma_kal << 2.0, 2.0, 0.01, 2.0, 1.2, 1.2, 0.01, 1.2;

    Tape t1(false), t2(false);
    const GatedPrediction g1 = gated_forward(t1, predictor, gate, w, x_kal, sigma_kal);
    const GatedPrediction g2 = gated_forward(t2, predictor, gate, w, x_kal, sigma_kal);

    REQUIRE(g1.x_fuse.shape() == Shape{1, 8});
    REQUIRE(g1.sigma_fuse.shape() == Shape{1, 8});
    for (std::size_t i = 0; i < 8; ++i) {
        const double fused = g1.x_fuse.values()[i];
        const double lo = std::min(x_kal(i), g1.x_mam.values()[i]);
        const double hi = std::max(x_kal(i), g1.x_mam.values()[i]);
        CHECK(fused >= lo - 1e-12);
        CHECK(fused <= hi + 1e-12);
        CHECK(g1.x_fuse.values()[i] == g2.x_fuse.values()[i]);
        CHECK(g1.sigma_fuse.values()[i] == g2.sigma_fuse.values()[i]);
    }
}

TEST_CASE("parameter registry covers the full architecture") {
    Rng stream(25);
    const DeformMamba model = DeformMamba::init(stream);
    const MotionGate gate = MotionGate::init(stream);

    const auto named = model.named_parameters();
    CHECK(named.size() == 52);
    std::size_t total = 0;
    for (const auto& [name, t] : named) {
        CHECK(name.rfind("deform_mamba.", 0) == 0);
        total += t.numel();
        CHECK(t.requires_grad());
    }
    CHECK(total == 149164);

    const auto gate_named = gate.named_parameters();
    CHECK(gate_named.size() == 6);
    std::size_t gate_total = 0;
    for (const auto& [name, t] : gate_named) {
        CHECK(name.rfind("motion_gate.", 0) == 0);
        gate_total += t.numel();
    }
    CHECK(gate_total == 2640);
}

TEST_CASE("same seed reproduces identical parameters and clone is independent") {
    Rng s1(77), s2(77), s3(78);
    const DeformMamba m1 = DeformMamba::init(s1);
    const DeformMamba m2 = DeformMamba::init(s2);
    const DeformMamba m3 = DeformMamba::init(s3);

    const auto p1 = m1.named_parameters();
    const auto p2 = m2.named_parameters();
    const auto p3 = m3.named_parameters();
    bool any_diff_seed = false;
    for (std::size_t i = 0; i < p1.size(); ++i) {
        const auto v1 = p1[i].second.values();
        const auto v2 = p2[i].second.values();
        const auto v3 = p3[i].second.values();
        for (std::size_t j = 0; j < v1.size(); ++j) {
            CHECK(v1[j] == v2[j]);
            if (v1[j] != v3[j]) any_diff_seed = true;
        }
    }
    CHECK(any_diff_seed);

    DeformMamba copy = m1.clone();
    CHECK_FALSE(copy.head.weight.same_storage(m1.head.weight));
    const double before = copy.head.weight.values()[0];
    Tensor original_head = m1.head.weight;
    original_head.values_mut()[0] = before + 42.0;
    CHECK(copy.head.weight.values()[0] == before);
}
