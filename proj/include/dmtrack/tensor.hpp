#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dmtrack/errors.hpp"
#include "dmtrack/rng.hpp"

namespace dmtrack {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // same length as value, starts at zero
    bool requires_grad = false;
};
}  // namespace detail

// Dense row-major f64 tensor with shared storage. All networks in this repo
// are small enough that 64-bit everywhere is the right trade: gradient checks
// against central finite differences stay clean.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double fill, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor row(std::vector<double> data, bool requires_grad = false);  // shape {1, n}

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t numel() const { return impl_->value.size(); }
    std::size_t rank() const { return impl_->shape.size(); }
    // Rank-2 accessors.
    std::size_t rows() const;
    std::size_t cols() const;

    double item() const;  // scalar tensors only
    double at(std::size_t r, std::size_t c) const;

    std::span<const double> values() const { return impl_->value; }
    std::span<double> values_mut() { return impl_->value; }
    std::span<const double> grad() const { return impl_->grad; }
    std::span<double> grad_mut() { return impl_->grad; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool b) { impl_->requires_grad = b; }
    void zero_grad();

    // Deep copy (fresh storage, zero grad).
    Tensor clone() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Execution tape for one forward pass. Operations append a backward closure in
// execution order; backward() replays them in exact reverse order, then marks
// the tape consumed. A second backward() on the same tape is an error; build a
// fresh tape per forward pass instead. A non-recording tape computes forward
// values only and allocates nothing on the tape.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    std::size_t op_count() const { return ops_.size(); }

    void record(std::function<void()> backward_step) { ops_.push_back(std::move(backward_step)); }

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tensor
    // recorded on this tape. loss must be scalar.
    void backward(const Tensor& loss);

private:
    std::vector<std::function<void()>> ops_;
    bool recording_ = true;
    bool consumed_ = false;
};

// ---- operations -----------------------------------------------------------
// Binary elementwise ops require equal shapes. Every op validates its inputs
// and records its backward step when the tape is recording and an input
// requires grad.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor div(Tape& tape, const Tensor& a, const Tensor& b);

Tensor add_scalar(Tape& tape, const Tensor& a, double s);
Tensor mul_scalar(Tape& tape, const Tensor& a, double s);

// mat {m,n} + row {1,n}, broadcast over rows (bias add).
Tensor add_row(Tape& tape, const Tensor& mat, const Tensor& rowvec);
// mat {m,n} - row {1,n}, broadcast over rows (used for window centering).
Tensor sub_row(Tape& tape, const Tensor& mat, const Tensor& rowvec);

Tensor neg(Tape& tape, const Tensor& a);
Tensor abs_(Tape& tape, const Tensor& a);
Tensor relu(Tape& tape, const Tensor& a);
// Exact-erf GeLU. erf uses the Abramowitz & Stegun 7.1.26 rational
// approximation (max abs error 1.5e-7), and the backward pass differentiates
// that same approximation, so analytic and finite-difference gradients agree
// to truncation error. Documented here so other implementations can match
// outputs bit-for-bit.
Tensor gelu(Tape& tape, const Tensor& a);
Tensor silu(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);   // split form, stable for |x| large
Tensor softplus(Tape& tape, const Tensor& a);  // max(x,0) + log1p(exp(-|x|))
Tensor exp_(Tape& tape, const Tensor& a);
Tensor log_(Tape& tape, const Tensor& a);  // domain error on x <= 0

// Per-row normalization over the last dimension (eps = 1e-5 inside the square
// root), then affine transform by gain/bias of shape {1, d}. Requires d >= 2.
Tensor layernorm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias);

Tensor sum(Tape& tape, const Tensor& a);   // -> {1,1}
Tensor mean(Tape& tape, const Tensor& a);  // -> {1,1}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape);
Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t start, std::size_t len);
Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t start, std::size_t len);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);

// Fractional row gather: for each offset o in offsets {1,K} over table {T,d},
// emits (1-frac)*table[floor(o)] + frac*table[ceil(o)] with ceil clamped to
// T-1. Gradients flow to both the table and the offsets (the floor index is
// treated as locally constant).
Tensor interp_rows(Tape& tape, const Tensor& table, const Tensor& offsets);

// Selective-scan recurrence shared by every SSM block. Inputs:
//   x     {K, dc}  per-token channel activations
//   delta {K, dc}  positive step sizes
//   a     {dc, ds} state matrix diagonal (negative for stable dynamics)
//   b     {K, ds}  input projection per token
//   c     {K, ds}  readout per token
//   d     {1, dc}  skip coefficient
// Per channel/state pair the bilinear discretization is
//   a_hat = (1 + delta/2 * a) / (1 - delta/2 * a),
//   b_hat = delta * b / (1 - delta/2 * a),
// and the scan runs h_t = a_hat*h_{t-1} + b_hat*x_t (h_0 = 0),
// y_t = sum_n c[t,n]*h_t[n] + d*x_t. Throws NumericalError if a denominator
// hits zero (impossible for a < 0, delta > 0). The channel loop is the OpenMP
// kernel; parallel=false runs the serial reference path, which is
// bit-identical by construction.
Tensor selective_scan(Tape& tape, const Tensor& x, const Tensor& delta, const Tensor& a,
                      const Tensor& b, const Tensor& c, const Tensor& d, bool parallel = true);

// ---- optimizer -------------------------------------------------------------

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// AdamW with decoupled weight decay and bias-corrected moments. step() rejects
// the whole update (no parameter is touched) if any gradient is non-finite.
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWConfig config);

    void step();
    void set_lr(double lr) { config_.lr = lr; }
    double lr() const { return config_.lr; }
    long step_count() const { return step_count_; }
    void set_step_count(long t) { step_count_ = t; }
    const AdamWConfig& config() const { return config_; }

    std::span<const std::vector<double>> first_moments() const { return m_; }
    std::span<const std::vector<double>> second_moments() const { return v_; }
    std::vector<double>& first_moment_mut(std::size_t i) { return m_[i]; }
    std::vector<double>& second_moment_mut(std::size_t i) { return v_[i]; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    AdamWConfig config_;
    long step_count_ = 0;
};

// Fills a tensor with N(0, std) draws from the given stream, in row-major order.
void fill_normal(Tensor& t, Rng& rng, double std);

}  // namespace dmtrack
