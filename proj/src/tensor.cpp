#include "dmtrack/tensor.hpp"

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <utility>

#include "dmtrack/parallel.hpp"

namespace dmtrack {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

namespace {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, std::vector<double> data,
                                              bool requires_grad) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->value = std::move(data);
    impl->grad.assign(impl->value.size(), 0.0);
    impl->requires_grad = requires_grad;
    return impl;
}

struct TensorAccess {
    static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl);
};

}  // namespace

Tensor TensorAccess_wrap(std::shared_ptr<detail::TensorImpl> impl);

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return Tensor(make_impl(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return Tensor(make_impl(std::move(shape), std::vector<double>(n, fill), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor: shape " + shape_str(shape) + " wants " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(data.size()));
    }
    return Tensor(make_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({1, 1}, {v}, requires_grad);
}

Tensor Tensor::row(std::vector<double> data, bool requires_grad) {
    const std::size_t n = data.size();
    return from({1, n}, std::move(data), requires_grad);
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("rows: tensor is not rank-2: " + shape_str(shape()));
    return impl_->shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("cols: tensor is not rank-2: " + shape_str(shape()));
    return impl_->shape[1];
}

double Tensor::item() const {
    if (numel() != 1) {
        throw DimensionError("item: tensor is not scalar: " + shape_str(shape()));
    }
    return impl_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return impl_->value[r * cols() + c];
}

void Tensor::zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
    return Tensor(make_impl(impl_->shape, impl_->value, impl_->requires_grad));
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw DimensionError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    if (consumed_) {
        throw std::logic_error(
            "backward: tape already consumed; build a fresh tape per forward pass");
    }
    consumed_ = true;
    const_cast<Tensor&>(loss).grad_mut()[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

namespace {

bool needs_grad(const Tape& tape, std::initializer_list<const Tensor*> ins) {
    if (!tape.recording()) return false;
    for (const Tensor* t : ins) {
        if (t->requires_grad()) return true;
    }
    return false;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": operand shapes differ: " +
                             shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

// ---- scalar math -----------------------------------------------------------

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Abramowitz & Stegun 7.1.26; max abs error 1.5e-7.
constexpr double kErfP = 0.3275911;
constexpr double kErfA1 = 0.254829592;
constexpr double kErfA2 = -0.284496736;
constexpr double kErfA3 = 1.421413741;
constexpr double kErfA4 = -1.453152027;
constexpr double kErfA5 = 1.061405429;

double erf_approx(double x) {
    const double ax = std::abs(x);
    const double t = 1.0 / (1.0 + kErfP * ax);
    const double poly =
        t * (kErfA1 + t * (kErfA2 + t * (kErfA3 + t * (kErfA4 + t * kErfA5))));
    const double v = 1.0 - poly * std::exp(-ax * ax);
    return x < 0.0 ? -v : v;
}

// Exact derivative of erf_approx (even function of x).
double erf_approx_deriv(double x) {
    const double ax = std::abs(x);
    const double t = 1.0 / (1.0 + kErfP * ax);
    const double p = t * (kErfA1 + t * (kErfA2 + t * (kErfA3 + t * (kErfA4 + t * kErfA5))));
    const double dp = kErfA1 + t * (2.0 * kErfA2 +
                                    t * (3.0 * kErfA3 + t * (4.0 * kErfA4 + t * 5.0 * kErfA5)));
    const double e = std::exp(-ax * ax);
    return e * (2.0 * ax * p + kErfP * t * t * dp);
}

constexpr double kInvSqrt2 = 0.7071067811865475244;

double gelu_value(double x) {
    return 0.5 * x * (1.0 + erf_approx(x * kInvSqrt2));
}

double gelu_deriv(double x) {
    const double z = x * kInvSqrt2;
    return 0.5 * (1.0 + erf_approx(z)) + 0.5 * x * erf_approx_deriv(z) * kInvSqrt2;
}

// ---- op helpers -------------------------------------------------------------

// Unary elementwise: deriv receives (x, y).
template <typename FwdFn, typename DerivFn>
Tensor unary_op(Tape& tape, const Tensor& a, FwdFn fwd, DerivFn deriv) {
    const bool rec = needs_grad(tape, {&a});
    std::vector<double> out(a.numel());
    auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
    Tensor y = Tensor::from(a.shape(), std::move(out));
    y.set_requires_grad(rec);
    if (rec) {
        Tensor ac = a;  // shared storage
        tape.record([ac, y, deriv]() mutable {
            auto g = y.grad();
            auto xv = ac.values();
            auto yv = y.values();
            auto ga = ac.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(xv[i], yv[i]);
        });
    }
    return y;
}

}  // namespace

// ---- matmul -----------------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor y = Tensor::zeros({m, n});
    {
        MapConstMat am(a.values().data(), m, k);
        MapConstMat bm(b.values().data(), k, n);
        MapMat ym(y.values_mut().data(), m, n);
        ym.noalias() = am * bm;
    }
    const bool rec = needs_grad(tape, {&a, &b});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor ac = a, bc = b;
        tape.record([ac, bc, y, m, k, n]() mutable {
            MapConstMat g(y.grad().data(), m, n);
            if (ac.requires_grad()) {
                MapConstMat bm(bc.values().data(), k, n);
                MapMat ga(ac.grad_mut().data(), m, k);
                ga.noalias() += g * bm.transpose();
            }
            if (bc.requires_grad()) {
                MapConstMat am(ac.values().data(), m, k);
                MapMat gb(bc.grad_mut().data(), k, n);
                gb.noalias() += am.transpose() * g;
            }
        });
    }
    return y;
}

// ---- binary elementwise ------------------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    std::vector<double> out(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    Tensor y = Tensor::from(a.shape(), std::move(out));
    const bool rec = needs_grad(tape, {&a, &b});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor ac = a, bc = b;
        tape.record([ac, bc, y]() mutable {
            auto g = y.grad();
            if (ac.requires_grad()) {
                auto ga = ac.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bc.requires_grad()) {
                auto gb = bc.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return y;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<double> out(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    Tensor y = Tensor::from(a.shape(), std::move(out));
    const bool rec = needs_grad(tape, {&a, &b});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor ac = a, bc = b;
        tape.record([ac, bc, y]() mutable {
            auto g = y.grad();
            if (ac.requires_grad()) {
                auto ga = ac.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bc.requires_grad()) {
                auto gb = bc.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    Tensor y = Tensor::from(a.shape(), std::move(out));
    const bool rec = needs_grad(tape, {&a, &b});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor ac = a, bc = b;
        tape.record([ac, bc, y]() mutable {
            auto g = y.grad();
            auto av2 = ac.values(), bv2 = bc.values();
            if (ac.requires_grad()) {
                auto ga = ac.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
            }
            if (bc.requires_grad()) {
                auto gb = bc.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
            }
        });
    }
    return y;
}

Tensor div(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape("div", a, b);
    std::vector<double> out(a.numel());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (bv[i] == 0.0) {
            throw DomainError("div: zero divisor at flat index " + std::to_string(i));
        }
        out[i] = av[i] / bv[i];
    }
    Tensor y = Tensor::from(a.shape(), std::move(out));
    const bool rec = needs_grad(tape, {&a, &b});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor ac = a, bc = b;
        tape.record([ac, bc, y]() mutable {
            auto g = y.grad();
            auto av2 = ac.values(), bv2 = bc.values();
            if (ac.requires_grad()) {
                auto ga = ac.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv2[i];
            }
            if (bc.requires_grad()) {
                auto gb = bc.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i)
                    gb[i] -= g[i] * av2[i] / (bv2[i] * bv2[i]);
            }
        });
    }
    return y;
}

Tensor add_scalar(Tape& tape, const Tensor& a, double s) {
    return unary_op(
        tape, a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(Tape& tape, const Tensor& a, double s) {
    return unary_op(
        tape, a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

// ---- row broadcasts ----------------------------------------------------------

namespace {

Tensor row_broadcast(Tape& tape, const Tensor& mat, const Tensor& rowvec, double sign,
                     const char* name) {
    if (mat.rank() != 2 || rowvec.rank() != 2 || rowvec.rows() != 1 ||
        rowvec.cols() != mat.cols()) {
        throw DimensionError(std::string(name) + ": want {m,n} and {1,n}, got " +
                             shape_str(mat.shape()) + " and " + shape_str(rowvec.shape()));
    }
    const std::size_t m = mat.rows(), n = mat.cols();
    std::vector<double> out(m * n);
    auto mv = mat.values(), rv = rowvec.values();
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] = mv[r * n + c] + sign * rv[c];
    Tensor y = Tensor::from(mat.shape(), std::move(out));
    const bool rec = needs_grad(tape, {&mat, &rowvec});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor mc = mat, rc = rowvec;
        tape.record([mc, rc, y, m, n, sign]() mutable {
            auto g = y.grad();
            if (mc.requires_grad()) {
                auto gm = mc.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
            }
            if (rc.requires_grad()) {
                auto gr = rc.grad_mut();
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < n; ++c) gr[c] += sign * g[r * n + c];
            }
        });
    }
    return y;
}

}  // namespace

Tensor add_row(Tape& tape, const Tensor& mat, const Tensor& rowvec) {
    return row_broadcast(tape, mat, rowvec, 1.0, "add_row");
}

Tensor sub_row(Tape& tape, const Tensor& mat, const Tensor& rowvec) {
    return row_broadcast(tape, mat, rowvec, -1.0, "sub_row");
}

// ---- unary elementwise --------------------------------------------------------

Tensor neg(Tape& tape, const Tensor& a) {
    return unary_op(
        tape, a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor abs_(Tape& tape, const Tensor& a) {
    return unary_op(
        tape, a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(Tape& tape, const Tensor& a) {
    return unary_op(
        tape, a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(Tape& tape, const Tensor& a) {
    return unary_op(
        tape, a, [](double x) { return gelu_value(x); },
        [](double x, double) { return gelu_deriv(x); });
}

Tensor silu(Tape& tape, const Tensor& a) {
    return unary_op(
        tape, a, [](double x) { return x * stable_sigmoid(x); },
        [](double x, double) {
            const double s = stable_sigmoid(x);
            return s * (1.0 + x * (1.0 - s));
        });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
    return unary_op(
        tape, a, [](double x) { return stable_sigmoid(x); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(Tape& tape, const Tensor& a) {
    return unary_op(
        tape, a, [](double x) { return stable_softplus(x); },
        [](double x, double) { return stable_sigmoid(x); });
}

Tensor exp_(Tape& tape, const Tensor& a) {
    return unary_op(
        tape, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log_(Tape& tape, const Tensor& a) {
    auto av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        if (!(av[i] > 0.0)) {
            throw DomainError("log: non-positive input " + std::to_string(av[i]) +
                              " at flat index " + std::to_string(i));
        }
    }
    return unary_op(
        tape, a, [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

// ---- layernorm -----------------------------------------------------------------

Tensor layernorm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias) {
    if (x.rank() != 2) {
        throw DimensionError("layernorm: want rank-2 input, got " + shape_str(x.shape()));
    }
    const std::size_t m = x.rows(), d = x.cols();
    if (d < 2) {
        throw DimensionError("layernorm: normalized dimension must be >= 2, got " +
                             std::to_string(d));
    }
    if (gain.shape() != Shape{1, d} || bias.shape() != Shape{1, d}) {
        throw DimensionError("layernorm: gain/bias must be {1," + std::to_string(d) +
                             "}, got " + shape_str(gain.shape()) + " and " +
                             shape_str(bias.shape()));
    }
    constexpr double kEps = 1e-5;
    std::vector<double> out(m * d);
    auto xhat = std::make_shared<std::vector<double>>(m * d);
    auto rstd = std::make_shared<std::vector<double>>(m);
    auto xv = x.values(), gv = gain.values(), bv = bias.values();
    for (std::size_t r = 0; r < m; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < d; ++c) mu += xv[r * d + c];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double e = xv[r * d + c] - mu;
            var += e * e;
        }
        var /= static_cast<double>(d);
        const double r_ = 1.0 / std::sqrt(var + kEps);
        (*rstd)[r] = r_;
        for (std::size_t c = 0; c < d; ++c) {
            const double h = (xv[r * d + c] - mu) * r_;
            (*xhat)[r * d + c] = h;
            out[r * d + c] = h * gv[c] + bv[c];
        }
    }
    Tensor y = Tensor::from(x.shape(), std::move(out));
    const bool rec = needs_grad(tape, {&x, &gain, &bias});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor xc = x, gc = gain, bc = bias;
        tape.record([xc, gc, bc, y, xhat, rstd, m, d]() mutable {
            auto g = y.grad();
            auto gv2 = gc.values();
            if (bc.requires_grad()) {
                auto gb = bc.grad_mut();
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
            }
            if (gc.requires_grad()) {
                auto gg = gc.grad_mut();
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < d; ++c)
                        gg[c] += g[r * d + c] * (*xhat)[r * d + c];
            }
            if (xc.requires_grad()) {
                auto gx = xc.grad_mut();
                for (std::size_t r = 0; r < m; ++r) {
                    double mean_gy = 0.0, mean_gyxh = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        const double gy = g[r * d + c] * gv2[c];
                        mean_gy += gy;
                        mean_gyxh += gy * (*xhat)[r * d + c];
                    }
                    mean_gy /= static_cast<double>(d);
                    mean_gyxh /= static_cast<double>(d);
                    for (std::size_t c = 0; c < d; ++c) {
                        const double gy = g[r * d + c] * gv2[c];
                        gx[r * d + c] += (*rstd)[r] *
                                         (gy - mean_gy - (*xhat)[r * d + c] * mean_gyxh);
                    }
                }
            }
        });
    }
    return y;
}

// ---- reductions / shape ops ------------------------------------------------------

Tensor sum(Tape& tape, const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    Tensor y = Tensor::scalar(acc);
    const bool rec = needs_grad(tape, {&a});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor ac = a;
        tape.record([ac, y]() mutable {
            const double g = y.grad()[0];
            auto ga = ac.grad_mut();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        });
    }
    return y;
}

Tensor mean(Tape& tape, const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    Tensor y = Tensor::scalar(acc * inv);
    const bool rec = needs_grad(tape, {&a});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor ac = a;
        tape.record([ac, y, inv]() mutable {
            const double g = y.grad()[0] * inv;
            auto ga = ac.grad_mut();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        });
    }
    return y;
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(shape));
    }
    Tensor y = Tensor::from(std::move(shape), std::vector<double>(a.values().begin(),
                                                                  a.values().end()));
    const bool rec = needs_grad(tape, {&a});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor ac = a;
        tape.record([ac, y]() mutable {
            auto g = y.grad();
            auto ga = ac.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }
    return y;
}

Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t start, std::size_t len) {
    const std::size_t m = a.rows(), n = a.cols();
    if (start + len > m) {
        throw DimensionError("slice_rows: range [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") exceeds " + shape_str(a.shape()));
    }
    std::vector<double> out(len * n);
    auto av = a.values();
    std::copy(av.begin() + start * n, av.begin() + (start + len) * n, out.begin());
    Tensor y = Tensor::from({len, n}, std::move(out));
    const bool rec = needs_grad(tape, {&a});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor ac = a;
        tape.record([ac, y, start, n]() mutable {
            auto g = y.grad();
            auto ga = ac.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) ga[start * n + i] += g[i];
        });
    }
    return y;
}

Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t start, std::size_t len) {
    const std::size_t m = a.rows(), n = a.cols();
    if (start + len > n) {
        throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") exceeds " + shape_str(a.shape()));
    }
    std::vector<double> out(m * len);
    auto av = a.values();
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < len; ++c) out[r * len + c] = av[r * n + start + c];
    Tensor y = Tensor::from({m, len}, std::move(out));
    const bool rec = needs_grad(tape, {&a});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor ac = a;
        tape.record([ac, y, start, m, n, len]() mutable {
            auto g = y.grad();
            auto ga = ac.grad_mut();
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < len; ++c) ga[r * n + start + c] += g[r * len + c];
        });
    }
    return y;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t m = parts.front().rows();
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        if (p.rows() != m) {
            throw DimensionError("concat_cols: row counts differ: " +
                                 shape_str(parts.front().shape()) + " vs " +
                                 shape_str(p.shape()));
        }
        total += p.cols();
    }
    std::vector<double> out(m * total);
    std::size_t col0 = 0;
    for (const Tensor& p : parts) {
        const std::size_t n = p.cols();
        auto pv = p.values();
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) out[r * total + col0 + c] = pv[r * n + c];
        col0 += n;
    }
    Tensor y = Tensor::from({m, total}, std::move(out));
    bool rec = false;
    if (tape.recording()) {
        for (const Tensor& p : parts) rec = rec || p.requires_grad();
    }
    y.set_requires_grad(rec);
    if (rec) {
        std::vector<Tensor> pc = parts;
        tape.record([pc, y, m, total]() mutable {
            auto g = y.grad();
            std::size_t c0 = 0;
            for (Tensor& p : pc) {
                const std::size_t n = p.cols();
                if (p.requires_grad()) {
                    auto gp = p.grad_mut();
                    for (std::size_t r = 0; r < m; ++r)
                        for (std::size_t c = 0; c < n; ++c)
                            gp[r * n + c] += g[r * total + c0 + c];
                }
                c0 += n;
            }
        });
    }
    return y;
}

// ---- fractional row interpolation --------------------------------------------

Tensor interp_rows(Tape& tape, const Tensor& table, const Tensor& offsets) {
    const std::size_t t_rows = table.rows(), d = table.cols();
    if (offsets.rank() != 2 || offsets.rows() != 1) {
        throw DimensionError("interp_rows: offsets must be {1,K}, got " +
                             shape_str(offsets.shape()));
    }
    const std::size_t k = offsets.cols();
    auto ov = offsets.values();
    auto tv = table.values();
    std::vector<double> out(k * d);
    for (std::size_t i = 0; i < k; ++i) {
        const double o = ov[i];
        if (o < 0.0 || o > static_cast<double>(t_rows - 1)) {
            throw DomainError("interp_rows: offset " + std::to_string(o) +
                              " outside [0, " + std::to_string(t_rows - 1) + "]");
        }
        const std::size_t lo = static_cast<std::size_t>(std::floor(o));
        const std::size_t hi = std::min(lo + 1, t_rows - 1);
        const double alpha = o - static_cast<double>(lo);
        for (std::size_t c = 0; c < d; ++c) {
            out[i * d + c] = (1.0 - alpha) * tv[lo * d + c] + alpha * tv[hi * d + c];
        }
    }
    Tensor y = Tensor::from({k, d}, std::move(out));
    const bool rec = needs_grad(tape, {&table, &offsets});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor tc = table, oc = offsets;
        tape.record([tc, oc, y, t_rows, d, k]() mutable {
            auto g = y.grad();
            auto ov2 = oc.values();
            auto tv2 = tc.values();
            for (std::size_t i = 0; i < k; ++i) {
                const double o = ov2[i];
                const std::size_t lo = static_cast<std::size_t>(std::floor(o));
                const std::size_t hi = std::min(lo + 1, t_rows - 1);
                const double alpha = o - static_cast<double>(lo);
                if (tc.requires_grad()) {
                    auto gt = tc.grad_mut();
                    for (std::size_t c = 0; c < d; ++c) {
                        gt[lo * d + c] += (1.0 - alpha) * g[i * d + c];
                        gt[hi * d + c] += alpha * g[i * d + c];
                    }
                }
                if (oc.requires_grad()) {
                    auto go = oc.grad_mut();
                    double acc = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        acc += g[i * d + c] * (tv2[hi * d + c] - tv2[lo * d + c]);
                    }
                    go[i] += acc;
                }
            }
        });
    }
    return y;
}

// ---- selective scan ------------------------------------------------------------

namespace {

struct ScanDims {
    std::size_t k, dc, ds;
};

ScanDims check_scan_shapes(const Tensor& x, const Tensor& delta, const Tensor& a,
                           const Tensor& b, const Tensor& c, const Tensor& d) {
    const std::size_t k = x.rows(), dc = x.cols(), ds = a.cols();
    if (delta.shape() != x.shape()) {
        throw DimensionError("selective_scan: delta shape " + shape_str(delta.shape()) +
                             " != x shape " + shape_str(x.shape()));
    }
    if (a.rows() != dc) {
        throw DimensionError("selective_scan: a shape " + shape_str(a.shape()) +
                             " does not match channel count " + std::to_string(dc));
    }
    if (b.shape() != Shape{k, ds} || c.shape() != Shape{k, ds}) {
        throw DimensionError("selective_scan: b/c must be {K,ds}, got " +
                             shape_str(b.shape()) + " and " + shape_str(c.shape()));
    }
    if (d.shape() != Shape{1, dc}) {
        throw DimensionError("selective_scan: d must be {1,dc}, got " + shape_str(d.shape()));
    }
    return {k, dc, ds};
}

}  // namespace

Tensor selective_scan(Tape& tape, const Tensor& x, const Tensor& delta, const Tensor& a,
                      const Tensor& b, const Tensor& c, const Tensor& d, bool parallel) {
    const ScanDims dims = check_scan_shapes(x, delta, a, b, c, d);
    const std::size_t k = dims.k, dc = dims.dc, ds = dims.ds;
    Tensor y = Tensor::zeros({k, dc});
    // h after each token, laid out [t][channel][state]; kept for backward.
    auto hist = std::make_shared<std::vector<double>>(k * dc * ds, 0.0);
    std::atomic<bool> singular{false};

    auto xv = x.values();
    auto dv = delta.values();
    auto av = a.values();
    auto bv = b.values();
    auto cv = c.values();
    auto skipv = d.values();
    auto yv = y.values_mut();

    par::parallel_for(
        dc,
        [&](std::size_t ch) {
            std::vector<double> h(ds, 0.0);
            for (std::size_t t = 0; t < k; ++t) {
                const double dt = dv[t * dc + ch];
                const double xt = xv[t * dc + ch];
                double acc = 0.0;
                for (std::size_t n = 0; n < ds; ++n) {
                    const double u = 0.5 * dt * av[ch * ds + n];
                    const double den = 1.0 - u;
                    if (std::abs(den) < 1e-12) {
                        singular.store(true);
                        return;
                    }
                    const double a_hat = (1.0 + u) / den;
                    const double b_hat = dt * bv[t * ds + n] / den;
                    h[n] = a_hat * h[n] + b_hat * xt;
                    (*hist)[(t * dc + ch) * ds + n] = h[n];
                    acc += cv[t * ds + n] * h[n];
                }
                yv[t * dc + ch] = acc + skipv[ch] * xt;
            }
        },
        parallel);

    if (singular.load()) {
        throw NumericalError(
            "selective_scan: singular discretization (1 - delta/2 * a hit zero)");
    }

    const bool rec = needs_grad(tape, {&x, &delta, &a, &b, &c, &d});
    y.set_requires_grad(rec);
    if (rec) {
        Tensor xc = x, dtc = delta, ac = a, bc = b, cc = c, skipc = d;
        tape.record([xc, dtc, ac, bc, cc, skipc, y, hist, k, dc, ds, parallel]() mutable {
            auto g = y.grad();
            auto xv2 = xc.values();
            auto dv2 = dtc.values();
            auto av2 = ac.values();
            auto bv2 = bc.values();
            auto cv2 = cc.values();
            auto skipv2 = skipc.values();

            // Per-channel slots for everything; b/c gradients are reduced over
            // channels afterwards in fixed order so the result is independent
            // of thread count.
            std::vector<double> gx(k * dc, 0.0), gdt(k * dc, 0.0), ga(dc * ds, 0.0),
                gskip(dc, 0.0);
            std::vector<double> gb_scratch(dc * k * ds, 0.0), gc_scratch(dc * k * ds, 0.0);

            par::parallel_for(
                dc,
                [&](std::size_t ch) {
                    std::vector<double> dh(ds, 0.0);
                    for (std::size_t t = k; t-- > 0;) {
                        const double dt = dv2[t * dc + ch];
                        const double xt = xv2[t * dc + ch];
                        const double gy = g[t * dc + ch];
                        gskip[ch] += gy * xt;
                        double gxt = gy * skipv2[ch];
                        double gdt_acc = 0.0;
                        for (std::size_t n = 0; n < ds; ++n) {
                            const double h_tn = (*hist)[(t * dc + ch) * ds + n];
                            gc_scratch[(ch * k + t) * ds + n] += gy * h_tn;
                            dh[n] += gy * cv2[t * ds + n];

                            const double an = av2[ch * ds + n];
                            const double u = 0.5 * dt * an;
                            const double den = 1.0 - u;
                            const double inv_den = 1.0 / den;
                            const double inv_den2 = inv_den * inv_den;
                            const double a_hat = (1.0 + u) * inv_den;
                            const double bn = bv2[t * ds + n];
                            const double b_hat = dt * bn * inv_den;
                            const double h_prev =
                                t > 0 ? (*hist)[((t - 1) * dc + ch) * ds + n] : 0.0;

                            const double d_ahat = dh[n] * h_prev;
                            const double d_bhat = dh[n] * xt;
                            gxt += dh[n] * b_hat;
                            gdt_acc += d_ahat * inv_den2 * an +
                                       d_bhat * (bn * inv_den + dt * bn * 0.5 * an * inv_den2);
                            ga[ch * ds + n] += d_ahat * inv_den2 * dt +
                                              d_bhat * (dt * bn * 0.5 * dt * inv_den2);
                            gb_scratch[(ch * k + t) * ds + n] += d_bhat * dt * inv_den;
                            dh[n] *= a_hat;
                        }
                        gx[t * dc + ch] += gxt;
                        gdt[t * dc + ch] += gdt_acc;
                    }
                },
                parallel);

            if (xc.requires_grad()) {
                auto dst = xc.grad_mut();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gx[i];
            }
            if (dtc.requires_grad()) {
                auto dst = dtc.grad_mut();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gdt[i];
            }
            if (ac.requires_grad()) {
                auto dst = ac.grad_mut();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += ga[i];
            }
            if (skipc.requires_grad()) {
                auto dst = skipc.grad_mut();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gskip[i];
            }
            if (bc.requires_grad()) {
                auto dst = bc.grad_mut();
                for (std::size_t ch = 0; ch < dc; ++ch)
                    for (std::size_t i = 0; i < k * ds; ++i)
                        dst[i] += gb_scratch[ch * k * ds + i];
            }
            if (cc.requires_grad()) {
                auto dst = cc.grad_mut();
                for (std::size_t ch = 0; ch < dc; ++ch)
                    for (std::size_t i = 0; i < k * ds; ++i)
                        dst[i] += gc_scratch[ch * k * ds + i];
            }
        });
    }
    return y;
}

// ---- AdamW ------------------------------------------------------------------------

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
    if (!(config_.lr > 0.0)) {
        throw DomainError("adamw: learning rate must be positive, got " +
                          std::to_string(config_.lr));
    }
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void AdamW::step() {
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto g = params_[pi].grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i])) {
                throw NumericalError("adamw: non-finite gradient (param " +
                                     std::to_string(pi) + ", flat index " +
                                     std::to_string(i) + "); step rejected");
            }
        }
    }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto g = params_[pi].grad();
        auto w = params_[pi].values_mut();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= config_.lr * (mhat / (std::sqrt(vhat) + config_.eps) +
                                  config_.weight_decay * w[i]);
        }
    }
}

void fill_normal(Tensor& t, Rng& rng, double std) {
    auto v = t.values_mut();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.normal(0.0, std);
}

}  // namespace dmtrack
