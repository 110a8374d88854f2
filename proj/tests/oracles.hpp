#pragma once

// Independent oracles the test suites check the real implementations against.
// Everything here is deliberately naive: central finite differences, O(n!)
// assignment enumeration, scalar recurrences. Slow and obviously correct.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "dmtrack/association.hpp"
#include "dmtrack/tensor.hpp"

namespace oracles {

// Relative error with unit floor, so tiny gradients are compared absolutely.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

struct GradCheck {
    double max_rel = 0.0;
    std::size_t checked = 0;
};

// Compares analytic gradients against central finite differences (step h) for
// every element of every tensor in params. loss_fn must rebuild the graph from
// the params' current values on each call.
template <typename LossFn>
GradCheck check_grads(LossFn&& loss_fn, const std::vector<dmtrack::Tensor>& params,
                      double h = 1e-5) {
    using dmtrack::Tape;
    using dmtrack::Tensor;

    for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
    Tape tape(true);
    Tensor loss = loss_fn(tape);
    tape.backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const Tensor& p : params) {
        analytic.emplace_back(p.grad().begin(), p.grad().end());
    }

    GradCheck result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        auto vals = p.values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + h;
            Tape up_tape(false);
            const double up = loss_fn(up_tape).item();
            vals[i] = orig - h;
            Tape dn_tape(false);
            const double dn = loss_fn(dn_tape).item();
            vals[i] = orig;
            const double fd = (up - dn) / (2.0 * h);
            result.max_rel = std::max(result.max_rel, rel_err(analytic[pi][i], fd));
            ++result.checked;
        }
    }
    return result;
}

// Best achievable assignment total by enumerating every permutation of the
// padded square matrix (all maximal partial matchings). Gated cells and
// padding contribute nothing. Valid for matrices up to ~8x8.
inline double brute_force_best_total(const dmtrack::ScoreMatrix& m) {
    const std::size_t n = std::max(m.rows, m.cols);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 0.0;
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i < m.rows && perm[i] < m.cols) {
                const double s = m.score_at(i, perm[i]);
                if (s != dmtrack::ScoreMatrix::kGated) total += s;
            }
        }
        best = std::max(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace oracles
