#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dmtrack/rng.hpp"
#include "dmtrack/tensor.hpp"

namespace dmtrack {

// Central finite-difference verification of reverse-mode gradients. The loss
// closure must rebuild the forward pass from live parameter values on every
// call; coordinates are sampled per tensor so large models stay checkable in
// bounded time.
struct GradCheckOptions {
    std::size_t coords_per_tensor = 6;  // 0 means check every coordinate
    double step = 1e-5;
    // Negative-control hook: scales one analytic gradient entry after the
    // backward pass so a healthy checker must report a failure.
    bool corrupt_analytic = false;
};

struct GradCheckCoord {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    GradCheckCoord worst;
};

// rel_err = |a - n| / max(1, |a|, |n|), i.e. absolute error for small
// gradients, relative error for large ones.
double gradcheck_rel_err(double analytic, double numeric);

GradCheckReport check_gradients(
    const std::function<Tensor(Tape&)>& loss_fn,
    const std::vector<std::pair<std::string, Tensor>>& params, Rng& picker,
    const GradCheckOptions& opts = {});

}  // namespace dmtrack
