#include "dmtrack/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dmtrack/errors.hpp"

namespace dmtrack {

namespace {

double eval_loss(const std::function<Tensor(Tape&)>& loss_fn) {
    Tape tape(false);
    const Tensor loss = loss_fn(tape);
    if (loss.numel() != 1) {
        throw DimensionError("gradient check: loss must be scalar");
    }
    return loss.item();
}

std::vector<std::size_t> pick_coords(std::size_t numel, std::size_t want, Rng& picker) {
    std::vector<std::size_t> coords;
    if (want == 0 || numel <= want) {
        coords.resize(numel);
        for (std::size_t i = 0; i < numel; ++i) coords[i] = i;
        return coords;
    }
    std::set<std::size_t> chosen;
    while (chosen.size() < want) {
        chosen.insert(static_cast<std::size_t>(picker.below(numel)));
    }
    coords.assign(chosen.begin(), chosen.end());
    return coords;
}

}  // namespace

double gradcheck_rel_err(double analytic, double numeric) {
    const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / scale;
}

GradCheckReport check_gradients(
    const std::function<Tensor(Tape&)>& loss_fn,
    const std::vector<std::pair<std::string, Tensor>>& params, Rng& picker,
    const GradCheckOptions& opts) {
    for (const auto& [name, t] : params) {
        (void)name;
        Tensor handle = t;
        handle.zero_grad();
    }
    {
        Tape tape(true);
        const Tensor loss = loss_fn(tape);
        tape.backward(loss);
    }

    std::vector<std::vector<std::size_t>> coords(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        coords[p] = pick_coords(params[p].second.numel(), opts.coords_per_tensor, picker);
    }

    if (opts.corrupt_analytic) {
        for (std::size_t p = 0; p < params.size(); ++p) {
            if (coords[p].empty()) continue;
            Tensor handle = params[p].second;
            auto grad = handle.grad_mut();
            grad[coords[p][0]] = grad[coords[p][0]] * 1.5 + 1e-3;
            break;
        }
    }

    GradCheckReport report;
    const double h = opts.step;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor t = params[p].second;
        const auto grad = t.grad();
        for (const std::size_t idx : coords[p]) {
            const double saved = t.values()[idx];
            t.values_mut()[idx] = saved + h;
            const double up = eval_loss(loss_fn);
            t.values_mut()[idx] = saved - h;
            const double down = eval_loss(loss_fn);
            t.values_mut()[idx] = saved;

            const double numeric = (up - down) / (2.0 * h);
            const double analytic = grad[idx];
            const double rel = gradcheck_rel_err(analytic, numeric);
            ++report.checked;
            if (rel >= report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = {params[p].first, idx, analytic, numeric, rel};
            }
        }
    }
    return report;
}

}  // namespace dmtrack
