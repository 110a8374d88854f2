#include "dmtrack/association.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dmtrack {

void Detection::validate() const {
    const double a = box(2), h = box(3);
    if (!(h > 0.0) || !(a > 0.0)) {
        throw DomainError("detection: need a > 0 and h > 0, got a=" + std::to_string(a) +
                          " h=" + std::to_string(h));
    }
    if (!(confidence >= 0.0 && confidence <= 1.0)) {
        throw DomainError("detection: confidence " + std::to_string(confidence) +
                          " outside [0,1]");
    }
    for (int i = 0; i < 4; ++i) {
        if (!std::isfinite(box(i))) throw DomainError("detection: non-finite box");
    }
}

Corners cxcyah_to_corners(const Vec4& box) {
    const double a = box(2), h = box(3);
    if (!(h > 0.0) || !(a > 0.0)) {
        throw DomainError("cxcyah_to_corners: need a > 0 and h > 0, got a=" +
                          std::to_string(a) + " h=" + std::to_string(h));
    }
    const double w = a * h;
    return {box(0) - 0.5 * w, box(1) - 0.5 * h, box(0) + 0.5 * w, box(1) + 0.5 * h};
}

Vec4 corners_to_cxcyah(const Corners& c) {
    const double w = c.x2 - c.x1, h = c.y2 - c.y1;
    if (!(w > 0.0) || !(h > 0.0)) {
        throw DomainError("corners_to_cxcyah: degenerate box");
    }
    Vec4 out;
    out << 0.5 * (c.x1 + c.x2), 0.5 * (c.y1 + c.y2), w / h, h;
    return out;
}

double iou(const Corners& a, const Corners& b) {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    if (inter <= 0.0) return 0.0;
    const double area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
    const double area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
    return inter / (area_a + area_b - inter);
}

double trend_sim(const Vec8& x_pred_t, const Vec8& x_pred_prev, const Vec4& det_box,
                 TrendSign sign) {
    const double tx = x_pred_t(0) - x_pred_prev(0);
    const double ty = x_pred_t(1) - x_pred_prev(1);
    double dx = x_pred_t(0) - det_box(0);
    double dy = x_pred_t(1) - det_box(1);
    if (sign == TrendSign::reversed) {
        dx = -dx;
        dy = -dy;
    }
    const double nt = std::sqrt(tx * tx + ty * ty);
    const double nd = std::sqrt(dx * dx + dy * dy);
    if (nt < 1e-9 || nd < 1e-9) return 0.0;
    return (tx * dx + ty * dy) / (nt * nd);
}

double uncertainty_penalty(const Vec8& x_pred, const Vec8& sigma_fuse, const Vec4& det_box) {
    const double sigma_bar = 0.5 * (sigma_fuse(0) + sigma_fuse(1));
    const double denom = std::max(sigma_bar * sigma_bar, 1e-4);
    const double dx = x_pred(0) - det_box(0);
    const double dy = x_pred(1) - det_box(1);
    return std::exp(-(dx * dx + dy * dy) / denom);
}

double match_score(double iou_term, double trend_term, double penalty_term) {
    return 0.7 * iou_term + 0.2 * trend_term + 0.1 * penalty_term;
}

namespace {

// Hungarian algorithm with potentials (cp-algorithms formulation), minimizing
// total cost on a padded square matrix. Rows are introduced in ascending index
// and augmenting paths take the first column achieving the minimum reduced
// cost, which fixes the tie-break deterministically.
std::vector<int> hungarian_min_cost(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j) {
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    }
    return row_to_col;
}

}  // namespace

Assignment solve_assignment(const ScoreMatrix& scores) {
    Assignment out;
    const std::size_t r = scores.rows, c = scores.cols;
    if (r == 0 || c == 0) {
        for (std::size_t i = 0; i < r; ++i) out.unmatched_tracks.push_back(i);
        for (std::size_t j = 0; j < c; ++j) out.unmatched_detections.push_back(j);
        return out;
    }

    // Pad to square with zero-cost cells for gated pairs and padding. A perfect
    // matching on this matrix then scores exactly the negated sum of the
    // feasible pairs it uses, so the minimum-cost solution is the
    // maximum-total-score partial matching (a positive-score pair may stay
    // unmatched when that frees a strictly better combination elsewhere).
    const std::size_t n = std::max(r, c);
    std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const double s = scores.score_at(i, j);
            if (s != ScoreMatrix::kGated && s > 0.0) cost[i][j] = -s;
        }
    }

    const std::vector<int> row_to_col = hungarian_min_cost(cost);
    std::vector<bool> det_matched(c, false);
    for (std::size_t i = 0; i < r; ++i) {
        const int j = row_to_col[i];
        if (j >= 0 && static_cast<std::size_t>(j) < c &&
            cost[i][static_cast<std::size_t>(j)] < 0.0) {
            out.matches.emplace_back(i, static_cast<std::size_t>(j));
            det_matched[static_cast<std::size_t>(j)] = true;
        } else {
            out.unmatched_tracks.push_back(i);
        }
    }
    for (std::size_t j = 0; j < c; ++j) {
        if (!det_matched[j]) out.unmatched_detections.push_back(j);
    }
    return out;
}

}  // namespace dmtrack
