#pragma once

#include <Eigen/Dense>
#include <optional>

#include "dmtrack/errors.hpp"

namespace dmtrack {

using Vec4 = Eigen::Matrix<double, 4, 1>;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat8 = Eigen::Matrix<double, 8, 8>;

// Box state [x, y, a, h, vx, vy, va, vh]: center in pixels, aspect ratio
// (width/height), height in pixels, and per-frame deltas of those four.
struct MotionState {
    double x = 0, y = 0, a = 0, h = 0;
    double vx = 0, vy = 0, va = 0, vh = 0;

    Vec8 to_vec() const {
        Vec8 v;
        v << x, y, a, h, vx, vy, va, vh;
        return v;
    }
    static MotionState from_vec(const Vec8& v) {
        return {v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7)};
    }
    bool finite() const;
};

// Gaussian track belief. Pure value; the filter's operations are pure functions.
struct KalmanTrackState {
    Vec8 mean = Vec8::Zero();
    Mat8 cov = Mat8::Zero();
};

// Constant-velocity filter over the 8-dim box state, SORT-lineage noise model:
// position/velocity noise stds scale with box height (w_pos = 1/20,
// w_vel = 1/160), aspect-ratio noise is a fixed small std (1e-2) since a is
// dimensionless. One frame per step.
class KalmanFilter {
public:
    static constexpr double kPosWeight = 1.0 / 20.0;
    static constexpr double kVelWeight = 1.0 / 160.0;
    static constexpr double kAspectStd = 1e-2;

    KalmanFilter();

    // measurement = [cx, cy, a, h]; zero initial velocity, diagonal covariance
    // with stds [2w_p·h, 2w_p·h, 1e-2, 2w_p·h, 10w_v·h, 10w_v·h, 1e-2, 10w_v·h].
    KalmanTrackState initiate(const Vec4& measurement) const;

    // mean → F·mean, cov → F·P·Fᵀ + Q, then symmetrization. Q stds are
    // [w_p·h, w_p·h, 1e-2, w_p·h, w_v·h, w_v·h, 1e-2, w_v·h] with h the
    // current mean height.
    KalmanTrackState predict(const KalmanTrackState& state) const;

    // Standard gain update with H selecting the first 4 dims. Measurement noise
    // stds [w_p·h, w_p·h, 1e-2, w_p·h] with h the current mean height, unless
    // r_diag_override supplies explicit variances (used by limit-case tests).
    KalmanTrackState update(const KalmanTrackState& state, const Vec4& measurement,
                            const std::optional<Vec4>& r_diag_override = std::nullopt) const;

    // Square roots of the covariance diagonal, floored at 1e-6.
    static Vec8 sigma_diag(const KalmanTrackState& state);

    const Mat8& transition() const { return f_; }

private:
    Mat8 f_;
    Eigen::Matrix<double, 4, 8> h_;
};

}  // namespace dmtrack
