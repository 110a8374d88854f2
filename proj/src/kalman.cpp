#include "dmtrack/kalman.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace dmtrack {

bool MotionState::finite() const {
    for (double v : {x, y, a, h, vx, vy, va, vh}) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

KalmanFilter::KalmanFilter() {
    f_ = Mat8::Identity();
    for (int i = 0; i < 4; ++i) f_(i, i + 4) = 1.0;
    h_.setZero();
    for (int i = 0; i < 4; ++i) h_(i, i) = 1.0;
}

KalmanTrackState KalmanFilter::initiate(const Vec4& measurement) const {
    const double a = measurement(2), h = measurement(3);
    if (!(h > 0.0) || !(a > 0.0)) {
        throw DomainError("kalman initiate: need a > 0 and h > 0, got a=" +
                          std::to_string(a) + " h=" + std::to_string(h));
    }
    KalmanTrackState s;
    s.mean.head<4>() = measurement;
    Vec8 std;
    std << 2 * kPosWeight * h, 2 * kPosWeight * h, kAspectStd, 2 * kPosWeight * h,
        10 * kVelWeight * h, 10 * kVelWeight * h, kAspectStd, 10 * kVelWeight * h;
    s.cov = std.array().square().matrix().asDiagonal();
    return s;
}

KalmanTrackState KalmanFilter::predict(const KalmanTrackState& state) const {
    const double h = state.mean(3);
    Vec8 std;
    std << kPosWeight * h, kPosWeight * h, kAspectStd, kPosWeight * h, kVelWeight * h,
        kVelWeight * h, kAspectStd, kVelWeight * h;
    const Mat8 q = std.array().square().matrix().asDiagonal();

    KalmanTrackState out;
    out.mean = f_ * state.mean;
    out.cov = f_ * state.cov * f_.transpose() + q;
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    return out;
}

KalmanTrackState KalmanFilter::update(const KalmanTrackState& state, const Vec4& measurement,
                                      const std::optional<Vec4>& r_diag_override) const {
    Vec4 r_diag;
    if (r_diag_override) {
        r_diag = *r_diag_override;
    } else {
        const double h = state.mean(3);
        Vec4 std;
        std << kPosWeight * h, kPosWeight * h, kAspectStd, kPosWeight * h;
        r_diag = std.array().square();
    }

    const Eigen::Matrix4d s =
        h_ * state.cov * h_.transpose() + Eigen::Matrix4d(r_diag.asDiagonal());
    Eigen::JacobiSVD<Eigen::Matrix4d> svd(s, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(3);
    if (!(smin > 0.0) || smin < smax * 1e-14) {
        const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
        throw NumericalError("kalman update: singular innovation covariance (condition " +
                             std::to_string(cond) + ")");
    }
    const Eigen::Matrix<double, 8, 4> gain =
        state.cov * h_.transpose() * svd.solve(Eigen::Matrix4d::Identity());

    KalmanTrackState out;
    out.mean = state.mean + gain * (measurement - h_ * state.mean);
    out.cov = (Mat8::Identity() - gain * h_) * state.cov;
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    return out;
}

Vec8 KalmanFilter::sigma_diag(const KalmanTrackState& state) {
    Vec8 sigma;
    for (int i = 0; i < 8; ++i) {
        const double d = state.cov(i, i);
        sigma(i) = std::max(std::sqrt(std::max(d, 0.0)), 1e-6);
    }
    return sigma;
}

}  // namespace dmtrack
