#include <cmath>
#include <set>

#include "dmtrack/association.hpp"
#include "dmtrack/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace dmtrack;

namespace {

Vec4 box(double cx, double cy, double a, double h) {
    Vec4 b;
    b << cx, cy, a, h;
    return b;
}

Vec8 state(double cx, double cy) {
    Vec8 s = Vec8::Zero();
    s(0) = cx;
    s(1) = cy;
    s(2) = 1.0;
    s(3) = 10.0;
    return s;
}

}  // namespace

TEST_CASE("box conversion") {
    Corners c = cxcyah_to_corners(box(10, 10, 1.0, 4));
    CHECK(c.x1 == 8.0);
    CHECK(c.y1 == 8.0);
    CHECK(c.x2 == 12.0);
    CHECK(c.y2 == 12.0);

    Corners w = cxcyah_to_corners(box(0, 0, 2.0, 2));
    CHECK(w.x1 == -2.0);
    CHECK(w.y1 == -1.0);
    CHECK(w.x2 == 2.0);
    CHECK(w.y2 == 1.0);

    Vec4 orig = box(317.25, -41.5, 0.73, 55.0);
    Vec4 rt = corners_to_cxcyah(cxcyah_to_corners(orig));
    CHECK((rt - orig).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(cxcyah_to_corners(box(0, 0, 0.0, 4)), DomainError);
    CHECK_THROWS_AS(cxcyah_to_corners(box(0, 0, 1.0, -4)), DomainError);
    CHECK_THROWS_AS(corners_to_cxcyah(Corners{0, 0, 0, 1}), DomainError);
}

TEST_CASE("iou values and symmetry") {
    Corners a{0, 0, 2, 2}, b{1, 0, 3, 2}, far{10, 10, 12, 12};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, far) == 0.0);
    CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        Corners p = cxcyah_to_corners(
            box(rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(0.5, 2), rng.uniform(5, 30)));
        Corners q = cxcyah_to_corners(
            box(rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(0.5, 2), rng.uniform(5, 30)));
        CHECK(iou(p, q) == iou(q, p));
        CHECK(iou(p, q) >= 0.0);
        CHECK(iou(p, q) <= 1.0);
    }
}

TEST_CASE("trend similarity") {
    // Track moved +x; detection sits behind the prediction along +x.
    CHECK(trend_sim(state(5, 0), state(4, 0), box(4, 0, 1, 10)) == doctest::Approx(1.0));
    CHECK(trend_sim(state(5, 0), state(4, 0), box(5, -1, 1, 10)) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(trend_sim(state(5, 0), state(5, 0), box(3, 0, 1, 10)) == 0.0);
    CHECK(trend_sim(state(5, 0), state(4, 0), box(5, 0, 1, 10)) == 0.0);

    // Scale both difference vectors by the same positive factor.
    // v_track (1,1) vs (5,5); v_det (2,-1) vs (10,-5).
    const double s1 = trend_sim(state(5, 2), state(4, 1), box(3, 3, 1, 10));
    const double s2 = trend_sim(state(20, 20), state(15, 15), box(10, 25, 1, 10));
    CHECK(s1 == doctest::Approx(s2).epsilon(1e-14));

    const double fwd = trend_sim(state(5, 0), state(4, 0), box(7, 0, 1, 10));
    const double rev =
        trend_sim(state(5, 0), state(4, 0), box(7, 0, 1, 10), TrendSign::reversed);
    CHECK(fwd == doctest::Approx(-1.0));
    CHECK(rev == doctest::Approx(1.0));
}

TEST_CASE("uncertainty penalty") {
    Vec8 sigma = Vec8::Constant(1.0);
    CHECK(uncertainty_penalty(state(10, 10), sigma, box(10, 10, 1, 10)) == 1.0);
    CHECK(uncertainty_penalty(state(10, 10), sigma, box(11, 10, 1, 10)) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(uncertainty_penalty(state(10, 10), sigma, box(13, 10, 1, 10)) ==
          doctest::Approx(1.234e-4).epsilon(1e-3));

    Vec8 tiny = Vec8::Constant(1e-9);
    // Floored denominator: exp(-1 / 1e-4) underflows to zero, not a NaN.
    const double p = uncertainty_penalty(state(10, 10), tiny, box(11, 10, 1, 10));
    CHECK(p >= 0.0);
    CHECK(std::isfinite(p));
    const double near = uncertainty_penalty(state(10, 10), tiny, box(10.005, 10, 1, 10));
    CHECK(near == doctest::Approx(std::exp(-0.005 * 0.005 / 1e-4)).epsilon(1e-9));
}

TEST_CASE("match score blend and monotonicity") {
    CHECK(match_score(1, 1, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(match_score(0, 0, 1) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(match_score(0.5, -1.0, std::exp(-1.0)) ==
          doctest::Approx(0.1867879).epsilon(1e-6));

    Rng rng(23);
    for (int i = 0; i < 200; ++i) {
        const double i0 = rng.uniform(), t0 = rng.uniform(-1, 1), p0 = rng.uniform();
        const double bump = rng.uniform(0, 0.5);
        const double base = match_score(i0, t0, p0);
        CHECK(match_score(i0 + bump, t0, p0) >= base);
        CHECK(match_score(i0, t0 + bump, p0) >= base);
        CHECK(match_score(i0, t0, p0 + bump) >= base);
    }
}

TEST_CASE("assignment basics") {
    ScoreMatrix one(1, 1);
    one.score_at(0, 0) = 0.9;
    one.iou_at(0, 0) = 0.8;
    auto a = solve_assignment(one);
    REQUIRE(a.matches.size() == 1);
    CHECK(a.matches[0] == std::pair<std::size_t, std::size_t>{0, 0});
    CHECK(a.unmatched_tracks.empty());
    CHECK(a.unmatched_detections.empty());

    ScoreMatrix gated(1, 1);  // constructor fills the sentinel
    gated.iou_at(0, 0) = 0.2;
    auto g = solve_assignment(gated);
    CHECK(g.matches.empty());
    CHECK(g.unmatched_tracks.size() == 1);
    CHECK(g.unmatched_detections.size() == 1);

    auto e = solve_assignment(ScoreMatrix(0, 3));
    CHECK(e.matches.empty());
    CHECK(e.unmatched_detections.size() == 3);
}

TEST_CASE("assignment prefers the higher total, not the greedy pair") {
    ScoreMatrix m(2, 2);
    m.score_at(0, 0) = 0.9;
    m.score_at(0, 1) = 0.8;
    m.score_at(1, 0) = 0.8;
    m.score_at(1, 1) = 0.1;
    auto a = solve_assignment(m);
    REQUIRE(a.matches.size() == 2);
    CHECK(a.matches[0] == std::pair<std::size_t, std::size_t>{0, 1});
    CHECK(a.matches[1] == std::pair<std::size_t, std::size_t>{1, 0});
}

TEST_CASE("uniform scores give the identity pairing") {
    ScoreMatrix m(3, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) m.score_at(i, j) = 0.5;
    auto a = solve_assignment(m);
    REQUIRE(a.matches.size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(a.matches[i] == std::pair<std::size_t, std::size_t>{i, i});
}

TEST_CASE("assignment equals brute force on 500 random matrices") {
    Rng rng(20240601);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t r = 1 + rng.below(7), c = 1 + rng.below(7);
        ScoreMatrix m(r, c);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                if (rng.uniform() < 0.35) {
                    m.iou_at(i, j) = rng.uniform(0.0, 0.3);  // stays gated
                } else {
                    m.iou_at(i, j) = rng.uniform(0.3, 1.0);
                    m.score_at(i, j) =
                        match_score(m.iou_at(i, j), rng.uniform(-1, 1), rng.uniform());
                }
            }
        }

        auto a = solve_assignment(m);
        double total = 0.0;
        for (auto [ti, dj] : a.matches) {
            CHECK(m.iou_at(ti, dj) >= kIouGate);
            total += m.score_at(ti, dj);
        }
        CHECK(total == oracles::brute_force_best_total(m));

        // Partition property: every index exactly once.
        std::set<std::size_t> tracks(a.unmatched_tracks.begin(), a.unmatched_tracks.end());
        std::set<std::size_t> dets(a.unmatched_detections.begin(),
                                   a.unmatched_detections.end());
        for (auto [ti, dj] : a.matches) {
            CHECK(tracks.insert(ti).second);
            CHECK(dets.insert(dj).second);
        }
        CHECK(tracks.size() == r);
        CHECK(dets.size() == c);
    }
}
