#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dmtrack/mot_io.hpp"
#include "dmtrack/rng.hpp"
#include "doctest.h"

using namespace dmtrack;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    auto dir = fs::temp_directory_path() / "dmtrack_mot_io";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("cxcyah round trip through a row") {
    Vec4 box;
    box << 100.5, 200.25, 0.75, 48.0;
    MotRow r = MotRow::from_cxcyah(3, 7, box, 0.9);
    CHECK(r.width == doctest::Approx(36.0));
    CHECK(r.height == 48.0);
    CHECK(r.left == doctest::Approx(100.5 - 18.0));
    Vec4 back = r.to_cxcyah();
    CHECK((back - box).cwiseAbs().maxCoeff() < 1e-12);

    MotRow bad;
    bad.width = -1;
    bad.height = 10;
    CHECK_THROWS_AS(bad.to_cxcyah(), DomainError);
}

TEST_CASE("gt and det files round trip bit-exactly") {
    Rng rng(555);
    MotSequence rows;
    for (int i = 0; i < 50; ++i) {
        MotRow r;
        r.frame = 1 + static_cast<int>(rng.below(20));
        r.id = 1 + static_cast<int>(rng.below(5));
        r.left = rng.uniform(0, 1000);
        r.top = rng.uniform(0, 800);
        r.width = rng.uniform(5, 120);
        r.height = rng.uniform(5, 120);
        r.conf = rng.uniform(0.1, 1.0);
        rows.push_back(r);
    }

    const auto gt_path = temp_file("gt.txt");
    write_gt_file(gt_path.string(), rows);
    MotSequence gt_back = read_mot_file(gt_path.string());
    REQUIRE(gt_back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(gt_back[i].frame == rows[i].frame);
        CHECK(gt_back[i].id == rows[i].id);
        CHECK(gt_back[i].left == rows[i].left);
        CHECK(gt_back[i].top == rows[i].top);
        CHECK(gt_back[i].width == rows[i].width);
        CHECK(gt_back[i].height == rows[i].height);
        CHECK(gt_back[i].conf == 1.0);
    }

    const auto det_path = temp_file("det.txt");
    write_det_file(det_path.string(), rows);
    MotSequence det_back = read_mot_file(det_path.string());
    REQUIRE(det_back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(det_back[i].id == -1);
        CHECK(det_back[i].left == rows[i].left);
        CHECK(det_back[i].conf == rows[i].conf);
    }
}

TEST_CASE("result writer uses fixed two-decimal boxes") {
    MotRow r;
    r.frame = 2;
    r.id = 5;
    r.left = 10.345;
    r.top = 0.5;
    r.width = 33.0;
    r.height = 47.126;
    r.conf = 0.875;
    const auto path = temp_file("results.txt");
    write_result_file(path.string(), {r});
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "2,5,10.35,0.50,33.00,47.13,0.88,-1,-1,-1");
}

TEST_CASE("parse errors carry the line number") {
    const auto path = temp_file("bad.txt");
    {
        std::ofstream out(path);
        out << "1,1,5,5,10,10,1,1,1.0\n";
        out << "1,1,banana,5,10,10,1\n";
    }
    CHECK_THROWS_WITH_AS(read_mot_file(path.string()), doctest::Contains(":2:"), DataError);

    {
        std::ofstream out(path);
        out << "1,1,5,5\n";
    }
    CHECK_THROWS_WITH_AS(read_mot_file(path.string()), doctest::Contains("7 fields"),
                         DataError);

    {
        std::ofstream out(path);
        out << "0,1,5,5,10,10,1,1,1.0\n";
    }
    CHECK_THROWS_AS(read_mot_file(path.string()), DataError);

    CHECK_THROWS_AS(read_mot_file("/nonexistent/nowhere.txt"), DataError);
}

TEST_CASE("blank lines are skipped and grouping is stable") {
    const auto path = temp_file("gaps.txt");
    {
        std::ofstream out(path);
        out << "1,1,0,0,10,10,1,1,1.0\n\n";
        out << "3,1,5,0,10,10,1,1,1.0\n";
        out << "3,2,50,0,10,10,1,1,1.0\n";
    }
    MotSequence rows = read_mot_file(path.string());
    REQUIRE(rows.size() == 3);
    auto frames = group_by_frame(rows);
    CHECK(frames.size() == 2);
    CHECK(frames[1].size() == 1);
    CHECK(frames[3].size() == 2);
    CHECK(frames.count(2) == 0);
}
