#include "dmtrack/mot_io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dmtrack {

Vec4 MotRow::to_cxcyah() const {
    if (!(width > 0.0) || !(height > 0.0)) {
        throw DomainError("mot row: non-positive box " + std::to_string(width) + "x" +
                          std::to_string(height));
    }
    Vec4 b;
    b << left + 0.5 * width, top + 0.5 * height, width / height, height;
    return b;
}

MotRow MotRow::from_cxcyah(int frame, int id, const Vec4& box, double conf) {
    const double w = box(2) * box(3), h = box(3);
    MotRow r;
    r.frame = frame;
    r.id = id;
    r.left = box(0) - 0.5 * w;
    r.top = box(1) - 0.5 * h;
    r.width = w;
    r.height = h;
    r.conf = conf;
    return r;
}

MotSequence read_mot_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    MotSequence rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<double> vals;
        while (std::getline(ss, field, ',')) {
            char* end = nullptr;
            errno = 0;
            const double v = std::strtod(field.c_str(), &end);
            if (end == field.c_str() || errno == ERANGE || !std::isfinite(v)) {
                throw DataError(path + ":" + std::to_string(lineno) + ": bad field '" +
                                field + "'");
            }
            vals.push_back(v);
        }
        if (vals.size() < 7) {
            throw DataError(path + ":" + std::to_string(lineno) + ": expected >= 7 fields, got " +
                            std::to_string(vals.size()));
        }
        MotRow r;
        r.frame = static_cast<int>(vals[0]);
        r.id = static_cast<int>(vals[1]);
        r.left = vals[2];
        r.top = vals[3];
        r.width = vals[4];
        r.height = vals[5];
        r.conf = vals[6];
        if (r.frame < 1) {
            throw DataError(path + ":" + std::to_string(lineno) + ": frame index " +
                            std::to_string(r.frame) + " must be >= 1");
        }
        rows.push_back(r);
    }
    return rows;
}

namespace {

void write_lines(const std::string& path, const MotSequence& rows, const char* fmt,
                 bool with_conf) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot write " + path + ": " + std::strerror(errno));
    for (const MotRow& r : rows) {
        if (with_conf) {
            std::fprintf(f, fmt, r.frame, r.id, r.left, r.top, r.width, r.height, r.conf);
        } else {
            std::fprintf(f, fmt, r.frame, r.id, r.left, r.top, r.width, r.height);
        }
    }
    if (std::fclose(f) != 0) throw DataError("write failed for " + path);
}

}  // namespace

void write_gt_file(const std::string& path, const MotSequence& rows) {
    write_lines(path, rows, "%d,%d,%.17g,%.17g,%.17g,%.17g,1,1,1.0\n", false);
}

void write_det_file(const std::string& path, const MotSequence& rows) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot write " + path + ": " + std::strerror(errno));
    for (const MotRow& r : rows) {
        std::fprintf(f, "%d,-1,%.17g,%.17g,%.17g,%.17g,%.17g,-1,-1,-1\n", r.frame, r.left,
                     r.top, r.width, r.height, r.conf);
    }
    if (std::fclose(f) != 0) throw DataError("write failed for " + path);
}

void write_result_file(const std::string& path, const MotSequence& rows) {
    write_lines(path, rows, "%d,%d,%.2f,%.2f,%.2f,%.2f,%.2f,-1,-1,-1\n", true);
}

std::map<int, std::vector<MotRow>> group_by_frame(const MotSequence& rows) {
    std::map<int, std::vector<MotRow>> frames;
    for (const MotRow& r : rows) frames[r.frame].push_back(r);
    return frames;
}

}  // namespace dmtrack
