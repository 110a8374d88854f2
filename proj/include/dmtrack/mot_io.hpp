#pragma once

#include <map>
#include <string>
#include <vector>

#include "dmtrack/errors.hpp"
#include "dmtrack/kalman.hpp"

namespace dmtrack {

// One MOT Challenge text row. Boxes are stored as left/top/width/height
// exactly as in the files; frame and id are 1-based (id -1 for detections).
struct MotRow {
    int frame = 0;
    int id = -1;
    double left = 0, top = 0, width = 0, height = 0;
    double conf = 1.0;

    Vec4 to_cxcyah() const;
    static MotRow from_cxcyah(int frame, int id, const Vec4& box, double conf);
};

using MotSequence = std::vector<MotRow>;

// Parses "frame,id,left,top,width,height,conf,..." rows; trailing columns are
// ignored, blank lines skipped. Throws DataError naming the path and the
// 1-based line number on any malformed row.
MotSequence read_mot_file(const std::string& path);

// gt.txt rows: "frame,id,left,top,w,h,1,1,1.0". Geometry uses %.17g so a
// read-back reproduces the doubles bit-exactly.
void write_gt_file(const std::string& path, const MotSequence& rows);

// det.txt rows: "frame,-1,left,top,w,h,conf,-1,-1,-1", %.17g geometry.
void write_det_file(const std::string& path, const MotSequence& rows);

// Tracker results: "frame,id,left,top,w,h,conf,-1,-1,-1" with fixed 2-decimal
// formatting.
void write_result_file(const std::string& path, const MotSequence& rows);

std::map<int, std::vector<MotRow>> group_by_frame(const MotSequence& rows);

}  // namespace dmtrack
