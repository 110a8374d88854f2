#include "dmtrack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "dmtrack/errors.hpp"
#include "dmtrack/rng.hpp"
#include "json.hpp"

namespace dmtrack {

namespace {

constexpr double kSizeNoiseRel = 0.05;
constexpr double kTrueConfLo = 0.7, kTrueConfHi = 1.0;
constexpr double kFpConfLo = 0.1, kFpConfHi = 0.5;

struct SimState {
    double x, y, vx, vy;
};

void validate(const MotionScenario& sc) {
    if (sc.frames <= 0) {
        throw DomainError("scenario '" + sc.name + "': frame count must be positive");
    }
    if (sc.extent_w <= 0 || sc.extent_h <= 0) {
        throw DomainError("scenario '" + sc.name + "': image extent must be positive");
    }
    if (sc.sigma_det < 0 || sc.p_miss < 0 || sc.p_miss > 1 || sc.fp_rate < 0) {
        throw DomainError("scenario '" + sc.name + "': noise parameters out of range");
    }
    if (sc.v_max <= 0) {
        throw DomainError("scenario '" + sc.name + "': v_max must be positive");
    }
    for (std::size_t i = 0; i < sc.programs.size(); ++i) {
        const ObjectProgram& p = sc.programs[i];
        const std::string who =
            "scenario '" + sc.name + "' object " + std::to_string(i + 1);
        if (p.width <= 0 || p.height <= 0) {
            throw DomainError(who + ": box size must be positive");
        }
        if (p.width > sc.extent_w || p.height > sc.extent_h) {
            throw DomainError(who + ": box larger than the image extent");
        }
        int total = 0;
        for (const MotionSegment& seg : p.segments) {
            if (seg.duration <= 0) {
                throw DomainError(who + ": segment durations must be positive");
            }
            total += seg.duration;
        }
        if (total != sc.frames) {
            throw DomainError(who + ": segment durations sum to " +
                              std::to_string(total) + ", expected " +
                              std::to_string(sc.frames) + " frames");
        }
        for (const OcclusionWindow& w : p.occlusions) {
            if (w.start < 1 || w.length <= 0 || w.start + w.length > sc.frames + 1) {
                throw DomainError(who + ": occlusion window outside the sequence");
            }
        }
    }
}

void clamp_center(double& cx, double& cy, double w, double h,
                  const MotionScenario& sc) {
    cx = std::clamp(cx, w / 2.0, sc.extent_w - w / 2.0);
    cy = std::clamp(cy, h / 2.0, sc.extent_h - h / 2.0);
}

void cap_speed(SimState& s, double v_max) {
    const double speed = std::hypot(s.vx, s.vy);
    if (speed > v_max) {
        s.vx *= v_max / speed;
        s.vy *= v_max / speed;
    }
}

// Per-object trajectory: frame 1 is the initial state; the step into frame f
// uses the segment that frame f falls in. Entering a Stop segment zeroes the
// velocity; LinearAccel integrates it back up.
std::vector<SimState> integrate(const ObjectProgram& p, const MotionScenario& sc) {
    std::vector<SimState> track;
    track.reserve(sc.frames);

    SimState s{p.x0, p.y0, p.vx0, p.vy0};
    cap_speed(s, sc.v_max);
    clamp_center(s.x, s.y, p.width, p.height, sc);
    track.push_back(s);

    std::size_t seg_idx = 0;
    int used_in_seg = 1;  // frame 1 consumes the first slot of segment 0
    for (int f = 2; f <= sc.frames; ++f) {
        while (used_in_seg >= p.segments[seg_idx].duration) {
            used_in_seg = 0;
            ++seg_idx;
            if (p.segments[seg_idx].kind == SegmentKind::Stop) {
                s.vx = 0.0;
                s.vy = 0.0;
            }
        }
        const MotionSegment& seg = p.segments[seg_idx];
        switch (seg.kind) {
            case SegmentKind::ConstantVelocity:
                break;
            case SegmentKind::ConstantTurn: {
                const double c = std::cos(seg.turn_rate);
                const double sn = std::sin(seg.turn_rate);
                const double vx = c * s.vx - sn * s.vy;
                const double vy = sn * s.vx + c * s.vy;
                s.vx = vx;
                s.vy = vy;
                break;
            }
            case SegmentKind::LinearAccel:
                s.vx += seg.accel_x;
                s.vy += seg.accel_y;
                break;
            case SegmentKind::Stop:
                s.vx = 0.0;
                s.vy = 0.0;
                break;
        }
        cap_speed(s, sc.v_max);
        s.x += s.vx;
        s.y += s.vy;
        clamp_center(s.x, s.y, p.width, p.height, sc);
        track.push_back(s);
        ++used_in_seg;
    }
    return track;
}

bool occluded_at(const ObjectProgram& p, int frame) {
    for (const OcclusionWindow& w : p.occlusions) {
        if (frame >= w.start && frame < w.start + w.length) return true;
    }
    return false;
}

MotRow box_row(int frame, int id, double cx, double cy, double w, double h,
               double conf) {
    MotRow r;
    r.frame = frame;
    r.id = id;
    r.left = cx - w / 2.0;
    r.top = cy - h / 2.0;
    r.width = w;
    r.height = h;
    r.conf = conf;
    return r;
}

// Shared by presets: cut `total` frames into `parts` positive spans.
std::vector<int> split_durations(int total, int parts, Rng& rng, int min_len = 10) {
    if (parts * min_len > total) {
        parts = std::max(1, total / min_len);
    }
    std::vector<int> out(parts, min_len);
    int rest = total - parts * min_len;
    for (int i = 0; i < parts - 1 && rest > 0; ++i) {
        const int take = static_cast<int>(rng.below(static_cast<std::uint64_t>(rest) + 1));
        out[i] += take;
        rest -= take;
    }
    out[parts - 1] += rest;
    return out;
}

ObjectProgram base_object(Rng& rng, const MotionScenario& sc, double speed_lo,
                          double speed_hi) {
    ObjectProgram p;
    p.width = rng.uniform(18.0, 55.0);
    p.height = rng.uniform(30.0, 95.0);
    p.x0 = rng.uniform(0.12 * sc.extent_w, 0.88 * sc.extent_w);
    p.y0 = rng.uniform(0.12 * sc.extent_h, 0.88 * sc.extent_h);
    const double speed = rng.uniform(speed_lo, speed_hi);
    const double heading = rng.uniform(0.0, 2.0 * M_PI);
    p.vx0 = speed * std::cos(heading);
    p.vy0 = speed * std::sin(heading);
    return p;
}

MotionSegment cv_segment(int duration) {
    return MotionSegment{SegmentKind::ConstantVelocity, duration, 0.0, 0.0, 0.0};
}

MotionSegment turn_segment(int duration, Rng& rng, double max_deg) {
    const double deg = rng.uniform(5.0, max_deg) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    return MotionSegment{SegmentKind::ConstantTurn, duration, deg * M_PI / 180.0, 0.0,
                         0.0};
}

MotionSegment accel_segment(int duration, Rng& rng) {
    const double ax = rng.uniform(0.1, 0.45) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    const double ay = rng.uniform(0.1, 0.45) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    return MotionSegment{SegmentKind::LinearAccel, duration, 0.0, ax, ay};
}

OcclusionWindow random_gap(Rng& rng, int lo_frame, int hi_frame, int len_lo,
                           int len_hi, int frames) {
    int len = len_lo + static_cast<int>(rng.below(len_hi - len_lo + 1));
    const int span = std::max(1, hi_frame - lo_frame - len);
    int start = lo_frame + static_cast<int>(rng.below(span));
    start = std::clamp(start, 1, frames);
    len = std::min(len, frames + 1 - start);
    return OcclusionWindow{start, len};
}

}  // namespace

const char* segment_kind_name(SegmentKind kind) {
    switch (kind) {
        case SegmentKind::ConstantVelocity: return "constant-velocity";
        case SegmentKind::ConstantTurn: return "constant-turn";
        case SegmentKind::LinearAccel: return "linear-accel";
        case SegmentKind::Stop: return "stop";
    }
    return "unknown";
}

MotionScenario make_scenario_preset(const std::string& name, std::uint64_t seed,
                                    int frames, int objects) {
    MotionScenario sc;
    sc.name = name;
    sc.seed = seed;
    Rng rng = derive_stream(seed, "synth-programs");

    if (name == "linear") {
        sc.frames = frames > 0 ? frames : 120;
        const int n = objects > 0 ? objects : 6;
        sc.sigma_det = 1.2;
        sc.p_miss = 0.05;
        sc.fp_rate = 0.3;
        for (int i = 0; i < n; ++i) {
            ObjectProgram p = base_object(rng, sc, 2.0, 8.0);
            p.segments = {cv_segment(sc.frames)};
            sc.programs.push_back(std::move(p));
        }
    } else if (name == "turns") {
        sc.frames = frames > 0 ? frames : 120;
        const int n = objects > 0 ? objects : 6;
        sc.sigma_det = 1.2;
        sc.p_miss = 0.05;
        sc.fp_rate = 0.3;
        for (int i = 0; i < n; ++i) {
            ObjectProgram p = base_object(rng, sc, 3.0, 9.0);
            const auto durs = split_durations(sc.frames, 3, rng);
            if (i % 2 == 0) {
                p.segments = {cv_segment(durs[0]), turn_segment(durs[1], rng, 15.0),
                              cv_segment(durs[2])};
            } else {
                p.segments = {turn_segment(durs[0], rng, 15.0), cv_segment(durs[1]),
                              turn_segment(durs[2], rng, 15.0)};
            }
            sc.programs.push_back(std::move(p));
        }
    } else if (name == "occlusion") {
        sc.frames = frames > 0 ? frames : 140;
        const int n = objects > 0 ? objects : 5;
        sc.sigma_det = 1.0;
        sc.p_miss = 0.05;
        sc.fp_rate = 0.2;
        for (int i = 0; i < n; ++i) {
            ObjectProgram p = base_object(rng, sc, 2.0, 6.0);
            const auto durs = split_durations(sc.frames, 2, rng);
            p.segments = {cv_segment(durs[0]), turn_segment(durs[1], rng, 5.0)};
            const int mid = sc.frames / 2;
            p.occlusions.push_back(random_gap(rng, 15, mid - 5, 10, 20, sc.frames));
            p.occlusions.push_back(random_gap(rng, mid + 5, sc.frames - 25, 10, 20, sc.frames));
            sc.programs.push_back(std::move(p));
        }
    } else if (name == "crowd") {
        sc.frames = frames > 0 ? frames : 100;
        const int n = objects > 0 ? objects : 20;
        sc.sigma_det = 1.0;
        sc.p_miss = 0.08;
        sc.fp_rate = 0.8;
        for (int i = 0; i < n; ++i) {
            ObjectProgram p = base_object(rng, sc, 2.0, 6.0);
            // Aim every object roughly through the image center so paths cross.
            const double tx = sc.extent_w / 2.0 + rng.uniform(-80.0, 80.0);
            const double ty = sc.extent_h / 2.0 + rng.uniform(-60.0, 60.0);
            const double norm = std::hypot(tx - p.x0, ty - p.y0);
            const double speed = rng.uniform(2.0, 6.0);
            if (norm > 1e-9) {
                p.vx0 = speed * (tx - p.x0) / norm;
                p.vy0 = speed * (ty - p.y0) / norm;
            }
            p.segments = {cv_segment(sc.frames)};
            sc.programs.push_back(std::move(p));
        }
    } else if (name == "uav-mix") {
        sc.frames = frames > 0 ? frames : 160;
        const int n = objects > 0 ? objects : 10;
        sc.sigma_det = 1.2;
        sc.p_miss = 0.06;
        sc.fp_rate = 0.5;
        for (int i = 0; i < n; ++i) {
            ObjectProgram p = base_object(rng, sc, 3.0, 8.0);
            const auto durs = split_durations(sc.frames, 4, rng);
            // Object 0 pins the full kind coverage; the rest draw programs.
            if (i % 4 == 0) {
                p.segments = {cv_segment(durs[0]), turn_segment(durs[1], rng, 15.0),
                              MotionSegment{SegmentKind::Stop, durs[2], 0, 0, 0},
                              accel_segment(durs[3], rng)};
            } else {
                p.segments.push_back(cv_segment(durs[0]));
                p.segments.push_back(turn_segment(durs[1], rng, 12.0));
                p.segments.push_back(rng.uniform() < 0.5 ? accel_segment(durs[2], rng)
                                                         : cv_segment(durs[2]));
                p.segments.push_back(turn_segment(durs[3], rng, 12.0));
            }
            if (i % 3 == 1) {
                p.occlusions.push_back(
                    random_gap(rng, sc.frames / 3, 2 * sc.frames / 3, 10, 15, sc.frames));
            }
            sc.programs.push_back(std::move(p));
        }
    } else {
        throw DomainError("unknown scenario preset '" + name +
                          "' (valid: linear, turns, occlusion, crowd, uav-mix)");
    }
    return sc;
}

SyntheticSequence generate(const MotionScenario& sc) {
    validate(sc);

    SyntheticSequence seq;
    seq.scenario = sc;

    std::vector<std::vector<SimState>> tracks;
    tracks.reserve(sc.programs.size());
    for (const ObjectProgram& p : sc.programs) {
        tracks.push_back(integrate(p, sc));
    }

    Rng rng = derive_stream(sc.seed, "synth-detections");
    for (int f = 1; f <= sc.frames; ++f) {
        for (std::size_t i = 0; i < sc.programs.size(); ++i) {
            const ObjectProgram& p = sc.programs[i];
            if (occluded_at(p, f)) continue;
            const SimState& s = tracks[i][f - 1];
            const int id = static_cast<int>(i) + 1;
            seq.gt.push_back(box_row(f, id, s.x, s.y, p.width, p.height, 1.0));

            if (rng.uniform() < sc.p_miss) continue;
            double cx = s.x, cy = s.y, w = p.width, h = p.height;
            // sigma_det = 0 switches every box perturbation off so the
            // noise-free limit reproduces ground truth bit-exactly.
            if (sc.sigma_det > 0.0) {
                cx += rng.normal(0.0, sc.sigma_det);
                cy += rng.normal(0.0, sc.sigma_det);
                w *= std::max(0.05, 1.0 + kSizeNoiseRel * rng.normal());
                h *= std::max(0.05, 1.0 + kSizeNoiseRel * rng.normal());
                clamp_center(cx, cy, std::min(w, sc.extent_w),
                             std::min(h, sc.extent_h), sc);
            }
            const double conf = rng.uniform(kTrueConfLo, kTrueConfHi);
            seq.detections.push_back(box_row(f, -1, cx, cy, w, h, conf));
            seq.det_source.push_back(id);
        }
        const std::uint64_t fp_count = rng.poisson(sc.fp_rate);
        for (std::uint64_t k = 0; k < fp_count; ++k) {
            const double w = rng.uniform(12.0, 60.0);
            const double h = rng.uniform(20.0, 110.0);
            double cx = rng.uniform(w / 2.0, sc.extent_w - w / 2.0);
            double cy = rng.uniform(h / 2.0, sc.extent_h - h / 2.0);
            const double conf = rng.uniform(kFpConfLo, kFpConfHi);
            seq.detections.push_back(box_row(f, -1, cx, cy, w, h, conf));
            seq.det_source.push_back(-1);
        }
    }
    return seq;
}

std::string scenario_to_json(const MotionScenario& sc) {
    nlohmann::json j;
    j["name"] = sc.name;
    j["frames"] = sc.frames;
    j["extent"] = {sc.extent_w, sc.extent_h};
    j["sigma_det"] = sc.sigma_det;
    j["p_miss"] = sc.p_miss;
    j["fp_rate"] = sc.fp_rate;
    j["v_max"] = sc.v_max;
    j["seed"] = sc.seed;
    j["objects"] = nlohmann::json::array();
    for (const ObjectProgram& p : sc.programs) {
        nlohmann::json o;
        o["start"] = {p.x0, p.y0};
        o["velocity"] = {p.vx0, p.vy0};
        o["size"] = {p.width, p.height};
        o["segments"] = nlohmann::json::array();
        for (const MotionSegment& s : p.segments) {
            nlohmann::json e;
            e["kind"] = segment_kind_name(s.kind);
            e["duration"] = s.duration;
            if (s.kind == SegmentKind::ConstantTurn) e["turn_rate"] = s.turn_rate;
            if (s.kind == SegmentKind::LinearAccel) e["accel"] = {s.accel_x, s.accel_y};
            o["segments"].push_back(e);
        }
        o["occlusions"] = nlohmann::json::array();
        for (const OcclusionWindow& w : p.occlusions) {
            o["occlusions"].push_back({{"start", w.start}, {"length", w.length}});
        }
        j["objects"].push_back(o);
    }
    return j.dump(2) + "\n";
}

void export_sequence(const SyntheticSequence& seq, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw DataError(dir + ": cannot create directory: " + ec.message());
    }
    const std::filesystem::path base(dir);
    write_gt_file((base / "gt.txt").string(), seq.gt);
    write_det_file((base / "det.txt").string(), seq.detections);

    const std::string json_path = (base / "scenario.json").string();
    std::ofstream out(json_path);
    if (!out) {
        throw DataError(json_path + ": cannot open for writing");
    }
    out << scenario_to_json(seq.scenario);
    if (!out.good()) {
        throw DataError(json_path + ": write failed");
    }
}

}  // namespace dmtrack
