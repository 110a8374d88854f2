#include "dmtrack/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <vector>

#include "dmtrack/association.hpp"

namespace dmtrack {

namespace {

Corners row_corners(const MotRow& r) {
    return Corners{r.left, r.top, r.left + r.width, r.top + r.height};
}

}  // namespace

FrameMatching match_frames(const MotSequence& gt, const MotSequence& results,
                           double iou_threshold) {
    const auto gt_frames = group_by_frame(gt);
    const auto res_frames = group_by_frame(results);

    std::set<int> frames;
    for (const auto& [f, _] : gt_frames) frames.insert(f);
    for (const auto& [f, _] : res_frames) frames.insert(f);

    FrameMatching out;
    out.gt_total = static_cast<long>(gt.size());
    std::map<int, int> last_corr;  // gt id -> last matched track id

    static const std::vector<MotRow> kEmpty;
    for (int f : frames) {
        const auto git = gt_frames.find(f);
        const auto rit = res_frames.find(f);
        const std::vector<MotRow>& g = git == gt_frames.end() ? kEmpty : git->second;
        const std::vector<MotRow>& r = rit == res_frames.end() ? kEmpty : rit->second;

        std::vector<std::vector<double>> overlap(g.size(), std::vector<double>(r.size(), 0.0));
        for (std::size_t i = 0; i < g.size(); ++i) {
            for (std::size_t j = 0; j < r.size(); ++j) {
                overlap[i][j] = iou(row_corners(g[i]), row_corners(r[j]));
            }
        }

        std::vector<bool> g_done(g.size(), false), r_done(r.size(), false);
        std::vector<std::pair<std::size_t, std::size_t>> matched;

        // Greedy persistence of the previous correspondences.
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto it = last_corr.find(g[i].id);
            if (it == last_corr.end()) continue;
            for (std::size_t j = 0; j < r.size(); ++j) {
                if (!r_done[j] && r[j].id == it->second && overlap[i][j] >= iou_threshold) {
                    g_done[i] = true;
                    r_done[j] = true;
                    matched.emplace_back(i, j);
                    break;
                }
            }
        }

        // Optimal assignment on what remains, maximizing IoU.
        std::vector<std::size_t> g_rest, r_rest;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!g_done[i]) g_rest.push_back(i);
        for (std::size_t j = 0; j < r.size(); ++j)
            if (!r_done[j]) r_rest.push_back(j);
        if (!g_rest.empty() && !r_rest.empty()) {
            ScoreMatrix m(g_rest.size(), r_rest.size());
            for (std::size_t a = 0; a < g_rest.size(); ++a) {
                for (std::size_t b = 0; b < r_rest.size(); ++b) {
                    const double v = overlap[g_rest[a]][r_rest[b]];
                    m.iou_at(a, b) = v;
                    // +1 shift makes every extra match dominate any IoU trade,
                    // so cardinality is maximized first (CLEAR convention),
                    // total IoU second.
                    if (v >= iou_threshold) m.score_at(a, b) = 1.0 + v;
                }
            }
            for (auto [a, b] : solve_assignment(m).matches) {
                matched.emplace_back(g_rest[a], r_rest[b]);
            }
        }

        out.tp += static_cast<long>(matched.size());
        out.fn += static_cast<long>(g.size() - matched.size());
        out.fp += static_cast<long>(r.size() - matched.size());

        std::sort(matched.begin(), matched.end());
        for (auto [i, j] : matched) {
            const auto it = last_corr.find(g[i].id);
            if (it != last_corr.end() && it->second != r[j].id) ++out.idsw;
            last_corr[g[i].id] = r[j].id;
        }
    }
    return out;
}

double mota(const FrameMatching& m) {
    if (m.gt_total == 0) {
        throw DomainError("mota: undefined for zero ground-truth boxes");
    }
    return 1.0 - static_cast<double>(m.fn + m.fp + m.idsw) / static_cast<double>(m.gt_total);
}

double idf1(const MotSequence& gt, const MotSequence& results, double iou_threshold) {
    if (gt.empty()) {
        throw DomainError("idf1: undefined for zero ground-truth boxes");
    }

    // Whole-sequence frame-overlap counts per (gt id, track id) pair.
    std::map<int, long> gt_len, res_len;
    std::map<std::pair<int, int>, long> pair_overlap;
    const auto gt_frames = group_by_frame(gt);
    const auto res_frames = group_by_frame(results);
    for (const MotRow& r : gt) ++gt_len[r.id];
    for (const MotRow& r : results) ++res_len[r.id];
    for (const auto& [f, g] : gt_frames) {
        const auto rit = res_frames.find(f);
        if (rit == res_frames.end()) continue;
        for (const MotRow& a : g) {
            for (const MotRow& b : rit->second) {
                if (iou(row_corners(a), row_corners(b)) >= iou_threshold) {
                    ++pair_overlap[{a.id, b.id}];
                }
            }
        }
    }

    std::vector<int> gt_ids, res_ids;
    for (const auto& [id, _] : gt_len) gt_ids.push_back(id);
    for (const auto& [id, _] : res_len) res_ids.push_back(id);

    long idtp = 0;
    if (!res_ids.empty()) {
        ScoreMatrix m(gt_ids.size(), res_ids.size());
        for (std::size_t i = 0; i < gt_ids.size(); ++i) {
            for (std::size_t j = 0; j < res_ids.size(); ++j) {
                const auto it = pair_overlap.find({gt_ids[i], res_ids[j]});
                if (it != pair_overlap.end() && it->second > 0) {
                    m.score_at(i, j) = static_cast<double>(it->second);
                    m.iou_at(i, j) = 1.0;
                }
            }
        }
        for (auto [i, j] : solve_assignment(m).matches) {
            idtp += pair_overlap.at({gt_ids[i], res_ids[j]});
        }
    }

    const long idfn = static_cast<long>(gt.size()) - idtp;
    const long idfp = static_cast<long>(results.size()) - idtp;
    return 2.0 * static_cast<double>(idtp) /
           static_cast<double>(2 * idtp + idfp + idfn);
}

MotSummary evaluate(const MotSequence& gt, const MotSequence& results, double iou_threshold) {
    const FrameMatching m = match_frames(gt, results, iou_threshold);
    MotSummary s;
    s.mota = mota(m);
    s.idf1 = idf1(gt, results, iou_threshold);
    s.idsw = m.idsw;
    s.fp = m.fp;
    s.fn = m.fn;
    s.tp = m.tp;
    s.gt_total = m.gt_total;
    return s;
}

std::string format_summary_table(const MotSummary& s) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%-8s %-8s %6s %6s %6s %6s %8s\n"
                  "%-8.4f %-8.4f %6ld %6ld %6ld %6ld %8ld\n",
                  "MOTA", "IDF1", "TP", "FP", "FN", "IDSW", "GT", s.mota, s.idf1, s.tp, s.fp,
                  s.fn, s.idsw, s.gt_total);
    return buf;
}

std::string format_summary_csv(const MotSummary& s) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "mota,idf1,tp,fp,fn,idsw,gt\n%.6f,%.6f,%ld,%ld,%ld,%ld,%ld\n",
                  s.mota, s.idf1, s.tp, s.fp, s.fn, s.idsw, s.gt_total);
    return buf;
}

}  // namespace dmtrack
