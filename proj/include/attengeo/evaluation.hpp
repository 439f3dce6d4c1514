#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "attengeo/detection.hpp"

// IoU over continuous pixel areas, the accu@t hit-rate metric, and report
// emission (machine-readable JSON plus an aligned text table).

namespace attengeo {

// Boxes are center-format; converted to corner extents internally.
// IoU exactly equal to the threshold counts as a hit downstream.
inline double iou(const BBox& a, const BBox& b) {
    if (!(a.w > 0 && a.h > 0 && b.w > 0 && b.h > 0)) {
        throw std::invalid_argument("iou: boxes must have positive extents");
    }
    const double ax0 = a.x - a.w / 2, ax1 = a.x + a.w / 2;
    const double ay0 = a.y - a.h / 2, ay1 = a.y + a.h / 2;
    const double bx0 = b.x - b.w / 2, bx1 = b.x + b.w / 2;
    const double by0 = b.y - b.h / 2, by1 = b.y + b.h / 2;

    const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    const double inter = iw * ih;
    // areas from the same corner expressions as the intersection, so that
    // iou(a, a) is exactly 1
    const double area_a = (ax1 - ax0) * (ay1 - ay0);
    const double area_b = (bx1 - bx0) * (by1 - by0);
    return inter / (area_a + area_b - inter);
}

struct SampleRecord {
    std::string id;
    double iou = 0;
    bool hit_025 = false;
    bool hit_05 = false;
};

struct EvalReport {
    std::vector<SampleRecord> records;
    double accu_025 = 0;
    double accu_05 = 0;

    std::size_t n() const { return records.size(); }
};

inline double accu_at(const std::vector<SampleRecord>& records, double t) {
    if (records.empty()) throw std::invalid_argument("accu_at: empty record set");
    if (!(t > 0 && t < 1)) throw std::invalid_argument("accu_at: threshold must lie in (0, 1)");
    std::size_t hits = 0;
    for (const auto& r : records) {
        if (r.iou >= t) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

inline EvalReport make_report(std::vector<SampleRecord> records) {
    EvalReport rep;
    for (auto& r : records) {
        r.hit_025 = r.iou >= 0.25;
        r.hit_05 = r.iou >= 0.5;
    }
    rep.records = std::move(records);
    rep.accu_025 = accu_at(rep.records, 0.25);
    rep.accu_05 = accu_at(rep.records, 0.5);
    return rep;
}

// Fraction -> percentage string with two decimals, rounding half up
// (0.4615 renders as "46.15").
inline std::string format_percent(double fraction) {
    const long long cents = std::llround(fraction * 100.0 * 100.0);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld.%02lld", cents / 100, std::llabs(cents % 100));
    return buf;
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
    nlohmann::json j;
    j["n"] = rep.n();
    j["accu_025"] = rep.accu_025;
    j["accu_05"] = rep.accu_05;
    j["samples"] = nlohmann::json::array();
    for (const auto& r : rep.records) {
        j["samples"].push_back({{"id", r.id}, {"iou", r.iou}, {"hit_025", r.hit_025}, {"hit_05", r.hit_05}});
    }
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport rep;
    for (const auto& s : j.at("samples")) {
        SampleRecord r;
        r.id = s.at("id").get<std::string>();
        r.iou = s.at("iou").get<double>();
        r.hit_025 = s.at("hit_025").get<bool>();
        r.hit_05 = s.at("hit_05").get<bool>();
        rep.records.push_back(std::move(r));
    }
    rep.accu_025 = j.at("accu_025").get<double>();
    rep.accu_05 = j.at("accu_05").get<double>();
    return rep;
}

inline std::string render_report_table(const EvalReport& rep) {
    std::string out;
    out += "metric        value\n";
    out += "n             " + std::to_string(rep.n()) + "\n";
    out += "accu@0.25(%)  " + format_percent(rep.accu_025) + "\n";
    out += "accu@0.5(%)   " + format_percent(rep.accu_05) + "\n";
    return out;
}

// Writes <path>.json and <path>.txt.
inline void write_report(const EvalReport& rep, const std::string& path_stem) {
    {
        std::ofstream js(path_stem + ".json");
        if (!js) throw std::runtime_error("write_report: cannot write " + path_stem + ".json");
        js << report_to_json(rep).dump(2) << "\n";
    }
    std::ofstream txt(path_stem + ".txt");
    if (!txt) throw std::runtime_error("write_report: cannot write " + path_stem + ".txt");
    txt << render_report_table(rep);
}

} // namespace attengeo
