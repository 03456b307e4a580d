#include "sonarzoo/anchors.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "sonarzoo/errors.hpp"

namespace sonarzoo {

const Anchor& AnchorSet::require(const std::string& id) const {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ConfigError("no reference value named " + id);
    return it->second;
}

AnchorSet load_anchors(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad reference manifest " + path + ": " + e.what());
    }

    AnchorSet set;
    for (const auto& row : j.at("anchors")) {
        Anchor a;
        a.id = row.at("id").get<std::string>();
        a.value = row.value("value", 0.0);
        a.tolerance = row.at("tolerance").get<double>();
        a.relative = row.at("relative").get<bool>();
        a.source = row.at("source").get<std::string>();
        a.gating = row.at("gating").get<std::string>();
        if (a.gating != "always" && a.gating != "soft" && a.gating != "dataset")
            throw ConfigError("anchor " + a.id + " has unknown gating " + a.gating);
        if (row.contains("series")) a.series = row.at("series").get<std::vector<double>>();
        if (!set.by_id.emplace(a.id, a).second)
            throw ConfigError("duplicate anchor id " + a.id + " in " + path);
    }
    if (set.by_id.empty()) throw ConfigError("reference manifest " + path + " is empty");
    return set;
}

AnchorCheck check_anchor(const Anchor& a, double measured) {
    AnchorCheck c;
    c.id = a.id;
    c.measured = measured;
    c.expected = a.value;
    c.tolerance = a.tolerance;
    c.relative = a.relative;
    const double band = a.relative ? a.tolerance * std::abs(a.value) : a.tolerance;
    c.pass = std::isfinite(measured) && std::abs(measured - a.value) <= band;
    return c;
}

std::string render_anchor_report(const std::vector<AnchorCheck>& checks) {
    std::string out;
    for (const auto& c : checks) {
        char line[256];
        const char* status = c.skipped ? "SKIP" : (c.pass ? "PASS" : "FAIL");
        if (c.relative)
            std::snprintf(line, sizeof line, "%-4s %-44s measured %.6g expected %.6g (+/-%.3g%%)",
                          status, c.id.c_str(), c.measured, c.expected, c.tolerance * 100.0);
        else
            std::snprintf(line, sizeof line, "%-4s %-44s measured %.6g expected %.6g (+/-%.3g)",
                          status, c.id.c_str(), c.measured, c.expected, c.tolerance);
        out += line;
        if (!c.note.empty()) out += "  [" + c.note + "]";
        out += "\n";
    }
    return out;
}

std::string render_anchor_report_json(const std::vector<AnchorCheck>& checks) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) {
        nlohmann::json j;
        j["id"] = c.id;
        j["measured"] = c.measured;
        j["expected"] = c.expected;
        j["tolerance"] = c.tolerance;
        j["relative"] = c.relative;
        j["status"] = c.skipped ? "skip" : (c.pass ? "pass" : "fail");
        if (!c.note.empty()) j["note"] = c.note;
        arr.push_back(std::move(j));
    }
    return nlohmann::json{{"checks", arr}}.dump(2) + "\n";
}

} // namespace sonarzoo
