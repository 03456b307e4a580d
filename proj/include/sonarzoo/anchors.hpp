#pragma once

#include <map>
#include <string>
#include <vector>

// Reference-value manifest. Every published number the tests compare against
// lives in one JSON file with its source, tolerance, and gating; tests look
// values up by id instead of repeating literals.
namespace sonarzoo {

struct Anchor {
    std::string id;
    double value = 0.0;
    double tolerance = 0.0; // interpreted per `relative`
    bool relative = false;  // true: |measured-value| <= tolerance*|value|
    std::string source;
    std::string gating; // "always" | "soft" | "dataset"
    std::vector<double> series; // optional list payload (curve rows etc.)
};

struct AnchorSet {
    std::map<std::string, Anchor> by_id;

    const Anchor& require(const std::string& id) const;
    bool has(const std::string& id) const { return by_id.count(id) != 0; }
};

AnchorSet load_anchors(const std::string& path);

struct AnchorCheck {
    std::string id;
    double measured = 0.0;
    double expected = 0.0;
    double tolerance = 0.0;
    bool relative = false;
    bool pass = false;
    bool skipped = false;
    std::string note;
};

AnchorCheck check_anchor(const Anchor& a, double measured);
std::string render_anchor_report(const std::vector<AnchorCheck>& checks);
std::string render_anchor_report_json(const std::vector<AnchorCheck>& checks);

} // namespace sonarzoo
