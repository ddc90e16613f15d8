#include "invsysid/gsf.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "invsysid/errors.hpp"

namespace invsysid {

GsfKind gsf_kind_from_string(const std::string& name) {
    if (name == "volt_var" || name == "volt-var") return GsfKind::volt_var;
    if (name == "volt_watt" || name == "volt-watt") return GsfKind::volt_watt;
    if (name == "freq_watt" || name == "freq-watt") return GsfKind::freq_watt;
    throw param_error("unknown GSF kind '" + name + "'");
}

std::string to_string(GsfKind kind) {
    switch (kind) {
        case GsfKind::volt_var: return "volt_var";
        case GsfKind::volt_watt: return "volt_watt";
        case GsfKind::freq_watt: return "freq_watt";
    }
    return "?";
}

void GsfCurve::validate() const {
    if (x_breaks.empty()) throw param_error("GSF curve has no breakpoints");
    if (x_breaks.size() != y_values.size())
        throw param_error("GSF curve: breakpoint/setpoint counts differ");
    if (x_breaks.size() < 2) throw param_error("GSF curve needs at least two breakpoints");
    for (std::size_t i = 1; i < x_breaks.size(); ++i) {
        if (!(x_breaks[i] > x_breaks[i - 1]))
            throw param_error("GSF curve breakpoints must be strictly increasing");
    }
    if (kind == GsfKind::volt_var) {
        for (std::size_t i = 1; i < y_values.size(); ++i) {
            if (y_values[i] > y_values[i - 1] + 1e-12)
                throw param_error("Volt-VAr setpoints must be non-increasing in voltage");
        }
    }
}

double GsfCurve::setpoint(double x, bool* clamped) const {
    validate();
    if (clamped) *clamped = false;
    if (x <= x_breaks.front()) {
        if (clamped && x < x_breaks.front()) *clamped = true;
        return y_values.front();
    }
    if (x >= x_breaks.back()) {
        if (clamped && x > x_breaks.back()) *clamped = true;
        return y_values.back();
    }
    const auto it = std::upper_bound(x_breaks.begin(), x_breaks.end(), x);
    const auto i = static_cast<std::size_t>(it - x_breaks.begin());
    const double w = (x - x_breaks[i - 1]) / (x_breaks[i] - x_breaks[i - 1]);
    return y_values[i - 1] + w * (y_values[i] - y_values[i - 1]);
}

double GsfCurve::setpoint_normalized(double x, bool* clamped) const {
    if (y_rating == 0.0) throw param_error("GSF curve has no rating for normalization");
    return setpoint(x, clamped) / y_rating;
}

std::vector<Range> uniform_ranges(const std::string& region_label, double lo, double hi,
                                  std::size_t n) {
    if (n == 0) throw param_error("uniform_ranges: n must be >= 1");
    if (!(hi > lo)) throw param_error("uniform_ranges: empty interval");
    std::string stem = region_label;
    if (!stem.empty() && (stem.front() == 'R' || stem.front() == 'r')) stem.erase(0, 1);
    std::vector<Range> out;
    out.reserve(n);
    const double width = (hi - lo) / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
        Range r;
        r.label = "r" + stem + (n > 9 ? "-" : "") + std::to_string(j + 1);
        r.lo = j == 0 ? lo : lo + static_cast<double>(j) * width;
        r.hi = j + 1 == n ? hi : lo + static_cast<double>(j + 1) * width;
        out.push_back(std::move(r));
    }
    return out;
}

void RegionScheme::validate() const {
    if (regions.empty()) throw param_error("region scheme is empty");
    for (std::size_t i = 0; i < regions.size(); ++i) {
        const auto& reg = regions[i];
        if (!(reg.hi > reg.lo))
            throw param_error("region " + reg.label + " is empty or inverted");
        if (i > 0 && regions[i - 1].hi != reg.lo)
            throw param_error("regions do not tile the span (gap or overlap at " +
                              reg.label + ")");
        if (!reg.ranges.empty()) {
            if (reg.ranges.front().lo != reg.lo || reg.ranges.back().hi != reg.hi)
                throw param_error("ranges do not tile region " + reg.label);
            for (std::size_t j = 1; j < reg.ranges.size(); ++j) {
                if (reg.ranges[j - 1].hi != reg.ranges[j].lo)
                    throw param_error("ranges do not tile region " + reg.label);
            }
        }
    }
}

RegionScheme::Location RegionScheme::classify(double x) const {
    if (regions.empty()) throw param_error("region scheme is empty");
    if (x < span_lo())
        throw classification_error("operating point below scheme span", regions.front().label);
    if (x > span_hi())
        throw classification_error("operating point above scheme span", regions.back().label);

    // Closed-left/open-right; the last interval also owns its right endpoint.
    std::size_t ri = regions.size() - 1;
    for (std::size_t i = 0; i + 1 < regions.size(); ++i) {
        if (x < regions[i].hi) {
            ri = i;
            break;
        }
    }
    const auto& reg = regions[ri];

    Location loc;
    loc.region = ri;
    loc.region_label = reg.label;
    if (reg.ranges.empty()) {
        loc.range = 0;
        loc.range_label = reg.label;
        return loc;
    }
    std::size_t rj = reg.ranges.size() - 1;
    for (std::size_t j = 0; j + 1 < reg.ranges.size(); ++j) {
        if (x < reg.ranges[j].hi) {
            rj = j;
            break;
        }
    }
    loc.range = rj;
    loc.range_label = reg.ranges[rj].label;
    return loc;
}

RegionScheme scheme_from_breaks(const std::vector<double>& breaks,
                                const std::vector<std::size_t>& range_counts,
                                const std::vector<bool>& active) {
    if (breaks.size() < 2) throw param_error("scheme needs at least two breakpoints");
    const std::size_t n_regions = breaks.size() - 1;
    if (!range_counts.empty() && range_counts.size() != n_regions)
        throw param_error("range_counts size must match region count");
    if (!active.empty() && active.size() != n_regions)
        throw param_error("active flags size must match region count");

    RegionScheme scheme;
    scheme.regions.reserve(n_regions);
    for (std::size_t i = 0; i < n_regions; ++i) {
        Region reg;
        reg.label = "R" + std::to_string(i + 1);
        reg.lo = breaks[i];
        reg.hi = breaks[i + 1];
        reg.active = active.empty() ? true : active[i];
        const std::size_t count = range_counts.empty() ? 1 : range_counts[i];
        reg.ranges = uniform_ranges(reg.label, reg.lo, reg.hi, count);
        scheme.regions.push_back(std::move(reg));
    }
    scheme.validate();
    return scheme;
}

RegionScheme GsfFixture::scheme() const {
    return scheme_from_breaks(curve.x_breaks, range_counts, active);
}

namespace {

GsfFixture make_fixture(GsfKind kind, std::vector<double> x, std::vector<double> y,
                        double rating, std::vector<std::size_t> counts,
                        std::vector<bool> active) {
    GsfFixture f;
    f.curve.kind = kind;
    f.curve.x_breaks = std::move(x);
    f.curve.y_values = std::move(y);
    f.curve.y_rating = rating;
    f.range_counts = std::move(counts);
    f.active = std::move(active);
    f.curve.validate();
    return f;
}

}  // namespace

GsfFixture builtin_fixture(const std::string& name) {
    if (name == "fsi_voltvar") {
        // 10 kW Fronius Symo, Volt-VAr: Q ramps 3.3 kVA -> 0 over the first
        // interval, holds zero across the inner breakpoints, then 0 -> -3.3 kVA
        // over the last. Region R3 is the deactivated deadband.
        return make_fixture(GsfKind::volt_var, {0.88, 0.92, 0.98, 1.02, 1.08, 1.10},
                            {3.3, 0.0, 0.0, 0.0, 0.0, -3.3}, 3.3, {3, 7, 3, 5, 2},
                            {true, true, false, true, true});
    }
    if (name == "sma_voltwatt") {
        // 5 kW SMA, Volt-Watt: P1 = 3 kW, P2 = 0 kW (curtail 1.045 -> 1.085 p.u.).
        return make_fixture(GsfKind::volt_watt, {1.00, 1.045, 1.085, 1.095},
                            {3.0, 3.0, 0.0, 0.0}, 5.0, {5, 7, 2}, {true, true, false});
    }
    if (name == "sma_freqwatt") {
        // 5 kW SMA, Freq-Watt: curtail between F1 = 1.0083 and F2 = 1.033 p.u.;
        // no active-power response in R1 and R3.
        return make_fixture(GsfKind::freq_watt, {1.00, 1.0083, 1.033, 1.037},
                            {3.0, 3.0, 0.0, 0.0}, 5.0, {7, 10, 2}, {false, true, false});
    }
    if (name == "sim1p_voltvar") {
        // Simulated 1-phase PEC, Volt-VAr at +/-6.25 over the same breakpoints.
        return make_fixture(GsfKind::volt_var, {0.88, 0.92, 0.98, 1.02, 1.08, 1.10},
                            {6.25, 0.0, 0.0, 0.0, 0.0, -6.25}, 6.25, {1, 1, 1, 1, 1},
                            {true, true, false, true, true});
    }
    throw domain_error("unknown GSF fixture '" + name + "'");
}

std::vector<std::string> builtin_fixture_names() {
    return {"fsi_voltvar", "sma_voltwatt", "sma_freqwatt", "sim1p_voltvar"};
}

GsfFixture load_gsf_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open GSF curve file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("malformed GSF curve file '" + path + "': " + e.what());
    }
    GsfFixture f;
    try {
        f.curve.kind = gsf_kind_from_string(j.at("kind").get<std::string>());
        f.curve.x_breaks = j.at("x_breaks").get<std::vector<double>>();
        f.curve.y_values = j.at("y_values").get<std::vector<double>>();
        f.curve.y_rating = j.at("y_rating").get<double>();
        if (j.contains("range_counts"))
            f.range_counts = j["range_counts"].get<std::vector<std::size_t>>();
        if (j.contains("active")) f.active = j["active"].get<std::vector<bool>>();
    } catch (const nlohmann::json::exception& e) {
        throw data_error("GSF curve file '" + path + "' missing field: " + e.what());
    }
    f.curve.validate();
    return f;
}

void save_gsf_file(const GsfFixture& fixture, const std::string& path) {
    nlohmann::json j;
    j["kind"] = to_string(fixture.curve.kind);
    j["x_breaks"] = fixture.curve.x_breaks;
    j["y_values"] = fixture.curve.y_values;
    j["y_rating"] = fixture.curve.y_rating;
    if (!fixture.range_counts.empty()) j["range_counts"] = fixture.range_counts;
    if (!fixture.active.empty()) {
        j["active"] = fixture.active;
    }
    std::ofstream out(path);
    if (!out) throw data_error("cannot write GSF curve file '" + path + "'");
    out << j.dump(2) << "\n";
}

}  // namespace invsysid
