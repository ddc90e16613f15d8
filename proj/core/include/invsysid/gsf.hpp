#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace invsysid {

enum class GsfKind { volt_var, volt_watt, freq_watt };

GsfKind gsf_kind_from_string(const std::string& name);
std::string to_string(GsfKind kind);

/// Piecewise-linear grid-support characteristic: setpoints at strictly
/// increasing per-unit breakpoints. x is p.u., y is physical (kVA or kW).
struct GsfCurve {
    GsfKind kind = GsfKind::volt_var;
    std::vector<double> x_breaks;
    std::vector<double> y_values;
    double y_rating = 0.0;  // nameplate magnitude for normalization

    double span_lo() const { return x_breaks.front(); }
    double span_hi() const { return x_breaks.back(); }

    /// Linear interpolation between adjacent breakpoints, exact at breakpoints.
    /// x outside the span is clamped; *clamped is set when provided.
    double setpoint(double x, bool* clamped = nullptr) const;

    /// Setpoint divided by y_rating (cross-inverter comparison).
    double setpoint_normalized(double x, bool* clamped = nullptr) const;

    void validate() const;
};

struct Range {
    std::string label;  // r_kj, e.g. "r24"
    double lo = 0.0;
    double hi = 0.0;
};

struct Region {
    std::string label;  // e.g. "R2"
    double lo = 0.0;
    double hi = 0.0;
    bool active = true;  // false in deadbands where the GSF is deactivated
    std::vector<Range> ranges;
};

/// n contiguous equal-width subintervals of [lo, hi], labeled r<k><1..n>.
std::vector<Range> uniform_ranges(const std::string& region_label, double lo, double hi,
                                  std::size_t n);

/// Ordered regions tiling a span, each tiled by ranges. Interval membership is
/// closed-left/open-right; the last interval is closed on both ends.
struct RegionScheme {
    std::vector<Region> regions;

    double span_lo() const { return regions.front().lo; }
    double span_hi() const { return regions.back().hi; }

    struct Location {
        std::size_t region = 0;
        std::size_t range = 0;
        std::string region_label;
        std::string range_label;
    };

    /// Throws classification_error carrying the nearest region when x is
    /// outside the span.
    Location classify(double x) const;

    void validate() const;
};

/// Scheme with regions delimited by consecutive breakpoints; region k is split
/// into range_counts[k] equal ranges and flagged active per `active`.
RegionScheme scheme_from_breaks(const std::vector<double>& breaks,
                                const std::vector<std::size_t>& range_counts,
                                const std::vector<bool>& active);

/// Curve fixture plus the per-region partition used in the experiments.
struct GsfFixture {
    GsfCurve curve;
    std::vector<std::size_t> range_counts;  // one entry per region
    std::vector<bool> active;               // one entry per region
    RegionScheme scheme() const;
};

/// Built-in fixtures: "fsi_voltvar", "sma_voltwatt", "sma_freqwatt",
/// "sim1p_voltvar". Throws domain_error for unknown names.
GsfFixture builtin_fixture(const std::string& name);
std::vector<std::string> builtin_fixture_names();

GsfFixture load_gsf_file(const std::string& path);
void save_gsf_file(const GsfFixture& fixture, const std::string& path);

}  // namespace invsysid
