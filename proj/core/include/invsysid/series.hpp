#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace invsysid {

/// Uniformly sampled multi-channel time series. All channels share the same
/// length and sample period; a channel named "time" holds t0 + k*dt.
/// Columns live in a deque so references returned by add()/channel() stay
/// valid while more channels are appended.
struct SampledSeries {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<std::string> names;
    std::vector<std::string> units;  // one tag per channel ("s", "p.u.", "A", ...)
    std::deque<std::vector<double>> columns;
    std::map<std::string, double> meta;  // result annotations (clamp counts, flags)

    std::size_t size() const { return columns.empty() ? 0 : columns.front().size(); }
    bool has(std::string_view name) const;

    /// Throws param_error if the channel does not exist.
    const std::vector<double>& channel(std::string_view name) const;
    std::vector<double>& channel(std::string_view name);

    /// Appends an empty channel and returns it for filling.
    std::vector<double>& add(std::string name, std::string unit = "");

    double time_at(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }

    /// Verifies equal channel lengths, dt > 0, and the time-channel law.
    void validate() const;
};

}  // namespace invsysid
