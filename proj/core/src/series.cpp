#include "invsysid/series.hpp"

#include <algorithm>
#include <cmath>

#include "invsysid/errors.hpp"

namespace invsysid {

bool SampledSeries::has(std::string_view name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
}

const std::vector<double>& SampledSeries::channel(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return columns[i];
    }
    throw param_error("no channel named '" + std::string(name) + "'");
}

std::vector<double>& SampledSeries::channel(std::string_view name) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return columns[i];
    }
    throw param_error("no channel named '" + std::string(name) + "'");
}

std::vector<double>& SampledSeries::add(std::string name, std::string unit) {
    if (has(name)) throw param_error("duplicate channel '" + name + "'");
    names.push_back(std::move(name));
    units.push_back(std::move(unit));
    columns.emplace_back();
    return columns.back();
}

void SampledSeries::validate() const {
    if (dt <= 0) throw param_error("series dt must be positive");
    if (names.size() != columns.size() || units.size() != columns.size())
        throw param_error("channel name/unit/column counts disagree");
    const std::size_t n = size();
    for (const auto& c : columns) {
        if (c.size() != n) throw param_error("channels have unequal lengths");
    }
    if (has("time")) {
        const auto& t = channel("time");
        for (std::size_t k = 0; k < t.size(); ++k) {
            if (std::abs(t[k] - time_at(k)) > 1e-9)
                throw param_error("time channel deviates from t0 + k*dt at sample " +
                                  std::to_string(k));
        }
    }
}

}  // namespace invsysid
