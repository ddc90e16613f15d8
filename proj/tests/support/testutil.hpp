#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "invsysid/series.hpp"

namespace testutil {

/// Instantaneous frequency from the spacing of successive rising zero
/// crossings of (x - center) near sample index k.
inline double zero_crossing_frequency(std::span<const double> x, double center,
                                      double dt, std::size_t from, std::size_t to) {
    std::vector<double> crossings;
    for (std::size_t k = from + 1; k < to && k < x.size(); ++k) {
        const double a = x[k - 1] - center;
        const double b = x[k] - center;
        if (a < 0.0 && b >= 0.0) {
            const double frac = a == b ? 0.0 : -a / (b - a);
            crossings.push_back((static_cast<double>(k - 1) + frac) * dt);
        }
    }
    if (crossings.size() < 2) return 0.0;
    const double span = crossings.back() - crossings.front();
    return span > 0 ? static_cast<double>(crossings.size() - 1) / span : 0.0;
}

/// Magnitude of the DFT of x evaluated at frequency f (Goertzel-style direct
/// sum); good enough to locate spectral peaks in tests.
inline double dft_magnitude(std::span<const double> x, double dt, double f) {
    double re = 0.0, im = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double phi = 2.0 * std::numbers::pi * f * static_cast<double>(k) * dt;
        re += x[k] * std::cos(phi);
        im -= x[k] * std::sin(phi);
    }
    return std::hypot(re, im);
}

/// Frequency of the largest DFT magnitude over a uniform grid [f_lo, f_hi].
inline double dft_peak_frequency(std::span<const double> x, double dt, double f_lo,
                                 double f_hi, double f_step) {
    double best_f = f_lo, best_m = -1.0;
    for (double f = f_lo; f <= f_hi + 1e-12; f += f_step) {
        const double m = dft_magnitude(x, dt, f);
        if (m > best_m) {
            best_m = m;
            best_f = f;
        }
    }
    return best_f;
}

inline double mean(std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m += v;
    return x.empty() ? 0.0 : m / static_cast<double>(x.size());
}

inline double rms(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

/// Deterministic uniform double in [lo, hi) for hand-rolled property tests.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform(double lo, double hi) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    }
    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace testutil
