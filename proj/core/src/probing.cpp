#include "invsysid/probing.hpp"

#include <cmath>
#include <numbers>

#include "invsysid/errors.hpp"

namespace invsysid {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Tolerance for deciding whether a level sits on the staircase grid.
constexpr double kLevelTol = 1e-9;
}  // namespace

Waveform waveform_from_string(const std::string& name) {
    if (name == "sine") return Waveform::sine;
    if (name == "square") return Waveform::square;
    if (name == "sine-chirp" || name == "sine_chirp") return Waveform::sine_chirp;
    if (name == "square-chirp" || name == "square_chirp") return Waveform::square_chirp;
    throw param_error("unknown waveform kind '" + name + "'");
}

std::string to_string(Waveform kind) {
    switch (kind) {
        case Waveform::sine: return "sine";
        case Waveform::square: return "square";
        case Waveform::sine_chirp: return "sine-chirp";
        case Waveform::square_chirp: return "square-chirp";
    }
    return "?";
}

void ProbingSpec::validate() const {
    if (!(f0 > 0)) throw param_error("probing spec: f0 must be > 0");
    if (!(f1 >= f0)) throw param_error("probing spec: f1 must be >= f0");
    if (!(sweep_time > 0)) throw param_error("probing spec: sweep_time must be > 0");
    if (!(fs > 2.0 * f1))
        throw param_error("probing spec: fs must exceed 2*f1 (Nyquist)");
    if (!(dwell > 0)) throw param_error("probing spec: dwell must be > 0");
    if (!(amp_step > 0)) throw param_error("probing spec: amp_step must be > 0");
    if (amp_end < amp_start)
        throw param_error("probing spec: amp_end must be >= amp_start");
    if (depth && *depth < 0) throw param_error("probing spec: depth must be >= 0");
}

std::vector<StairStep> staircase_schedule(const ProbingSpec& spec) {
    spec.validate();
    std::vector<StairStep> steps;
    const double span = spec.amp_end - spec.amp_start;
    const auto whole =
        static_cast<std::size_t>(std::floor(span / spec.amp_step + kLevelTol));
    steps.reserve(whole + 2);
    for (std::size_t k = 0; k <= whole; ++k) {
        steps.push_back({static_cast<double>(k) * spec.dwell,
                         spec.amp_start + static_cast<double>(k) * spec.amp_step});
    }
    if (spec.amp_end - steps.back().level > kLevelTol) {
        // Span is not a whole number of steps: cap with a final level at amp_end.
        steps.push_back({static_cast<double>(steps.size()) * spec.dwell, spec.amp_end});
    } else {
        steps.back().level = spec.amp_end;  // snap off rounding drift
    }
    return steps;
}

double sweep_phase(double tau, double f0, double f1, double sweep_time) {
    if (tau <= 0) return 0.0;
    if (f1 <= f0) return kTwoPi * f0 * tau;
    const double ratio = f1 / f0;
    const double k = kTwoPi * f0 * sweep_time / std::log(ratio);
    if (tau >= sweep_time) {
        // Hold at f1 past the sweep, phase-continuous.
        return k * (ratio - 1.0) + kTwoPi * f1 * (tau - sweep_time);
    }
    return k * (std::pow(ratio, tau / sweep_time) - 1.0);
}

SampledSeries generate(const ProbingSpec& spec) {
    spec.validate();
    const auto schedule = staircase_schedule(spec);
    const double dt = 1.0 / spec.fs;
    const auto per_dwell = static_cast<std::size_t>(std::llround(spec.dwell * spec.fs));
    if (per_dwell == 0) throw param_error("probing spec: dwell shorter than one sample");
    const std::size_t n = per_dwell * schedule.size();
    const double depth = spec.depth_value();
    const bool chirp =
        spec.kind == Waveform::sine_chirp || spec.kind == Waveform::square_chirp;
    const bool square =
        spec.kind == Waveform::square || spec.kind == Waveform::square_chirp;

    SampledSeries out;
    out.dt = dt;
    auto& time = out.add("time", "s");
    auto& level_ch = out.add("amplitude_level", "p.u.");
    auto& exc = out.add("excitation", "p.u.");
    time.resize(n);
    level_ch.resize(n);
    exc.resize(n);

    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t step = k / per_dwell;
        const double level = schedule[step].level;
        const double tau = static_cast<double>(k - step * per_dwell) * dt;
        const double phase = chirp ? sweep_phase(tau, spec.f0, spec.f1, spec.sweep_time)
                                   : kTwoPi * spec.f0 * tau;
        const double s = std::sin(phase);
        const double w = square ? (s >= 0.0 ? 1.0 : -1.0) : s;
        const double center = spec.bias.value_or(level);
        time[k] = static_cast<double>(k) * dt;
        level_ch[k] = level;
        exc[k] = center + depth * w;
    }
    return out;
}

}  // namespace invsysid
