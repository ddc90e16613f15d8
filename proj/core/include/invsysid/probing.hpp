#pragma once

#include <optional>
#include <vector>

#include "invsysid/series.hpp"

namespace invsysid {

enum class Waveform { sine, square, sine_chirp, square_chirp };

Waveform waveform_from_string(const std::string& name);
std::string to_string(Waveform kind);

/// Excitation definition: waveform kind, frequency sweep, amplitude staircase.
///
/// The staircase steps from amp_start to amp_end in increments of amp_step,
/// dwelling `dwell` seconds per level. Within each dwell the carrier oscillates
/// around the level (or around `bias` when set) with peak deviation `depth`.
/// Chirp kinds sweep the carrier frequency from f0 to f1 over `sweep_time`
/// seconds, restarting at every dwell; past sweep_time the carrier holds f1.
struct ProbingSpec {
    Waveform kind = Waveform::square_chirp;
    double f0 = 1.0;          // Hz, sweep start
    double f1 = 1.0;          // Hz, sweep end
    double sweep_time = 1.0;  // s
    double amp_start = 1.0;   // p.u.
    double amp_step = 0.01;   // p.u.
    double amp_end = 1.0;     // p.u.
    double dwell = 1.0;       // s per amplitude level
    std::optional<double> bias;   // p.u.; default: the current staircase level
    std::optional<double> depth;  // p.u.; default: amp_step / 2
    double fs = 1000.0;       // Hz
    double lambda = 0.01;     // reported rate-of-increase parameter, informational

    double depth_value() const { return depth.value_or(amp_step / 2.0); }

    /// Throws param_error naming the violated invariant.
    void validate() const;
};

struct StairStep {
    double start_time;  // s
    double level;       // p.u.
};

/// Amplitude levels amp_start, amp_start+amp_step, ... capped at amp_end;
/// level k starts at k*dwell. When the span is not a whole number of steps a
/// final level at amp_end is appended so the staircase covers the full span.
std::vector<StairStep> staircase_schedule(const ProbingSpec& spec);

/// Exponential (log-frequency) sweep phase: instantaneous frequency equals f0
/// at tau=0 and f1 at tau=sweep_time, growing log-linearly in between. For
/// tau > sweep_time the phase continues at constant frequency f1; for f1 == f0
/// it degenerates to 2*pi*f0*tau.
double sweep_phase(double tau, double f0, double f1, double sweep_time);

/// Generates channels {time, amplitude_level, excitation} at spec.fs.
SampledSeries generate(const ProbingSpec& spec);

}  // namespace invsysid
