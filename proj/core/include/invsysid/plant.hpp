#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "invsysid/series.hpp"
#include "invsysid/tf.hpp"

namespace invsysid {

/// One amplitude range of a piecewise plant. A range without a transfer
/// function is inactive: it responds with its operating-point output only.
struct PlantRange {
    double lo = 0.0;
    double hi = 0.0;
    std::optional<ContinuousTF> tf;
};

/// Surrogate ground-truth generator standing in for the PHIL rig: either a
/// single transfer function played back directly, or a piecewise plant that
/// switches dynamics with the (slow) amplitude level.
struct PlantSpec {
    enum class Mode { single_tf, piecewise };

    Mode mode = Mode::single_tf;
    ContinuousTF tf;                 // single_tf mode
    std::vector<PlantRange> ranges;  // piecewise mode, ordered and tiling
    double gain_scale = 1.0;         // irradiance surrogate
    double noise = 0.0;              // additive output noise std (A)
    std::uint64_t seed = 0;

    /// Throws param_error on unstable or improper transfer functions.
    void validate() const;
};

/// Published region transfer functions. Valid labels: R1, R2, R4a, R4b, R5.
/// R3 was deactivated and has no published model (throws domain_error).
ContinuousTF paper_fixture(const std::string& region);
const std::vector<std::string>& paper_fixture_labels();

/// Runs the plant on an excitation series (channel "excitation", p.u.).
/// Range selection uses the "amplitude_level" channel when present, otherwise
/// the excitation itself. Produces channel "current" (A) alongside a copy of
/// the input channels; meta["clamped"] counts samples outside the span.
SampledSeries simulate(const PlantSpec& plant, const SampledSeries& input);

PlantSpec load_plant_file(const std::string& path);
void save_plant_file(const PlantSpec& plant, const std::string& path);

/// Deterministic standard-normal stream (Box-Muller over mt19937_64, uniforms
/// taken straight from the engine); reproducible across platforms because no
/// implementation-defined <random> distribution is involved.
class NoiseStream {
public:
    explicit NoiseStream(std::uint64_t seed) : engine_(seed) {}
    double next_gaussian();

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace invsysid
