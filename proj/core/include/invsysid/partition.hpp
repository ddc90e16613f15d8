#pragma once

#include <optional>
#include <string>
#include <vector>

#include "invsysid/dataio.hpp"
#include "invsysid/estimate.hpp"
#include "invsysid/gsf.hpp"
#include "invsysid/metrics.hpp"
#include "invsysid/series.hpp"
#include "invsysid/tf.hpp"

namespace invsysid {

/// One amplitude range of the aggregated model. A range may be a flagged hole
/// (no data, or a deactivated region): it tiles the span but carries no model.
struct RangeModel {
    std::string label;
    double lo = 0.0;
    double hi = 0.0;
    std::optional<ContinuousTF> tf;
    std::optional<FitReport> fit;
    bool hole = false;
};

/// Ordered amplitude ranges, each bound to one transfer function.
struct PartitionedModel {
    GsfKind kind = GsfKind::volt_var;
    double resolution = 0.0;  // p.u. boundary grid; 0 for fixed-scheme models
    double voltage_base = 169.7056;
    double frequency_base = 60.0;
    std::string provenance;  // scheme / thresholds that produced the model
    std::vector<RangeModel> ranges;
    std::vector<std::string> warnings;  // not serialized

    double span_lo() const { return ranges.front().lo; }
    double span_hi() const { return ranges.back().hi; }

    /// Closed-left/open-right lookup; the last range owns its right endpoint.
    /// Throws model_error when level lies outside the span.
    std::size_t index_at(double level) const;

    /// Tiling, ordering, and resolution-grid checks.
    void validate() const;
};

struct PartitionOptions {
    std::vector<std::pair<int, int>> orders;  // empty: default 2..5 sweep
    Selector selector = Selector::afpe;
    EstimateOptions estimate;
    int jobs = 1;

    // fit_fixed
    int representative = -1;        // range index per region; -1 = middle range
    bool include_inactive = false;  // also fit deactivated regions

    // fit_adaptive
    double threshold = 90.0;   // accept interval when held-out fitpercent >= this
    double resolution = 0.01;  // p.u. boundary grid and smallest interval width
};

/// One transfer function per active region, fitted on the region's
/// representative range (default: the middle range) and bound to the whole
/// region. Deactivated regions become flagged holes.
PartitionedModel fit_fixed(const RegionScheme& scheme, const SegmentedDataset& data,
                           const PartitionOptions& options = {});

/// Recursive bisection over [lo, hi]: fit on all segments whose levels fall in
/// the interval; accept it when the held-out fitpercent reaches the threshold
/// or its width reaches the resolution floor, otherwise split at the midpoint
/// snapped to the resolution grid and recurse. Intervals without data are
/// accepted as flagged holes.
PartitionedModel fit_adaptive(const SegmentedDataset& data, double lo, double hi,
                              const PartitionOptions& options = {});

/// Per covered range, rescales the model's DC gain by the least-squares scalar
/// alpha = <y_ref, yhat> / <yhat, yhat> against reference data taken at another
/// operating condition (irradiance surrogate). Other coefficients untouched.
PartitionedModel adjust_dc_gain(PartitionedModel model, const SegmentedDataset& reference);

/// Simulates the aggregated model: the range is selected per sample from the
/// "amplitude_level" channel (or the excitation itself), the range's transfer
/// function runs in deviation coordinates around its operating point, and the
/// dynamic state resets to the new range's equilibrium at crossings (or is
/// carried over when reset_state is false and the orders match). Crossing a
/// hole raises model_error naming it.
SampledSeries respond(const PartitionedModel& model, const SampledSeries& input,
                      bool reset_state = true);

void save_model_file(const PartitionedModel& model, const std::string& path);
PartitionedModel load_model_file(const std::string& path);

}  // namespace invsysid
