#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invsysid/gsf.hpp"
#include "invsysid/probing.hpp"
#include "invsysid/series.hpp"

namespace invsysid {

enum class InputUnit { pu, volt, hz };

InputUnit input_unit_from_string(const std::string& name);
std::string to_string(InputUnit unit);

/// How to cut a loaded series into per-level segments.
struct SegmentationRule {
    enum class Kind {
        staircase,      // derive boundaries from an amplitude staircase
        boundaries,     // explicit boundary times + levels
        level_channel,  // follow the "amplitude_level" channel in the data
    };
    Kind kind = Kind::level_channel;

    // staircase
    double amp_start = 0.0, amp_step = 0.0, amp_end = 0.0, dwell = 0.0;

    // boundaries: segment k spans [times[k], times[k+1]) at levels[k]
    std::vector<double> times;
    std::vector<double> levels;
};

struct DatasetConfig {
    std::string time_col = "time";
    std::string input_col = "excitation";
    std::string output_col = "current";
    InputUnit input_unit = InputUnit::pu;
    double voltage_base = 169.7056;  // 120 * sqrt(2) V
    double frequency_base = 60.0;    // Hz
    double sync_trim = 110.0;        // s dropped from the head of the record
    double segment_transient_trim = 0.5;  // s dropped from each segment head
    int median_window = 200;              // samples
    double split_fraction = 0.7;          // chronological train prefix
    SegmentationRule schedule;

    void validate() const;
};

/// Reads a CSV (header row, comma-separated) and returns channels
/// {time, input, output} with the input converted to p.u. Also carries
/// "amplitude_level" through when present. dt is inferred from the time
/// column (uniformity tolerance 1e-6 s).
SampledSeries load_csv(const std::string& path, const DatasetConfig& config);

/// Reads every column verbatim under its header name; no unit conversion.
/// dt is inferred from the "time" column when present.
SampledSeries load_csv_raw(const std::string& path);

/// Writes all channels with a header row; values use shortest round-trip
/// formatting so identical data produces identical bytes.
void write_csv(const SampledSeries& series, const std::string& path);

/// Centered moving median, window in samples; edge windows shrink
/// symmetrically so the output has the input's length.
std::vector<double> moving_median(std::span<const double> x, int window);

/// One preprocessed per-level segment: chronological train/test split of the
/// filtered, mean-removed input/output, plus the removed means.
struct LabeledSegment {
    std::string region;  // empty when no scheme was supplied
    std::string range;
    double level = 0.0;       // p.u. staircase level of this segment
    double t_start = 0.0;     // s, segment origin in the source record
    SampledSeries train;      // channels {input, output}, mean-removed
    SampledSeries test;
    double input_mean = 0.0;  // p.u., removed after filtering
    double output_mean = 0.0; // A
};

struct SegmentedDataset {
    double dt = 0.0;
    std::vector<LabeledSegment> segments;
    std::vector<std::string> warnings;
};

/// Full preprocessing pipeline, in order: sync trim, segmentation, per-segment
/// transient trim, moving-median filter, mean removal, chronological split.
/// When a scheme is given, segments are labeled by region/range of their level.
SegmentedDataset preprocess(const SampledSeries& series, const DatasetConfig& config,
                            const RegionScheme* scheme = nullptr);

/// Staircase rule matching a probing spec's schedule.
SegmentationRule staircase_rule(const ProbingSpec& spec);

}  // namespace invsysid
