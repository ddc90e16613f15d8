#include "invsysid/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "invsysid/errors.hpp"

namespace invsysid {

InputUnit input_unit_from_string(const std::string& name) {
    if (name == "pu" || name == "p.u.") return InputUnit::pu;
    if (name == "volt" || name == "V") return InputUnit::volt;
    if (name == "hz" || name == "Hz") return InputUnit::hz;
    throw param_error("unknown input unit '" + name + "'");
}

std::string to_string(InputUnit unit) {
    switch (unit) {
        case InputUnit::pu: return "pu";
        case InputUnit::volt: return "volt";
        case InputUnit::hz: return "hz";
    }
    return "?";
}

void DatasetConfig::validate() const {
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw param_error("dataset config: split fraction must be in (0, 1)");
    if (median_window < 1)
        throw param_error("dataset config: median window must be >= 1 sample");
    if (sync_trim < 0) throw param_error("dataset config: sync trim must be >= 0");
    if (segment_transient_trim < 0)
        throw param_error("dataset config: transient trim must be >= 0");
    if (voltage_base <= 0 || frequency_base <= 0)
        throw param_error("dataset config: unit bases must be positive");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty() && cell.back() == '\r') cell.pop_back();
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_cell(const std::string& cell, long line_no, const std::string& col) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw data_error("non-numeric value '" + cell + "' in column " + col, line_no);
    return v;
}

void format_value(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

}  // namespace

SampledSeries load_csv(const std::string& path, const DatasetConfig& config) {
    config.validate();
    std::ifstream in(path);
    if (!in) throw data_error("cannot open dataset '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw data_error("dataset '" + path + "' is empty");
    const auto header = split_csv_line(line);

    auto find_col = [&](const std::string& name) -> long {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<long>(i);
        return -1;
    };
    const long it = find_col(config.time_col);
    const long iu = find_col(config.input_col);
    const long iy = find_col(config.output_col);
    const long il = find_col("amplitude_level");
    if (it < 0) throw data_error("missing time column '" + config.time_col + "'");
    if (iu < 0) throw data_error("missing input column '" + config.input_col + "'");
    if (iy < 0) throw data_error("missing output column '" + config.output_col + "'");

    double base = 1.0;
    if (config.input_unit == InputUnit::volt) base = config.voltage_base;
    if (config.input_unit == InputUnit::hz) base = config.frequency_base;

    std::vector<double> t, u, y, lvl;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() < header.size())
            throw data_error("short row: expected " + std::to_string(header.size()) +
                                 " cells, got " + std::to_string(cells.size()),
                             line_no);
        t.push_back(parse_cell(cells[static_cast<std::size_t>(it)], line_no, config.time_col));
        u.push_back(parse_cell(cells[static_cast<std::size_t>(iu)], line_no, config.input_col) /
                    base);
        y.push_back(parse_cell(cells[static_cast<std::size_t>(iy)], line_no, config.output_col));
        if (il >= 0)
            lvl.push_back(
                parse_cell(cells[static_cast<std::size_t>(il)], line_no, "amplitude_level") /
                base);
    }
    if (t.size() < 2) throw data_error("dataset '" + path + "' has fewer than two rows");

    const double dt = t[1] - t[0];
    if (!(dt > 0)) throw data_error("time column is not increasing", 3);
    for (std::size_t k = 1; k + 1 < t.size(); ++k) {
        if (std::abs(t[k + 1] - t[k] - dt) > 1e-6)
            throw data_error("non-uniform sample period", static_cast<long>(k) + 3);
    }

    SampledSeries s;
    s.t0 = t.front();
    s.dt = dt;
    s.add("time", "s") = std::move(t);
    s.add("input", "p.u.") = std::move(u);
    s.add("output", "A") = std::move(y);
    if (il >= 0) s.add("amplitude_level", "p.u.") = std::move(lvl);
    return s;
}

SampledSeries load_csv_raw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open dataset '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw data_error("dataset '" + path + "' is empty");
    const auto header = split_csv_line(line);
    if (header.empty()) throw data_error("dataset '" + path + "' has no header");

    std::vector<std::vector<double>> cols(header.size());
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() < header.size())
            throw data_error("short row: expected " + std::to_string(header.size()) +
                                 " cells, got " + std::to_string(cells.size()),
                             line_no);
        for (std::size_t i = 0; i < header.size(); ++i)
            cols[i].push_back(parse_cell(cells[i], line_no, header[i]));
    }
    if (cols.front().size() < 2)
        throw data_error("dataset '" + path + "' has fewer than two rows");

    SampledSeries s;
    for (std::size_t i = 0; i < header.size(); ++i)
        s.add(header[i], "") = std::move(cols[i]);
    if (s.has("time")) {
        const auto& t = s.channel("time");
        s.t0 = t.front();
        s.dt = t[1] - t[0];
        if (!(s.dt > 0)) throw data_error("time column is not increasing", 3);
        for (std::size_t k = 1; k + 1 < t.size(); ++k) {
            if (std::abs(t[k + 1] - t[k] - s.dt) > 1e-6)
                throw data_error("non-uniform sample period", static_cast<long>(k) + 3);
        }
    }
    return s;
}

void write_csv(const SampledSeries& series, const std::string& path) {
    series.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write CSV '" + path + "'");
    std::string buf;
    for (std::size_t i = 0; i < series.names.size(); ++i) {
        if (i) buf += ',';
        buf += series.names[i];
    }
    buf += '\n';
    const std::size_t n = series.size();
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < series.columns.size(); ++i) {
            if (i) buf += ',';
            format_value(buf, series.columns[i][k]);
        }
        buf += '\n';
        if (buf.size() > (1u << 20)) {
            out << buf;
            buf.clear();
        }
    }
    out << buf;
}

std::vector<double> moving_median(std::span<const double> x, int window) {
    if (window < 1) throw param_error("moving median: window must be >= 1");
    const std::size_t n = x.size();
    std::vector<double> out(n);
    if (n == 0) return out;

    const auto w = static_cast<std::size_t>(window);
    const std::size_t h_lo = w / 2;
    const std::size_t h_hi = (w - 1) / 2;

    auto direct = [&](std::size_t lo, std::size_t hi) {  // inclusive bounds
        std::vector<double> buf(x.begin() + static_cast<std::ptrdiff_t>(lo),
                                x.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
        const std::size_t m = buf.size() / 2;
        std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(m), buf.end());
        double med = buf[m];
        if (buf.size() % 2 == 0) {
            const double lower =
                *std::max_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(m));
            med = 0.5 * (med + lower);
        }
        return med;
    };

    // Edges: symmetric shrinking window of radius min(i, n-1-i, h_lo).
    auto edge = [&](std::size_t i) {
        const std::size_t r = std::min({i, n - 1 - i, h_lo});
        out[i] = direct(i - r, i + r);
    };

    if (n <= w || h_lo + h_hi >= n) {
        for (std::size_t i = 0; i < n; ++i) edge(i);
        return out;
    }

    for (std::size_t i = 0; i < h_lo; ++i) edge(i);
    for (std::size_t i = n - h_hi; i < n; ++i) edge(i);

    // Interior: exact window [i - h_lo, i + h_hi], slid with a multiset whose
    // mid iterator tracks the lower median.
    std::multiset<double> win(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(w));
    auto mid = std::next(win.begin(), static_cast<std::ptrdiff_t>((w - 1) / 2));
    auto current_median = [&]() {
        return w % 2 ? *mid : 0.5 * (*mid + *std::next(mid));
    };

    for (std::size_t i = h_lo;; ++i) {
        out[i] = current_median();
        if (i + h_hi + 1 >= n) break;
        const double incoming = x[i + h_hi + 1];
        const double outgoing = x[i - h_lo];
        win.insert(incoming);  // equal keys insert at upper bound: mid index kept
        if (incoming < *mid) --mid;
        auto it = win.lower_bound(outgoing);
        if (it == mid) {
            mid = win.erase(it);
        } else {
            const bool before_mid = *it <= *mid;  // lower_bound => equal sits before mid
            win.erase(it);
            if (before_mid) ++mid;
        }
    }
    return out;
}

SegmentationRule staircase_rule(const ProbingSpec& spec) {
    SegmentationRule rule;
    rule.kind = SegmentationRule::Kind::staircase;
    rule.amp_start = spec.amp_start;
    rule.amp_step = spec.amp_step;
    rule.amp_end = spec.amp_end;
    rule.dwell = spec.dwell;
    return rule;
}

namespace {

struct RawSegment {
    double level = 0.0;
    double t_start = 0.0;
    std::size_t first = 0;  // sample range [first, last) into the trimmed record
    std::size_t last = 0;
};

std::vector<RawSegment> cut_segments(const SegmentationRule& rule,
                                     const SampledSeries& series, std::size_t k0,
                                     double t_origin) {
    const std::size_t n = series.size();
    std::vector<RawSegment> raw;

    auto by_boundaries = [&](const std::vector<double>& times,
                             const std::vector<double>& levels) {
        for (std::size_t s = 0; s < times.size(); ++s) {
            const double t_lo = times[s];
            const double t_hi = s + 1 < times.size()
                                    ? times[s + 1]
                                    : series.time_at(n - 1) + series.dt;
            const auto first = static_cast<std::ptrdiff_t>(
                std::ceil((t_lo - series.t0) / series.dt - 1e-9));
            const auto last = static_cast<std::ptrdiff_t>(
                std::ceil((t_hi - series.t0) / series.dt - 1e-9));
            RawSegment seg;
            seg.level = levels[s];
            seg.t_start = t_lo;
            seg.first = static_cast<std::size_t>(std::max<std::ptrdiff_t>(
                first, static_cast<std::ptrdiff_t>(k0)));
            seg.last = static_cast<std::size_t>(
                std::clamp<std::ptrdiff_t>(last, 0, static_cast<std::ptrdiff_t>(n)));
            if (seg.last > seg.first) raw.push_back(seg);
        }
    };

    switch (rule.kind) {
        case SegmentationRule::Kind::staircase: {
            ProbingSpec spec;  // only the staircase fields matter here
            spec.amp_start = rule.amp_start;
            spec.amp_step = rule.amp_step;
            spec.amp_end = rule.amp_end;
            spec.dwell = rule.dwell;
            const auto steps = staircase_schedule(spec);
            std::vector<double> times, levels;
            times.reserve(steps.size());
            levels.reserve(steps.size());
            for (const auto& st : steps) {
                times.push_back(t_origin + st.start_time);
                levels.push_back(st.level);
            }
            by_boundaries(times, levels);
            break;
        }
        case SegmentationRule::Kind::boundaries: {
            if (rule.times.size() != rule.levels.size() || rule.times.empty())
                throw param_error("segmentation boundaries need matching times/levels");
            by_boundaries(rule.times, rule.levels);
            break;
        }
        case SegmentationRule::Kind::level_channel: {
            if (!series.has("amplitude_level"))
                throw data_error(
                    "segmentation by level requested but the dataset has no "
                    "'amplitude_level' channel");
            const auto& lvl = series.channel("amplitude_level");
            std::size_t start = k0;
            for (std::size_t k = k0 + 1; k <= n; ++k) {
                if (k == n || lvl[k] != lvl[start]) {
                    RawSegment seg;
                    seg.level = lvl[start];
                    seg.t_start = series.time_at(start);
                    seg.first = start;
                    seg.last = k;
                    raw.push_back(seg);
                    start = k;
                }
            }
            break;
        }
    }
    return raw;
}

double mean_of(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m += x;
    return v.empty() ? 0.0 : m / static_cast<double>(v.size());
}

}  // namespace

SegmentedDataset preprocess(const SampledSeries& series, const DatasetConfig& config,
                            const RegionScheme* scheme) {
    config.validate();
    if (series.dt <= 0) throw param_error("preprocess: series has no sample period");

    auto resolve = [&](const std::string& preferred, const char* fallback) -> const std::vector<double>& {
        if (series.has(preferred)) return series.channel(preferred);
        if (series.has(fallback)) return series.channel(fallback);
        throw data_error("dataset lacks channel '" + preferred + "' (or '" + fallback + "')");
    };
    const auto& u_all = resolve(config.input_col, "input");
    const auto& y_all = resolve(config.output_col, "output");

    const std::size_t n = series.size();
    // (1) Drop the synchronization head: keep t >= sync_trim.
    const auto k0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(
        0, static_cast<std::ptrdiff_t>(
               std::ceil((config.sync_trim - series.t0) / series.dt - 1e-9))));
    if (k0 >= n)
        throw data_error("sync trim removes the entire record");

    // (2) Segment by schedule.
    const double t_origin = std::max(series.t0, config.sync_trim);
    const auto raw = cut_segments(config.schedule, series, k0, t_origin);

    SegmentedDataset out;
    out.dt = series.dt;

    const auto trim_samples = static_cast<std::size_t>(
        std::llround(config.segment_transient_trim / series.dt));

    for (const auto& seg : raw) {
        // (3) Drop the per-segment transient head.
        const std::size_t first = seg.first + trim_samples;
        if (first >= seg.last ||
            seg.last - first < static_cast<std::size_t>(config.median_window)) {
            out.warnings.push_back("segment at level " + std::to_string(seg.level) +
                                   " too short after transient trim; skipped");
            continue;
        }
        const std::size_t len = seg.last - first;

        // (4) Centered moving median on input and output.
        std::vector<double> u = moving_median(
            std::span<const double>(u_all.data() + first, len), config.median_window);
        std::vector<double> y = moving_median(
            std::span<const double>(y_all.data() + first, len), config.median_window);

        // (5) Remove (and record) per-segment means.
        LabeledSegment ls;
        ls.level = seg.level;
        ls.t_start = series.time_at(first);
        ls.input_mean = mean_of(u);
        ls.output_mean = mean_of(y);
        for (double& v : u) v -= ls.input_mean;
        for (double& v : y) v -= ls.output_mean;

        if (scheme) {
            try {
                const auto loc = scheme->classify(seg.level);
                ls.region = loc.region_label;
                ls.range = loc.range_label;
            } catch (const classification_error& e) {
                out.warnings.push_back("segment at level " + std::to_string(seg.level) +
                                       " outside scheme span: " + e.what());
            }
        }

        // (6) Chronological split: train prefix, test suffix.
        const auto n_train = static_cast<std::size_t>(
            std::llround(config.split_fraction * static_cast<double>(len)));
        auto fill = [&](SampledSeries& dst, std::size_t lo, std::size_t hi,
                        double t_start) {
            dst.t0 = t_start;
            dst.dt = series.dt;
            dst.add("input", "p.u.") =
                std::vector<double>(u.begin() + static_cast<std::ptrdiff_t>(lo),
                                    u.begin() + static_cast<std::ptrdiff_t>(hi));
            dst.add("output", "A") =
                std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(lo),
                                    y.begin() + static_cast<std::ptrdiff_t>(hi));
        };
        fill(ls.train, 0, n_train, ls.t_start);
        fill(ls.test, n_train, len,
             ls.t_start + static_cast<double>(n_train) * series.dt);
        out.segments.push_back(std::move(ls));
    }

    if (out.segments.empty())
        throw data_error("preprocessing produced no usable segments");
    return out;
}

}  // namespace invsysid
