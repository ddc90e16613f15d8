// invsysid: probing-signal generation, surrogate plant playback, partitioned
// transfer-function fitting, and model validation for grid-tied smart
// inverters, wired end to end over CSV and JSON artifacts.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "invsysid/dataio.hpp"
#include "invsysid/errors.hpp"
#include "invsysid/estimate.hpp"
#include "invsysid/gsf.hpp"
#include "invsysid/partition.hpp"
#include "invsysid/plant.hpp"
#include "invsysid/probing.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDomain = 3;
constexpr int kExitData = 4;
constexpr int kExitModel = 5;

json g_config;  // optional config file; its values override flags

template <typename T>
void apply_config(const std::string& key, T& value) {
    if (g_config.contains(key)) value = g_config.at(key).get<T>();
}

void apply_config(const std::string& key, std::optional<double>& value) {
    if (g_config.contains(key)) value = g_config.at(key).get<double>();
}

void write_manifest(const std::string& output_path, const std::string& command,
                    const json& settings) {
    json m;
    m["command"] = command;
    m["tool"] = "invsysid";
    m["version"] = INVSYSID_VERSION;
    m["settings"] = settings;
    std::ofstream out(output_path + ".manifest.json", std::ios::binary);
    if (out) out << m.dump(2) << "\n";
}

invsysid::GsfFixture resolve_curve(const std::string& name_or_path) {
    if (std::filesystem::exists(name_or_path))
        return invsysid::load_gsf_file(name_or_path);
    return invsysid::builtin_fixture(name_or_path);
}

std::vector<std::pair<int, int>> parse_orders(const std::string& text) {
    const auto colon = text.find(':');
    const auto comma = text.find(',');
    if (comma != std::string::npos) {
        const int np = std::stoi(text.substr(0, comma));
        const int nz = std::stoi(text.substr(comma + 1));
        return {{np, nz}};
    }
    if (colon == std::string::npos)
        throw invsysid::param_error("--orders expects 'lo:hi' or 'np,nz'");
    const int lo = std::stoi(text.substr(0, colon));
    const int hi = std::stoi(text.substr(colon + 1));
    if (lo < 1 || hi < lo) throw invsysid::param_error("--orders range is empty");
    std::vector<std::pair<int, int>> orders;
    for (int np = lo; np <= hi; ++np)
        for (int nz = 0; nz < np; ++nz) orders.emplace_back(np, nz);
    return orders;
}

std::pair<double, double> parse_pair(const std::string& text, const char* flag) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw invsysid::param_error(std::string(flag) + " expects 'a:b'");
    return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
}

// ---------------------------------------------------------------------------
// signal gen
// ---------------------------------------------------------------------------

struct SignalArgs {
    std::string kind = "square-chirp";
    invsysid::ProbingSpec spec;
    double depth = -1.0;  // <0: default (amp_step / 2)
    double bias = std::nan("");
    std::string output = "signal.csv";
};

int run_signal_gen(SignalArgs a) {
    apply_config("kind", a.kind);
    apply_config("f0", a.spec.f0);
    apply_config("f1", a.spec.f1);
    apply_config("sweep", a.spec.sweep_time);
    apply_config("amp_start", a.spec.amp_start);
    apply_config("amp_step", a.spec.amp_step);
    apply_config("amp_end", a.spec.amp_end);
    apply_config("dwell", a.spec.dwell);
    apply_config("fs", a.spec.fs);
    apply_config("lambda", a.spec.lambda);
    apply_config("depth", a.depth);
    apply_config("output", a.output);

    a.spec.kind = invsysid::waveform_from_string(a.kind);
    if (a.depth >= 0) a.spec.depth = a.depth;
    if (!std::isnan(a.bias)) a.spec.bias = a.bias;

    const auto series = invsysid::generate(a.spec);
    invsysid::write_csv(series, a.output);

    json settings;
    settings["kind"] = a.kind;
    settings["f0"] = a.spec.f0;
    settings["f1"] = a.spec.f1;
    settings["sweep"] = a.spec.sweep_time;
    settings["amp_start"] = a.spec.amp_start;
    settings["amp_step"] = a.spec.amp_step;
    settings["amp_end"] = a.spec.amp_end;
    settings["dwell"] = a.spec.dwell;
    settings["fs"] = a.spec.fs;
    settings["depth"] = a.spec.depth_value();
    settings["lambda"] = a.spec.lambda;
    settings["output"] = a.output;
    write_manifest(a.output, "signal gen", settings);

    const auto levels = invsysid::staircase_schedule(a.spec);
    std::cout << "signal gen: " << series.size() << " samples, " << levels.size()
              << " dwell(s), " << a.kind << " " << a.spec.f0 << "->" << a.spec.f1
              << " Hz -> " << a.output << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// plant simulate
// ---------------------------------------------------------------------------

struct PlantArgs {
    std::string fixture;
    std::string spec_file;
    std::string input = "signal.csv";
    std::string output = "plant.csv";
    double noise = 0.0;
    double gain_scale = 1.0;
    std::uint64_t seed = 0;
};

int run_plant_simulate(PlantArgs a) {
    apply_config("fixture", a.fixture);
    apply_config("spec", a.spec_file);
    apply_config("input", a.input);
    apply_config("output", a.output);
    apply_config("noise", a.noise);
    apply_config("gain_scale", a.gain_scale);
    apply_config("seed", a.seed);

    invsysid::PlantSpec plant;
    if (!a.spec_file.empty()) {
        plant = invsysid::load_plant_file(a.spec_file);
    } else if (!a.fixture.empty()) {
        plant.mode = invsysid::PlantSpec::Mode::single_tf;
        plant.tf = invsysid::paper_fixture(a.fixture);
    } else {
        throw invsysid::param_error("plant simulate needs --fixture or --spec");
    }
    plant.noise = a.noise;
    plant.gain_scale = a.gain_scale;
    plant.seed = a.seed;

    const auto input = invsysid::load_csv_raw(a.input);
    if (!input.has("excitation"))
        throw invsysid::data_error("input '" + a.input + "' lacks an 'excitation' column");
    if (input.dt <= 0)
        throw invsysid::data_error("input '" + a.input + "' lacks a 'time' column");

    const auto out = invsysid::simulate(plant, input);
    invsysid::write_csv(out, a.output);

    json settings;
    settings["fixture"] = a.fixture;
    settings["spec"] = a.spec_file;
    settings["input"] = a.input;
    settings["output"] = a.output;
    settings["noise"] = a.noise;
    settings["gain_scale"] = a.gain_scale;
    settings["seed"] = a.seed;
    write_manifest(a.output, "plant simulate", settings);

    std::cout << "plant simulate: " << out.size() << " samples -> " << a.output;
    const auto it = out.meta.find("clamped");
    if (it != out.meta.end() && it->second > 0)
        std::cout << " (" << it->second << " samples clamped)";
    std::cout << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
    std::string data;
    std::string curve;
    std::string partition = "fixed";
    double threshold = 90.0;
    double resolution = 0.01;
    std::string orders = "2:5";
    std::string selector = "afpe";
    std::string span;
    double split = 0.7;
    double sync_trim = 0.0;
    double transient_trim = 0.5;
    int median_window = 200;
    std::string input_unit = "pu";
    double voltage_base = 169.7056;
    double frequency_base = 60.0;
    std::string col_time = "time";
    std::string col_input = "excitation";
    std::string col_output = "current";
    double amp_start = std::nan(""), amp_step = std::nan(""), amp_end = std::nan("");
    double dwell = std::nan("");
    double svf_bandwidth = 64.0;
    int jobs = 1;
    std::string output = "model.json";
    std::string report;
};

int run_fit(FitArgs a) {
    apply_config("data", a.data);
    apply_config("curve", a.curve);
    apply_config("partition", a.partition);
    apply_config("threshold", a.threshold);
    apply_config("resolution", a.resolution);
    apply_config("orders", a.orders);
    apply_config("selector", a.selector);
    apply_config("span", a.span);
    apply_config("split", a.split);
    apply_config("sync_trim", a.sync_trim);
    apply_config("transient_trim", a.transient_trim);
    apply_config("median_window", a.median_window);
    apply_config("input_unit", a.input_unit);
    apply_config("voltage_base", a.voltage_base);
    apply_config("frequency_base", a.frequency_base);
    apply_config("col_time", a.col_time);
    apply_config("col_input", a.col_input);
    apply_config("col_output", a.col_output);
    apply_config("amp_start", a.amp_start);
    apply_config("amp_step", a.amp_step);
    apply_config("amp_end", a.amp_end);
    apply_config("dwell", a.dwell);
    apply_config("svf_bandwidth", a.svf_bandwidth);
    apply_config("jobs", a.jobs);
    apply_config("output", a.output);
    apply_config("report", a.report);

    invsysid::DatasetConfig dc;
    dc.time_col = a.col_time;
    dc.input_col = a.col_input;
    dc.output_col = a.col_output;
    dc.input_unit = invsysid::input_unit_from_string(a.input_unit);
    dc.voltage_base = a.voltage_base;
    dc.frequency_base = a.frequency_base;
    dc.sync_trim = a.sync_trim;
    dc.segment_transient_trim = a.transient_trim;
    dc.median_window = a.median_window;
    dc.split_fraction = a.split;

    const bool staircase_given = !std::isnan(a.amp_start) && !std::isnan(a.amp_step) &&
                                 !std::isnan(a.amp_end) && !std::isnan(a.dwell);
    if (staircase_given) {
        dc.schedule.kind = invsysid::SegmentationRule::Kind::staircase;
        dc.schedule.amp_start = a.amp_start;
        dc.schedule.amp_step = a.amp_step;
        dc.schedule.amp_end = a.amp_end;
        dc.schedule.dwell = a.dwell;
    } else {
        dc.schedule.kind = invsysid::SegmentationRule::Kind::level_channel;
    }

    const auto series = invsysid::load_csv(a.data, dc);

    std::optional<invsysid::GsfFixture> fixture;
    std::optional<invsysid::RegionScheme> scheme;
    if (!a.curve.empty()) {
        fixture = resolve_curve(a.curve);
        scheme = fixture->scheme();
    }

    const auto segments =
        invsysid::preprocess(series, dc, scheme ? &*scheme : nullptr);
    for (const auto& w : segments.warnings) std::cerr << "warning: " << w << "\n";

    invsysid::PartitionOptions po;
    po.orders = parse_orders(a.orders);
    po.selector = invsysid::selector_from_string(a.selector);
    po.estimate.svf_bandwidth_hz = a.svf_bandwidth;
    po.jobs = a.jobs;
    po.threshold = a.threshold;
    po.resolution = a.resolution;

    invsysid::PartitionedModel model;
    if (a.partition == "fixed") {
        if (!scheme)
            throw invsysid::param_error("fixed partition needs --curve for the scheme");
        model = invsysid::fit_fixed(*scheme, segments, po);
    } else if (a.partition == "adaptive") {
        double lo, hi;
        if (!a.span.empty()) {
            std::tie(lo, hi) = parse_pair(a.span, "--span");
        } else if (fixture) {
            lo = fixture->curve.span_lo();
            hi = fixture->curve.span_hi();
        } else {
            lo = segments.segments.front().level;
            hi = segments.segments.front().level;
            for (const auto& s : segments.segments) {
                lo = std::min(lo, s.level);
                hi = std::max(hi, s.level);
            }
        }
        model = invsysid::fit_adaptive(segments, lo, hi, po);
    } else {
        throw invsysid::param_error("--partition must be 'fixed' or 'adaptive'");
    }
    if (fixture) model.kind = fixture->curve.kind;
    model.voltage_base = dc.voltage_base;
    model.frequency_base = dc.frequency_base;
    for (const auto& w : model.warnings) std::cerr << "warning: " << w << "\n";

    invsysid::save_model_file(model, a.output);

    json settings;
    settings["data"] = a.data;
    settings["curve"] = a.curve;
    settings["partition"] = a.partition;
    settings["threshold"] = a.threshold;
    settings["resolution"] = a.resolution;
    settings["orders"] = a.orders;
    settings["selector"] = a.selector;
    settings["split"] = a.split;
    settings["sync_trim"] = a.sync_trim;
    settings["transient_trim"] = a.transient_trim;
    settings["median_window"] = a.median_window;
    settings["input_unit"] = a.input_unit;
    settings["svf_bandwidth"] = a.svf_bandwidth;
    settings["output"] = a.output;
    write_manifest(a.output, "fit", settings);

    if (!a.report.empty()) {
        json rep;
        rep["ranges"] = json::array();
        for (const auto& r : model.ranges) {
            json rj;
            rj["label"] = r.label;
            rj["lo"] = r.lo;
            rj["hi"] = r.hi;
            rj["hole"] = r.hole;
            if (r.fit) {
                rj["fitpercent"] = r.fit->fitpercent;
                rj["np"] = r.fit->np;
                rj["nz"] = r.fit->nz;
                rj["afpe"] = r.fit->afpe;
                rj["aicc"] = r.fit->aicc;
                rj["bic"] = r.fit->bic;
                rj["adj_r2"] = r.fit->adj_r2;
            }
            rep["ranges"].push_back(std::move(rj));
        }
        std::ofstream out(a.report, std::ios::binary);
        if (!out) throw invsysid::data_error("cannot write report '" + a.report + "'");
        out << rep.dump(2) << "\n";
    }

    std::cout << "fit: " << model.ranges.size() << " range(s) -> " << a.output << "\n";
    for (const auto& r : model.ranges) {
        std::cout << "  " << r.label << " [" << r.lo << ", " << r.hi << ")";
        if (r.fit)
            std::cout << " np=" << r.fit->np << " nz=" << r.fit->nz
                      << " fit=" << r.fit->fitpercent << "%";
        else
            std::cout << " (no model)";
        std::cout << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

struct ValidateArgs {
    std::string model;
    std::string step;
    std::string data;
    std::string oracle;
    double pre = 1.0;
    double post = 3.0;
    double fs = 1000.0;
    std::string col_time = "time";
    std::string col_input = "excitation";
    std::string col_output = "current";
    std::string input_unit = "pu";
    std::uint64_t seed = 0;
    std::string output = "validate.csv";
    std::string report;
};

int run_validate(ValidateArgs a) {
    apply_config("model", a.model);
    apply_config("step", a.step);
    apply_config("data", a.data);
    apply_config("oracle", a.oracle);
    apply_config("pre", a.pre);
    apply_config("post", a.post);
    apply_config("fs", a.fs);
    apply_config("seed", a.seed);
    apply_config("output", a.output);
    apply_config("report", a.report);

    if (a.model.empty()) throw invsysid::param_error("validate needs --model");
    const auto model = invsysid::load_model_file(a.model);
    json rep;
    rep["model"] = a.model;

    if (!a.step.empty()) {
        const auto [from, to] = parse_pair(a.step, "--step");
        for (double v : {from, to}) {
            if (v < model.span_lo() || v > model.span_hi()) {
                std::ostringstream os;
                os << "step level " << v << " outside model span [" << model.span_lo()
                   << ", " << model.span_hi() << "]";
                throw invsysid::model_error(os.str());
            }
        }
        invsysid::SampledSeries input;
        input.dt = 1.0 / a.fs;
        auto& time = input.add("time", "s");
        auto& exc = input.add("excitation", "p.u.");
        const auto n_pre = static_cast<std::size_t>(std::llround(a.pre * a.fs));
        const auto n_post = static_cast<std::size_t>(std::llround(a.post * a.fs));
        for (std::size_t k = 0; k < n_pre + n_post; ++k) {
            time.push_back(static_cast<double>(k) * input.dt);
            exc.push_back(k < n_pre ? from : to);
        }

        auto response = invsysid::respond(model, input);
        invsysid::SampledSeries out;
        out.dt = input.dt;
        out.add("time", "s") = time;
        out.add("excitation", "p.u.") = exc;
        out.add("model_output", "A") = response.channel("output");

        if (!a.oracle.empty()) {
            auto plant = invsysid::load_plant_file(a.oracle);
            plant.seed = a.seed;
            const auto truth = invsysid::simulate(plant, input);
            out.add("oracle_output", "A") = truth.channel("current");
            const auto fm = invsysid::fitpercent(truth.channel("current"),
                                                 response.channel("output"));
            rep["fitpercent"] = fm.fitpercent;
            rep["nrmse"] = fm.nrmse;
            std::cout << "validate step " << a.step << ": fitpercent vs oracle = "
                      << fm.fitpercent << "%\n";
        } else {
            std::cout << "validate step " << a.step << ": wrote response\n";
        }
        invsysid::write_csv(out, a.output);
        rep["step"] = a.step;
    } else if (!a.data.empty()) {
        invsysid::DatasetConfig dc;
        dc.time_col = a.col_time;
        dc.input_col = a.col_input;
        dc.output_col = a.col_output;
        dc.input_unit = invsysid::input_unit_from_string(a.input_unit);
        dc.voltage_base = model.voltage_base;
        dc.frequency_base = model.frequency_base;
        dc.sync_trim = 0;
        const auto series = invsysid::load_csv(a.data, dc);
        const auto& u = series.channel("input");
        const auto& y = series.channel("output");
        for (double v : u) {
            if (v < model.span_lo() || v > model.span_hi()) {
                std::ostringstream os;
                os << "data level " << v << " not covered by model span ["
                   << model.span_lo() << ", " << model.span_hi() << "]";
                throw invsysid::model_error(os.str());
            }
        }
        invsysid::SampledSeries input;
        input.dt = series.dt;
        input.t0 = series.t0;
        input.add("time", "s") = series.channel("time");
        input.add("excitation", "p.u.") = u;
        if (series.has("amplitude_level"))
            input.add("amplitude_level", "p.u.") = series.channel("amplitude_level");
        const auto response = invsysid::respond(model, input);
        const auto& y_hat = response.channel("output");

        rep["per_range"] = json::array();
        std::cout << "validate data " << a.data << ":\n";
        for (std::size_t i = 0; i < model.ranges.size(); ++i) {
            const auto& r = model.ranges[i];
            std::vector<double> ym, yh;
            const auto& lvl = series.has("amplitude_level")
                                  ? series.channel("amplitude_level")
                                  : u;
            for (std::size_t k = 0; k < u.size(); ++k) {
                if (model.index_at(std::clamp(lvl[k], model.span_lo(), model.span_hi())) == i) {
                    ym.push_back(y[k]);
                    yh.push_back(y_hat[k]);
                }
            }
            json rj;
            rj["label"] = r.label;
            rj["lo"] = r.lo;
            rj["hi"] = r.hi;
            rj["n_samples"] = ym.size();
            if (ym.size() >= 2) {
                try {
                    const auto fm = invsysid::fitpercent(ym, yh);
                    rj["fitpercent"] = fm.fitpercent;
                    std::cout << "  " << r.label << ": fitpercent = " << fm.fitpercent
                              << "% over " << ym.size() << " samples\n";
                } catch (const invsysid::domain_error&) {
                    rj["fitpercent"] = nullptr;  // constant output in this range
                }
            }
            rep["per_range"].push_back(std::move(rj));
        }

        invsysid::SampledSeries out;
        out.dt = series.dt;
        out.t0 = series.t0;
        out.add("time", "s") = series.channel("time");
        out.add("excitation", "p.u.") = u;
        out.add("measured", "A") = y;
        out.add("model_output", "A") = y_hat;
        invsysid::write_csv(out, a.output);
    } else {
        throw invsysid::param_error("validate needs --step or --data");
    }

    json settings;
    settings["model"] = a.model;
    settings["step"] = a.step;
    settings["data"] = a.data;
    settings["oracle"] = a.oracle;
    settings["pre"] = a.pre;
    settings["post"] = a.post;
    settings["fs"] = a.fs;
    settings["seed"] = a.seed;
    settings["output"] = a.output;
    write_manifest(a.output, "validate", settings);

    if (!a.report.empty()) {
        std::ofstream out(a.report, std::ios::binary);
        if (!out) throw invsysid::data_error("cannot write report '" + a.report + "'");
        out << rep.dump(2) << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data-driven partitioned modeling of grid-tied smart inverters"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand
    std::string config_path;
    app.add_option("--config", config_path,
                   "JSON config file; its values override command-line flags");

    SignalArgs sig;
    PlantArgs pl;
    FitArgs fit;
    ValidateArgs val;

    auto* signal = app.add_subcommand("signal", "Probing-signal utilities");
    signal->require_subcommand(1);
    auto* gen = signal->add_subcommand("gen", "Generate a probing waveform CSV");
    gen->add_option("--kind", sig.kind, "sine | square | sine-chirp | square-chirp");
    gen->add_option("--f0", sig.spec.f0, "Sweep start frequency [Hz]")->required();
    gen->add_option("--f1", sig.spec.f1, "Sweep end frequency [Hz]")->required();
    gen->add_option("--sweep", sig.spec.sweep_time, "Chirp sweep time [s]")->required();
    gen->add_option("--amp-start", sig.spec.amp_start, "First staircase level [p.u.]")
        ->required();
    gen->add_option("--amp-step", sig.spec.amp_step, "Staircase increment [p.u.]")
        ->required();
    gen->add_option("--amp-end", sig.spec.amp_end, "Last staircase level [p.u.]")
        ->required();
    gen->add_option("--dwell", sig.spec.dwell, "Seconds per level")->required();
    gen->add_option("--fs", sig.spec.fs, "Sample rate [Hz]")->required();
    gen->add_option("--depth", sig.depth, "Peak deviation around the level [p.u.]");
    gen->add_option("--bias", sig.bias, "Fixed oscillation center [p.u.]");
    gen->add_option("--lambda", sig.spec.lambda, "Reported rate-of-increase (informational)");
    gen->add_option("-o,--output", sig.output, "Output CSV path");

    auto* plant = app.add_subcommand("plant", "Surrogate plant");
    plant->require_subcommand(1);
    auto* simulate = plant->add_subcommand("simulate", "Run the surrogate plant on a CSV");
    simulate->add_option("--fixture", pl.fixture, "Published TF label (R1,R2,R4a,R4b,R5)");
    simulate->add_option("--spec", pl.spec_file, "Plant spec JSON (piecewise or single)");
    simulate->add_option("--input", pl.input, "Excitation CSV")->required();
    simulate->add_option("--noise", pl.noise, "Output noise std [A]");
    simulate->add_option("--gain-scale", pl.gain_scale, "Output deviation scale");
    simulate->add_option("--seed", pl.seed, "Noise seed");
    simulate->add_option("-o,--output", pl.output, "Output CSV path");

    auto* fit_cmd = app.add_subcommand("fit", "Fit a partitioned model from a dataset");
    fit_cmd->add_option("--data", fit.data, "Dataset CSV")->required();
    fit_cmd->add_option("--curve", fit.curve, "GSF curve JSON path or builtin name");
    fit_cmd->add_option("--partition", fit.partition, "fixed | adaptive");
    fit_cmd->add_option("--threshold", fit.threshold, "Adaptive fitpercent threshold");
    fit_cmd->add_option("--resolution", fit.resolution, "Adaptive boundary grid [p.u.]");
    fit_cmd->add_option("--orders", fit.orders, "Pole sweep 'lo:hi' or single 'np,nz'");
    fit_cmd->add_option("--selector", fit.selector, "afpe | aicc | bic | fitpercent");
    fit_cmd->add_option("--span", fit.span, "Adaptive span 'lo:hi' [p.u.]");
    fit_cmd->add_option("--split", fit.split, "Train fraction (chronological)");
    fit_cmd->add_option("--sync-trim", fit.sync_trim, "Seconds dropped from the head");
    fit_cmd->add_option("--transient-trim", fit.transient_trim,
                        "Seconds dropped from each segment head");
    fit_cmd->add_option("--median-window", fit.median_window, "Moving-median window [samples]");
    fit_cmd->add_option("--input-unit", fit.input_unit, "pu | volt | hz");
    fit_cmd->add_option("--voltage-base", fit.voltage_base, "Volts per p.u.");
    fit_cmd->add_option("--frequency-base", fit.frequency_base, "Hz per p.u.");
    fit_cmd->add_option("--col-time", fit.col_time, "Time column name");
    fit_cmd->add_option("--col-input", fit.col_input, "Input column name");
    fit_cmd->add_option("--col-output", fit.col_output, "Output column name");
    fit_cmd->add_option("--amp-start", fit.amp_start, "Staircase start for segmentation");
    fit_cmd->add_option("--amp-step", fit.amp_step, "Staircase step for segmentation");
    fit_cmd->add_option("--amp-end", fit.amp_end, "Staircase end for segmentation");
    fit_cmd->add_option("--dwell", fit.dwell, "Staircase dwell for segmentation [s]");
    fit_cmd->add_option("--svf-bandwidth", fit.svf_bandwidth,
                        "State-variable-filter bandwidth [Hz]");
    fit_cmd->add_option("--jobs", fit.jobs, "Worker threads for the order sweep");
    fit_cmd->add_option("-o,--output", fit.output, "Model JSON path");
    fit_cmd->add_option("--report", fit.report, "Optional per-range report JSON");

    auto* val_cmd = app.add_subcommand("validate", "Validate a model file");
    val_cmd->add_option("--model", val.model, "Model JSON")->required();
    val_cmd->add_option("--step", val.step, "Step 'from:to' [p.u.]");
    val_cmd->add_option("--data", val.data, "Measured dataset CSV");
    val_cmd->add_option("--oracle", val.oracle, "Plant spec JSON used as ground truth");
    val_cmd->add_option("--pre", val.pre, "Seconds before the step");
    val_cmd->add_option("--post", val.post, "Seconds after the step");
    val_cmd->add_option("--fs", val.fs, "Step input sample rate [Hz]");
    val_cmd->add_option("--col-time", val.col_time, "Time column name");
    val_cmd->add_option("--col-input", val.col_input, "Input column name");
    val_cmd->add_option("--col-output", val.col_output, "Output column name");
    val_cmd->add_option("--input-unit", val.input_unit, "pu | volt | hz");
    val_cmd->add_option("--seed", val.seed, "Oracle noise seed");
    val_cmd->add_option("-o,--output", val.output, "Output CSV path");
    val_cmd->add_option("--report", val.report, "Report JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in)
                throw invsysid::data_error("cannot open config '" + config_path + "'");
            in >> g_config;
        }
        if (gen->parsed()) return run_signal_gen(sig);
        if (simulate->parsed()) return run_plant_simulate(pl);
        if (fit_cmd->parsed()) return run_fit(fit);
        if (val_cmd->parsed()) return run_validate(val);
        std::cerr << "no subcommand\n";
        return kExitUsage;
    } catch (const invsysid::param_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const invsysid::data_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const invsysid::model_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitModel;
    } catch (const invsysid::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDomain;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
