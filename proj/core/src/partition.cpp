#include "invsysid/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "invsysid/errors.hpp"

namespace invsysid {

std::size_t PartitionedModel::index_at(double level) const {
    if (ranges.empty()) throw model_error("partitioned model has no ranges");
    if (level < span_lo() || level > span_hi()) {
        std::ostringstream os;
        os << "level " << level << " outside model span [" << span_lo() << ", "
           << span_hi() << "]";
        throw model_error(os.str());
    }
    std::size_t idx = ranges.size() - 1;
    for (std::size_t i = 0; i + 1 < ranges.size(); ++i) {
        if (level < ranges[i].hi) {
            idx = i;
            break;
        }
    }
    return idx;
}

void PartitionedModel::validate() const {
    if (ranges.empty()) throw model_error("partitioned model has no ranges");
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        const auto& r = ranges[i];
        if (!(r.hi > r.lo)) throw model_error("model range " + r.label + " is empty");
        if (i > 0 && ranges[i - 1].hi != r.lo)
            throw model_error("model ranges do not tile the span at " + r.label);
        if (!r.hole && !r.tf) throw model_error("range " + r.label + " has no model");
    }
    if (resolution > 0) {
        const double lo = span_lo();
        for (const auto& r : ranges) {
            const double steps = (r.hi - lo) / resolution;
            if (std::abs(steps - std::round(steps)) > 1e-6)
                throw model_error("boundary of " + r.label + " is off the resolution grid");
        }
        const auto max_ranges =
            static_cast<std::size_t>(std::round((span_hi() - lo) / resolution));
        if (ranges.size() > max_ranges)
            throw model_error("more ranges than the resolution permits");
    }
}

namespace {

struct SegmentRefs {
    std::vector<const LabeledSegment*> segments;

    std::vector<IoView> train_views() const {
        std::vector<IoView> v;
        v.reserve(segments.size());
        for (const auto* s : segments)
            v.push_back({s->train.channel("input"), s->train.channel("output")});
        return v;
    }
    std::vector<IoView> test_views() const {
        std::vector<IoView> v;
        v.reserve(segments.size());
        for (const auto* s : segments)
            v.push_back({s->test.channel("input"), s->test.channel("output")});
        return v;
    }
    void weighted_means(double& input_mean, double& output_mean) const {
        double wsum = 0.0, ui = 0.0, yo = 0.0;
        for (const auto* s : segments) {
            const double w = static_cast<double>(s->train.size() + s->test.size());
            wsum += w;
            ui += w * s->input_mean;
            yo += w * s->output_mean;
        }
        input_mean = wsum > 0 ? ui / wsum : 0.0;
        output_mean = wsum > 0 ? yo / wsum : 0.0;
    }
};

std::vector<std::pair<int, int>> orders_or_default(const PartitionOptions& options) {
    return options.orders.empty() ? default_orders() : options.orders;
}

/// Runs the order sweep over a set of segments and fills a RangeModel.
void fit_range(RangeModel& range, const SegmentRefs& refs, double dt,
               const PartitionOptions& options) {
    const auto orders = orders_or_default(options);
    const auto train = refs.train_views();
    const auto test = refs.test_views();
    SweepResult sweep = order_sweep(train, test, dt, orders, options.selector,
                                    options.estimate, options.jobs);
    const OrderFit& best = sweep.best_fit();
    range.tf = best.tf;
    range.fit = best.report;
    double im = 0.0, om = 0.0;
    refs.weighted_means(im, om);
    range.tf->input_mean = im;
    range.tf->output_mean = om;
    range.hole = false;
}

}  // namespace

PartitionedModel fit_fixed(const RegionScheme& scheme, const SegmentedDataset& data,
                           const PartitionOptions& options) {
    scheme.validate();
    PartitionedModel model;
    model.resolution = 0.0;
    std::ostringstream prov;
    prov << "fixed scheme, selector=" << to_string(options.selector);

    bool any = false;
    for (const auto& region : scheme.regions) {
        RangeModel range;
        range.label = region.label;
        range.lo = region.lo;
        range.hi = region.hi;
        range.hole = true;

        if (!region.active && !options.include_inactive) {
            model.warnings.push_back("region " + region.label +
                                     " deactivated; no model fitted");
            model.ranges.push_back(std::move(range));
            continue;
        }

        const std::size_t rep =
            options.representative >= 0
                ? std::min<std::size_t>(static_cast<std::size_t>(options.representative),
                                        region.ranges.size() - 1)
                : (region.ranges.size() - 1) / 2;  // middle range
        const Range& target = region.ranges[rep];

        SegmentRefs refs;
        for (const auto& seg : data.segments) {
            const bool last = &region == &scheme.regions.back() &&
                              &target == &region.ranges.back();
            if (seg.level >= target.lo && (seg.level < target.hi || (last && seg.level == target.hi)))
                refs.segments.push_back(&seg);
        }
        if (refs.segments.empty()) {
            model.warnings.push_back("region " + region.label + ": no data in range " +
                                     target.label + "; region omitted");
            model.ranges.push_back(std::move(range));
            continue;
        }
        try {
            fit_range(range, refs, data.dt, options);
            any = true;
        } catch (const error& e) {
            model.warnings.push_back("region " + region.label + ": " + e.what());
        }
        model.ranges.push_back(std::move(range));
    }
    if (!any) throw domain_error("fit_fixed: no region produced a model");
    prov << ", regions=" << scheme.regions.size();
    model.provenance = prov.str();
    model.validate();
    return model;
}

namespace {

struct AdaptiveContext {
    const SegmentedDataset* data = nullptr;
    const PartitionOptions* options = nullptr;
    double span_lo = 0.0;
    double span_hi = 0.0;
    std::vector<RangeModel> result;
    std::vector<std::string> warnings;

    double snap(double x) const {
        const double res = options->resolution;
        return span_lo + std::round((x - span_lo) / res) * res;
    }

    SegmentRefs collect(double lo, double hi) const {
        SegmentRefs refs;
        for (const auto& seg : data->segments) {
            const bool last = hi == span_hi;
            if (seg.level >= lo && (seg.level < hi || (last && seg.level == hi)))
                refs.segments.push_back(&seg);
        }
        return refs;
    }

    void emit(RangeModel range) {
        range.label = "r" + std::to_string(result.size() + 1);
        result.push_back(std::move(range));
    }

    void solve(double lo, double hi) {
        RangeModel range;
        range.lo = lo;
        range.hi = hi;
        range.hole = true;

        const SegmentRefs refs = collect(lo, hi);
        if (refs.segments.empty()) {
            std::ostringstream os;
            os << "no data in [" << lo << ", " << hi << "); accepted as coverage hole";
            warnings.push_back(os.str());
            emit(std::move(range));
            return;
        }

        const bool at_floor = hi - lo <= options->resolution * (1.0 + 1e-9);
        bool fitted = false;
        double held_out = -1e300;
        try {
            fit_range(range, refs, data->dt, *options);
            fitted = true;
            held_out = range.fit->fitpercent;
        } catch (const error& e) {
            std::ostringstream os;
            os << "interval [" << lo << ", " << hi << "): " << e.what();
            warnings.push_back(os.str());
        }

        if (fitted && held_out >= options->threshold) {
            emit(std::move(range));
            return;
        }
        if (at_floor) {
            // Resolution floor: keep whatever model we have, flagged by its fit.
            emit(std::move(range));
            return;
        }
        double mid = snap(0.5 * (lo + hi));
        if (mid <= lo || mid >= hi) {
            emit(std::move(range));
            return;
        }
        solve(lo, mid);
        solve(mid, hi);
    }
};

}  // namespace

PartitionedModel fit_adaptive(const SegmentedDataset& data, double lo, double hi,
                              const PartitionOptions& options) {
    if (!(hi > lo)) throw param_error("fit_adaptive: empty span");
    if (!(options.resolution > 0)) throw param_error("fit_adaptive: resolution must be > 0");
    if (hi - lo < options.resolution)
        throw param_error("fit_adaptive: span narrower than the resolution");
    if (!(options.threshold > 0.0 && options.threshold <= 100.0))
        throw param_error("fit_adaptive: threshold must be in (0, 100]");

    AdaptiveContext ctx;
    ctx.data = &data;
    ctx.options = &options;
    ctx.span_lo = lo;
    ctx.span_hi = hi;
    ctx.solve(lo, hi);

    PartitionedModel model;
    model.resolution = options.resolution;
    std::ostringstream prov;
    prov << "adaptive bisection, threshold=" << options.threshold
         << ", resolution=" << options.resolution
         << ", selector=" << to_string(options.selector);
    model.provenance = prov.str();
    model.ranges = std::move(ctx.result);
    model.warnings = std::move(ctx.warnings);
    model.validate();
    return model;
}

PartitionedModel adjust_dc_gain(PartitionedModel model, const SegmentedDataset& reference) {
    bool covered = false;
    for (auto& range : model.ranges) {
        if (!range.tf) continue;
        SegmentRefs refs;
        const bool last = &range == &model.ranges.back();
        for (const auto& seg : reference.segments) {
            if (seg.level >= range.lo &&
                (seg.level < range.hi || (last && seg.level == range.hi)))
                refs.segments.push_back(&seg);
        }
        if (refs.segments.empty()) continue;
        covered = true;

        // alpha = <y_ref, yhat> / <yhat, yhat> on the raw (unadjusted)
        // response, with transients and offsets projected out of both sides.
        ContinuousTF raw = *range.tf;
        raw.dc_gain_adjust = 1.0;
        std::vector<IoView> records;
        for (const auto* seg : refs.segments) {
            records.push_back({seg->train.channel("input"), seg->train.channel("output")});
            records.push_back({seg->test.channel("input"), seg->test.channel("output")});
        }
        try {
            range.tf->dc_gain_adjust = fit_output_gain(raw, records, reference.dt);
        } catch (const domain_error&) {
            model.warnings.push_back("range " + range.label +
                                     ": zero model response; DC-gain adjustment skipped");
        }
    }
    if (!covered)
        throw domain_error("adjust_dc_gain: reference data covers no model range");
    return model;
}

SampledSeries respond(const PartitionedModel& model, const SampledSeries& input,
                      bool reset_state) {
    model.validate();
    const auto& u = input.has("excitation") ? input.channel("excitation")
                   : input.has("input")     ? input.channel("input")
                                            : input.channel("excitation");
    const std::vector<double>& level =
        input.has("amplitude_level") ? input.channel("amplitude_level") : u;
    if (input.dt <= 0) throw param_error("respond: input series has no sample period");

    struct Sim {
        bool ready = false;
        Eigen::MatrixXd A;  // continuous realization, for derivative matching
        Eigen::VectorXd B;
        Eigen::MatrixXd Ad;
        Eigen::VectorXd Bd;
        Eigen::RowVectorXd C;
        double D = 0.0;
        double input_mean = 0.0, output_mean = 0.0, gain = 1.0;
        Eigen::FullPivLU<Eigen::MatrixXd> eq;
        bool eq_ok = false;
    };
    std::vector<Sim> sims(model.ranges.size());
    auto ensure_sim = [&](std::size_t i) -> Sim& {
        Sim& s = sims[i];
        if (s.ready) return s;
        const auto& range = model.ranges[i];
        if (range.hole || !range.tf) {
            std::ostringstream os;
            os << "respond: coverage hole " << range.label << " [" << range.lo << ", "
               << range.hi << ")";
            throw model_error(os.str());
        }
        const StateSpace ss = to_state_space(*range.tf);
        Eigen::MatrixXd Ad, Bd;
        zoh_discretize(ss.A, ss.B, input.dt, Ad, Bd);
        s.A = ss.A;
        s.B = ss.B;
        s.Ad = std::move(Ad);
        s.Bd = Bd.col(0);
        s.C = ss.C;
        s.D = ss.D;
        s.input_mean = range.tf->input_mean;
        s.output_mean = range.tf->output_mean;
        s.gain = range.tf->dc_gain_adjust;
        s.eq.compute(Eigen::MatrixXd::Identity(s.Ad.rows(), s.Ad.cols()) - s.Ad);
        s.eq_ok = s.eq.isInvertible();
        s.ready = true;
        return s;
    };
    auto equilibrium = [](const Sim& s, double ud) -> Eigen::VectorXd {
        if (!s.eq_ok) return Eigen::VectorXd::Zero(s.Ad.rows());
        return s.eq.solve(s.Bd * ud);
    };

    // Bumpless transfer: start the new range's state so the physical output
    // and its time derivatives continue the old range's trajectory (the input
    // is held at its current value for the derivative bookkeeping).
    auto carry_state = [&](const Sim& from, const Eigen::VectorXd& x_from, double u_prev,
                           const Sim& to, double u_new) -> Eigen::VectorXd {
        const auto n_new = to.A.rows();
        if (n_new == 0) return Eigen::VectorXd();
        const double ud_prev = u_prev - from.input_mean;
        const double ud_new = u_new - to.input_mean;

        Eigen::MatrixXd obs(n_new, n_new);
        Eigen::VectorXd rhs(n_new);
        // Row 0: output values match in physical units.
        obs.row(0) = to.gain * to.C;
        const double y_prev =
            from.output_mean +
            from.gain * ((from.A.rows() ? (from.C * x_from)(0) : 0.0) + from.D * ud_prev);
        rhs(0) = y_prev - to.output_mean - to.gain * to.D * ud_new;
        // Rows k >= 1: k-th output derivatives (with the input held constant).
        Eigen::RowVectorXd c_from = from.C;
        Eigen::RowVectorXd c_to = to.C;
        for (Eigen::Index k = 1; k < n_new; ++k) {
            double deriv = 0.0;
            if (from.A.rows() > 0) {
                deriv = from.gain * (c_from * (from.A * x_from + from.B * ud_prev))(0);
                c_from *= from.A;
            }
            rhs(k) = deriv - to.gain * (c_to * (to.B * ud_new))(0);
            obs.row(k) = to.gain * (c_to * to.A);
            c_to *= to.A;
        }
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(obs);
        if (!lu.isInvertible()) return equilibrium(to, ud_new);
        Eigen::VectorXd x0 = lu.solve(rhs);
        return x0.allFinite() ? x0 : equilibrium(to, ud_new);
    };

    SampledSeries out;
    out.t0 = input.t0;
    out.dt = input.dt;
    if (input.has("time")) out.add("time", "s") = input.channel("time");
    auto& y = out.add("output", "A");
    y.resize(u.size());

    std::size_t clamped = 0;
    auto locate = [&](double v) {
        double q = v;
        if (q < model.span_lo()) {
            q = model.span_lo();
            ++clamped;
        } else if (q > model.span_hi()) {
            q = model.span_hi();
            ++clamped;
        }
        return model.index_at(q);
    };

    if (u.empty()) return out;
    std::size_t current = locate(level[0]);
    ensure_sim(current);
    Eigen::VectorXd x = equilibrium(sims[current], u[0] - sims[current].input_mean);
    for (std::size_t k = 0; k < u.size(); ++k) {
        const std::size_t idx = locate(level[k]);
        if (idx != current) {
            const Sim& next = ensure_sim(idx);
            const Sim& prev = sims[current];
            if (!reset_state && k > 0) {
                x = carry_state(prev, x, u[k - 1], next, u[k]);
            } else {
                x = equilibrium(next, u[k] - next.input_mean);
            }
            current = idx;
        }
        const Sim& s = sims[current];
        const double ud = u[k] - s.input_mean;
        const double dev = s.Ad.rows() ? (s.C * x)(0) + s.D * ud : s.D * ud;
        y[k] = s.output_mean + s.gain * dev;
        if (s.Ad.rows()) x = s.Ad * x + s.Bd * ud;
    }
    out.meta["clamped"] = static_cast<double>(clamped);
    return out;
}

namespace {

nlohmann::json report_to_json(const FitReport& r) {
    nlohmann::json j;
    j["fitpercent"] = r.fitpercent;
    j["nrmse"] = r.nrmse;
    j["afpe"] = r.afpe;
    j["aicc"] = r.aicc;
    j["bic"] = r.bic;
    j["adj_r2"] = r.adj_r2;
    j["np"] = r.np;
    j["nz"] = r.nz;
    j["n_params"] = r.n_params;
    j["n_samples"] = r.n_samples;
    return j;
}

FitReport report_from_json(const nlohmann::json& j) {
    FitReport r;
    r.fitpercent = j.at("fitpercent").get<double>();
    r.nrmse = j.at("nrmse").get<double>();
    r.afpe = j.at("afpe").get<double>();
    r.aicc = j.at("aicc").get<double>();
    r.bic = j.at("bic").get<double>();
    r.adj_r2 = j.at("adj_r2").get<double>();
    r.np = j.at("np").get<int>();
    r.nz = j.at("nz").get<int>();
    r.n_params = j.at("n_params").get<int>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    return r;
}

}  // namespace

void save_model_file(const PartitionedModel& model, const std::string& path) {
    nlohmann::json j;
    j["version"] = 1;
    j["gsf"] = to_string(model.kind);
    j["resolution"] = model.resolution;
    j["voltage_base"] = model.voltage_base;
    j["frequency_base"] = model.frequency_base;
    j["provenance"] = model.provenance;
    nlohmann::json ranges = nlohmann::json::array();
    for (const auto& r : model.ranges) {
        nlohmann::json rj;
        rj["label"] = r.label;
        rj["lo"] = r.lo;
        rj["hi"] = r.hi;
        rj["hole"] = r.hole;
        if (r.tf) {
            rj["num"] = r.tf->num;
            rj["den"] = r.tf->den;
            rj["input_mean"] = r.tf->input_mean;
            rj["output_mean"] = r.tf->output_mean;
            rj["dc_gain_adjust"] = r.tf->dc_gain_adjust;
        }
        if (r.fit) rj["fit"] = report_to_json(*r.fit);
        ranges.push_back(std::move(rj));
    }
    j["ranges"] = std::move(ranges);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write model file '" + path + "'");
    out << j.dump(2) << "\n";
}

PartitionedModel load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open model file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("malformed model file '" + path + "': " + e.what());
    }
    PartitionedModel model;
    try {
        if (j.at("version").get<int>() != 1)
            throw data_error("model file '" + path + "': unsupported version");
        model.kind = gsf_kind_from_string(j.at("gsf").get<std::string>());
        model.resolution = j.at("resolution").get<double>();
        model.voltage_base = j.value("voltage_base", 169.7056);
        model.frequency_base = j.value("frequency_base", 60.0);
        model.provenance = j.value("provenance", "");
        for (const auto& rj : j.at("ranges")) {
            RangeModel r;
            r.label = rj.at("label").get<std::string>();
            r.lo = rj.at("lo").get<double>();
            r.hi = rj.at("hi").get<double>();
            r.hole = rj.value("hole", false);
            if (rj.contains("num")) {
                ContinuousTF tf;
                tf.num = rj.at("num").get<std::vector<double>>();
                tf.den = rj.at("den").get<std::vector<double>>();
                tf.input_mean = rj.value("input_mean", 0.0);
                tf.output_mean = rj.value("output_mean", 0.0);
                tf.dc_gain_adjust = rj.value("dc_gain_adjust", 1.0);
                r.tf = std::move(tf);
            }
            if (rj.contains("fit")) r.fit = report_from_json(rj["fit"]);
            model.ranges.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw data_error("model file '" + path + "' missing field: " + e.what());
    }
    model.validate();
    return model;
}

}  // namespace invsysid
