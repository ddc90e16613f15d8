#include "invsysid/plant.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "invsysid/errors.hpp"

namespace invsysid {

double NoiseStream::next_gaussian() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // 53-bit uniforms straight from the engine keep the stream portable.
    const double u1 = 1.0 - static_cast<double>(engine_() >> 11) * 0x1.0p-53;  // (0,1]
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;        // [0,1)
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

void PlantSpec::validate() const {
    auto check_tf = [](const ContinuousTF& f, const std::string& where) {
        f.validate();
        if (!f.stable())
            throw param_error("plant spec: unstable transfer function in " + where);
    };
    if (mode == Mode::single_tf) {
        check_tf(tf, "single_tf");
    } else {
        if (ranges.empty()) throw param_error("piecewise plant has no ranges");
        for (std::size_t i = 0; i < ranges.size(); ++i) {
            const auto& r = ranges[i];
            if (!(r.hi > r.lo)) throw param_error("piecewise plant: empty range");
            if (i > 0 && ranges[i - 1].hi != r.lo)
                throw param_error("piecewise plant: ranges must tile without gaps");
            if (r.tf) check_tf(*r.tf, "range " + std::to_string(i));
        }
    }
    if (noise < 0) throw param_error("plant spec: noise std must be >= 0");
}

ContinuousTF paper_fixture(const std::string& region) {
    ContinuousTF tf;
    if (region == "R1") {
        tf.num = {-511.5, 9.886e4};
        tf.den = {1.0, 121.8, 7098.0};
    } else if (region == "R2") {
        tf.num = {-1667.0, 9.49e4};
        tf.den = {1.0, 31.84, 456.3};
    } else if (region == "R4a") {
        tf.num = {-139.5, 402.4};
        tf.den = {1.0, 110.2, 1785.0};
    } else if (region == "R4b") {
        tf.num = {-2017.0, 1.054e5};
        tf.den = {1.0, 32.55, 484.9};
    } else if (region == "R5") {
        tf.num = {548.7, -1.193e5};
        tf.den = {1.0, 187.8, 1.187e4};
    } else if (region == "R3") {
        throw domain_error("region R3 deactivated: no published transfer function");
    } else {
        throw domain_error("unknown fixture region '" + region + "'");
    }
    return tf;
}

const std::vector<std::string>& paper_fixture_labels() {
    static const std::vector<std::string> labels = {"R1", "R2", "R4a", "R4b", "R5"};
    return labels;
}

namespace {

struct RangeSim {
    bool active = false;
    Eigen::MatrixXd Ad, Bd;
    Eigen::RowVectorXd C;
    double D = 0.0;
    double input_mean = 0.0;
    double output_mean = 0.0;
    double gain = 1.0;  // dc_gain_adjust
    Eigen::FullPivLU<Eigen::MatrixXd> eq_solver;  // (I - Ad) for equilibrium init
    bool eq_ok = false;
};

RangeSim make_range_sim(const ContinuousTF& tf, double dt) {
    RangeSim rs;
    rs.active = true;
    const StateSpace ss = to_state_space(tf);
    zoh_discretize(ss.A, ss.B, dt, rs.Ad, rs.Bd);
    rs.C = ss.C;
    rs.D = ss.D;
    rs.input_mean = tf.input_mean;
    rs.output_mean = tf.output_mean;
    rs.gain = tf.dc_gain_adjust;
    Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(rs.Ad.rows(), rs.Ad.cols());
    rs.eq_solver.compute(eye - rs.Ad);
    rs.eq_ok = rs.eq_solver.isInvertible();
    return rs;
}

Eigen::VectorXd equilibrium_state(const RangeSim& rs, double u_dev) {
    if (rs.Ad.rows() == 0) return Eigen::VectorXd();
    if (!rs.eq_ok) return Eigen::VectorXd::Zero(rs.Ad.rows());
    return rs.eq_solver.solve(rs.Bd * u_dev);
}

}  // namespace

SampledSeries simulate(const PlantSpec& plant, const SampledSeries& input) {
    plant.validate();
    const auto& u = input.channel("excitation");
    const std::vector<double>& level =
        input.has("amplitude_level") ? input.channel("amplitude_level") : u;
    if (input.dt <= 0) throw param_error("plant input series has no sample period");

    SampledSeries out;
    out.t0 = input.t0;
    out.dt = input.dt;
    for (std::size_t i = 0; i < input.names.size(); ++i) {
        out.add(input.names[i], input.units[i]) = input.columns[i];
    }
    auto& y = out.add("current", "A");
    y.resize(u.size());

    NoiseStream noise(plant.seed);
    std::size_t clamped = 0;

    if (plant.mode == PlantSpec::Mode::single_tf) {
        RangeSim rs = make_range_sim(plant.tf, input.dt);
        Eigen::VectorXd x = equilibrium_state(rs, u.empty() ? 0.0 : u[0] - rs.input_mean);
        for (std::size_t k = 0; k < u.size(); ++k) {
            const double ud = u[k] - rs.input_mean;
            const double dev = rs.Ad.rows() ? (rs.C * x)(0) + rs.D * ud : rs.D * ud;
            y[k] = rs.output_mean + plant.gain_scale * rs.gain * dev +
                   (plant.noise > 0 ? plant.noise * noise.next_gaussian() : 0.0);
            if (rs.Ad.rows()) x = rs.Ad * x + rs.Bd * ud;
        }
        out.meta["clamped"] = 0.0;
        return out;
    }

    // Piecewise: pick the range from the slow amplitude level; reset the state
    // to the new range's equilibrium at every crossing.
    std::vector<RangeSim> sims(plant.ranges.size());
    for (std::size_t i = 0; i < plant.ranges.size(); ++i) {
        if (plant.ranges[i].tf) sims[i] = make_range_sim(*plant.ranges[i].tf, input.dt);
    }
    const double lo = plant.ranges.front().lo;
    const double hi = plant.ranges.back().hi;

    auto locate = [&](double v) -> std::size_t {
        if (v < lo || v > hi) ++clamped;
        std::size_t idx = plant.ranges.size() - 1;
        for (std::size_t i = 0; i + 1 < plant.ranges.size(); ++i) {
            if (v < plant.ranges[i].hi) {
                idx = i;
                break;
            }
        }
        return idx;
    };

    std::size_t current = u.empty() ? 0 : locate(level[0]);
    Eigen::VectorXd x;
    if (!u.empty() && sims[current].active)
        x = equilibrium_state(sims[current], u[0] - sims[current].input_mean);

    for (std::size_t k = 0; k < u.size(); ++k) {
        const std::size_t idx = locate(level[k]);
        if (idx != current) {
            current = idx;
            if (sims[current].active)
                x = equilibrium_state(sims[current], u[k] - sims[current].input_mean);
        }
        const RangeSim& rs = sims[current];
        const double w = plant.noise > 0 ? plant.noise * noise.next_gaussian() : 0.0;
        if (!rs.active) {
            y[k] = w;  // inactive range: no response beyond the operating point
            continue;
        }
        const double ud = u[k] - rs.input_mean;
        const double dev = rs.Ad.rows() ? (rs.C * x)(0) + rs.D * ud : rs.D * ud;
        y[k] = rs.output_mean + plant.gain_scale * rs.gain * dev + w;
        if (rs.Ad.rows()) x = rs.Ad * x + rs.Bd * ud;
    }
    out.meta["clamped"] = static_cast<double>(clamped);
    return out;
}

namespace {

ContinuousTF tf_from_json(const nlohmann::json& j) {
    if (j.is_string()) return paper_fixture(j.get<std::string>());
    ContinuousTF tf;
    tf.num = j.at("num").get<std::vector<double>>();
    tf.den = j.at("den").get<std::vector<double>>();
    tf.input_mean = j.value("input_mean", 0.0);
    tf.output_mean = j.value("output_mean", 0.0);
    tf.dc_gain_adjust = j.value("dc_gain_adjust", 1.0);
    return tf;
}

nlohmann::json tf_to_json(const ContinuousTF& tf) {
    nlohmann::json j;
    j["num"] = tf.num;
    j["den"] = tf.den;
    j["input_mean"] = tf.input_mean;
    j["output_mean"] = tf.output_mean;
    j["dc_gain_adjust"] = tf.dc_gain_adjust;
    return j;
}

}  // namespace

PlantSpec load_plant_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open plant spec file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("malformed plant spec '" + path + "': " + e.what());
    }
    PlantSpec plant;
    try {
        const std::string mode = j.value("mode", "single_tf");
        plant.gain_scale = j.value("gain_scale", 1.0);
        plant.noise = j.value("noise", 0.0);
        plant.seed = j.value("seed", std::uint64_t{0});
        if (mode == "single_tf") {
            plant.mode = PlantSpec::Mode::single_tf;
            if (j.contains("fixture"))
                plant.tf = paper_fixture(j["fixture"].get<std::string>());
            else
                plant.tf = tf_from_json(j.at("tf"));
        } else if (mode == "piecewise") {
            plant.mode = PlantSpec::Mode::piecewise;
            for (const auto& rj : j.at("ranges")) {
                PlantRange r;
                r.lo = rj.at("lo").get<double>();
                r.hi = rj.at("hi").get<double>();
                if (rj.contains("fixture"))
                    r.tf = paper_fixture(rj["fixture"].get<std::string>());
                else if (rj.contains("tf"))
                    r.tf = tf_from_json(rj["tf"]);
                plant.ranges.push_back(std::move(r));
            }
        } else {
            throw data_error("plant spec '" + path + "': unknown mode '" + mode + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw data_error("plant spec '" + path + "' missing field: " + e.what());
    }
    plant.validate();
    return plant;
}

void save_plant_file(const PlantSpec& plant, const std::string& path) {
    nlohmann::json j;
    j["gain_scale"] = plant.gain_scale;
    j["noise"] = plant.noise;
    j["seed"] = plant.seed;
    if (plant.mode == PlantSpec::Mode::single_tf) {
        j["mode"] = "single_tf";
        j["tf"] = tf_to_json(plant.tf);
    } else {
        j["mode"] = "piecewise";
        nlohmann::json ranges = nlohmann::json::array();
        for (const auto& r : plant.ranges) {
            nlohmann::json rj;
            rj["lo"] = r.lo;
            rj["hi"] = r.hi;
            if (r.tf) rj["tf"] = tf_to_json(*r.tf);
            ranges.push_back(std::move(rj));
        }
        j["ranges"] = std::move(ranges);
    }
    std::ofstream out(path);
    if (!out) throw data_error("cannot write plant spec file '" + path + "'");
    out << j.dump(2) << "\n";
}

}  // namespace invsysid
