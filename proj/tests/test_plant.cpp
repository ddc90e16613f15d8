#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "invsysid/errors.hpp"
#include "invsysid/gsf.hpp"
#include "invsysid/plant.hpp"
#include "invsysid/probing.hpp"
#include "testutil.hpp"

using namespace invsysid;

namespace {

SampledSeries constant_input(double level, double dt, std::size_t n) {
    SampledSeries s;
    s.dt = dt;
    auto& t = s.add("time", "s");
    auto& e = s.add("excitation", "p.u.");
    for (std::size_t k = 0; k < n; ++k) {
        t.push_back(static_cast<double>(k) * dt);
        e.push_back(level);
    }
    return s;
}

}  // namespace

TEST_CASE("published fixture coefficients are frozen") {
    const auto r1 = paper_fixture("R1");
    CHECK(r1.num == std::vector<double>{-511.5, 9.886e4});
    CHECK(r1.den == std::vector<double>{1.0, 121.8, 7098.0});
    const auto r5 = paper_fixture("R5");
    CHECK(r5.num == std::vector<double>{548.7, -1.193e5});
    CHECK(r5.den == std::vector<double>{1.0, 187.8, 1.187e4});
    CHECK_THROWS_AS(paper_fixture("R3"), domain_error);
    CHECK_THROWS_AS(paper_fixture("R9"), domain_error);
}

TEST_CASE("step of 0.01 p.u. through R1 settles at 0.01 * dc gain") {
    // Final-value theorem on the published coefficients:
    // 0.01 * 9.886e4 / 7098 = 0.13928... A
    PlantSpec plant;
    plant.mode = PlantSpec::Mode::single_tf;
    plant.tf = paper_fixture("R1");
    plant.tf.input_mean = 1.0;

    SampledSeries input = constant_input(1.0, 1e-3, 4000);
    auto& exc = input.channel("excitation");
    for (std::size_t k = 2000; k < exc.size(); ++k) exc[k] = 1.01;

    const auto out = simulate(plant, input);
    const auto& y = out.channel("current");
    CHECK(y.front() == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(y.back() == doctest::Approx(0.01 * 9.886e4 / 7098.0).epsilon(1e-3));
}

TEST_CASE("constant level with zero noise holds the operating point") {
    PlantSpec plant;
    plant.mode = PlantSpec::Mode::single_tf;
    plant.tf = paper_fixture("R2");
    plant.tf.input_mean = 0.95;
    plant.tf.output_mean = 3.0;
    const auto out = simulate(plant, constant_input(0.95, 1e-3, 1000));
    for (double v : out.channel("current")) CHECK(v == doctest::Approx(3.0));
}

TEST_CASE("same seed twice reproduces the noise exactly") {
    PlantSpec plant;
    plant.mode = PlantSpec::Mode::single_tf;
    plant.tf = paper_fixture("R1");
    plant.noise = 0.05;
    plant.seed = 42;
    const auto input = constant_input(1.0, 1e-3, 500);
    const auto a = simulate(plant, input);
    const auto b = simulate(plant, input);
    CHECK(a.channel("current") == b.channel("current"));

    plant.seed = 43;
    const auto c = simulate(plant, input);
    CHECK(a.channel("current") != c.channel("current"));
}

TEST_CASE("noise std is in the right ballpark") {
    PlantSpec plant;
    plant.mode = PlantSpec::Mode::single_tf;
    plant.tf = paper_fixture("R1");
    plant.tf.input_mean = 1.0;
    plant.noise = 0.1;
    plant.seed = 1;
    const auto out = simulate(plant, constant_input(1.0, 1e-3, 20000));
    CHECK(testutil::rms(out.channel("current")) == doctest::Approx(0.1).epsilon(0.05));
}

TEST_CASE("gain_scale multiplies the noiseless deviation exactly") {
    ProbingSpec spec;
    spec.kind = Waveform::square_chirp;
    spec.f0 = 1.0;
    spec.f1 = 8.0;
    spec.sweep_time = 3.0;
    spec.amp_start = spec.amp_end = 1.0;
    spec.amp_step = 0.02;
    spec.dwell = 3.0;
    spec.fs = 500.0;
    const auto input = generate(spec);

    PlantSpec plant;
    plant.mode = PlantSpec::Mode::single_tf;
    plant.tf = paper_fixture("R2");
    plant.tf.input_mean = 1.0;
    const auto base = simulate(plant, input);
    plant.gain_scale = 0.5;
    const auto scaled = simulate(plant, input);
    const auto& yb = base.channel("current");
    const auto& ys = scaled.channel("current");
    for (std::size_t k = 0; k < yb.size(); ++k)
        CHECK(ys[k] == doctest::Approx(0.5 * yb[k]).epsilon(1e-12));
}

TEST_CASE("piecewise plant switches dynamics with the level and re-equilibrates") {
    const auto scheme = builtin_fixture("fsi_voltvar").scheme();
    PlantSpec plant;
    plant.mode = PlantSpec::Mode::piecewise;
    const auto& labels = paper_fixture_labels();
    for (std::size_t i = 0; i < scheme.regions.size(); ++i) {
        PlantRange r;
        r.lo = scheme.regions[i].lo;
        r.hi = scheme.regions[i].hi;
        auto tf = paper_fixture(labels[i]);
        tf.input_mean = 0.5 * (r.lo + r.hi);
        r.tf = tf;
        plant.ranges.push_back(std::move(r));
    }

    // Constant-per-dwell staircase (zero depth): output must be constant at
    // each range's own operating point, with no transient at crossings.
    ProbingSpec spec;
    spec.kind = Waveform::square;
    spec.f0 = 1.0;
    spec.f1 = 1.0;
    spec.sweep_time = 1.0;
    spec.amp_start = 0.90;
    spec.amp_step = 0.06;
    spec.amp_end = 1.08;
    spec.dwell = 0.5;
    spec.fs = 1000.0;
    spec.depth = 0.0;
    const auto input = generate(spec);
    const auto out = simulate(plant, input);
    const auto& y = out.channel("current");
    const auto& lvl = input.channel("amplitude_level");
    const std::size_t per = 500;
    for (std::size_t d = 0; d < y.size() / per; ++d) {
        const double level = lvl[d * per];
        std::size_t idx = plant.ranges.size() - 1;
        for (std::size_t i = 0; i + 1 < plant.ranges.size(); ++i) {
            if (level < plant.ranges[i].hi) {
                idx = i;
                break;
            }
        }
        const double expected = plant.ranges[idx].tf->dc_gain() *
                                (level - plant.ranges[idx].tf->input_mean);
        for (std::size_t k = d * per; k < (d + 1) * per; ++k)
            CHECK(y[k] == doctest::Approx(expected).epsilon(1e-6));
    }
}

TEST_CASE("inputs outside the piecewise span are clamped and counted") {
    PlantSpec plant;
    plant.mode = PlantSpec::Mode::piecewise;
    PlantRange r;
    r.lo = 0.9;
    r.hi = 1.1;
    r.tf = paper_fixture("R1");
    plant.ranges.push_back(r);
    auto input = constant_input(1.0, 1e-3, 100);
    input.channel("excitation")[50] = 1.5;  // outside
    SampledSeries lvl_in = input;
    lvl_in.add("amplitude_level", "p.u.") = input.channel("excitation");
    const auto out = simulate(plant, lvl_in);
    CHECK(out.meta.at("clamped") == 1.0);
}

TEST_CASE("plant spec validation rejects unstable transfer functions") {
    PlantSpec plant;
    plant.mode = PlantSpec::Mode::single_tf;
    plant.tf.num = {1.0};
    plant.tf.den = {1.0, -2.0};
    CHECK_THROWS_AS(plant.validate(), param_error);
}

TEST_CASE("plant spec files round-trip") {
    PlantSpec plant;
    plant.mode = PlantSpec::Mode::piecewise;
    const auto scheme = builtin_fixture("fsi_voltvar").scheme();
    const auto& labels = paper_fixture_labels();
    for (std::size_t i = 0; i < scheme.regions.size(); ++i) {
        PlantRange r;
        r.lo = scheme.regions[i].lo;
        r.hi = scheme.regions[i].hi;
        r.tf = paper_fixture(labels[i]);
        plant.ranges.push_back(std::move(r));
    }
    plant.noise = 0.01;
    plant.seed = 9;
    const std::string path = "test_plant_roundtrip.json";
    save_plant_file(plant, path);
    const auto loaded = load_plant_file(path);
    CHECK(loaded.mode == PlantSpec::Mode::piecewise);
    REQUIRE(loaded.ranges.size() == plant.ranges.size());
    for (std::size_t i = 0; i < plant.ranges.size(); ++i) {
        CHECK(loaded.ranges[i].lo == plant.ranges[i].lo);
        CHECK(loaded.ranges[i].tf->num == plant.ranges[i].tf->num);
        CHECK(loaded.ranges[i].tf->den == plant.ranges[i].tf->den);
    }
    CHECK(loaded.noise == 0.01);
    CHECK(loaded.seed == 9);
    std::remove(path.c_str());
}
