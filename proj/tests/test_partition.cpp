#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "invsysid/dataio.hpp"
#include "invsysid/errors.hpp"
#include "invsysid/partition.hpp"
#include "invsysid/plant.hpp"
#include "invsysid/probing.hpp"
#include "testutil.hpp"

using namespace invsysid;

namespace {

/// Table-I piecewise plant: the five published fixtures assigned to the five
/// regions in their published order, operating points at the region centers.
PlantSpec table1_plant() {
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
    return plant;
}

/// Full-span staircase probing through the piecewise plant, preprocessed.
SegmentedDataset table1_dataset(const PlantSpec& plant, double fs = 200.0,
                                double dwell = 2.0, double amp_step = 0.01,
                                const RegionScheme* scheme = nullptr) {
    ProbingSpec spec;
    spec.kind = Waveform::square_chirp;
    spec.f0 = 1.0;
    spec.f1 = 8.0;
    spec.sweep_time = dwell;
    spec.amp_start = 0.88;
    spec.amp_step = amp_step;
    spec.amp_end = 1.10;
    spec.dwell = dwell;
    spec.fs = fs;
    const auto input = generate(spec);
    const auto data = simulate(plant, input);

    DatasetConfig cfg;
    cfg.sync_trim = 0.0;
    cfg.segment_transient_trim = 0.25;
    cfg.median_window = 9;
    cfg.split_fraction = 0.7;
    cfg.schedule = staircase_rule(spec);
    return preprocess(data, cfg, scheme);
}

PartitionOptions quick_options() {
    PartitionOptions po;
    po.orders = {{2, 1}};
    po.jobs = 2;
    return po;
}

}  // namespace

TEST_CASE("fit_fixed: one model per active region, holes elsewhere") {
    const auto fixture = builtin_fixture("fsi_voltvar");
    const auto scheme = fixture.scheme();
    const auto plant = table1_plant();
    const auto data = table1_dataset(plant, 200.0, 2.0, 0.01, &scheme);

    const auto model = fit_fixed(scheme, data, quick_options());
    REQUIRE(model.ranges.size() == 5);
    CHECK(model.ranges[0].label == "R1");
    CHECK_FALSE(model.ranges[0].hole);
    CHECK_FALSE(model.ranges[1].hole);
    CHECK(model.ranges[2].hole);  // deactivated R3
    CHECK_FALSE(model.ranges[3].hole);
    CHECK_FALSE(model.ranges[4].hole);

    // Each fitted region recovers its own fixture's DC gain: the data in the
    // representative range came from that fixture alone.
    const auto& labels = paper_fixture_labels();
    for (std::size_t i : {std::size_t{0}, std::size_t{1}, std::size_t{3}, std::size_t{4}}) {
        CAPTURE(i);
        const double truth = paper_fixture(labels[i]).dc_gain();
        CHECK(model.ranges[i].tf->dc_gain() == doctest::Approx(truth).epsilon(0.05));
        CHECK(model.ranges[i].fit->fitpercent > 90.0);
    }

    // Ranges tile the full span.
    CHECK(model.span_lo() == doctest::Approx(0.88));
    CHECK(model.span_hi() == doctest::Approx(1.10));
}

TEST_CASE("fit_fixed: regions without data in the representative range are omitted") {
    const auto fixture = builtin_fixture("fsi_voltvar");
    const auto scheme = fixture.scheme();
    const auto plant = table1_plant();

    // Only two dwells, both inside R1: every other region lacks data.
    ProbingSpec spec;
    spec.kind = Waveform::square_chirp;
    spec.f0 = 1.0;
    spec.f1 = 8.0;
    spec.sweep_time = 2.0;
    spec.amp_start = 0.893;  // inside r12 = [0.8933..], representative of R1
    spec.amp_step = 0.004;
    spec.amp_end = 0.897;
    spec.dwell = 2.0;
    spec.fs = 200.0;
    const auto input = generate(spec);
    const auto sim = simulate(plant, input);
    DatasetConfig cfg;
    cfg.sync_trim = 0.0;
    cfg.segment_transient_trim = 0.25;
    cfg.median_window = 9;
    cfg.schedule = staircase_rule(spec);
    const auto data = preprocess(sim, cfg, &scheme);

    const auto model = fit_fixed(scheme, data, quick_options());
    CHECK_FALSE(model.ranges[0].hole);  // R1 fitted
    CHECK(model.ranges[1].hole);        // others omitted with warnings
    CHECK(model.ranges[3].hole);
    CHECK(!model.warnings.empty());
}

TEST_CASE("fit_fixed: all regions inactive is an error") {
    auto scheme = builtin_fixture("fsi_voltvar").scheme();
    for (auto& region : scheme.regions) region.active = false;
    const auto plant = table1_plant();
    const auto data = table1_dataset(plant);
    CHECK_THROWS_AS(fit_fixed(scheme, data, quick_options()), domain_error);
}

TEST_CASE("fit_adaptive: a single LTI plant over the span yields one range") {
    PlantSpec plant;
    plant.mode = PlantSpec::Mode::single_tf;
    plant.tf = paper_fixture("R1");
    plant.tf.input_mean = 1.0;
    const auto data = table1_dataset(plant, 200.0, 2.0, 0.02);

    PartitionOptions po = quick_options();
    po.threshold = 90.0;
    po.resolution = 0.01;
    const auto model = fit_adaptive(data, 0.88, 1.10, po);
    REQUIRE(model.ranges.size() == 1);
    CHECK(model.ranges[0].lo == 0.88);
    CHECK(model.ranges[0].hi == 1.10);
    CHECK(model.ranges[0].fit->fitpercent >= 90.0);
}

TEST_CASE("fit_adaptive recovers the Table-I boundaries within one step") {
    const auto plant = table1_plant();
    const auto data = table1_dataset(plant);

    PartitionOptions po = quick_options();
    po.threshold = 95.0;
    po.resolution = 0.01;
    const auto model = fit_adaptive(data, 0.88, 1.10, po);

    CHECK(model.ranges.size() <= 22);
    for (double truth : {0.92, 0.98, 1.02, 1.08}) {
        double best = 1e9;
        for (const auto& r : model.ranges) best = std::min(best, std::abs(r.lo - truth));
        CAPTURE(truth);
        CHECK(best <= 0.01 + 1e-9);
    }
    // Determinism: same data and options give the identical partition.
    const auto again = fit_adaptive(data, 0.88, 1.10, po);
    REQUIRE(again.ranges.size() == model.ranges.size());
    for (std::size_t i = 0; i < model.ranges.size(); ++i) {
        CHECK(again.ranges[i].lo == model.ranges[i].lo);
        CHECK(again.ranges[i].hi == model.ranges[i].hi);
    }
}

TEST_CASE("fit_adaptive: lowering the threshold never adds ranges") {
    const auto plant = table1_plant();
    const auto data = table1_dataset(plant);
    PartitionOptions po = quick_options();
    po.resolution = 0.01;
    po.threshold = 95.0;
    const auto strict = fit_adaptive(data, 0.88, 1.10, po);
    po.threshold = 80.0;
    const auto loose = fit_adaptive(data, 0.88, 1.10, po);
    CHECK(loose.ranges.size() <= strict.ranges.size());
}

TEST_CASE("fit_adaptive flags data holes") {
    const auto plant = table1_plant();
    // Data only over [0.88, 0.98): everything above is a coverage hole.
    ProbingSpec spec;
    spec.kind = Waveform::square_chirp;
    spec.f0 = 1.0;
    spec.f1 = 8.0;
    spec.sweep_time = 2.0;
    spec.amp_start = 0.88;
    spec.amp_step = 0.01;
    spec.amp_end = 0.97;
    spec.dwell = 2.0;
    spec.fs = 200.0;
    const auto input = generate(spec);
    const auto sim = simulate(plant, input);
    DatasetConfig cfg;
    cfg.sync_trim = 0.0;
    cfg.segment_transient_trim = 0.25;
    cfg.median_window = 9;
    cfg.schedule = staircase_rule(spec);
    const auto data = preprocess(sim, cfg);

    PartitionOptions po = quick_options();
    po.threshold = 95.0;
    const auto model = fit_adaptive(data, 0.88, 1.10, po);
    bool has_hole = false;
    for (const auto& r : model.ranges) has_hole = has_hole || r.hole;
    CHECK(has_hole);
    CHECK(!model.warnings.empty());
}

TEST_CASE("adjust_dc_gain recovers the irradiance scale") {
    const auto fixture = builtin_fixture("fsi_voltvar");
    const auto scheme = fixture.scheme();
    auto plant = table1_plant();
    const auto data = table1_dataset(plant, 200.0, 2.0, 0.01, &scheme);
    auto model = fit_fixed(scheme, data, quick_options());

    // Reference data at half irradiance.
    plant.gain_scale = 0.5;
    const auto reference = table1_dataset(plant, 200.0, 2.0, 0.01, &scheme);
    const auto adjusted = adjust_dc_gain(model, reference);
    for (const auto& r : adjusted.ranges) {
        if (!r.tf) continue;
        CAPTURE(r.label);
        CHECK(r.tf->dc_gain_adjust == doctest::Approx(0.5).epsilon(0.02));
    }

    // Idempotence: a second application reproduces alpha to 1e-9.
    const auto twice = adjust_dc_gain(adjusted, reference);
    for (std::size_t i = 0; i < twice.ranges.size(); ++i) {
        if (!twice.ranges[i].tf) continue;
        CHECK(std::abs(twice.ranges[i].tf->dc_gain_adjust -
                       adjusted.ranges[i].tf->dc_gain_adjust) < 1e-9);
    }

    // Reference at the training condition keeps alpha near one.
    plant.gain_scale = 1.0;
    const auto same = table1_dataset(plant, 200.0, 2.0, 0.01, &scheme);
    const auto neutral = adjust_dc_gain(model, same);
    for (const auto& r : neutral.ranges) {
        if (!r.tf) continue;
        CHECK(r.tf->dc_gain_adjust == doctest::Approx(1.0).epsilon(0.02));
    }
}

TEST_CASE("adjust_dc_gain is the 1-D least-squares solution") {
    // alpha = <y_ref, yhat> / <yhat, yhat>, checked against a hand build.
    PartitionedModel model;
    RangeModel r;
    r.label = "r1";
    r.lo = 0.9;
    r.hi = 1.1;
    ContinuousTF tf = paper_fixture("R1");
    tf.input_mean = 1.0;
    r.tf = tf;
    model.ranges.push_back(r);

    PlantSpec plant;
    plant.mode = PlantSpec::Mode::single_tf;
    plant.tf = tf;
    plant.gain_scale = 0.37;
    ProbingSpec spec;
    spec.kind = Waveform::square_chirp;
    spec.f0 = 1.0;
    spec.f1 = 8.0;
    spec.sweep_time = 3.0;
    spec.amp_start = spec.amp_end = 1.0;
    spec.amp_step = 0.02;
    spec.dwell = 3.0;
    spec.fs = 200.0;
    const auto sim = simulate(plant, generate(spec));
    DatasetConfig cfg;
    cfg.sync_trim = 0.0;
    cfg.segment_transient_trim = 0.25;
    cfg.median_window = 1;
    cfg.schedule = staircase_rule(spec);
    const auto reference = preprocess(sim, cfg);

    const auto adjusted = adjust_dc_gain(model, reference);
    CHECK(adjusted.ranges[0].tf->dc_gain_adjust == doctest::Approx(0.37).epsilon(0.01));
}

TEST_CASE("adjust_dc_gain without coverage is an error") {
    PartitionedModel model;
    RangeModel r;
    r.label = "r1";
    r.lo = 2.0;
    r.hi = 2.1;  // far away from any data
    r.tf = paper_fixture("R1");
    model.ranges.push_back(r);
    const auto plant = table1_plant();
    const auto data = table1_dataset(plant, 200.0, 2.0, 0.05);
    CHECK_THROWS_AS(adjust_dc_gain(model, data), domain_error);
}

namespace {

PartitionedModel manual_model() {
    const auto scheme = builtin_fixture("fsi_voltvar").scheme();
    const auto& labels = paper_fixture_labels();
    PartitionedModel model;
    model.resolution = 0.0;
    for (std::size_t i = 0; i < scheme.regions.size(); ++i) {
        RangeModel r;
        r.label = scheme.regions[i].label;
        r.lo = scheme.regions[i].lo;
        r.hi = scheme.regions[i].hi;
        ContinuousTF tf = paper_fixture(labels[i]);
        tf.input_mean = 0.5 * (r.lo + r.hi);
        tf.output_mean = 0.1 * static_cast<double>(i);
        r.tf = tf;
        FitReport rep;
        rep.np = 2;
        rep.nz = 1;
        rep.n_params = 4;
        rep.n_samples = 1000;
        rep.fitpercent = 99.0;
        r.fit = rep;
        model.ranges.push_back(std::move(r));
    }
    return model;
}

SampledSeries step_series(double from, double to, double fs, double pre, double post) {
    SampledSeries input;
    input.dt = 1.0 / fs;
    auto& t = input.add("time", "s");
    auto& e = input.add("excitation", "p.u.");
    const auto n_pre = static_cast<std::size_t>(pre * fs);
    const auto n_post = static_cast<std::size_t>(post * fs);
    for (std::size_t k = 0; k < n_pre + n_post; ++k) {
        t.push_back(static_cast<double>(k) * input.dt);
        e.push_back(k < n_pre ? from : to);
    }
    return input;
}

}  // namespace

TEST_CASE("respond: constant input holds the range operating point") {
    const auto model = manual_model();
    const auto input = step_series(0.95, 0.95, 500.0, 1.0, 1.0);
    const auto out = respond(model, input);
    const auto& tf = *model.ranges[1].tf;  // R2 owns 0.95
    const double expected = tf.output_mean + tf.dc_gain() * (0.95 - tf.input_mean);
    for (double v : out.channel("output")) CHECK(v == doctest::Approx(expected));
}

TEST_CASE("respond: a step inside one region matches that region's plant oracle") {
    const auto model = manual_model();
    // 0.89 -> 0.91 stays strictly inside R1.
    const auto input = step_series(0.89, 0.91, 500.0, 1.0, 2.0);
    const auto out = respond(model, input);

    PlantSpec oracle;
    oracle.mode = PlantSpec::Mode::single_tf;
    oracle.tf = *model.ranges[0].tf;
    const auto truth = simulate(oracle, input);
    const auto& y = out.channel("output");
    const auto& z = truth.channel("current");
    for (std::size_t k = 0; k < y.size(); ++k)
        CHECK(y[k] == doctest::Approx(z[k]).epsilon(1e-9));

    // Final value: G(0) * (to - input_mean) + output_mean, within 1%.
    const auto& tf = *model.ranges[0].tf;
    const double fv = tf.output_mean + tf.dc_gain() * (0.91 - tf.input_mean);
    CHECK(y.back() == doctest::Approx(fv).epsilon(0.01));
}

TEST_CASE("respond: crossing a coverage hole names it") {
    auto model = manual_model();
    model.ranges[2].tf.reset();  // R3 becomes a hole
    model.ranges[2].hole = true;
    const auto input = step_series(0.95, 1.00, 500.0, 0.5, 0.5);
    CHECK_THROWS_AS(respond(model, input), model_error);
    try {
        respond(model, input);
    } catch (const model_error& e) {
        CHECK(std::string(e.what()).find("R3") != std::string::npos);
    }
}

TEST_CASE("respond clamps levels outside the span and counts them") {
    const auto model = manual_model();
    auto input = step_series(0.89, 0.89, 200.0, 0.5, 0.5);
    input.channel("excitation")[10] = 0.5;  // below span
    const auto out = respond(model, input);
    CHECK(out.meta.at("clamped") == 1.0);
}

TEST_CASE("model files round-trip losslessly and deterministically") {
    const auto model = manual_model();
    save_model_file(model, "test_model_a.json");
    const auto loaded = load_model_file("test_model_a.json");
    REQUIRE(loaded.ranges.size() == model.ranges.size());
    for (std::size_t i = 0; i < model.ranges.size(); ++i) {
        CHECK(loaded.ranges[i].lo == model.ranges[i].lo);
        CHECK(loaded.ranges[i].hi == model.ranges[i].hi);
        CHECK(loaded.ranges[i].tf->num == model.ranges[i].tf->num);
        CHECK(loaded.ranges[i].tf->den == model.ranges[i].tf->den);
        CHECK(loaded.ranges[i].tf->input_mean == model.ranges[i].tf->input_mean);
    }
    save_model_file(loaded, "test_model_b.json");

    auto slurp = [](const char* path) {
        std::FILE* f = std::fopen(path, "rb");
        REQUIRE(f);
        std::string s;
        char buf[4096];
        std::size_t got;
        while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, got);
        std::fclose(f);
        return s;
    };
    CHECK(slurp("test_model_a.json") == slurp("test_model_b.json"));
    std::remove("test_model_a.json");
    std::remove("test_model_b.json");
}

TEST_CASE("model validation rejects broken tilings and grid violations") {
    auto model = manual_model();
    model.ranges[1].lo = 0.93;  // gap after R1
    CHECK_THROWS_AS(model.validate(), model_error);

    auto grid = manual_model();
    grid.resolution = 0.01;
    grid.ranges[0].hi = 0.9251;  // off the grid
    grid.ranges[1].lo = 0.9251;
    CHECK_THROWS_AS(grid.validate(), model_error);
}

TEST_CASE("index_at follows the closed-left rule") {
    const auto model = manual_model();
    CHECK(model.index_at(0.92) == 1);
    CHECK(model.index_at(0.9199999) == 0);
    CHECK(model.index_at(1.10) == 4);  // last range owns its right edge
    CHECK_THROWS_AS(model.index_at(1.2), model_error);
}
