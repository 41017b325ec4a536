#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "cavtrack/detector.hpp"
#include "oracles.hpp"

using namespace cavtrack;
using Catch::Approx;

namespace {
const CavityGeometry kGeom{29e-6, 780e-9, 120e-6};

struct Setup {
    SystemParams params;
    ModeSet set = ModeSet::canonical(kGeom);
    std::vector<CMatrix> overlaps = sector_overlap_matrices(set, 16);
};

TrajectoryRecord static_record(const FieldState& field, double t_end, double dt_sample) {
    TrajectoryRecord rec;
    const auto n = static_cast<std::size_t>(std::lround(t_end / dt_sample));
    for (std::size_t i = 0; i <= n; ++i) {
        rec.times.push_back(i * dt_sample);
        rec.states.push_back({{0.0, 0.0}, {0.0, 0.0}});
        rec.fields.push_back(field);
    }
    return rec;
}
}  // namespace

TEST_CASE("sector rates: empty cavity splits evenly, dark field gives zero") {
    Setup s;
    DetectorConfig cfg;
    const auto empty = empty_cavity(s.params, s.set);
    const auto rates = sector_rates(empty, s.overlaps, cfg);
    REQUIRE(rates.size() == 16);
    const double photon = std::norm(empty.alpha[0]);
    for (double r : rates) CHECK(r == Approx(2.0 * photon / 16.0).epsilon(1e-9));

    FieldState dark;
    dark.alpha.assign(3, Complex(0.0));
    for (double r : sector_rates(dark, s.overlaps, cfg)) CHECK(r == 0.0);
}

TEST_CASE("flux conservation and exact opposing-sector symmetry") {
    Setup s;
    DetectorConfig cfg;
    cfg.efficiency = 0.8;
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        FieldState field;
        field.alpha = {Complex(4.0 * rng.uniform() - 2.0, 4.0 * rng.uniform() - 2.0),
                       Complex(rng.uniform() - 0.5, rng.uniform() - 0.5),
                       Complex(rng.uniform() - 0.5, rng.uniform() - 0.5)};
        const auto rates = sector_rates(field, s.overlaps, cfg);
        double total = 0.0, photons = 0.0;
        for (double r : rates) total += r;
        for (const auto& a : field.alpha) photons += std::norm(a);
        CHECK(total == Approx(2.0 * cfg.efficiency * photons).epsilon(1e-6));
        // even-m basis: opposing sectors identical, bit for bit
        for (int j = 0; j < 8; ++j) CHECK(rates[j] == rates[j + 8]);
    }
}

TEST_CASE("window integration reproduces the static expected counts") {
    Setup s;
    DetectorConfig cfg;
    const auto rec = static_record(empty_cavity(s.params, s.set), 100.0, 10.0);
    const auto frames = integrate_windows(rec, cfg, s.overlaps);
    REQUIRE(frames.size() == 1);
    REQUIRE(frames[0].expected.size() == 8);
    // 2 |alpha|^2 photons per 1/kappa split over 8 pairs, 100/kappa window
    const double photon = std::norm(empty_cavity(s.params, s.set).alpha[0]);
    const double per_pair = 2.0 * photon * 100.0 / 8.0;
    CHECK(per_pair == Approx(140.0).epsilon(1e-3));
    for (double e : frames[0].expected) CHECK(e == Approx(per_pair).epsilon(1e-9));
    CHECK(frames[0].t_mid == Approx(50.0));
}

TEST_CASE("Poisson statistics over many windows") {
    Setup s;
    DetectorConfig cfg;
    cfg.seed = 77;
    const int n_windows = 10000;
    const auto rec = static_record(empty_cavity(s.params, s.set), n_windows * 100.0, 10.0);
    const auto frames = integrate_windows(rec, cfg, s.overlaps);
    REQUIRE(static_cast<int>(frames.size()) == n_windows);

    std::vector<double> counts;
    counts.reserve(n_windows);
    for (const auto& f : frames) counts.push_back(static_cast<double>(f.counts[3]));
    const double mean = oracle::mean(counts);
    const double var = oracle::variance(counts);
    const double expect = frames[0].expected[3];
    // sample mean within 3 sigma of the expectation
    CHECK(std::abs(mean - expect) < 3.0 * std::sqrt(expect / n_windows));
    CHECK(var / mean > 0.9);
    CHECK(var / mean < 1.1);
}

TEST_CASE("efficiency scales linearly and pair summation is consistent") {
    Setup s;
    const auto rec = static_record(empty_cavity(s.params, s.set), 300.0, 10.0);

    DetectorConfig full;
    const auto base = integrate_windows(rec, full, s.overlaps);
    DetectorConfig half = full;
    half.efficiency = 0.5;
    const auto dimmed = integrate_windows(rec, half, s.overlaps);
    for (std::size_t w = 0; w < base.size(); ++w)
        for (std::size_t j = 0; j < base[w].expected.size(); ++j)
            CHECK(dimmed[w].expected[j] == Approx(0.5 * base[w].expected[j]).epsilon(1e-12));

    DetectorConfig unpaired = full;
    unpaired.pair_sum = false;
    const auto sixteen = integrate_windows(rec, unpaired, s.overlaps);
    REQUIRE(sixteen[0].expected.size() == 16);
    for (std::size_t w = 0; w < base.size(); ++w)
        for (int j = 0; j < 8; ++j)
            CHECK(sixteen[w].expected[j] + sixteen[w].expected[j + 8] == base[w].expected[j]);
}

TEST_CASE("fixed seed reproduces counts; thread count does not matter") {
    Setup s;
    const auto rec = static_record(empty_cavity(s.params, s.set), 2000.0, 10.0);
    DetectorConfig cfg;
    cfg.seed = 1234;
    const auto a = integrate_windows(rec, cfg, s.overlaps, 1);
    const auto b = integrate_windows(rec, cfg, s.overlaps, 4);
    REQUIRE(a.size() == b.size());
    for (std::size_t w = 0; w < a.size(); ++w)
        for (std::size_t j = 0; j < a[w].counts.size(); ++j)
            CHECK(a[w].counts[j] == b[w].counts[j]);

    DetectorConfig reseeded = cfg;
    reseeded.seed = 4321;
    const auto c = integrate_windows(rec, reseeded, s.overlaps);
    bool any_different = false;
    for (std::size_t w = 0; w < a.size() && !any_different; ++w)
        any_different = a[w].counts != c[w].counts;
    CHECK(any_different);
}

TEST_CASE("window integration rejects unusable trajectories") {
    Setup s;
    DetectorConfig cfg;
    const auto too_short = static_record(empty_cavity(s.params, s.set), 50.0, 5.0);
    CHECK_THROWS_AS(integrate_windows(too_short, cfg, s.overlaps), UsageError);
    const auto too_coarse = static_record(empty_cavity(s.params, s.set), 200.0, 20.0);
    CHECK_THROWS_AS(integrate_windows(too_coarse, cfg, s.overlaps), UsageError);
    CHECK_THROWS_AS([&] {
        DetectorConfig bad;
        bad.n_sectors = 15;
        bad.pair_sum = true;
        bad.validate();
    }(), UsageError);
    CHECK_THROWS_AS([&] {
        DetectorConfig bad;
        bad.efficiency = 0.0;
        bad.validate();
    }(), UsageError);
}

TEST_CASE("poisson sampler sanity at small mean") {
    Rng rng(99);
    const int n = 20000;
    std::vector<double> draws;
    draws.reserve(n);
    for (int i = 0; i < n; ++i) draws.push_back(static_cast<double>(rng.poisson(3.0)));
    CHECK(oracle::mean(draws) == Approx(3.0).margin(0.05));
    CHECK(oracle::variance(draws) / oracle::mean(draws) == Approx(1.0).margin(0.06));
    CHECK(Rng(1).poisson(0.0) == 0);
}
