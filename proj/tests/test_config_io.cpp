#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "cavtrack/config.hpp"
#include "cavtrack/io.hpp"

using namespace cavtrack;
using Catch::Approx;

TEST_CASE("config serialisation round-trips losslessly") {
    RunConfig cfg;
    cfg.g0_mhz = 17.25;
    cfg.pump_im_mhz = {0.5, 0.0, -0.25};
    cfg.sim_seed = 987654321;
    cfg.convention = LgConvention::standard_lg;
    cfg.grid_spacing = 0.03125;

    const std::string text = serialize_config(cfg);
    const RunConfig back = parse_config(text);
    CHECK(serialize_config(back) == text);
    CHECK(back.g0_mhz == cfg.g0_mhz);
    CHECK(back.pump_im_mhz == cfg.pump_im_mhz);
    CHECK(back.sim_seed == cfg.sim_seed);
    CHECK(back.convention == cfg.convention);
    CHECK(back.grid_spacing == cfg.grid_spacing);
}

TEST_CASE("partial configs override defaults only where present") {
    const std::string text =
        "[dynamics]\n"
        "duration = 1200\n"
        "[detector]\n"
        "window = 50\n";
    const RunConfig cfg = parse_config(text);
    CHECK(cfg.duration == 1200.0);
    CHECK(cfg.window == 50.0);
    CHECK(cfg.g0_mhz == 16.0);       // untouched default
    CHECK(cfg.n_sectors == 16);      // untouched default
}

TEST_CASE("config errors carry line numbers") {
    try {
        parse_config("[physics]\ng0_mhz = 16\nnot_a_key = 3\n");
        FAIL("expected UsageError");
    } catch (const UsageError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("[nonsense]\n"), UsageError);
    CHECK_THROWS_AS(parse_config("[physics]\ng0_mhz = abc\n"), UsageError);
    CHECK_THROWS_AS(parse_config("stray = 1\n"), UsageError);
    CHECK_THROWS_AS(parse_config("[dynamics]\nnoise_enabled = maybe\n"), UsageError);
    CHECK_THROWS_AS(parse_config("[modes]\nindices = 1;0\n"), UsageError);
}

TEST_CASE("hashes separate physics from run bookkeeping") {
    RunConfig a;
    RunConfig b = a;
    b.sim_seed = 77;        // bookkeeping only
    b.duration = 10.0;
    CHECK(params_hash(a) == params_hash(b));

    RunConfig c = a;
    c.g0_mhz = 15.0;
    CHECK(params_hash(a) != params_hash(c));

    RunConfig d = a;
    d.window = 200.0;
    CHECK(detector_hash(a) != detector_hash(d));
    CHECK(params_hash(a) == params_hash(d));
}

TEST_CASE("number formatting round-trips bit-exactly") {
    for (double v : {0.1, 1.0 / 3.0, -0.0, 2.2250738585072014e-308, 1.7976931348623157e308,
                     5300.0, 2.366717283178265}) {
        const double back = parse_double(format_double(v));
        CHECK(std::signbit(back) == std::signbit(v));
        CHECK(back == v);
    }
}

TEST_CASE("trajectory csv round-trips every sample bit-exactly") {
    RunConfig cfg;
    cfg.duration = 30.0;
    cfg.sim_seed = 5;
    const auto set = cfg.mode_set();
    const auto sp = ScaledParams::make(cfg.physics(), cfg.geometry());
    const auto rec = simulate(set, sp, cfg.initial_atom(), cfg.sim_options(),
                              cfg.noise_config(), params_hash(cfg));

    const std::string resolved = serialize_config(cfg);
    const std::string csv = trajectory_to_csv(rec, resolved);
    const TrajectoryFile back = parse_trajectory_csv(csv);

    REQUIRE(back.record.times.size() == rec.times.size());
    for (std::size_t i = 0; i < rec.times.size(); ++i) {
        CHECK(back.record.times[i] == rec.times[i]);
        CHECK(back.record.states[i].r.x == rec.states[i].r.x);
        CHECK(back.record.states[i].r.y == rec.states[i].r.y);
        CHECK(back.record.states[i].p.x == rec.states[i].p.x);
        CHECK(back.record.states[i].p.y == rec.states[i].p.y);
        for (std::size_t m = 0; m < 3; ++m)
            CHECK(back.record.fields[i].alpha[m] == rec.fields[i].alpha[m]);
    }
    CHECK(back.record.params_hash == rec.params_hash);
    CHECK(back.record.noise.seed == rec.noise.seed);
    CHECK(back.config_text == resolved);

    // re-serialising the parsed record reproduces the file byte for byte
    TrajectoryRecord again = back.record;
    again.noise = rec.noise;
    again.early_exit = rec.early_exit;
    CHECK(trajectory_to_csv(again, resolved) == csv);
}

TEST_CASE("detector csv keeps counts identical with and without truth columns") {
    RunConfig cfg;
    DetectorConfig dcfg = cfg.detector_config();
    std::vector<DetectorFrame> frames(3);
    Rng rng(8);
    for (std::size_t w = 0; w < frames.size(); ++w) {
        frames[w].t_mid = 50.0 + 100.0 * w;
        for (int j = 0; j < 8; ++j) {
            frames[w].expected.push_back(140.0 + 3.0 * j);
            frames[w].counts.push_back(rng.poisson(frames[w].expected.back()));
        }
    }
    const std::string resolved = serialize_config(cfg);
    const std::string bare =
        detector_to_csv(frames, dcfg, false, 0x1, 0x2, 0x3, resolved);
    const std::string truthy =
        detector_to_csv(frames, dcfg, true, 0x1, 0x2, 0x3, resolved);
    CHECK(bare != truthy);

    const DetectorFile a = parse_detector_csv(bare);
    const DetectorFile b = parse_detector_csv(truthy);
    REQUIRE(a.frames.size() == b.frames.size());
    for (std::size_t w = 0; w < a.frames.size(); ++w) {
        CHECK(a.frames[w].t_mid == b.frames[w].t_mid);
        CHECK(a.frames[w].counts == b.frames[w].counts);
    }
    CHECK(a.header.params_hash == 0x1);
    CHECK(a.header.basis_hash == 0x2);
    CHECK(a.header.detector_hash == 0x3);
    CHECK(a.header.window == dcfg.window);
}

TEST_CASE("path csv round-trip preserves estimates, gaps and flags") {
    ReconstructedPath path;
    for (int i = 0; i < 6; ++i) {
        PositionEstimate e;
        e.t_mid = 50.0 + 100.0 * i;
        e.detectable = i != 2;
        if (e.detectable) e.chosen = Vec2{0.1 * i, -0.05 * i};
        e.residual = 1.5 * i;
        e.jump_flag = i == 4;
        path.estimates.push_back(e);
        path.smoothed.push_back({0.1 * i, -0.05 * i});
    }
    path.branch.discontinuities = 1;
    path.branch.seeded = true;
    path.lambda_x = 12.5;
    path.lambda_y = 8.75;

    const std::string csv = path_to_csv(path, 0xA, 0xB, 0xC, "x = 1\n");
    const ReconstructedPath back = parse_path_csv(csv);
    REQUIRE(back.estimates.size() == path.estimates.size());
    for (std::size_t i = 0; i < path.estimates.size(); ++i) {
        CHECK(back.estimates[i].t_mid == path.estimates[i].t_mid);
        CHECK(back.estimates[i].detectable == path.estimates[i].detectable);
        CHECK(back.estimates[i].chosen.has_value() == path.estimates[i].chosen.has_value());
        if (path.estimates[i].chosen) {
            CHECK(back.estimates[i].chosen->x == path.estimates[i].chosen->x);
            CHECK(back.estimates[i].chosen->y == path.estimates[i].chosen->y);
        }
        CHECK(back.estimates[i].residual == path.estimates[i].residual);
        CHECK(back.estimates[i].jump_flag == path.estimates[i].jump_flag);
        CHECK(back.smoothed[i].x == path.smoothed[i].x);
        CHECK(back.smoothed[i].y == path.smoothed[i].y);
    }
    CHECK(back.branch.discontinuities == 1);
    CHECK(back.branch.seeded);
    CHECK(back.lambda_x == 12.5);
}

TEST_CASE("pgm writer emits a well-formed 16-bit greymap") {
    Image img;
    img.width = 8;
    img.height = 8;
    img.extent = 1.0;
    img.pixels.assign(64, 0.0);
    img.pixels[9] = 2.5;  // one bright pixel
    write_pgm16("test_pattern.pgm", img);
    const std::string data = read_text_file("test_pattern.pgm");
    CHECK(data.rfind("P5\n8 8\n65535\n", 0) == 0);
    CHECK(data.size() == std::string("P5\n8 8\n65535\n").size() + 2 * 64);
    // the bright pixel maps to full scale
    const std::size_t off = std::string("P5\n8 8\n65535\n").size();
    const std::size_t row = 8 - 1 - 1;  // image rows run top-down
    const std::size_t idx = off + 2 * (row * 8 + 1);
    CHECK(static_cast<unsigned char>(data[idx]) == 0xFF);
    CHECK(static_cast<unsigned char>(data[idx + 1]) == 0xFF);
}
