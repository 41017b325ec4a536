#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "cavtrack/cli.hpp"

using namespace cavtrack;
namespace fs = std::filesystem;

#ifndef CAVTRACK_CLI_PATH
#define CAVTRACK_CLI_PATH "cavtrack"
#endif

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("cavtrack_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub = "") const {
        return (sub.empty() ? path : path / sub).string();
    }
};

// short, trapped-atom scenario: fast to simulate, every frame informative
std::string chain_config_text(const std::string& extra = "") {
    return "[dynamics]\n"
           "duration = 800\n"
           "x0 = 0.25\n"
           "y0 = -0.2\n"
           "vy_cm_s = 0\n"
           "seed = 11\n"
           "[detector]\n"
           "seed = 21\n"
           "[reconstruction]\n"
           "grid_extent = 1.2\n"
           "grid_spacing = 0.05\n" +
           extra;
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string(CAVTRACK_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(run_command({}) == kExitUsage);
    CHECK(run_command({"frobnicate"}) == kExitUsage);
    CHECK(run_command({"pattern", "--no-such-flag"}) == kExitUsage);

    TempDir dir("badres");
    CHECK(run_command({"pattern", "--resolution", "1", "--out", dir.str()}) == kExitUsage);

    write_text_file(dir.str("bad.ini"), "[dynamics]\nduration = 0\n");
    CHECK(run_command({"simulate", "--config", dir.str("bad.ini"), "--out", dir.str()}) ==
          kExitUsage);

    write_text_file(dir.str("broken.ini"), "[physics]\nwibble = 3\n");
    CHECK(run_command({"simulate", "--config", dir.str("broken.ini"), "--out", dir.str()}) ==
          kExitUsage);
}

TEST_CASE("pattern command writes greymap, sidecar and resolved config") {
    TempDir dir("pattern");
    CHECK(run_command({"pattern", "--resolution", "32", "--extent", "2", "--out", dir.str()}) ==
          kExitOk);
    CHECK(fs::exists(dir.str("pattern.pgm")));
    CHECK(fs::exists(dir.str("pattern.txt")));
    CHECK(fs::exists(dir.str("resolved_config.ini")));

    // sidecar hash matches the resolved config next to it
    const std::string sidecar = read_text_file(dir.str("pattern.txt"));
    const std::string resolved = read_text_file(dir.str("resolved_config.ini"));
    CHECK(sidecar.find(hash_hex(fnv1a64(resolved))) != std::string::npos);

    CHECK(run_command({"pattern", "--resolution", "32", "--atom-x", "0.4", "--atom-y", "0.1",
                       "--out", dir.str()}) == kExitOk);
}

TEST_CASE("simulate is reproducible under a fixed seed") {
    TempDir a("seed_a"), b("seed_b"), c("seed_c");
    const std::string cfg = a.str("run.ini");
    write_text_file(cfg, "[dynamics]\nduration = 120\nseed = 3\n");
    REQUIRE(run_command({"simulate", "--config", cfg, "--out", a.str()}) == kExitOk);
    REQUIRE(run_command({"simulate", "--config", cfg, "--out", b.str()}) == kExitOk);
    CHECK(read_text_file(a.str("trajectory.csv")) == read_text_file(b.str("trajectory.csv")));

    REQUIRE(run_command({"simulate", "--config", cfg, "--seed", "4", "--out", c.str()}) ==
            kExitOk);
    CHECK(read_text_file(a.str("trajectory.csv")) != read_text_file(c.str("trajectory.csv")));
}

TEST_CASE("full chain: simulate, detect, grid, reconstruct, evaluate") {
    TempDir dir("chain");
    const std::string cfg = dir.str("run.ini");
    write_text_file(cfg, chain_config_text());

    REQUIRE(run_command({"simulate", "--config", cfg, "--out", dir.str()}) == kExitOk);
    REQUIRE(run_command({"detect", "--config", cfg, "--trajectory", dir.str("trajectory.csv"),
                         "--out", dir.str()}) == kExitOk);
    REQUIRE(run_command({"grid", "--config", cfg, "--threads", "2", "--out", dir.str()}) ==
            kExitOk);
    REQUIRE(run_command({"reconstruct", "--config", cfg, "--detector", dir.str("detector.csv"),
                         "--grid", dir.str("grid.bin"), "--out", dir.str()}) == kExitOk);
    REQUIRE(run_command({"evaluate", "--config", cfg, "--path", dir.str("path.csv"),
                         "--trajectory", dir.str("trajectory.csv")}) == kExitOk);

    // a deliberately impossible tolerance turns into exit code 3
    CHECK(run_command({"evaluate", "--config", cfg, "--path", dir.str("path.csv"),
                       "--trajectory", dir.str("trajectory.csv"), "--tolerance-um",
                       "1e-9"}) == kExitTolerance);

    // the reconstruction followed the (nearly static) trapped atom
    const auto path = parse_path_csv(read_text_file(dir.str("path.csv")));
    const auto traj = parse_trajectory_csv(read_text_file(dir.str("trajectory.csv")));
    const auto rep = evaluate_path(path, traj.record);
    CHECK(rep.detectable_fraction > 0.5);
    CHECK(rep.rms_error < 0.2);  // waists; generous smoke bound
}

TEST_CASE("reconstruction is blind to the truth channel and the force model") {
    TempDir dir("blind");
    const std::string cfg = dir.str("run.ini");
    write_text_file(cfg, chain_config_text());
    REQUIRE(run_command({"simulate", "--config", cfg, "--out", dir.str()}) == kExitOk);
    REQUIRE(run_command({"grid", "--config", cfg, "--out", dir.str()}) == kExitOk);

    // with and without expected-count columns
    fs::create_directories(dir.str("bare"));
    fs::create_directories(dir.str("truthy"));
    REQUIRE(run_command({"detect", "--config", cfg, "--trajectory", dir.str("trajectory.csv"),
                         "--out", dir.str("bare")}) == kExitOk);
    REQUIRE(run_command({"detect", "--config", cfg, "--trajectory", dir.str("trajectory.csv"),
                         "--with-truth", "--out", dir.str("truthy")}) == kExitOk);
    CHECK(read_text_file(dir.str("bare/detector.csv")) !=
          read_text_file(dir.str("truthy/detector.csv")));

    fs::create_directories(dir.str("rec_a"));
    fs::create_directories(dir.str("rec_b"));
    REQUIRE(run_command({"reconstruct", "--config", cfg, "--detector",
                         dir.str("bare/detector.csv"), "--grid", dir.str("grid.bin"), "--out",
                         dir.str("rec_a")}) == kExitOk);
    REQUIRE(run_command({"reconstruct", "--config", cfg, "--detector",
                         dir.str("truthy/detector.csv"), "--grid", dir.str("grid.bin"), "--out",
                         dir.str("rec_b")}) == kExitOk);
    CHECK(read_text_file(dir.str("rec_a/path.csv")) == read_text_file(dir.str("rec_b/path.csv")));

    // regenerate the truth under a different noise model; the detector
    // record is held fixed, so the reconstruction cannot change
    const std::string cfg2 = dir.str("run2.ini");
    write_text_file(cfg2, chain_config_text("[dynamics]\nmomentum_diffusion_scale = 2.0\n"));
    fs::create_directories(dir.str("truth2"));
    REQUIRE(run_command({"simulate", "--config", cfg2, "--out", dir.str("truth2")}) == kExitOk);
    CHECK(read_text_file(dir.str("truth2/trajectory.csv")) !=
          read_text_file(dir.str("trajectory.csv")));
    fs::create_directories(dir.str("rec_c"));
    REQUIRE(run_command({"reconstruct", "--config", cfg, "--detector",
                         dir.str("bare/detector.csv"), "--grid", dir.str("grid.bin"), "--out",
                         dir.str("rec_c")}) == kExitOk);
    CHECK(read_text_file(dir.str("rec_a/path.csv")) == read_text_file(dir.str("rec_c/path.csv")));
}

TEST_CASE("grid and detector records from different configurations are rejected") {
    TempDir dir("mismatch");
    const std::string cfg = dir.str("run.ini");
    write_text_file(cfg, chain_config_text());
    const std::string cfg_other = dir.str("other.ini");
    write_text_file(cfg_other, chain_config_text("[detector]\nefficiency = 0.5\n"));

    REQUIRE(run_command({"simulate", "--config", cfg, "--out", dir.str()}) == kExitOk);
    REQUIRE(run_command({"detect", "--config", cfg, "--trajectory", dir.str("trajectory.csv"),
                         "--out", dir.str()}) == kExitOk);
    fs::create_directories(dir.str("othergrid"));
    REQUIRE(run_command({"grid", "--config", cfg_other, "--out", dir.str("othergrid")}) ==
            kExitOk);
    CHECK(run_command({"reconstruct", "--config", cfg, "--detector", dir.str("detector.csv"),
                       "--grid", dir.str("othergrid/grid.bin"), "--out", dir.str()}) ==
          kExitUsage);

    // detect refuses a trajectory generated under different physics
    const std::string cfg_phys = dir.str("phys.ini");
    write_text_file(cfg_phys, chain_config_text("[physics]\ng0_mhz = 15\n"));
    CHECK(run_command({"detect", "--config", cfg_phys, "--trajectory",
                       dir.str("trajectory.csv"), "--out", dir.str()}) == kExitUsage);
}

TEST_CASE("an empty-cavity record reconstructs to nothing, with a warning code") {
    TempDir dir("empty");
    const std::string cfg = dir.str("run.ini");
    // atom parked far outside every mode: the detectors see an empty cavity
    write_text_file(cfg, "[dynamics]\n"
                         "duration = 800\n"
                         "x0 = 4.0\n"
                         "y0 = 4.0\n"
                         "vy_cm_s = 0\n"
                         "[reconstruction]\n"
                         "grid_extent = 1.0\n"
                         "grid_spacing = 0.1\n");
    REQUIRE(run_command({"simulate", "--config", cfg, "--out", dir.str()}) == kExitOk);
    REQUIRE(run_command({"detect", "--config", cfg, "--trajectory", dir.str("trajectory.csv"),
                         "--out", dir.str()}) == kExitOk);
    REQUIRE(run_command({"grid", "--config", cfg, "--out", dir.str()}) == kExitOk);
    CHECK(run_command({"reconstruct", "--config", cfg, "--detector", dir.str("detector.csv"),
                       "--grid", dir.str("grid.bin"), "--out", dir.str()}) == kExitTolerance);
    const auto path = parse_path_csv(read_text_file(dir.str("path.csv")));
    for (const auto& est : path.estimates) CHECK_FALSE(est.detectable);
}

TEST_CASE("the five commands in separate processes match one in-process run") {
    TempDir procs("procs"), mono("mono");
    const std::string cfg_text = chain_config_text();
    write_text_file(procs.str("run.ini"), cfg_text);
    write_text_file(mono.str("run.ini"), cfg_text);

    const std::string pc = procs.str("run.ini");
    REQUIRE(run_binary("simulate --config " + pc + " --out " + procs.str()) == kExitOk);
    REQUIRE(run_binary("detect --config " + pc + " --trajectory " +
                       procs.str("trajectory.csv") + " --out " + procs.str()) == kExitOk);
    REQUIRE(run_binary("grid --config " + pc + " --out " + procs.str()) == kExitOk);
    REQUIRE(run_binary("reconstruct --config " + pc + " --detector " +
                       procs.str("detector.csv") + " --grid " + procs.str("grid.bin") +
                       " --out " + procs.str()) == kExitOk);
    REQUIRE(run_binary("evaluate --config " + pc + " --path " + procs.str("path.csv") +
                       " --trajectory " + procs.str("trajectory.csv")) == kExitOk);

    const std::string mc = mono.str("run.ini");
    REQUIRE(run_command({"simulate", "--config", mc, "--out", mono.str()}) == kExitOk);
    REQUIRE(run_command({"detect", "--config", mc, "--trajectory", mono.str("trajectory.csv"),
                         "--out", mono.str()}) == kExitOk);
    REQUIRE(run_command({"grid", "--config", mc, "--out", mono.str()}) == kExitOk);
    REQUIRE(run_command({"reconstruct", "--config", mc, "--detector",
                         mono.str("detector.csv"), "--grid", mono.str("grid.bin"), "--out",
                         mono.str()}) == kExitOk);

    for (const std::string f : {"trajectory.csv", "detector.csv", "path.csv",
                                "resolved_config.ini"})
        CHECK(read_text_file(procs.str(f)) == read_text_file(mono.str(f)));
    CHECK(read_text_file(procs.str("grid.bin")) == read_text_file(mono.str("grid.bin")));
}
