#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cavtrack/config.hpp"
#include "cavtrack/detector.hpp"
#include "cavtrack/dynamics.hpp"
#include "cavtrack/io.hpp"
#include "cavtrack/reconstruct.hpp"
#include "cavtrack/steady_state.hpp"

namespace cavtrack {

// exit-code contract: 0 ok, 1 usage/config, 2 numerical failure,
// 3 tolerance/empty-result warning
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitTolerance = 3;

namespace cli_detail {

struct Common {
    std::string config_path;
    std::string out_dir = ".";
    int threads = 1;
};

inline void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("--config", common.config_path, "run configuration file");
    cmd->add_option("--out", common.out_dir, "output directory");
    cmd->add_option("--threads", common.threads, "worker threads for grid/window batches")
        ->check(CLI::PositiveNumber);
}

inline RunConfig load_config(const Common& common) {
    if (common.config_path.empty()) return RunConfig{};
    return parse_config(read_text_file(common.config_path));
}

// every command records the fully resolved configuration it actually used
inline std::string emit_resolved(const RunConfig& cfg, const Common& common) {
    std::filesystem::create_directories(common.out_dir);
    const std::string text = serialize_config(cfg);
    write_text_file(common.out_dir + "/resolved_config.ini", text);
    return text;
}

inline void print_warnings(const ModeSet& set) {
    for (const auto& w : set.warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace cli_detail

inline int run_command(std::vector<std::string> args) {
    using cli_detail::Common;

    CLI::App app{"single-atom cavity tracking pipeline"};
    app.require_subcommand(1);

    // pattern
    Common pat_common;
    double pat_atom_x = 0.0, pat_atom_y = 0.0;
    bool pat_have_atom = false;
    int pat_resolution = 256;
    double pat_extent = 3.0;
    auto* pat = app.add_subcommand("pattern", "render a stationary intensity pattern");
    cli_detail::add_common(pat, pat_common);
    auto* ax = pat->add_option("--atom-x", pat_atom_x, "atom x position [w0]");
    auto* ay = pat->add_option("--atom-y", pat_atom_y, "atom y position [w0]");
    ay->needs(ax);
    ax->needs(ay);
    pat->add_option("--resolution", pat_resolution, "pixels per axis");
    pat->add_option("--extent", pat_extent, "half-width of the view [w0]");

    // simulate
    Common sim_common;
    std::optional<std::uint64_t> sim_seed;
    auto* sim = app.add_subcommand("simulate", "integrate an atom trajectory");
    cli_detail::add_common(sim, sim_common);
    sim->add_option("--seed", sim_seed, "override the dynamics noise seed");

    // detect
    Common det_common;
    std::string det_trajectory;
    std::optional<std::uint64_t> det_seed;
    bool det_with_truth = false;
    auto* det = app.add_subcommand("detect", "turn a trajectory into photon counts");
    cli_detail::add_common(det, det_common);
    det->add_option("--trajectory", det_trajectory, "trajectory csv")->required();
    det->add_option("--seed", det_seed, "override the shot-noise seed");
    det->add_flag("--with-truth", det_with_truth, "append expected-count columns");

    // grid
    Common grid_common;
    auto* grd = app.add_subcommand("grid", "precompute the signature grid");
    cli_detail::add_common(grd, grid_common);

    // reconstruct
    Common rec_common;
    std::string rec_detector, rec_grid;
    auto* rec = app.add_subcommand("reconstruct", "invert a detector record into a path");
    cli_detail::add_common(rec, rec_common);
    rec->add_option("--detector", rec_detector, "detector csv")->required();
    rec->add_option("--grid", rec_grid, "signature grid blob")->required();

    // evaluate
    Common eval_common;
    std::string eval_path, eval_trajectory;
    std::optional<double> eval_tol_um;
    auto* evl = app.add_subcommand("evaluate", "compare a path against the true trajectory");
    cli_detail::add_common(evl, eval_common);
    evl->add_option("--path", eval_path, "reconstructed path csv")->required();
    evl->add_option("--trajectory", eval_trajectory, "truth trajectory csv")->required();
    evl->add_option("--tolerance-um", eval_tol_um, "fail (exit 3) when RMS exceeds this");

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (app.got_subcommand(pat)) {
            const RunConfig cfg = cli_detail::load_config(pat_common);
            const std::string resolved = cli_detail::emit_resolved(cfg, pat_common);
            const ModeSet set = cfg.mode_set();
            cli_detail::print_warnings(set);
            pat_have_atom = ax->count() > 0;
            std::optional<Vec2> atom;
            if (pat_have_atom) atom = Vec2{pat_atom_x, pat_atom_y};
            const Image img =
                render_pattern(cfg.physics(), set, atom, pat_resolution, pat_extent);
            write_pgm16(pat_common.out_dir + "/pattern.pgm", img);
            std::ostringstream side;
            side << "# cavtrack pattern sidecar\n";
            side << "config_hash = " << hash_hex(fnv1a64(resolved)) << "\n";
            side << "resolution = " << img.width << "\n";
            side << "extent = " << format_double(img.extent) << "\n";
            side << "atom = "
                 << (atom ? format_double(atom->x) + " " + format_double(atom->y)
                          : std::string("none"))
                 << "\n";
            double lo = img.pixels[0], hi = img.pixels[0];
            for (double v : img.pixels) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            side << "intensity_min = " << format_double(lo) << "\n";
            side << "intensity_max = " << format_double(hi) << "\n";
            write_text_file(pat_common.out_dir + "/pattern.txt", side.str());
            std::cout << "pattern: " << img.width << "x" << img.height << " px, extent "
                      << format_double(img.extent) << " w0 -> " << pat_common.out_dir
                      << "/pattern.pgm\n";
            return kExitOk;
        }

        if (app.got_subcommand(sim)) {
            RunConfig cfg = cli_detail::load_config(sim_common);
            if (sim_seed) cfg.sim_seed = *sim_seed;
            const std::string resolved = cli_detail::emit_resolved(cfg, sim_common);
            const ModeSet set = cfg.mode_set();
            cli_detail::print_warnings(set);
            const auto sp = ScaledParams::make(cfg.physics(), cfg.geometry());
            const TrajectoryRecord recd = simulate(set, sp, cfg.initial_atom(),
                                                   cfg.sim_options(), cfg.noise_config(),
                                                   params_hash(cfg));
            write_text_file(sim_common.out_dir + "/trajectory.csv",
                            trajectory_to_csv(recd, resolved));
            std::cout << "simulate: " << recd.times.size() << " samples over "
                      << format_double(recd.times.back()) << "/kappa"
                      << (recd.early_exit ? " (early exit: atom left the bounding box)" : "")
                      << " -> " << sim_common.out_dir << "/trajectory.csv\n";
            return kExitOk;
        }

        if (app.got_subcommand(det)) {
            RunConfig cfg = cli_detail::load_config(det_common);
            if (det_seed) cfg.detector_seed = *det_seed;
            if (det_with_truth) cfg.with_truth = true;
            const std::string resolved = cli_detail::emit_resolved(cfg, det_common);
            const ModeSet set = cfg.mode_set();
            const TrajectoryFile traj = parse_trajectory_csv(read_text_file(det_trajectory));
            if (traj.record.params_hash != params_hash(cfg))
                throw UsageError("trajectory was produced under different physics parameters "
                                 "than this configuration");
            const auto overlaps = sector_overlap_matrices(set, cfg.n_sectors);
            const auto frames = integrate_windows(traj.record, cfg.detector_config(), overlaps,
                                                  det_common.threads);
            write_text_file(det_common.out_dir + "/detector.csv",
                            detector_to_csv(frames, cfg.detector_config(), cfg.with_truth,
                                            params_hash(cfg), set.hash(), detector_hash(cfg),
                                            resolved));
            std::cout << "detect: " << frames.size() << " windows of "
                      << format_double(cfg.window) << "/kappa -> " << det_common.out_dir
                      << "/detector.csv\n";
            return kExitOk;
        }

        if (app.got_subcommand(grd)) {
            const RunConfig cfg = cli_detail::load_config(grid_common);
            cli_detail::emit_resolved(cfg, grid_common);
            const ModeSet set = cfg.mode_set();
            cli_detail::print_warnings(set);
            const SignatureGrid grid =
                build_grid(cfg.physics(), set, cfg.detector_config(), cfg.grid_config(),
                           grid_common.threads, params_hash(cfg), detector_hash(cfg));
            write_grid_blob(grid_common.out_dir + "/grid.bin", grid);
            write_text_file(grid_common.out_dir + "/grid.txt", grid_sidecar_text(grid));
            std::cout << "grid: " << grid.n << "x" << grid.n << " points, spacing "
                      << format_double(grid.spacing) << " w0 -> " << grid_common.out_dir
                      << "/grid.bin\n";
            return kExitOk;
        }

        if (app.got_subcommand(rec)) {
            const RunConfig cfg = cli_detail::load_config(rec_common);
            const std::string resolved = cli_detail::emit_resolved(cfg, rec_common);
            const SignatureGrid grid = read_grid_blob(rec_grid);
            const DetectorFile detector = parse_detector_csv(read_text_file(rec_detector));
            if (grid.params_hash != detector.header.params_hash ||
                grid.detector_hash != detector.header.detector_hash ||
                grid.basis_hash != detector.header.basis_hash)
                throw UsageError("grid and detector record were built from different "
                                 "configurations (hash mismatch)");

            std::vector<PositionEstimate> estimates(detector.frames.size());
            parallel_for(detector.frames.size(), rec_common.threads, [&](std::size_t i) {
                estimates[i] = locate_frame(detector.frames[i], grid);
            });
            const BranchReport report =
                select_branch(estimates, cfg.branch_seed(), cfg.branch_gate);

            const std::size_t usable =
                static_cast<std::size_t>(std::count_if(estimates.begin(), estimates.end(),
                                                       [](const PositionEstimate& e) {
                                                           return e.detectable;
                                                       }));
            ReconstructedPath path;
            if (usable == 0) {
                path.estimates = std::move(estimates);
                path.smoothed.assign(path.estimates.size(), Vec2{});
                path.branch = report;
                write_text_file(rec_common.out_dir + "/path.csv",
                                path_to_csv(path, grid.params_hash, grid.basis_hash,
                                            grid.detector_hash, resolved));
                std::cerr << "warning: no frame differs from an empty cavity; nothing to "
                             "reconstruct\n";
                return kExitTolerance;
            }
            SmoothConfig smooth_cfg;
            smooth_cfg.target_factor = cfg.smoothing_target;
            path = smooth_path(std::move(estimates), grid, smooth_cfg);
            path.branch = report;
            write_text_file(rec_common.out_dir + "/path.csv",
                            path_to_csv(path, grid.params_hash, grid.basis_hash,
                                        grid.detector_hash, resolved));
            std::cout << "reconstruct: " << usable << "/" << path.estimates.size()
                      << " frames usable, " << report.discontinuities
                      << " gated jumps -> " << rec_common.out_dir << "/path.csv\n";
            return kExitOk;
        }

        if (app.got_subcommand(evl)) {
            const RunConfig cfg = cli_detail::load_config(eval_common);
            cli_detail::emit_resolved(cfg, eval_common);
            const ReconstructedPath path = parse_path_csv(read_text_file(eval_path));
            const TrajectoryFile traj = parse_trajectory_csv(read_text_file(eval_trajectory));
            const EvalReport rep = evaluate_path(path, traj.record);
            const double w0_um = cfg.waist_um;
            const double lambda_um = cfg.wavelength_nm * 1e-3;
            std::cout << "frames compared:     " << rep.frames_compared << "\n";
            std::cout << "detectable fraction: " << format_double(rep.detectable_fraction)
                      << "\n";
            std::cout << "rms error:           " << format_double(rep.rms_error * w0_um)
                      << " um (" << format_double(rep.rms_error * w0_um / lambda_um)
                      << " wavelengths, smoothed)\n";
            std::cout << "rms error raw:       " << format_double(rep.rms_error_raw * w0_um)
                      << " um\n";
            std::cout << "max error:           " << format_double(rep.max_error * w0_um)
                      << " um\n";
            std::cout << "branch:              "
                      << (rep.reflected_branch ? "point-reflected" : "direct") << "\n";
            std::cout << "gated jumps:         " << rep.discontinuities << "\n";
            if (eval_tol_um && rep.rms_error * w0_um > *eval_tol_um) {
                std::cerr << "rms error exceeds tolerance of " << format_double(*eval_tol_um)
                          << " um\n";
                return kExitTolerance;
            }
            return kExitOk;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitUsage;
}

}  // namespace cavtrack
