#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "cavtrack/detector.hpp"
#include "cavtrack/errors.hpp"
#include "cavtrack/parallel.hpp"
#include "cavtrack/rng.hpp"
#include "cavtrack/spline.hpp"
#include "cavtrack/steady_state.hpp"

namespace cavtrack {

struct GridConfig {
    double extent = 1.5;     // half-width in waists
    double spacing = 0.025;  // waists (w0/40)
};

// Position -> expected detector signature lookup table. Signatures are
// expected counts per window for each pair channel; the detectability mask
// marks points whose signature is distinguishable from the empty cavity at
// the shot-noise level.
struct SignatureGrid {
    int n = 0;  // points per axis (odd; includes the axis)
    double spacing = 0.0;
    double window = 0.0;
    int n_channels = 0;
    std::vector<double> signatures;  // (iy, ix, ch) row-major
    std::vector<double> empty_signature;
    std::vector<std::uint8_t> detectable;
    double thresh95 = 0.0;   // shot-noise misfit, 95th percentile
    double thresh999 = 0.0;  // fit-plausibility gate, 99.9th percentile
    std::uint64_t params_hash = 0;
    std::uint64_t basis_hash = 0;
    std::uint64_t detector_hash = 0;

    int half() const { return (n - 1) / 2; }
    double extent() const { return half() * spacing; }
    double coord(int i) const { return (i - half()) * spacing; }
    std::size_t point_index(int ix, int iy) const {
        return static_cast<std::size_t>(iy) * n + ix;
    }
    const double* signature_at(int ix, int iy) const {
        return signatures.data() + point_index(ix, iy) * n_channels;
    }
    bool detectable_at(int ix, int iy) const { return detectable[point_index(ix, iy)] != 0; }
};

// chi^2-style misfit against a reference signature, Poisson variance = mean
inline double chi2_misfit(const double* observed, const double* reference, int n) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
        const double d = observed[j] - reference[j];
        s += d * d / std::max(reference[j], 1e-9);
    }
    return s;
}

namespace detail {

// Shot-noise calibration: percentiles of the misfit a pure Poisson sample of
// the empty signature produces. Fixed seed; part of the grid, not of a run.
inline void calibrate_thresholds(const std::vector<double>& empty_sig, double& p95,
                                 double& p999) {
    constexpr int kSamples = 20000;
    constexpr std::uint64_t kCalibrationSeed = 0x5163A11B5ull;
    const int nch = static_cast<int>(empty_sig.size());
    std::vector<double> misfits(kSamples);
    std::vector<double> draw(nch);
    for (int s = 0; s < kSamples; ++s) {
        Rng rng(derive_seed(kCalibrationSeed, 0, static_cast<std::uint64_t>(s)));
        for (int j = 0; j < nch; ++j) draw[j] = static_cast<double>(rng.poisson(empty_sig[j]));
        misfits[s] = chi2_misfit(draw.data(), empty_sig.data(), nch);
    }
    std::sort(misfits.begin(), misfits.end());
    p95 = misfits[static_cast<std::size_t>(0.95 * kSamples)];
    p999 = misfits[static_cast<std::size_t>(0.999 * kSamples)];
}

}  // namespace detail

// Precompute the signature of every grid position from the stationary field.
// For an even-m basis signatures are point symmetric, so each symmetric pair
// is computed once and mirrored, making signatures(r) == signatures(-r) exact.
inline SignatureGrid build_grid(const SystemParams& params, const ModeSet& set,
                                const DetectorConfig& detector, const GridConfig& grid_cfg,
                                int threads = 1, std::uint64_t params_hash = 0,
                                std::uint64_t detector_hash = 0) {
    detector.validate();
    if (!(grid_cfg.extent > 0.0) || !(grid_cfg.spacing > 0.0))
        throw UsageError("grid extent and spacing must be positive");

    SignatureGrid grid;
    const int half = static_cast<int>(std::lround(grid_cfg.extent / grid_cfg.spacing));
    if (half < 2) throw UsageError("grid must span at least two spacings per side");
    grid.n = 2 * half + 1;
    grid.spacing = grid_cfg.spacing;
    grid.window = detector.window;
    grid.n_channels = detector.n_channels();
    grid.params_hash = params_hash;
    grid.basis_hash = set.hash();
    grid.detector_hash = detector_hash;

    const auto overlaps = sector_overlap_matrices(set, detector.n_sectors);

    const auto empty_rates = sector_rates(empty_cavity(params, set), overlaps, detector);
    const auto empty_pairs =
        detector.pair_sum ? detail::pair_reduce(empty_rates) : empty_rates;
    grid.empty_signature.resize(grid.n_channels);
    for (int j = 0; j < grid.n_channels; ++j)
        grid.empty_signature[j] = empty_pairs[j] * detector.window;

    detail::calibrate_thresholds(grid.empty_signature, grid.thresh95, grid.thresh999);

    const std::size_t n_points = static_cast<std::size_t>(grid.n) * grid.n;
    grid.signatures.assign(n_points * grid.n_channels, 0.0);
    grid.detectable.assign(n_points, 0);

    bool even_basis = true;
    for (const auto& m : set.modes) even_basis = even_basis && (m.m % 2 == 0);

    auto fill_point = [&](int ix, int iy) {
        const Vec2 pos{grid.coord(ix), grid.coord(iy)};
        const auto sol = stationary_field(params, set, pos);
        const auto r = sector_rates(sol.alpha_stat, overlaps, detector);
        const auto pairs = detector.pair_sum ? detail::pair_reduce(r) : r;
        double* sig = grid.signatures.data() + grid.point_index(ix, iy) * grid.n_channels;
        for (int j = 0; j < grid.n_channels; ++j) sig[j] = pairs[j] * detector.window;
        const bool det =
            chi2_misfit(sig, grid.empty_signature.data(), grid.n_channels) > grid.thresh95;
        grid.detectable[grid.point_index(ix, iy)] = det ? 1 : 0;
    };

    if (even_basis) {
        // rows iy < half plus the left half of the center row; mirror the rest
        const std::size_t n_unique = n_points / 2 + 1;
        parallel_for(n_unique, threads, [&](std::size_t k) {
            fill_point(static_cast<int>(k % grid.n), static_cast<int>(k / grid.n));
        });
        for (std::size_t k = n_unique; k < n_points; ++k) {
            const std::size_t src = n_points - 1 - k;
            std::copy_n(grid.signatures.data() + src * grid.n_channels, grid.n_channels,
                        grid.signatures.data() + k * grid.n_channels);
            grid.detectable[k] = grid.detectable[src];
        }
    } else {
        parallel_for(n_points, threads, [&](std::size_t k) {
            fill_point(static_cast<int>(k % grid.n), static_cast<int>(k / grid.n));
        });
    }
    return grid;
}

// One frame's localisation: the symmetric candidate pair, the misfit, and
// whether the frame carries a usable position at all.
struct PositionEstimate {
    double t_mid = 0.0;
    Vec2 candidate{};           // reflected partner is -candidate
    std::optional<Vec2> chosen;
    double residual = 0.0;      // least-squares misfit at the best grid point
    bool detectable = false;
    bool jump_flag = false;     // set by branch selection on a gated jump
};

// Least-squares lookup of one frame's counts over the detectable grid
// points, with one quadratic-interpolation refinement step per axis. A frame
// is unusable when it matches the empty cavity at shot-noise level, or when
// even the best grid signature is implausible for its counts (the atom sits
// outside the mapped region); both leave `chosen` empty.
inline PositionEstimate locate_counts(const std::vector<double>& counts, double t_mid,
                                      const SignatureGrid& grid) {
    if (static_cast<int>(counts.size()) != grid.n_channels)
        throw UsageError("frame channel count does not match the grid");
    PositionEstimate est;
    est.t_mid = t_mid;

    const double vs_empty =
        chi2_misfit(counts.data(), grid.empty_signature.data(), grid.n_channels);
    if (vs_empty <= grid.thresh95) {
        est.residual = vs_empty;
        return est;  // indistinguishable from an empty cavity
    }

    double best = std::numeric_limits<double>::infinity();
    int bx = -1, by = -1;
    for (int iy = 0; iy < grid.n; ++iy) {
        for (int ix = 0; ix < grid.n; ++ix) {
            if (!grid.detectable_at(ix, iy)) continue;
            const double* sig = grid.signature_at(ix, iy);
            double ssq = 0.0;
            for (int j = 0; j < grid.n_channels; ++j) {
                const double d = counts[j] - sig[j];
                ssq += d * d;
            }
            if (ssq < best) {
                best = ssq;
                bx = ix;
                by = iy;
            }
        }
    }
    if (bx < 0) {
        est.residual = vs_empty;
        return est;  // nothing detectable on the grid at all
    }
    est.residual = best;

    const double fit_quality =
        chi2_misfit(counts.data(), grid.signature_at(bx, by), grid.n_channels);
    if (fit_quality > grid.thresh999) return est;  // no grid position explains the counts

    auto ssq_at = [&](int ix, int iy) {
        const double* sig = grid.signature_at(ix, iy);
        double s = 0.0;
        for (int j = 0; j < grid.n_channels; ++j) {
            const double d = counts[j] - sig[j];
            s += d * d;
        }
        return s;
    };
    // sub-grid refinement from the 1-d misfit parabolas; skipped on an exact
    // hit so grid points locate back to themselves bit-exactly
    double dx = 0.0, dy = 0.0;
    if (best > 0.0) {
        if (bx > 0 && bx + 1 < grid.n && grid.detectable_at(bx - 1, by) &&
            grid.detectable_at(bx + 1, by)) {
            const double fl = ssq_at(bx - 1, by), fr = ssq_at(bx + 1, by);
            const double den = fl - 2.0 * best + fr;
            if (den > 0.0) dx = std::clamp(0.5 * (fl - fr) / den, -0.5, 0.5);
        }
        if (by > 0 && by + 1 < grid.n && grid.detectable_at(bx, by - 1) &&
            grid.detectable_at(bx, by + 1)) {
            const double fd = ssq_at(bx, by - 1), fu = ssq_at(bx, by + 1);
            const double den = fd - 2.0 * best + fu;
            if (den > 0.0) dy = std::clamp(0.5 * (fd - fu) / den, -0.5, 0.5);
        }
    }
    est.candidate = {grid.coord(bx) + dx * grid.spacing, grid.coord(by) + dy * grid.spacing};
    est.detectable = true;
    return est;
}

inline PositionEstimate locate_frame(const DetectorFrame& frame, const SignatureGrid& grid) {
    return locate_counts(std::vector<double>(frame.counts.begin(), frame.counts.end()),
                         frame.t_mid, grid);
}

struct BranchReport {
    int discontinuities = 0;
    bool seeded = false;  // false: first detectable frame taken as-is
};

// Resolve the two-fold point ambiguity frame by frame: of {r, -r} keep the
// candidate closer to the last chosen position (or to the seed position for
// the first usable frame). Gaps are bridged by remembering the last choice;
// a jump beyond the gate is flagged but not undone.
inline BranchReport select_branch(std::vector<PositionEstimate>& estimates,
                                  std::optional<Vec2> seed_position, double jump_gate = 0.5) {
    BranchReport report;
    std::optional<Vec2> last = seed_position;
    report.seeded = seed_position.has_value();
    for (auto& est : estimates) {
        if (!est.detectable) continue;
        Vec2 pick = est.candidate;
        if (last) {
            const Vec2 mirrored = -est.candidate;
            if (norm(mirrored - *last) < norm(est.candidate - *last)) pick = mirrored;
            if (norm(pick - *last) > jump_gate) {
                est.jump_flag = true;
                ++report.discontinuities;
            }
        }
        est.chosen = pick;
        last = pick;
    }
    return report;
}

struct SmoothConfig {
    double target_factor = 1.0;  // weighted-RSS target as a multiple of n
    double sigma_floor = 0.002;  // waists
    double sigma_ceil = 0.15;    // waists
};

struct ReconstructedPath {
    std::vector<PositionEstimate> estimates;
    std::vector<Vec2> smoothed;  // evaluated at every estimate's t_mid
    CubicSpline spline_x, spline_y;
    double lambda_x = 0.0, lambda_y = 0.0;
    BranchReport branch;
};

// Per-frame position uncertainty from Poisson counting error propagated
// through the local signature Jacobian (central differences on the grid).
inline double position_sigma(const SignatureGrid& grid, Vec2 pos) {
    const int ix = std::clamp(static_cast<int>(std::lround(pos.x / grid.spacing)) + grid.half(),
                              1, grid.n - 2);
    const int iy = std::clamp(static_cast<int>(std::lround(pos.y / grid.spacing)) + grid.half(),
                              1, grid.n - 2);
    double m00 = 0.0, m01 = 0.0, m11 = 0.0;
    const double inv2h = 1.0 / (2.0 * grid.spacing);
    for (int j = 0; j < grid.n_channels; ++j) {
        const double jx = (grid.signature_at(ix + 1, iy)[j] - grid.signature_at(ix - 1, iy)[j]) *
                          inv2h;
        const double jy = (grid.signature_at(ix, iy + 1)[j] - grid.signature_at(ix, iy - 1)[j]) *
                          inv2h;
        const double w = 1.0 / std::max(grid.signature_at(ix, iy)[j], 1.0);
        m00 += w * jx * jx;
        m01 += w * jx * jy;
        m11 += w * jy * jy;
    }
    const double det = m00 * m11 - m01 * m01;
    if (!(det > 0.0)) return grid.spacing;
    // mean of the two per-axis Cramer-Rao variances
    const double var = 0.5 * (m11 + m00) / det;
    return std::sqrt(std::max(var, 0.0));
}

// Fit the smooth path through the chosen estimates; undetectable gaps are
// interpolated by the spline and stay flagged through `estimates`.
inline ReconstructedPath smooth_path(std::vector<PositionEstimate> estimates,
                                     const SignatureGrid& grid, const SmoothConfig& cfg = {}) {
    std::vector<double> t, x, y, sigma;
    for (const auto& est : estimates) {
        if (!est.chosen) continue;
        t.push_back(est.t_mid);
        x.push_back(est.chosen->x);
        y.push_back(est.chosen->y);
        sigma.push_back(
            std::clamp(position_sigma(grid, *est.chosen), cfg.sigma_floor, cfg.sigma_ceil));
    }
    if (t.size() < 4)
        throw NumericalError("smoothing needs at least 4 usable position estimates");

    const double target = cfg.target_factor * static_cast<double>(t.size());
    auto fx = fit_smoothing_spline(t, x, sigma, target);
    auto fy = fit_smoothing_spline(t, y, sigma, target);

    ReconstructedPath path;
    path.estimates = std::move(estimates);
    path.spline_x = fx.spline;
    path.spline_y = fy.spline;
    path.lambda_x = fx.lambda;
    path.lambda_y = fy.lambda;
    path.smoothed.reserve(path.estimates.size());
    for (const auto& est : path.estimates)
        path.smoothed.push_back({path.spline_x(est.t_mid), path.spline_y(est.t_mid)});
    return path;
}

struct EvalReport {
    double rms_error = 0.0;       // waists, branch minimum
    double max_error = 0.0;       // waists, on the winning branch
    double rms_error_raw = 0.0;   // unsmoothed estimates, winning branch
    bool reflected_branch = false;
    double detectable_fraction = 0.0;
    int discontinuities = 0;
    std::size_t frames_compared = 0;
};

// Compare a reconstructed path against the generating trajectory. The
// point-reflected path is an equivalent solution, so errors are evaluated on
// both global branches and the better one is reported.
inline EvalReport evaluate_path(const ReconstructedPath& path, const TrajectoryRecord& truth) {
    if (path.estimates.empty()) throw UsageError("empty reconstruction");
    const auto& tt = truth.times;
    if (tt.size() < 2) throw UsageError("truth trajectory too short");

    auto truth_at = [&](double t) -> Vec2 {
        auto it = std::upper_bound(tt.begin(), tt.end(), t);
        if (it == tt.begin() || it == tt.end())
            throw UsageError("reconstruction and truth time ranges do not overlap");
        const std::size_t i = it - tt.begin();
        const double w = (t - tt[i - 1]) / (tt[i] - tt[i - 1]);
        const Vec2 a = truth.states[i - 1].r, b = truth.states[i].r;
        return {a.x + w * (b.x - a.x), a.y + w * (b.y - a.y)};
    };

    double ss_plus = 0.0, ss_minus = 0.0, ss_raw_plus = 0.0, ss_raw_minus = 0.0;
    std::vector<double> err_plus, err_minus;
    std::size_t n = 0, detectable = 0;
    for (std::size_t i = 0; i < path.estimates.size(); ++i) {
        const auto& est = path.estimates[i];
        if (!est.detectable) continue;
        ++detectable;
        if (est.t_mid < tt.front() || est.t_mid > tt.back()) continue;
        const Vec2 ref = truth_at(est.t_mid);
        const Vec2 sm = path.smoothed[i];
        const double ep = norm(sm - ref);
        const double em = norm(-sm - ref);
        err_plus.push_back(ep);
        err_minus.push_back(em);
        ss_plus += ep * ep;
        ss_minus += em * em;
        if (est.chosen) {
            const double rp = norm(*est.chosen - ref);
            const double rm = norm(-*est.chosen - ref);
            ss_raw_plus += rp * rp;
            ss_raw_minus += rm * rm;
        }
        ++n;
    }
    if (n == 0) throw UsageError("reconstruction and truth time ranges do not overlap");

    EvalReport rep;
    rep.frames_compared = n;
    rep.reflected_branch = ss_minus < ss_plus;
    const auto& err = rep.reflected_branch ? err_minus : err_plus;
    rep.rms_error = std::sqrt((rep.reflected_branch ? ss_minus : ss_plus) / n);
    rep.rms_error_raw = std::sqrt((rep.reflected_branch ? ss_raw_minus : ss_raw_plus) / n);
    rep.max_error = *std::max_element(err.begin(), err.end());
    rep.detectable_fraction =
        static_cast<double>(detectable) / static_cast<double>(path.estimates.size());
    rep.discontinuities = path.branch.discontinuities;
    return rep;
}

}  // namespace cavtrack
