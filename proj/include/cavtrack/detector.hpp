#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cavtrack/dynamics.hpp"
#include "cavtrack/errors.hpp"
#include "cavtrack/linalg.hpp"
#include "cavtrack/parallel.hpp"
#include "cavtrack/rng.hpp"

namespace cavtrack {

struct DetectorConfig {
    int n_sectors = 16;
    double window = 100.0;    // integration window in 1/kappa
    double efficiency = 1.0;  // collected fraction of the 2 kappa |alpha|^2 output
    bool pair_sum = true;     // add opposing sectors
    std::uint64_t seed = 1;

    int n_channels() const { return pair_sum ? n_sectors / 2 : n_sectors; }

    void validate() const {
        if (n_sectors < 2) throw UsageError("detector needs at least two sectors");
        if (pair_sum && n_sectors % 2 != 0)
            throw UsageError("pair summation requires an even sector count");
        if (!(window > 0.0)) throw UsageError("integration window must be positive");
        if (!(efficiency > 0.0) || efficiency > 1.0)
            throw UsageError("efficiency must lie in (0, 1]");
    }
};

// One integration window: pre-noise expected counts and the Poisson sample.
struct DetectorFrame {
    double t_mid = 0.0;
    std::vector<long long> counts;
    std::vector<double> expected;
};

// Instantaneous photon flux per sector in photons per 1/kappa:
//   rate_j = 2 kappa efficiency alpha^dagger O^(j) alpha  (kappa = 1 internally).
// The Hermitian form is real; a negative value signals broken sector matrices.
inline std::vector<double> sector_rates(const FieldState& field,
                                        const std::vector<CMatrix>& overlaps,
                                        const DetectorConfig& config) {
    config.validate();
    std::vector<double> rates;
    rates.reserve(overlaps.size());
    double total = 0.0;
    for (const auto& alpha : field.alpha) total += std::norm(alpha);
    const double floor = -1e-12 * std::max(1.0, 2.0 * config.efficiency * total);
    for (const auto& o : overlaps) {
        // |sum_m alpha_m u_m|^2 expands to sum_ab alpha_a alpha_b^* u_a u_b^*,
        // so the sector flux weights O_ab with alpha_a alpha_b^*
        Complex q(0.0);
        const std::size_t n = field.alpha.size();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                q += field.alpha[i] * o(i, j) * std::conj(field.alpha[j]);
        const double rate = 2.0 * config.efficiency * q.real();
        if (rate < floor)
            throw NumericalError("negative sector rate (sector matrices lost Hermiticity)");
        rates.push_back(std::max(rate, 0.0));
    }
    return rates;
}

namespace detail {

inline std::vector<double> pair_reduce(const std::vector<double>& v) {
    const std::size_t half = v.size() / 2;
    std::vector<double> out(half);
    for (std::size_t i = 0; i < half; ++i) out[i] = v[i] + v[i + half];
    return out;
}

}  // namespace detail

// Expected counts per window by trapezoidal integration of the per-sector
// flux along the recorded field history, then one Poisson draw per channel.
// Windows tile the record from t = 0 without overlap; each (window, channel)
// pair owns a counter-derived seed so thread count cannot change the output.
inline std::vector<DetectorFrame> integrate_windows(const TrajectoryRecord& trajectory,
                                                    const DetectorConfig& config,
                                                    const std::vector<CMatrix>& overlaps,
                                                    int threads = 1) {
    config.validate();
    const auto& times = trajectory.times;
    if (times.size() < 2 || times.back() < config.window)
        throw UsageError("trajectory is shorter than one integration window");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (times[i] - times[i - 1] > config.window / 10.0 + 1e-12)
            throw UsageError("trajectory sampling is coarser than window/10");
    }

    // flux per sector at each sample
    std::vector<std::vector<double>> rates(times.size());
    parallel_for(times.size(), threads, [&](std::size_t i) {
        rates[i] = sector_rates(trajectory.fields[i], overlaps, config);
    });

    const int n_windows = static_cast<int>(std::floor(times.back() / config.window + 1e-9));
    const int nch = config.n_channels();
    std::vector<DetectorFrame> frames(n_windows);

    parallel_for(static_cast<std::size_t>(n_windows), threads, [&](std::size_t w) {
        const double a = w * config.window;
        const double b = a + config.window;
        std::vector<double> acc(config.n_sectors, 0.0);
        // first segment whose right endpoint is past the window start
        auto it = std::upper_bound(times.begin(), times.end(), a);
        std::size_t seg = (it == times.begin()) ? 0 : (it - times.begin() - 1);
        for (; seg + 1 < times.size() && times[seg] < b; ++seg) {
            const double t0 = times[seg], t1 = times[seg + 1];
            const double c = std::max(t0, a);
            const double d = std::min(t1, b);
            if (d <= c) continue;
            const double inv = 1.0 / (t1 - t0);
            for (int j = 0; j < config.n_sectors; ++j) {
                const double r0 = rates[seg][j], r1 = rates[seg + 1][j];
                const double rc = r0 + (r1 - r0) * (c - t0) * inv;
                const double rd = r0 + (r1 - r0) * (d - t0) * inv;
                acc[j] += 0.5 * (rc + rd) * (d - c);
            }
        }
        DetectorFrame& frame = frames[w];
        frame.t_mid = a + 0.5 * config.window;
        frame.expected = config.pair_sum ? detail::pair_reduce(acc) : acc;
        frame.counts.resize(nch);
        for (int j = 0; j < nch; ++j) {
            Rng rng(derive_seed(config.seed, w, static_cast<std::uint64_t>(j)));
            frame.counts[j] = rng.poisson(frame.expected[j]);
        }
    });
    return frames;
}

}  // namespace cavtrack
