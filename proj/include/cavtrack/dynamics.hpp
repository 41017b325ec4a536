#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "cavtrack/errors.hpp"
#include "cavtrack/linalg.hpp"
#include "cavtrack/modes.hpp"
#include "cavtrack/params.hpp"
#include "cavtrack/rng.hpp"
#include "cavtrack/steady_state.hpp"

namespace cavtrack {

// Transverse atomic state in internal units: position in waists, momentum in
// M w0 kappa (so momentum doubles as velocity). z stays at the antinode and
// is not a degree of freedom.
struct AtomState {
    Vec2 r;
    Vec2 p;
};

struct NoiseConfig {
    bool enabled = true;
    double momentum_diffusion_scale = 1.0;
    double field_noise_scale = 1.0;
    std::uint64_t seed = 1;
};

struct SimOptions {
    double dt = 0.01;            // in 1/kappa; guard rejects dt > 0.05
    double duration = 5300.0;    // in 1/kappa
    int record_stride = 10;
    double bounding_box = 5.0;   // waists; leaving it ends the run
    bool clamp_atom = false;
};

struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<AtomState> states;
    std::vector<FieldState> fields;
    std::uint64_t params_hash = 0;
    NoiseConfig noise;
    SimOptions options;
    bool early_exit = false;
};

namespace detail {

struct LocalField {
    Complex value{0.0, 0.0};     // sum_m alpha_m u_m(r)
    Complex coupling{0.0, 0.0};  // sum_n u_n^* alpha_n
};

inline LocalField local_field(const std::vector<FieldSample>& samples, const CVector& alpha) {
    LocalField f;
    for (std::size_t m = 0; m < alpha.size(); ++m) {
        f.value += alpha[m] * samples[m].value;
        f.coupling += std::conj(samples[m].value) * alpha[m];
    }
    return f;
}

// Dipole plus scattering force from the mode-pair double sum. Returned in
// internal momentum-rate units (the hbar/(M w0^2 kappa) prefactor applied).
inline Vec2 force_from_samples(const ScaledParams& sp, const std::vector<FieldSample>& samples,
                               const CVector& alpha) {
    Complex fx(0.0), fy(0.0);
    const Complex i_unit(0.0, 1.0);
    const std::size_t n = alpha.size();
    for (std::size_t m = 0; m < n; ++m) {
        for (std::size_t k = 0; k < n; ++k) {
            const Complex amn = alpha[m] * std::conj(alpha[k]);
            const Complex um = samples[m].value;
            const Complex ukc = std::conj(samples[k].value);
            const Complex gmx = samples[m].dx, gmy = samples[m].dy;
            const Complex gkx = std::conj(samples[k].dx), gky = std::conj(samples[k].dy);
            fx += amn * (-sp.light_shift * (gmx * ukc + um * gkx) +
                         i_unit * sp.scatter_rate * (um * gkx - ukc * gmx));
            fy += amn * (-sp.light_shift * (gmy * ukc + um * gky) +
                         i_unit * sp.scatter_rate * (um * gky - ukc * gmy));
        }
    }
    fx *= sp.force_prefactor;
    fy *= sp.force_prefactor;
    const double mag = std::hypot(std::abs(fx), std::abs(fy));
    if (std::hypot(fx.imag(), fy.imag()) > 1e-12 * mag + 1e-300)
        throw NumericalError("force acquired an imaginary part (broken Hermitian pairing)");
    return {fx.real(), fy.real()};
}

}  // namespace detail

inline Vec2 forces(const ModeSet& set, const ScaledParams& sp, const AtomState& atom,
                   const FieldState& field) {
    const auto samples = mode_vector(set, atom.r.x, atom.r.y, 0.0);
    return detail::force_from_samples(sp, samples, field.alpha);
}

// Deterministic part of d(alpha)/dt at the current state, in 1/kappa time.
inline CVector field_derivative(const ModeSet& set, const ScaledParams& sp, const AtomState& atom,
                                const FieldState& field) {
    const auto samples = mode_vector(set, atom.r.x, atom.r.y, 0.0);
    const auto local = detail::local_field(samples, field.alpha);
    const Complex coupling(sp.scatter_rate, sp.light_shift);
    CVector out(set.size());
    for (std::size_t m = 0; m < set.size(); ++m) {
        out[m] = sp.pump[m] + Complex(-1.0, sp.delta) * field.alpha[m] -
                 coupling * samples[m].value * local.coupling;
    }
    return out;
}

// Conservative-limit optical potential, hbar U0 |E(r)|^2 in internal energy
// units; the gamma = 0 force is exactly its negative gradient.
inline double dipole_potential(const ModeSet& set, const ScaledParams& sp, Vec2 r,
                               const CVector& alpha) {
    const auto samples = mode_vector(set, r.x, r.y, 0.0);
    Complex field(0.0);
    for (std::size_t m = 0; m < alpha.size(); ++m) field += alpha[m] * samples[m].value;
    return sp.force_prefactor * sp.light_shift * std::norm(field);
}

// One integration step. The field's linear part decays exactly via
// exp((i Delta - kappa) dt); pump and atom coupling enter at first order
// through the matching phi = (e^{L dt} - 1)/L weight, so a clamped atom's
// field relaxes to the exact stationary point for any dt. The atom advances
// by symplectic Euler (momentum first). Noise enters as Euler-Maruyama
// increments:
//   field   <xi xi^*> = kappa per unit time (vacuum level),
//   momentum sigma_p^2 = (hbar k)^2 gamma |E(r)|^2 per axis per unit time,
// each times its configured scale. Draw order per step: (re, im) per mode,
// then px, py; this order is part of the reproducibility contract.
inline void step(const ModeSet& set, const ScaledParams& sp, AtomState& atom, FieldState& field,
                 double dt, const NoiseConfig& noise, Rng& rng, bool clamp_atom = false) {
    if (!(dt > 0.0) || dt > 0.05) throw UsageError("step size must satisfy 0 < dt <= 0.05/kappa");

    const auto samples = mode_vector(set, atom.r.x, atom.r.y, 0.0);
    const auto local = detail::local_field(samples, field.alpha);
    const Vec2 f = clamp_atom ? Vec2{} : detail::force_from_samples(sp, samples, field.alpha);

    const Complex linear(-1.0, sp.delta);
    const Complex decay = std::exp(linear * dt);
    const Complex phi = (decay - 1.0) / linear;
    const Complex coupling(sp.scatter_rate, sp.light_shift);
    const double field_sigma =
        noise.enabled ? std::sqrt(0.5 * noise.field_noise_scale * dt) : 0.0;
    for (std::size_t m = 0; m < set.size(); ++m) {
        Complex next = decay * field.alpha[m] +
                       phi * (sp.pump[m] - coupling * samples[m].value * local.coupling);
        if (noise.enabled) {
            const double nr = rng.normal();
            const double ni = rng.normal();
            next += field_sigma * Complex(nr, ni);
        }
        field.alpha[m] = next;
    }

    if (clamp_atom) return;

    atom.p = atom.p + dt * f;
    if (noise.enabled) {
        const double sigma_p =
            sp.recoil_momentum * std::sqrt(sp.scatter_rate * std::norm(local.value) *
                                           noise.momentum_diffusion_scale * dt);
        atom.p.x += sigma_p * rng.normal();
        atom.p.y += sigma_p * rng.normal();
    }
    atom.r = atom.r + dt * atom.p;
}

// Empty-cavity fixed point in scaled units; the field the atom flies into.
inline FieldState initial_field(const ScaledParams& sp) {
    FieldState f;
    f.alpha.reserve(sp.pump.size());
    const Complex cav(1.0, -sp.delta);
    for (const auto& eta : sp.pump) f.alpha.push_back(eta / cav);
    return f;
}

// Integrate a full trajectory. The record is reproducible bit-exactly from
// (initial state, options, noise config): one Rng owned by the run, draw
// order fixed by step().
inline TrajectoryRecord simulate(const ModeSet& set, const ScaledParams& sp,
                                 const AtomState& initial, const SimOptions& options,
                                 const NoiseConfig& noise, std::uint64_t params_hash = 0) {
    if (!(options.duration > 0.0)) throw UsageError("simulation duration must be positive");
    if (options.record_stride < 1) throw UsageError("record stride must be at least 1");

    TrajectoryRecord rec;
    rec.params_hash = params_hash;
    rec.noise = noise;
    rec.options = options;

    Rng rng(noise.seed);
    AtomState atom = initial;
    FieldState field = initial_field(sp);

    const auto n_steps = static_cast<long long>(std::ceil(options.duration / options.dt));
    rec.times.push_back(0.0);
    rec.states.push_back(atom);
    rec.fields.push_back(field);

    for (long long k = 1; k <= n_steps; ++k) {
        step(set, sp, atom, field, options.dt, noise, rng, options.clamp_atom);
        if (!std::isfinite(atom.r.x) || !std::isfinite(atom.r.y) ||
            !std::isfinite(atom.p.x) || !std::isfinite(atom.p.y))
            throw NumericalError("trajectory diverged (non-finite atomic state)");
        const bool outside = std::abs(atom.r.x) > options.bounding_box ||
                             std::abs(atom.r.y) > options.bounding_box;
        if (k % options.record_stride == 0 || k == n_steps || outside) {
            rec.times.push_back(k * options.dt);
            rec.states.push_back(atom);
            rec.fields.push_back(field);
        }
        if (outside) {
            rec.early_exit = true;
            break;
        }
    }
    return rec;
}

}  // namespace cavtrack
