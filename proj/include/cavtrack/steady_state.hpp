#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "cavtrack/errors.hpp"
#include "cavtrack/linalg.hpp"
#include "cavtrack/modes.hpp"
#include "cavtrack/params.hpp"

namespace cavtrack {

// Complex amplitude per mode, canonical order. |alpha|^2 is the mean photon
// number in that mode.
struct FieldState {
    CVector alpha;
};

struct StationarySolution {
    FieldState alpha_stat;
    Complex coupling_field{0.0, 0.0};  // sum_n u_n^* alpha_n at the atom
    double intensity_at_atom = 0.0;    // |sum_n alpha_n u_n(r_a)|^2
    double saturation = 0.0;
    bool saturation_warning = false;
};

// Fixed point of the amplitude equations with no atom: alpha = eta/(kappa - i Delta).
inline FieldState empty_cavity(const SystemParams& params, const ModeSet& set) {
    params.validate(set.size());
    const Complex denom(params.kappa, -params.delta_cavity);
    FieldState out;
    out.alpha.reserve(set.size());
    for (const auto& eta : params.pump) out.alpha.push_back(eta / denom);
    return out;
}

// Stationary amplitudes for an atom at rest at `pos` (waist units, z = 0).
//
// Setting the amplitude derivatives to zero gives, mode by mode,
//   0 = eta_m + (i Delta - kappa) alpha_m - (i U0 + gamma) u_m S,
//   S = sum_n u_n^* alpha_n,
// i.e. the linear system [(kappa - i Delta) I + (i U0 + gamma) u u^dagger] alpha = eta.
// That solve is the source of truth. Eliminating S instead yields the closed
// form used as a cross-check:
//   S = (sum_n u_n^* eta_n) / [(kappa - i Delta) + (i U0 + gamma) sum_n |u_n|^2],
//   alpha_m = [eta_m - (i U0 + gamma) u_m S] / (kappa - i Delta).
// Both are evaluated and must agree to 1e-10; the published closed form
// carries conjugations on eta that are inconsistent with the dynamical
// equations, so the variant above (derived directly from them) is the one
// implemented.
inline StationarySolution stationary_field(const SystemParams& params, const ModeSet& set,
                                           Vec2 pos) {
    params.validate(set.size());
    const std::size_t n = set.size();
    const auto samples = mode_vector(set, pos.x, pos.y, 0.0);

    CVector u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = samples[i].value;

    // work in kappa units for conditioning
    const double dl = params.delta_cavity / params.kappa;
    const Complex coupling(params.scatter_rate() / params.kappa,
                           params.light_shift() / params.kappa);
    CVector eta(n);
    for (std::size_t i = 0; i < n; ++i) eta[i] = params.pump[i] / params.kappa;

    CMatrix a(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            a(i, j) = coupling * u[i] * std::conj(u[j]);
            if (i == j) a(i, j) += Complex(1.0, -dl);
        }
    }
    CVector alpha = solve_dense(a, eta);

    const double eta_scale = std::sqrt(norm2(eta));
    if (eta_scale > 0.0) {
        CVector resid = a.apply(alpha);
        for (std::size_t i = 0; i < n; ++i) resid[i] -= eta[i];
        if (std::sqrt(norm2(resid)) > 1e-10 * eta_scale)
            throw NumericalError("stationary-field fixed point residual exceeds 1e-10");
    }

    // closed-form cross-check
    const Complex cav(1.0, -dl);
    Complex s_num(0.0), mode_power(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        s_num += std::conj(u[i]) * eta[i];
        mode_power += std::conj(u[i]) * u[i];
    }
    const Complex s_closed = s_num / (cav + coupling * mode_power);
    double diff2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Complex closed = (eta[i] - coupling * u[i] * s_closed) / cav;
        const Complex d = closed - alpha[i];
        diff2 += std::norm(d);
    }
    const double alpha_scale = std::max(std::sqrt(norm2(alpha)), 1e-300);
    if (std::sqrt(diff2) > 1e-10 * alpha_scale)
        throw NumericalError("closed-form stationary solution disagrees with linear solve");

    StationarySolution out;
    out.alpha_stat.alpha = std::move(alpha);
    out.coupling_field = dot_conj(u, out.alpha_stat.alpha);
    Complex local(0.0);
    for (std::size_t i = 0; i < n; ++i) local += out.alpha_stat.alpha[i] * u[i];
    out.intensity_at_atom = std::norm(local);

    const double det2 = params.detuning_atom * params.detuning_atom +
                        params.gamma_atom * params.gamma_atom;
    out.saturation = params.g0 * params.g0 * std::norm(out.coupling_field) / det2;
    out.saturation_warning = out.saturation > 0.1;
    return out;
}

struct EffectiveMode {
    double u_eff = 0.0;
    CMatrix rotation;  // maps the mode-value vector to (u_eff, 0, ..., 0)
};

// Any linear combination of degenerate modes is again a mode, so the vector
// of mode values at the atom can be rotated onto a single effective mode.
inline EffectiveMode effective_mode(const ModeSet& set, Vec2 pos) {
    const auto samples = mode_vector(set, pos.x, pos.y, 0.0);
    CVector u(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) u[i] = samples[i].value;
    EffectiveMode out;
    out.u_eff = std::sqrt(norm2(u));
    out.rotation = out.u_eff == 0.0 ? CMatrix::identity(set.size()) : unitary_from_first_row(u);
    return out;
}

// stationary solve carried out in the rotated single-mode picture, for
// consistency checks against the direct solve
inline CVector stationary_via_effective_mode(const SystemParams& params, const ModeSet& set,
                                             Vec2 pos) {
    params.validate(set.size());
    const auto eff = effective_mode(set, pos);
    const std::size_t n = set.size();
    CVector eta(n);
    for (std::size_t i = 0; i < n; ++i) eta[i] = params.pump[i] / params.kappa;
    const CVector eta_rot = eff.rotation.apply(eta);

    const Complex cav(1.0, -params.delta_cavity / params.kappa);
    const Complex coupling(params.scatter_rate() / params.kappa,
                           params.light_shift() / params.kappa);
    CVector alpha_rot(n);
    // only the first rotated mode couples to the atom
    alpha_rot[0] = eta_rot[0] / (cav + coupling * eff.u_eff * eff.u_eff);
    for (std::size_t i = 1; i < n; ++i) alpha_rot[i] = eta_rot[i] / cav;
    return eff.rotation.adjoint().apply(alpha_rot);
}

struct Image {
    int width = 0;
    int height = 0;
    double extent = 0.0;               // half-width in waist units
    std::vector<double> pixels;        // row-major, row 0 at y = -extent
};

// Stationary intensity pattern |sum_m alpha_m u_m(x,y)|^2 sampled on a
// square grid of pixel centers, arbitrary units. The coordinate array is
// negation-symmetric so point symmetry of even-m patterns survives exactly.
inline Image render_pattern(const SystemParams& params, const ModeSet& set,
                            std::optional<Vec2> atom, int resolution, double extent) {
    if (resolution < 2) throw UsageError("pattern resolution must be at least 2 px");
    if (!(extent > 0.0)) throw UsageError("pattern extent must be positive");

    CVector alpha = atom ? stationary_field(params, set, *atom).alpha_stat.alpha
                         : empty_cavity(params, set).alpha;

    std::vector<double> coord(resolution);
    const double step = 2.0 * extent / resolution;
    for (int i = 0; i < resolution / 2; ++i) {
        coord[i] = -extent + (i + 0.5) * step;
        coord[resolution - 1 - i] = -coord[i];
    }
    if (resolution % 2 == 1) coord[resolution / 2] = 0.0;

    Image img;
    img.width = resolution;
    img.height = resolution;
    img.extent = extent;
    img.pixels.resize(static_cast<std::size_t>(resolution) * resolution);
    for (int iy = 0; iy < resolution; ++iy) {
        for (int ix = 0; ix < resolution; ++ix) {
            const auto samples = mode_vector(set, coord[ix], coord[iy], 0.0);
            Complex field(0.0);
            for (std::size_t m = 0; m < set.size(); ++m) field += alpha[m] * samples[m].value;
            img.pixels[static_cast<std::size_t>(iy) * resolution + ix] = std::norm(field);
        }
    }
    return img;
}

}  // namespace cavtrack
