#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "cavtrack/errors.hpp"
#include "cavtrack/linalg.hpp"
#include "cavtrack/modes.hpp"

namespace cavtrack {

inline constexpr double kHbar = 1.054571817e-34;  // J s

// Physical system parameters in SI units; all frequencies are angular
// (rad/s). The light shift and scattering rate are always derived from the
// primaries, never stored.
struct SystemParams {
    double g0 = 2.0 * kPi * 16.0e6;               // max TEM00 coupling
    double gamma_atom = 2.0 * kPi * 3.0e6;        // atomic HWHM linewidth
    double kappa = 2.0 * kPi * 1.5e6;             // field decay rate
    double delta_cavity = -2.0 * kPi * 2.25e6;    // pump - cavity detuning
    double detuning_atom = -2.0 * kPi * 114.0e6;  // pump - atom detuning
    std::vector<Complex> pump = {Complex(2.0 * kPi * 6.4e6, 0.0), Complex(0.0, 0.0),
                                 Complex(0.0, 0.0)};  // eta per mode, canonical order
    double mass = 1.443e-25;                          // kg
    // optional scale on g0^2 standing in for longitudinal averaging
    double coupling_sq_factor = 1.0;

    // single-photon light shift U0
    double light_shift() const { return coupling_sq_factor * g0 * g0 / detuning_atom; }
    // single-photon scattering rate gamma
    double scatter_rate() const {
        return coupling_sq_factor * gamma_atom * g0 * g0 / (detuning_atom * detuning_atom);
    }

    void validate(std::size_t n_modes) const {
        if (!(kappa > 0.0)) throw UsageError("kappa must be positive");
        if (!(gamma_atom > 0.0)) throw UsageError("atomic linewidth must be positive");
        if (detuning_atom == 0.0) throw UsageError("pump-atom detuning must be nonzero");
        if (!(mass > 0.0)) throw UsageError("mass must be positive");
        if (!(coupling_sq_factor > 0.0)) throw UsageError("coupling factor must be positive");
        if (pump.size() != n_modes)
            throw UsageError("pump amplitude list does not match the mode count");
    }
};

// The same parameters in the internal unit system: time in 1/kappa, length
// in w0, momentum in M w0 kappa. Everything the integrator touches lives
// here; conversions happen only at the I/O boundary.
struct ScaledParams {
    double delta = 0.0;              // Delta / kappa
    double light_shift = 0.0;        // U0 / kappa
    double scatter_rate = 0.0;       // gamma / kappa
    std::vector<Complex> pump;       // eta / kappa
    double force_prefactor = 0.0;    // hbar / (M w0^2 kappa)
    double recoil_momentum = 0.0;    // hbar k / (M w0 kappa)

    static ScaledParams make(const SystemParams& p, const CavityGeometry& g) {
        p.validate(p.pump.size());
        g.validate();
        ScaledParams s;
        s.delta = p.delta_cavity / p.kappa;
        s.light_shift = p.light_shift() / p.kappa;
        s.scatter_rate = p.scatter_rate() / p.kappa;
        s.pump.reserve(p.pump.size());
        for (const auto& e : p.pump) s.pump.push_back(e / p.kappa);
        s.force_prefactor = kHbar / (p.mass * g.waist * g.waist * p.kappa);
        s.recoil_momentum = kHbar * g.wavenumber() / (p.mass * g.waist * p.kappa);
        return s;
    }
};

// unit conversions at the I/O boundary
inline double velocity_to_scaled(double v_si, const SystemParams& p, const CavityGeometry& g) {
    return v_si / (g.waist * p.kappa);
}
inline double length_scaled_to_si(double x_w0, const CavityGeometry& g) { return x_w0 * g.waist; }
inline double time_scaled_to_si(double t_kappa, const SystemParams& p) { return t_kappa / p.kappa; }

}  // namespace cavtrack
