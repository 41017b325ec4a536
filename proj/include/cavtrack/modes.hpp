#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "cavtrack/errors.hpp"
#include "cavtrack/hash.hpp"
#include "cavtrack/laguerre.hpp"
#include "cavtrack/linalg.hpp"
#include "cavtrack/quadrature.hpp"

namespace cavtrack {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Radial-argument convention for the ring-mode family. `paper` keeps the
// sqrt(2) rho^2 / w0^2 Laguerre argument; `standard_lg` uses the textbook
// 2 rho^2 / w0^2. Normalisation is computed numerically either way.
enum class LgConvention { paper, standard_lg };

inline const char* to_string(LgConvention c) {
    return c == LgConvention::paper ? "paper" : "standard";
}

inline LgConvention lg_convention_from_string(const std::string& s) {
    if (s == "paper") return LgConvention::paper;
    if (s == "standard") return LgConvention::standard_lg;
    throw UsageError("unknown lg_convention '" + s + "' (expected paper|standard)");
}

struct ModeIndex {
    int p = 0;  // radial index, >= 0
    int m = 0;  // azimuthal index

    bool operator==(const ModeIndex&) const = default;
    int order() const { return 2 * p + std::abs(m); }
};

struct CavityGeometry {
    double waist = 29e-6;        // w0 [m]
    double wavelength = 780e-9;  // [m]
    double length = 120e-6;      // cavity length d [m]

    double wavenumber() const { return 2.0 * kPi / wavelength; }
    // kz phase per unit z when z is measured in waists
    double k_waist() const { return wavenumber() * waist; }
    // TEM00 mode volume, d w0^2 pi / 4
    double mode_volume() const { return length * waist * waist * kPi / 4.0; }

    void validate() const {
        if (!(waist > 0.0) || !(wavelength > 0.0) || !(length > 0.0))
            throw UsageError("cavity geometry requires positive waist, wavelength and length");
    }
};

// Value and transverse gradient of a mode (or mode sum) at one point.
// Lengths in waist units, so gradients carry 1/w0.
struct FieldSample {
    Complex value{0.0, 0.0};
    Complex dx{0.0, 0.0};
    Complex dy{0.0, 0.0};
};

namespace detail {

// integer power by plain multiplication; keeps (-z)^k == (-1)^k z^k bit-exact,
// which makes the 180-degree symmetry of even-m sets exact
inline Complex ipow(Complex z, int k) {
    Complex r(1.0, 0.0);
    for (int i = 0; i < k; ++i) r *= z;
    return r;
}

inline double radial_argument_scale(LgConvention c) {
    return c == LgConvention::paper ? std::sqrt(2.0) : 2.0;
}

// unnormalised radial profile (sqrt(2) rho)^|m| e^{-rho^2} L_p^|m|(a rho^2),
// rho in waist units, sign (-1)^p folded in
inline double radial_profile(ModeIndex mode, LgConvention c, double rho) {
    const double t = rho * rho;
    const double a = radial_argument_scale(c);
    const int am = std::abs(mode.m);
    const double sign = (mode.p % 2 == 0) ? 1.0 : -1.0;
    return sign * std::pow(std::sqrt(2.0) * rho, am) * std::exp(-t) * laguerre(mode.p, am, a * t);
}

}  // namespace detail

// Transverse quadrature cutoff in waist units; the Gaussian tail beyond is
// below 1e-10 of the mode power.
inline constexpr double kRadialCutoff = 5.0;

// Normalisation constants such that the volume integral of |u|^2 equals the
// TEM00 mode volume: cos^2's d/2 is analytic, so the transverse power must be
// pi w0^2 / 2 and C = 1 / sqrt(4 I) with I the unnormalised radial integral.
inline std::vector<double> compute_norms(const std::vector<ModeIndex>& modes,
                                         const CavityGeometry& geometry,
                                         LgConvention convention = LgConvention::paper,
                                         double r_max = kRadialCutoff) {
    geometry.validate();
    if (modes.empty()) throw UsageError("compute_norms requires a non-empty mode list");
    std::vector<double> norms;
    norms.reserve(modes.size());
    for (const auto& mode : modes) {
        if (mode.p < 0) throw UsageError("radial mode index must be non-negative");
        auto integrand = [&](double rho) {
            const double r = detail::radial_profile(mode, convention, rho);
            return r * r * rho;
        };
        const double power = integrate_rel(integrand, 0.0, r_max, 1e-12);
        if (!(power > 0.0)) throw NumericalError("mode power integral vanished");
        norms.push_back(1.0 / (2.0 * std::sqrt(power)));
    }
    return norms;
}

// Ordered mode basis with its normalisation constants. The list order is the
// canonical amplitude-vector order everywhere downstream.
struct ModeSet {
    std::vector<ModeIndex> modes;
    std::vector<double> norms;
    CavityGeometry geometry;
    LgConvention convention = LgConvention::paper;
    std::vector<std::string> warnings;

    std::size_t size() const { return modes.size(); }

    static ModeSet build(std::vector<ModeIndex> modes, const CavityGeometry& geometry,
                         LgConvention convention = LgConvention::paper) {
        ModeSet set;
        set.modes = std::move(modes);
        set.geometry = geometry;
        set.convention = convention;
        set.norms = compute_norms(set.modes, geometry, convention);
        for (std::size_t i = 0; i < set.modes.size(); ++i)
            for (std::size_t j = i + 1; j < set.modes.size(); ++j)
                if (set.modes[i] == set.modes[j])
                    throw UsageError("duplicate mode index in mode set");
        for (std::size_t i = 1; i < set.modes.size(); ++i) {
            if (set.modes[i].order() != set.modes[0].order()) {
                set.warnings.push_back(
                    "mode set is not frequency-degenerate (2p+|m| differs); "
                    "a common detuning is still assumed");
                break;
            }
        }
        return set;
    }

    // default basis: one radial ring mode plus the +-2 vortex pair
    static ModeSet canonical(const CavityGeometry& geometry,
                             LgConvention convention = LgConvention::paper) {
        return build({{1, 0}, {0, -2}, {0, 2}}, geometry, convention);
    }

    std::string to_text() const {
        std::ostringstream os;
        os.precision(17);
        os << "[modeset]\n";
        os << "convention = " << to_string(convention) << "\n";
        os << "waist_m = " << geometry.waist << "\n";
        os << "wavelength_m = " << geometry.wavelength << "\n";
        os << "length_m = " << geometry.length << "\n";
        os << "modes =";
        for (const auto& m : modes) os << " " << m.p << "," << m.m;
        os << "\n";
        os << "norms =";
        for (double c : norms) os << " " << c;
        os << "\n";
        return os.str();
    }

    static ModeSet from_text(const std::string& text);

    std::uint64_t hash() const { return fnv1a64(to_text()); }
};

inline ModeSet ModeSet::from_text(const std::string& text) {
    ModeSet set;
    std::istringstream is(text);
    std::string line;
    bool in_section = false;
    bool have_modes = false, have_norms = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line == "[modeset]") {
            in_section = true;
            continue;
        }
        if (!in_section) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
        };
        trim(key);
        trim(val);
        if (key == "convention") {
            set.convention = lg_convention_from_string(val);
        } else if (key == "waist_m") {
            set.geometry.waist = std::stod(val);
        } else if (key == "wavelength_m") {
            set.geometry.wavelength = std::stod(val);
        } else if (key == "length_m") {
            set.geometry.length = std::stod(val);
        } else if (key == "modes") {
            std::istringstream ms(val);
            std::string tok;
            while (ms >> tok) {
                const auto comma = tok.find(',');
                if (comma == std::string::npos) throw UsageError("bad mode token '" + tok + "'");
                set.modes.push_back(
                    {std::stoi(tok.substr(0, comma)), std::stoi(tok.substr(comma + 1))});
            }
            have_modes = true;
        } else if (key == "norms") {
            std::istringstream ns(val);
            double c;
            while (ns >> c) set.norms.push_back(c);
            have_norms = true;
        }
    }
    if (!in_section || !have_modes || !have_norms || set.modes.size() != set.norms.size())
        throw UsageError("malformed mode-set text");
    set.geometry.validate();
    return set;
}

// Mode function value and analytic transverse gradient at (x, y, z), lengths
// in waist units. Total function: the on-axis m != 0 case falls out of the
// polynomial form without special-casing.
inline FieldSample evaluate_mode(ModeIndex mode, double norm, const CavityGeometry& geometry,
                                 LgConvention convention, double x, double y, double z = 0.0) {
    const int am = std::abs(mode.m);
    const double t = x * x + y * y;
    const double a = detail::radial_argument_scale(convention);
    const double lag = laguerre(mode.p, am, a * t);
    const double dlag = laguerre_deriv(mode.p, am, a * t);
    const double gauss = std::exp(-t);
    const double h = gauss * lag;
    const double hp = gauss * (a * dlag - lag);  // dh/dt

    const double sign = (mode.p % 2 == 0) ? 1.0 : -1.0;
    const double pref =
        norm * sign * std::pow(std::sqrt(2.0), am) * std::cos(geometry.k_waist() * z);

    // rho^|m| e^{i m theta} = (x + i sgn(m) y)^|m|
    const Complex zc(x, mode.m >= 0 ? y : -y);
    const Complex w = detail::ipow(zc, am);
    Complex wx(0.0, 0.0), wy(0.0, 0.0);
    if (am > 0) {
        const Complex wm1 = detail::ipow(zc, am - 1);
        wx = static_cast<double>(am) * wm1;
        wy = Complex(0.0, mode.m >= 0 ? 1.0 : -1.0) * static_cast<double>(am) * wm1;
    }

    FieldSample out;
    out.value = pref * w * h;
    out.dx = pref * (wx * h + w * hp * 2.0 * x);
    out.dy = pref * (wy * h + w * hp * 2.0 * y);
    return out;
}

inline FieldSample evaluate_mode(const ModeSet& set, std::size_t idx, double x, double y,
                                 double z = 0.0) {
    return evaluate_mode(set.modes[idx], set.norms[idx], set.geometry, set.convention, x, y, z);
}

// All modes at one point, canonical order. One call per integration step.
inline std::vector<FieldSample> mode_vector(const ModeSet& set, double x, double y,
                                            double z = 0.0) {
    std::vector<FieldSample> out;
    out.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) out.push_back(evaluate_mode(set, i, x, y, z));
    return out;
}

// Angular part of a sector overlap: integral of e^{i dm theta} over
// [theta0, theta1].
inline Complex sector_angular_factor(int dm, double theta0, double theta1) {
    if (dm == 0) return Complex(theta1 - theta0, 0.0);
    const Complex i_dm(0.0, static_cast<double>(dm));
    return (std::exp(i_dm * theta1) - std::exp(i_dm * theta0)) / i_dm;
}

// Hermitian sector matrices O^(j) with
//   O^(j)_{ab} = (sector integral of u_a u_b^* rho drho dtheta) / (pi/2),
// normalised by the single-mode transverse power so sum_j O^(j) = identity.
// For even sector counts the opposite half is mirrored with the exact
// (-1)^{m_a - m_b} sign, making opposing-sector symmetry bit-exact.
inline std::vector<CMatrix> sector_overlap_matrices(const ModeSet& set, int n_sectors,
                                                    double r_max = kRadialCutoff) {
    if (n_sectors < 2) throw UsageError("need at least two sectors");
    if (r_max < 4.0) throw UsageError("sector overlap r_max must be at least 4 waists");
    const std::size_t n = set.size();

    // radial cross integrals, symmetric and real
    CMatrix radial(n);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a; b < n; ++b) {
            auto integrand = [&](double rho) {
                return set.norms[a] * detail::radial_profile(set.modes[a], set.convention, rho) *
                       set.norms[b] * detail::radial_profile(set.modes[b], set.convention, rho) *
                       rho;
            };
            const double scale = 0.25;  // diagonal entries integrate to w0^2/4
            const double v = integrate(integrand, 0.0, r_max, 1e-12 * scale);
            radial(a, b) = v;
            radial(b, a) = v;
        }
    }

    const double width = 2.0 * kPi / n_sectors;
    const double power_norm = kPi / 2.0;
    std::vector<CMatrix> sectors(n_sectors, CMatrix(n));
    const int direct = (n_sectors % 2 == 0) ? n_sectors / 2 : n_sectors;
    for (int j = 0; j < direct; ++j) {
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = a; b < n; ++b) {
                const int dm = set.modes[a].m - set.modes[b].m;
                const Complex ang = sector_angular_factor(dm, j * width, (j + 1) * width);
                const Complex v = radial(a, b).real() * ang / power_norm;
                sectors[j](a, b) = v;
                sectors[j](b, a) = std::conj(v);
            }
        }
    }
    for (int j = direct; j < n_sectors; ++j) {
        const int src = j - direct;
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b) {
                const int dm = set.modes[a].m - set.modes[b].m;
                const double sign = (dm % 2 == 0) ? 1.0 : -1.0;
                sectors[j](a, b) = sign * sectors[src](a, b);
            }
        }
    }
    return sectors;
}

}  // namespace cavtrack
