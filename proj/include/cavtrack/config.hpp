#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cavtrack/detector.hpp"
#include "cavtrack/dynamics.hpp"
#include "cavtrack/errors.hpp"
#include "cavtrack/hash.hpp"
#include "cavtrack/io.hpp"
#include "cavtrack/modes.hpp"
#include "cavtrack/params.hpp"
#include "cavtrack/reconstruct.hpp"

namespace cavtrack {

// Everything one run needs, in the units a config file speaks (MHz, um, nm,
// cm/s). Defaults reproduce the reference experiment: a rubidium atom
// entering a three-mode cavity from below at 12 cm/s.
struct RunConfig {
    // [physics] linear frequencies in MHz (stored as given; converted on use)
    double g0_mhz = 16.0;
    double gamma_hwhm_mhz = 3.0;
    double kappa_mhz = 1.5;
    double delta_mhz = -2.25;
    double atom_detuning_mhz = -114.0;
    std::vector<double> pump_re_mhz = {6.4, 0.0, 0.0};
    std::vector<double> pump_im_mhz = {0.0, 0.0, 0.0};
    double mass_kg = 1.443e-25;
    double coupling_sq_factor = 1.0;

    // [geometry]
    double waist_um = 29.0;
    double wavelength_nm = 780.0;
    double length_um = 120.0;

    // [modes]
    std::vector<ModeIndex> modes = {{1, 0}, {0, -2}, {0, 2}};
    LgConvention convention = LgConvention::paper;

    // [dynamics] positions in waists, velocities in cm/s, times in 1/kappa
    double dt = 0.01;
    double duration = 5300.0;
    int record_stride = 10;
    double bounding_box = 5.0;
    double x0 = 0.2;
    double y0 = -2.0;
    double vx_cm_s = 0.0;
    double vy_cm_s = 12.0;
    bool noise_enabled = true;
    double momentum_diffusion_scale = 1.0;
    double field_noise_scale = 1.0;
    std::uint64_t sim_seed = 1;

    // [detector]
    int n_sectors = 16;
    double window = 100.0;
    double efficiency = 1.0;
    bool pair_sum = true;
    std::uint64_t detector_seed = 1;
    bool with_truth = false;

    // [reconstruction]
    double grid_extent = 1.5;
    double grid_spacing = 0.025;
    double branch_gate = 0.5;
    double smoothing_target = 1.0;
    bool seed_from_entry = true;  // use the dynamics entry point as branch seed
    double seed_x = 0.0;
    double seed_y = 0.0;

    SystemParams physics() const {
        SystemParams p;
        const double f = 2.0 * kPi * 1e6;
        p.g0 = g0_mhz * f;
        p.gamma_atom = gamma_hwhm_mhz * f;
        p.kappa = kappa_mhz * f;
        p.delta_cavity = delta_mhz * f;
        p.detuning_atom = atom_detuning_mhz * f;
        if (pump_re_mhz.size() != modes.size() || pump_im_mhz.size() != modes.size())
            throw UsageError("pump amplitude lists must match the mode count");
        p.pump.clear();
        for (std::size_t i = 0; i < pump_re_mhz.size(); ++i)
            p.pump.emplace_back(pump_re_mhz[i] * f, pump_im_mhz[i] * f);
        p.mass = mass_kg;
        p.coupling_sq_factor = coupling_sq_factor;
        return p;
    }

    CavityGeometry geometry() const {
        return {waist_um * 1e-6, wavelength_nm * 1e-9, length_um * 1e-6};
    }

    ModeSet mode_set() const { return ModeSet::build(modes, geometry(), convention); }

    AtomState initial_atom() const {
        AtomState a;
        a.r = {x0, y0};
        const SystemParams p = physics();
        const CavityGeometry g = geometry();
        a.p = {velocity_to_scaled(vx_cm_s * 1e-2, p, g), velocity_to_scaled(vy_cm_s * 1e-2, p, g)};
        return a;
    }

    SimOptions sim_options() const { return {dt, duration, record_stride, bounding_box, false}; }

    NoiseConfig noise_config() const {
        return {noise_enabled, momentum_diffusion_scale, field_noise_scale, sim_seed};
    }

    DetectorConfig detector_config() const {
        return {n_sectors, window, efficiency, pair_sum, detector_seed};
    }

    GridConfig grid_config() const { return {grid_extent, grid_spacing}; }

    std::optional<Vec2> branch_seed() const {
        if (seed_from_entry) return Vec2{x0, y0};
        return Vec2{seed_x, seed_y};
    }
};

namespace detail {

inline std::string bool_str(bool b) { return b ? "1" : "0"; }

inline bool parse_bool(const std::string& v, int line_no) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw UsageError("line " + std::to_string(line_no) + ": expected boolean, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& v) {
    std::istringstream is(v);
    std::vector<double> out;
    double x;
    while (is >> x) out.push_back(x);
    return out;
}

inline std::string list_str(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ' ';
        s += format_double(v[i]);
    }
    return s;
}

}  // namespace detail

// Canonical resolved form: every key, fixed order. Its hash stamps all
// output files of a run.
inline std::string serialize_config(const RunConfig& c) {
    std::ostringstream os;
    os << "[physics]\n";
    os << "g0_mhz = " << format_double(c.g0_mhz) << "\n";
    os << "gamma_hwhm_mhz = " << format_double(c.gamma_hwhm_mhz) << "\n";
    os << "kappa_mhz = " << format_double(c.kappa_mhz) << "\n";
    os << "delta_mhz = " << format_double(c.delta_mhz) << "\n";
    os << "atom_detuning_mhz = " << format_double(c.atom_detuning_mhz) << "\n";
    os << "pump_re_mhz = " << detail::list_str(c.pump_re_mhz) << "\n";
    os << "pump_im_mhz = " << detail::list_str(c.pump_im_mhz) << "\n";
    os << "mass_kg = " << format_double(c.mass_kg) << "\n";
    os << "coupling_sq_factor = " << format_double(c.coupling_sq_factor) << "\n";
    os << "[geometry]\n";
    os << "waist_um = " << format_double(c.waist_um) << "\n";
    os << "wavelength_nm = " << format_double(c.wavelength_nm) << "\n";
    os << "length_um = " << format_double(c.length_um) << "\n";
    os << "[modes]\n";
    os << "indices =";
    for (const auto& m : c.modes) os << " " << m.p << "," << m.m;
    os << "\n";
    os << "convention = " << to_string(c.convention) << "\n";
    os << "[dynamics]\n";
    os << "dt = " << format_double(c.dt) << "\n";
    os << "duration = " << format_double(c.duration) << "\n";
    os << "record_stride = " << c.record_stride << "\n";
    os << "bounding_box = " << format_double(c.bounding_box) << "\n";
    os << "x0 = " << format_double(c.x0) << "\n";
    os << "y0 = " << format_double(c.y0) << "\n";
    os << "vx_cm_s = " << format_double(c.vx_cm_s) << "\n";
    os << "vy_cm_s = " << format_double(c.vy_cm_s) << "\n";
    os << "noise_enabled = " << detail::bool_str(c.noise_enabled) << "\n";
    os << "momentum_diffusion_scale = " << format_double(c.momentum_diffusion_scale) << "\n";
    os << "field_noise_scale = " << format_double(c.field_noise_scale) << "\n";
    os << "seed = " << c.sim_seed << "\n";
    os << "[detector]\n";
    os << "n_sectors = " << c.n_sectors << "\n";
    os << "window = " << format_double(c.window) << "\n";
    os << "efficiency = " << format_double(c.efficiency) << "\n";
    os << "pair_sum = " << detail::bool_str(c.pair_sum) << "\n";
    os << "seed = " << c.detector_seed << "\n";
    os << "with_truth = " << detail::bool_str(c.with_truth) << "\n";
    os << "[reconstruction]\n";
    os << "grid_extent = " << format_double(c.grid_extent) << "\n";
    os << "grid_spacing = " << format_double(c.grid_spacing) << "\n";
    os << "branch_gate = " << format_double(c.branch_gate) << "\n";
    os << "smoothing_target = " << format_double(c.smoothing_target) << "\n";
    os << "seed_from_entry = " << detail::bool_str(c.seed_from_entry) << "\n";
    os << "seed_x = " << format_double(c.seed_x) << "\n";
    os << "seed_y = " << format_double(c.seed_y) << "\n";
    return os.str();
}

// Parse a sectioned key = value config over the defaults in `base`. Unknown
// sections or keys are errors with their line number.
inline RunConfig parse_config(const std::string& text, RunConfig base = {}) {
    RunConfig c = base;
    std::istringstream is(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        if (line[first] == '#' || line[first] == ';') continue;
        if (line[first] == '[') {
            const auto close = line.find(']', first);
            if (close == std::string::npos)
                throw UsageError("line " + std::to_string(line_no) + ": unterminated section");
            section = line.substr(first + 1, close - first - 1);
            if (section != "physics" && section != "geometry" && section != "modes" &&
                section != "dynamics" && section != "detector" && section != "reconstruction")
                throw UsageError("line " + std::to_string(line_no) + ": unknown section [" +
                                 section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("line " + std::to_string(line_no) + ": expected key = value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        auto bad_key = [&]() -> UsageError {
            return UsageError("line " + std::to_string(line_no) + ": unknown key '" + key +
                              "' in section [" + section + "]");
        };
        auto num = [&]() {
            try {
                return std::stod(val);
            } catch (const std::exception&) {
                throw UsageError("line " + std::to_string(line_no) + ": bad number '" + val +
                                 "'");
            }
        };
        try {
            if (section == "physics") {
                if (key == "g0_mhz") c.g0_mhz = num();
                else if (key == "gamma_hwhm_mhz") c.gamma_hwhm_mhz = num();
                else if (key == "kappa_mhz") c.kappa_mhz = num();
                else if (key == "delta_mhz") c.delta_mhz = num();
                else if (key == "atom_detuning_mhz") c.atom_detuning_mhz = num();
                else if (key == "pump_re_mhz") c.pump_re_mhz = detail::parse_list(val);
                else if (key == "pump_im_mhz") c.pump_im_mhz = detail::parse_list(val);
                else if (key == "mass_kg") c.mass_kg = num();
                else if (key == "coupling_sq_factor") c.coupling_sq_factor = num();
                else throw bad_key();
            } else if (section == "geometry") {
                if (key == "waist_um") c.waist_um = num();
                else if (key == "wavelength_nm") c.wavelength_nm = num();
                else if (key == "length_um") c.length_um = num();
                else throw bad_key();
            } else if (section == "modes") {
                if (key == "indices") {
                    c.modes.clear();
                    std::istringstream ms(val);
                    std::string tok;
                    while (ms >> tok) {
                        const auto comma = tok.find(',');
                        if (comma == std::string::npos)
                            throw UsageError("line " + std::to_string(line_no) +
                                             ": bad mode token '" + tok + "'");
                        c.modes.push_back({std::stoi(tok.substr(0, comma)),
                                           std::stoi(tok.substr(comma + 1))});
                    }
                } else if (key == "convention") {
                    c.convention = lg_convention_from_string(val);
                } else {
                    throw bad_key();
                }
            } else if (section == "dynamics") {
                if (key == "dt") c.dt = num();
                else if (key == "duration") c.duration = num();
                else if (key == "record_stride") c.record_stride = static_cast<int>(num());
                else if (key == "bounding_box") c.bounding_box = num();
                else if (key == "x0") c.x0 = num();
                else if (key == "y0") c.y0 = num();
                else if (key == "vx_cm_s") c.vx_cm_s = num();
                else if (key == "vy_cm_s") c.vy_cm_s = num();
                else if (key == "noise_enabled") c.noise_enabled = detail::parse_bool(val, line_no);
                else if (key == "momentum_diffusion_scale") c.momentum_diffusion_scale = num();
                else if (key == "field_noise_scale") c.field_noise_scale = num();
                else if (key == "seed") c.sim_seed = std::stoull(val);
                else throw bad_key();
            } else if (section == "detector") {
                if (key == "n_sectors") c.n_sectors = static_cast<int>(num());
                else if (key == "window") c.window = num();
                else if (key == "efficiency") c.efficiency = num();
                else if (key == "pair_sum") c.pair_sum = detail::parse_bool(val, line_no);
                else if (key == "seed") c.detector_seed = std::stoull(val);
                else if (key == "with_truth") c.with_truth = detail::parse_bool(val, line_no);
                else throw bad_key();
            } else if (section == "reconstruction") {
                if (key == "grid_extent") c.grid_extent = num();
                else if (key == "grid_spacing") c.grid_spacing = num();
                else if (key == "branch_gate") c.branch_gate = num();
                else if (key == "smoothing_target") c.smoothing_target = num();
                else if (key == "seed_from_entry") c.seed_from_entry = detail::parse_bool(val, line_no);
                else if (key == "seed_x") c.seed_x = num();
                else if (key == "seed_y") c.seed_y = num();
                else throw bad_key();
            } else {
                throw UsageError("line " + std::to_string(line_no) + ": key outside any section");
            }
        } catch (const UsageError&) {
            throw;
        } catch (const std::exception& e) {
            throw UsageError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return c;
}

// Hash over the sections that define the physics/basis (the signature grid
// must match the detector record on these).
inline std::uint64_t params_hash(const RunConfig& c) {
    const std::string full = serialize_config(c);
    const auto start = full.find("[physics]");
    const auto stop = full.find("[dynamics]");
    return fnv1a64(full.substr(start, stop - start));
}

inline std::uint64_t detector_hash(const RunConfig& c) {
    std::ostringstream os;
    os << c.n_sectors << '|' << format_double(c.window) << '|' << format_double(c.efficiency)
       << '|' << detail::bool_str(c.pair_sum);
    return fnv1a64(os.str());
}

}  // namespace cavtrack
