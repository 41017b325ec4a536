#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cavtrack/detector.hpp"
#include "cavtrack/dynamics.hpp"
#include "cavtrack/errors.hpp"
#include "cavtrack/hash.hpp"
#include "cavtrack/reconstruct.hpp"
#include "cavtrack/steady_state.hpp"

namespace cavtrack {

// shortest round-tripping decimal representation
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw UsageError("cannot parse number '" + s + "'");
    }
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UsageError("cannot open '" + path + "' for writing");
    os << content;
    if (!os) throw UsageError("write to '" + path + "' failed");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw UsageError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

// '#'-prefixed key = value header block shared by all CSV outputs
struct CsvFile {
    std::map<std::string, std::string> meta;
    std::vector<std::string> config_lines;  // embedded resolved config
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

inline CsvFile parse_csv(const std::string& text) {
    CsvFile file;
    std::istringstream is(text);
    std::string line;
    bool have_columns = false;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("#cfg ", 0) == 0) {
            file.config_lines.push_back(line.substr(5));
            continue;
        }
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) {
                std::string key = line.substr(1, eq - 1);
                std::string val = line.substr(eq + 1);
                auto trim = [](std::string& s) {
                    const auto b = s.find_first_not_of(" \t");
                    const auto e = s.find_last_not_of(" \t");
                    s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
                };
                trim(key);
                trim(val);
                file.meta[key] = val;
            }
            continue;
        }
        if (!have_columns) {
            file.columns = split(line, ',');
            have_columns = true;
            continue;
        }
        file.rows.push_back(split(line, ','));
    }
    return file;
}

inline std::string meta_or_throw(const CsvFile& file, const std::string& key) {
    const auto it = file.meta.find(key);
    if (it == file.meta.end()) throw UsageError("missing '" + key + "' in file header");
    return it->second;
}

// ---------------------------------------------------------------- trajectory

inline std::string trajectory_to_csv(const TrajectoryRecord& rec,
                                     const std::string& resolved_config) {
    std::ostringstream os;
    os << "# cavtrack trajectory v1\n";
    os << "# config_hash = " << hash_hex(fnv1a64(resolved_config)) << "\n";
    os << "# params_hash = " << hash_hex(rec.params_hash) << "\n";
    os << "# seed = " << rec.noise.seed << "\n";
    os << "# noise_enabled = " << (rec.noise.enabled ? 1 : 0) << "\n";
    os << "# early_exit = " << (rec.early_exit ? 1 : 0) << "\n";
    const std::size_t n_modes = rec.fields.empty() ? 0 : rec.fields[0].alpha.size();
    os << "# n_modes = " << n_modes << "\n";
    os << "# units = t [1/kappa], x y [w0], px py [M w0 kappa]\n";
    for (const auto& line : split(resolved_config, '\n'))
        if (!line.empty()) os << "#cfg " << line << "\n";
    os << "t,x,y,px,py";
    for (std::size_t m = 0; m < n_modes; ++m) os << ",re_a" << m << ",im_a" << m;
    os << "\n";
    for (std::size_t i = 0; i < rec.times.size(); ++i) {
        os << format_double(rec.times[i]) << ',' << format_double(rec.states[i].r.x) << ','
           << format_double(rec.states[i].r.y) << ',' << format_double(rec.states[i].p.x) << ','
           << format_double(rec.states[i].p.y);
        for (const auto& a : rec.fields[i].alpha)
            os << ',' << format_double(a.real()) << ',' << format_double(a.imag());
        os << "\n";
    }
    return os.str();
}

struct TrajectoryFile {
    TrajectoryRecord record;
    std::string config_text;
    std::map<std::string, std::string> meta;
};

inline TrajectoryFile parse_trajectory_csv(const std::string& text) {
    const CsvFile file = parse_csv(text);
    TrajectoryFile out;
    out.meta = file.meta;
    const std::size_t n_modes = std::stoul(meta_or_throw(file, "n_modes"));
    if (file.columns.size() != 5 + 2 * n_modes)
        throw UsageError("trajectory column count does not match n_modes");
    out.record.params_hash =
        std::stoull(meta_or_throw(file, "params_hash"), nullptr, 16);
    out.record.noise.seed = std::stoull(meta_or_throw(file, "seed"));
    out.record.early_exit = meta_or_throw(file, "early_exit") == "1";
    for (const auto& row : file.rows) {
        if (row.size() != file.columns.size())
            throw UsageError("ragged row in trajectory file");
        out.record.times.push_back(parse_double(row[0]));
        AtomState st;
        st.r = {parse_double(row[1]), parse_double(row[2])};
        st.p = {parse_double(row[3]), parse_double(row[4])};
        out.record.states.push_back(st);
        FieldState f;
        f.alpha.reserve(n_modes);
        for (std::size_t m = 0; m < n_modes; ++m)
            f.alpha.emplace_back(parse_double(row[5 + 2 * m]), parse_double(row[6 + 2 * m]));
        out.record.fields.push_back(std::move(f));
    }
    if (out.record.times.empty()) throw UsageError("trajectory file has no samples");
    std::ostringstream cfg;
    for (const auto& l : file.config_lines) cfg << l << "\n";
    out.config_text = cfg.str();
    return out;
}

// ------------------------------------------------------------------ detector

inline std::string detector_to_csv(const std::vector<DetectorFrame>& frames,
                                   const DetectorConfig& config, bool with_truth,
                                   std::uint64_t params_hash, std::uint64_t basis_hash,
                                   std::uint64_t detector_hash,
                                   const std::string& resolved_config) {
    std::ostringstream os;
    const int nch = config.n_channels();
    os << "# cavtrack detector v1\n";
    os << "# config_hash = " << hash_hex(fnv1a64(resolved_config)) << "\n";
    os << "# params_hash = " << hash_hex(params_hash) << "\n";
    os << "# basis_hash = " << hash_hex(basis_hash) << "\n";
    os << "# detector_hash = " << hash_hex(detector_hash) << "\n";
    os << "# n_sectors = " << config.n_sectors << "\n";
    os << "# n_channels = " << nch << "\n";
    os << "# pair_sum = " << (config.pair_sum ? 1 : 0) << "\n";
    os << "# window = " << format_double(config.window) << "\n";
    os << "# efficiency = " << format_double(config.efficiency) << "\n";
    os << "# seed = " << config.seed << "\n";
    os << "# orientation = sector 0 spans [0, " << format_double(360.0 / config.n_sectors)
       << ") degrees CCW from +x; pair j adds sector j + " << config.n_sectors / 2 << "\n";
    for (const auto& line : split(resolved_config, '\n'))
        if (!line.empty()) os << "#cfg " << line << "\n";
    os << "t_mid";
    for (int j = 0; j < nch; ++j) os << ",c" << j;
    if (with_truth)
        for (int j = 0; j < nch; ++j) os << ",e" << j;
    os << "\n";
    for (const auto& fr : frames) {
        os << format_double(fr.t_mid);
        for (int j = 0; j < nch; ++j) os << ',' << fr.counts[j];
        if (with_truth)
            for (int j = 0; j < nch; ++j) os << ',' << format_double(fr.expected[j]);
        os << "\n";
    }
    return os.str();
}

struct DetectorFileHeader {
    std::uint64_t params_hash = 0;
    std::uint64_t basis_hash = 0;
    std::uint64_t detector_hash = 0;
    int n_channels = 0;
    double window = 0.0;
};

struct DetectorFile {
    std::vector<DetectorFrame> frames;  // counts only; expected left empty
    DetectorFileHeader header;
};

// Reads the counts columns only: reconstruction must behave identically
// whether or not truth columns are present.
inline DetectorFile parse_detector_csv(const std::string& text) {
    const CsvFile file = parse_csv(text);
    DetectorFile out;
    out.header.params_hash = std::stoull(meta_or_throw(file, "params_hash"), nullptr, 16);
    out.header.basis_hash = std::stoull(meta_or_throw(file, "basis_hash"), nullptr, 16);
    out.header.detector_hash = std::stoull(meta_or_throw(file, "detector_hash"), nullptr, 16);
    out.header.n_channels = std::stoi(meta_or_throw(file, "n_channels"));
    out.header.window = parse_double(meta_or_throw(file, "window"));
    const int nch = out.header.n_channels;
    if (static_cast<int>(file.columns.size()) < 1 + nch)
        throw UsageError("detector file has fewer columns than channels");
    for (const auto& row : file.rows) {
        if (static_cast<int>(row.size()) < 1 + nch)
            throw UsageError("ragged row in detector file");
        DetectorFrame fr;
        fr.t_mid = parse_double(row[0]);
        fr.counts.reserve(nch);
        for (int j = 0; j < nch; ++j) fr.counts.push_back(std::stoll(row[1 + j]));
        out.frames.push_back(std::move(fr));
    }
    return out;
}

// ---------------------------------------------------------------------- path

inline std::string path_to_csv(const ReconstructedPath& path, std::uint64_t params_hash,
                               std::uint64_t basis_hash, std::uint64_t detector_hash,
                               const std::string& resolved_config) {
    std::ostringstream os;
    os << "# cavtrack path v1\n";
    os << "# config_hash = " << hash_hex(fnv1a64(resolved_config)) << "\n";
    os << "# params_hash = " << hash_hex(params_hash) << "\n";
    os << "# basis_hash = " << hash_hex(basis_hash) << "\n";
    os << "# detector_hash = " << hash_hex(detector_hash) << "\n";
    os << "# lambda_x = " << format_double(path.lambda_x) << "\n";
    os << "# lambda_y = " << format_double(path.lambda_y) << "\n";
    os << "# discontinuities = " << path.branch.discontinuities << "\n";
    os << "# seeded = " << (path.branch.seeded ? 1 : 0) << "\n";
    os << "# branch = the point-reflected path is an equivalent solution\n";
    for (const auto& line : split(resolved_config, '\n'))
        if (!line.empty()) os << "#cfg " << line << "\n";
    os << "t_mid,x_hat,y_hat,residual,detectable,jump_flag,x_smooth,y_smooth\n";
    for (std::size_t i = 0; i < path.estimates.size(); ++i) {
        const auto& est = path.estimates[i];
        os << format_double(est.t_mid) << ',';
        if (est.chosen)
            os << format_double(est.chosen->x) << ',' << format_double(est.chosen->y);
        else
            os << "nan,nan";
        os << ',' << format_double(est.residual) << ',' << (est.detectable ? 1 : 0) << ','
           << (est.jump_flag ? 1 : 0) << ',' << format_double(path.smoothed[i].x) << ','
           << format_double(path.smoothed[i].y) << "\n";
    }
    return os.str();
}

inline ReconstructedPath parse_path_csv(const std::string& text) {
    const CsvFile file = parse_csv(text);
    ReconstructedPath path;
    path.branch.discontinuities = std::stoi(meta_or_throw(file, "discontinuities"));
    path.branch.seeded = meta_or_throw(file, "seeded") == "1";
    path.lambda_x = parse_double(meta_or_throw(file, "lambda_x"));
    path.lambda_y = parse_double(meta_or_throw(file, "lambda_y"));
    if (file.columns.size() != 8) throw UsageError("unexpected path file layout");
    for (const auto& row : file.rows) {
        if (row.size() != 8) throw UsageError("ragged row in path file");
        PositionEstimate est;
        est.t_mid = parse_double(row[0]);
        const double xh = parse_double(row[1]);
        const double yh = parse_double(row[2]);
        if (std::isfinite(xh) && std::isfinite(yh)) est.chosen = Vec2{xh, yh};
        est.residual = parse_double(row[3]);
        est.detectable = row[4] == "1";
        est.jump_flag = row[5] == "1";
        path.estimates.push_back(est);
        path.smoothed.push_back({parse_double(row[6]), parse_double(row[7])});
    }
    return path;
}

// ------------------------------------------------------------------ greymap

// 16-bit binary PGM, big-endian samples, row 0 at y = +extent.
inline void write_pgm16(const std::string& path, const Image& img) {
    double lo = img.pixels.empty() ? 0.0 : img.pixels[0];
    double hi = lo;
    for (double v : img.pixels) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double scale = hi > lo ? 65535.0 / (hi - lo) : 0.0;
    std::string data;
    data.reserve(static_cast<std::size_t>(img.width) * img.height * 2);
    for (int iy = img.height - 1; iy >= 0; --iy) {
        for (int ix = 0; ix < img.width; ++ix) {
            const double v = img.pixels[static_cast<std::size_t>(iy) * img.width + ix];
            const auto q = static_cast<unsigned>((v - lo) * scale + 0.5);
            data.push_back(static_cast<char>((q >> 8) & 0xFF));
            data.push_back(static_cast<char>(q & 0xFF));
        }
    }
    std::ostringstream os;
    os << "P5\n" << img.width << " " << img.height << "\n65535\n" << data;
    write_text_file(path, os.str());
}

// ---------------------------------------------------------------- grid blob

// Binary layout (native little-endian, doubles IEEE-754):
//   magic "CTGRID1\n" | i32 n | i32 n_channels | f64 spacing | f64 window
//   | f64 thresh95 | f64 thresh999 | u64 params_hash | u64 basis_hash
//   | u64 detector_hash | f64 empty_signature[n_channels]
//   | f64 signatures[n*n*n_channels] | u8 detectable[n*n]
inline void write_grid_blob(const std::string& path, const SignatureGrid& grid) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UsageError("cannot open '" + path + "' for writing");
    auto put = [&](const void* p, std::size_t len) {
        os.write(static_cast<const char*>(p), static_cast<std::streamsize>(len));
    };
    os.write("CTGRID1\n", 8);
    const std::int32_t n = grid.n, nch = grid.n_channels;
    put(&n, 4);
    put(&nch, 4);
    put(&grid.spacing, 8);
    put(&grid.window, 8);
    put(&grid.thresh95, 8);
    put(&grid.thresh999, 8);
    put(&grid.params_hash, 8);
    put(&grid.basis_hash, 8);
    put(&grid.detector_hash, 8);
    put(grid.empty_signature.data(), 8 * grid.empty_signature.size());
    put(grid.signatures.data(), 8 * grid.signatures.size());
    put(grid.detectable.data(), grid.detectable.size());
    if (!os) throw UsageError("write to '" + path + "' failed");
}

inline SignatureGrid read_grid_blob(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw UsageError("cannot open '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "CTGRID1\n", 8) != 0)
        throw UsageError("'" + path + "' is not a signature grid file");
    SignatureGrid grid;
    std::int32_t n = 0, nch = 0;
    auto get = [&](void* p, std::size_t len) {
        is.read(static_cast<char*>(p), static_cast<std::streamsize>(len));
    };
    get(&n, 4);
    get(&nch, 4);
    get(&grid.spacing, 8);
    get(&grid.window, 8);
    get(&grid.thresh95, 8);
    get(&grid.thresh999, 8);
    get(&grid.params_hash, 8);
    get(&grid.basis_hash, 8);
    get(&grid.detector_hash, 8);
    if (!is || n < 3 || n % 2 == 0 || nch < 1) throw UsageError("corrupt grid header");
    grid.n = n;
    grid.n_channels = nch;
    grid.empty_signature.resize(nch);
    get(grid.empty_signature.data(), 8 * grid.empty_signature.size());
    grid.signatures.resize(static_cast<std::size_t>(n) * n * nch);
    get(grid.signatures.data(), 8 * grid.signatures.size());
    grid.detectable.resize(static_cast<std::size_t>(n) * n);
    get(grid.detectable.data(), grid.detectable.size());
    if (!is) throw UsageError("truncated grid file");
    return grid;
}

inline std::string grid_sidecar_text(const SignatureGrid& grid) {
    std::ostringstream os;
    os << "# cavtrack signature grid v1\n";
    os << "n = " << grid.n << "\n";
    os << "spacing = " << format_double(grid.spacing) << "\n";
    os << "extent = " << format_double(grid.extent()) << "\n";
    os << "window = " << format_double(grid.window) << "\n";
    os << "n_channels = " << grid.n_channels << "\n";
    os << "thresh95 = " << format_double(grid.thresh95) << "\n";
    os << "thresh999 = " << format_double(grid.thresh999) << "\n";
    os << "params_hash = " << hash_hex(grid.params_hash) << "\n";
    os << "basis_hash = " << hash_hex(grid.basis_hash) << "\n";
    os << "detector_hash = " << hash_hex(grid.detector_hash) << "\n";
    std::size_t n_detectable = 0;
    for (auto d : grid.detectable) n_detectable += d;
    os << "detectable_points = " << n_detectable << " / " << grid.detectable.size() << "\n";
    return os.str();
}

}  // namespace cavtrack
