#pragma once

// Output files shared by the engine and the oracles: time-series CSV,
// field-grid CSV, per-m diagnostic CSV and the JSON run manifest.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nuhops/config.hpp"

namespace nuhops {

namespace detail {

inline std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& where) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    try {
        std::size_t pos = 0;
        const double x = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return x;
    } catch (const std::exception&) {
        throw Error(where + ": cannot parse number '" + s + "'");
    }
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::ofstream open_out(const std::filesystem::path& file) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error("cannot write " + file.string());
    return out;
}

}  // namespace detail

// Columns: t, then name_re, name_im, name_stderr for every series column.
inline void write_series_csv(const std::filesystem::path& file, const Series& s) {
    auto out = detail::open_out(file);
    out << "t";
    for (const auto& n : s.names) out << ',' << n << "_re," << n << "_im," << n << "_stderr";
    out << '\n';
    for (std::size_t k = 0; k < s.t.size(); ++k) {
        out << detail::fmt(s.t[k]);
        for (std::size_t c = 0; c < s.names.size(); ++c)
            out << ',' << detail::fmt(s.value[c][k].real()) << ',' << detail::fmt(s.value[c][k].imag()) << ','
                << detail::fmt(s.stderr_[c][k]);
        out << '\n';
    }
}

inline Series read_series_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(file.string() + ": empty file");
    const auto head = detail::split(line);
    if (head.empty() || head[0] != "t" || (head.size() - 1) % 3 != 0)
        throw Error(file.string() + ": header must be t followed by _re/_im/_stderr triples");
    Series s;
    std::vector<std::string> names;
    for (std::size_t c = 1; c < head.size(); c += 3) {
        const std::string& h = head[c];
        if (h.size() < 4 || h.substr(h.size() - 3) != "_re") throw Error(file.string() + ": bad column " + h);
        const std::string n = h.substr(0, h.size() - 3);
        if (head[c + 1] != n + "_im" || head[c + 2] != n + "_stderr")
            throw Error(file.string() + ": columns for " + n + " are incomplete");
        names.push_back(n);
    }
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = detail::split(line);
        if (cells.size() != head.size())
            throw Error(file.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(head.size()) +
                        " cells");
        std::vector<double> r;
        for (const auto& c : cells) r.push_back(detail::parse_double(c, file.string() + ":" + std::to_string(lineno)));
        rows.push_back(std::move(r));
    }
    for (const auto& r : rows) s.t.push_back(r[0]);
    for (std::size_t c = 0; c < names.size(); ++c) {
        const std::size_t k = s.add_column(names[c]);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            s.value[k][i] = cplx(rows[i][1 + 3 * c], rows[i][2 + 3 * c]);
            s.stderr_[k][i] = rows[i][3 + 3 * c];
        }
    }
    return s;
}

// Field grid as x, y, value rows with a small JSON sidecar.
inline void write_field_csv(const std::filesystem::path& file, const Grid2D& grid, const std::vector<double>& f,
                            const std::string& kind, double time) {
    if (f.size() != grid.x.size() * grid.y.size()) throw Error("write_field_csv: field does not match grid");
    auto out = detail::open_out(file);
    out << (kind == "spinq" ? "phi,theta,q\n" : "re,im,q\n");
    std::size_t k = 0;
    for (double y : grid.y)
        for (double x : grid.x) out << detail::fmt(x) << ',' << detail::fmt(y) << ',' << detail::fmt(f[k++]) << '\n';
    const nlohmann::json meta = {{"kind", kind}, {"time", time}, {"nx", grid.x.size()}, {"ny", grid.y.size()},
                                 {"order", "x fastest"}};
    auto side = detail::open_out(std::filesystem::path(file).replace_extension(".json"));
    side << meta.dump(2) << '\n';
}

struct DiagRow {
    double t = 0.0;
    PmReport pm;
};

// Columns t, m, norm2, label_re, label_im.
inline void write_diag_csv(std::ostream& out, const std::vector<DiagRow>& rows) {
    out << "t,m,norm2,label_re,label_im\n";
    for (const auto& r : rows)
        out << detail::fmt(r.t) << ',' << detail::fmt(r.pm.m) << ',' << detail::fmt(r.pm.norm2) << ','
            << detail::fmt(r.pm.label.real()) << ',' << detail::fmt(r.pm.label.imag()) << '\n';
}

inline void write_diag_csv(const std::filesystem::path& file, const std::vector<DiagRow>& rows) {
    auto out = detail::open_out(file);
    write_diag_csv(out, rows);
}

inline std::string git_describe() {
#ifdef NUHOPS_GIT_DESCRIBE
    return NUHOPS_GIT_DESCRIBE;
#else
    return "unknown";
#endif
}

inline nlohmann::json events_json(const std::vector<TrajectoryEvent>& ev) {
    auto a = nlohmann::json::array();
    for (const auto& e : ev) a.push_back({{"index", e.index}, {"attempt", e.attempt}, {"message", e.message}});
    return a;
}

// Fields that vary between otherwise identical runs (wall time, worker count)
// are kept under "run" so the rest of the manifest is reproducible.
inline nlohmann::json make_manifest(const RunConfig& rc, const std::string& command, const EnsembleResult* res,
                                    double wall_seconds) {
    nlohmann::json m;
    m["command"] = command;
    m["config"] = rc.raw;
    m["config_file"] = rc.source;
    m["model_hash"] = rc.model_hash();
    m["master_seed"] = rc.ensemble.master_seed;
    m["git_describe"] = git_describe();
    if (res) {
        m["trajectories"] = res->completed;
        m["failures"] = events_json(res->failures);
        m["resamples"] = events_json(res->resamples);
        m["max_fock_seen"] = res->max_fock_seen;
        m["max_window_seen"] = res->max_window_seen;
    }
    m["run"] = {{"wall_seconds", wall_seconds}, {"workers", rc.ensemble.workers}};
    return m;
}

inline void write_json(const std::filesystem::path& file, const nlohmann::json& j) {
    auto out = detail::open_out(file);
    out << j.dump(2) << '\n';
}

}  // namespace nuhops
