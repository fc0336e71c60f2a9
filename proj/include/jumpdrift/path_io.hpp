#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "jumpdrift/errors.hpp"
#include "jumpdrift/simulator.hpp"

namespace jumpdrift {

namespace detail {

inline std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<double> parse_csv_row(const std::string& line) {
    std::vector<double> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
    return out;
}

}  // namespace detail

/// Writes `<base>` (t, x1..xd), `<base>.jumps.csv` and `<base>.meta.json`.
inline void write_path(const PathRecord& p, const std::string& base, const nlohmann::json& model_config = {}) {
    const std::size_t d = p.dim;
    {
        std::ofstream out(base);
        if (!out) throw ConfigurationError("cannot write " + base);
        out << 't';
        for (std::size_t k = 0; k < d; ++k) out << ",x" << k + 1;
        out << '\n';
        for (std::size_t i = 0; i <= p.steps(); ++i) {
            out << detail::fmt17(p.time(i));
            for (std::size_t k = 0; k < d; ++k) out << ',' << detail::fmt17(p.coord(i, k));
            out << '\n';
        }
    }
    {
        std::ofstream out(base + ".jumps.csv");
        out << "time,step";
        for (std::size_t k = 0; k < d; ++k) out << ",mark" << k + 1;
        for (std::size_t k = 0; k < d; ++k) out << ",disp" << k + 1;
        for (std::size_t k = 0; k < d; ++k) out << ",pre" << k + 1;
        out << '\n';
        for (const auto& ev : p.jumps) {
            out << detail::fmt17(ev.time) << ',' << ev.step;
            for (double v : ev.mark) out << ',' << detail::fmt17(v);
            for (double v : ev.displacement) out << ',' << detail::fmt17(v);
            for (double v : ev.pre_state) out << ',' << detail::fmt17(v);
            out << '\n';
        }
    }
    nlohmann::json meta;
    meta["seed"] = p.seed;
    meta["dt"] = p.dt;
    meta["T"] = p.horizon;
    meta["dim"] = d;
    meta["steps"] = p.steps();
    meta["jump_count"] = p.jumps.size();
    meta["warnings"] = p.warnings;
    if (!model_config.is_null()) meta["model"] = model_config;
    std::ofstream(base + ".meta.json") << meta.dump(2) << '\n';
}

struct LoadedPath {
    PathRecord path;
    nlohmann::json meta;
    bool has_jump_log = false;
};

/// Reads a path written by write_path; the jump log is optional.
inline LoadedPath read_path(const std::string& base) {
    LoadedPath lp;
    std::ifstream in(base);
    if (!in) throw ConfigurationError("cannot read path file " + base);
    std::string line;
    std::getline(in, line);
    std::size_t d = 0;
    for (char c : line) d += c == ',';
    if (d == 0) throw ConfigurationError("path file " + base + " has no state columns");
    auto& p = lp.path;
    p.dim = d;
    std::vector<double> times;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto row = detail::parse_csv_row(line);
        if (row.size() != d + 1) throw ConfigurationError("malformed row in " + base);
        times.push_back(row[0]);
        p.states.insert(p.states.end(), row.begin() + 1, row.end());
    }
    if (times.size() < 2) throw ConfigurationError("path file " + base + " needs at least two time stamps");
    p.horizon = times.back();
    p.dt = times[1] - times[0];

    std::ifstream min(base + ".meta.json");
    if (min) {
        min >> lp.meta;
        p.seed = lp.meta.value("seed", std::uint64_t{0});
        p.dt = lp.meta.value("dt", p.dt);
        p.horizon = lp.meta.value("T", p.horizon);
    }
    std::ifstream jin(base + ".jumps.csv");
    p.has_jump_log = static_cast<bool>(jin);
    if (jin) {
        lp.has_jump_log = true;
        std::getline(jin, line);
        while (std::getline(jin, line)) {
            if (line.empty()) continue;
            const auto row = detail::parse_csv_row(line);
            if (row.size() != 2 + 3 * d) throw ConfigurationError("malformed jump row in " + base + ".jumps.csv");
            JumpEvent ev;
            ev.time = row[0];
            ev.step = static_cast<std::size_t>(row[1]);
            ev.mark.assign(row.begin() + 2, row.begin() + 2 + static_cast<std::ptrdiff_t>(d));
            ev.displacement.assign(row.begin() + 2 + static_cast<std::ptrdiff_t>(d), row.begin() + 2 + 2 * static_cast<std::ptrdiff_t>(d));
            ev.pre_state.assign(row.begin() + 2 + 2 * static_cast<std::ptrdiff_t>(d), row.end());
            p.jumps.push_back(std::move(ev));
        }
    }
    return lp;
}

}  // namespace jumpdrift
