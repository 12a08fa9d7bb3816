#include "mvsde/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "mvsde/errors.hpp"

namespace mvsde {

void TrajectoryDataset::validate() const {
    if (times.empty()) throw ConfigError("dataset: empty time grid");
    for (std::size_t j = 1; j < times.size(); ++j)
        if (!(times[j] > times[j - 1]))
            throw ConfigError("dataset: times must be strictly increasing");
    if (states.size() != static_cast<std::size_t>(n_particles) * n_times() * dim)
        throw ConfigError("dataset: state buffer size mismatch");
    for (double v : states)
        if (!std::isfinite(v)) throw NumericError("dataset: non-finite state");
    if (mask) {
        if (mask->size() != static_cast<std::size_t>(n_particles) * n_times())
            throw ConfigError("dataset: mask size mismatch");
        for (int i = 0; i < n_particles; ++i)
            if (!observed(i, 0) || !observed(i, n_times() - 1))
                throw ConfigError("dataset: mask must keep the first and last stamps");
    }
}

void write_dataset(const TrajectoryDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("dataset: cannot open for writing: " + path);
    out << "particle_id,t";
    for (int k = 0; k < ds.dim; ++k) out << ",x" << k;
    out << "\n";
    char buf[64];
    for (int i = 0; i < ds.n_particles; ++i) {
        for (int j = 0; j < ds.n_times(); ++j) {
            if (!ds.observed(i, j)) continue;
            out << i;
            std::snprintf(buf, sizeof(buf), "%.17g", ds.times[j]);
            out << ',' << buf;
            for (double v : ds.state(i, j)) {
                std::snprintf(buf, sizeof(buf), "%.17g", v);
                out << ',' << buf;
            }
            out << "\n";
        }
    }
}

namespace {

struct Row {
    int particle;
    double t;
    std::vector<double> x;
};

double parse_double(const std::string& tok, long line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw ParseError("trailing characters in number", line);
        return v;
    } catch (const ParseError&) {
        throw;
    } catch (...) {
        throw ParseError("cannot parse number '" + tok + "'", line);
    }
}

}  // namespace

TrajectoryDataset read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("dataset: cannot open: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty dataset file", 1);
    // header: particle_id,t,x0,...
    std::vector<std::string> cols;
    {
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
    }
    if (cols.size() < 3 || cols[0] != "particle_id" || cols[1] != "t")
        throw ParseError("bad header, expected particle_id,t,x0,...", 1);
    const int dim = static_cast<int>(cols.size()) - 2;

    std::vector<Row> rows;
    long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        Row r;
        if (!std::getline(ss, tok, ',')) throw ParseError("missing particle id", lineno);
        r.particle = static_cast<int>(parse_double(tok, lineno));
        if (!std::getline(ss, tok, ',')) throw ParseError("missing time", lineno);
        r.t = parse_double(tok, lineno);
        for (int k = 0; k < dim; ++k) {
            if (!std::getline(ss, tok, ',')) throw ParseError("missing coordinate", lineno);
            r.x.push_back(parse_double(tok, lineno));
        }
        if (std::getline(ss, tok, ',')) throw ParseError("extra columns", lineno);
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw ParseError("dataset has a header but no rows", lineno);

    std::vector<double> times;
    for (const Row& r : rows) times.push_back(r.t);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    std::map<double, int> t_index;
    for (std::size_t j = 0; j < times.size(); ++j) t_index[times[j]] = static_cast<int>(j);

    int n = 0;
    for (const Row& r : rows) n = std::max(n, r.particle + 1);

    TrajectoryDataset ds;
    ds.times = times;
    ds.n_particles = n;
    ds.dim = dim;
    ds.states.assign(static_cast<std::size_t>(n) * times.size() * dim, 0.0);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * times.size(), 0);
    for (const Row& r : rows) {
        const int j = t_index[r.t];
        std::copy(r.x.begin(), r.x.end(), ds.state(r.particle, j).begin());
        mask[static_cast<std::size_t>(r.particle) * times.size() + j] = 1;
    }
    if (std::find(mask.begin(), mask.end(), 0) != mask.end()) ds.mask = std::move(mask);
    ds.validate();
    return ds;
}

}  // namespace mvsde
