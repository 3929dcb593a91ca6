// Serialization of decompositions and experiment tables.
//
// A stored run is a trio of files sharing a prefix:
//   <prefix>-iters.csv     one row per iteration
//   <prefix>-signals.csv   one column per signal (data, components, ...)
//   <prefix>-meta.txt      flat key=value description of the run
// Numbers are written with shortest round-trip formatting, so reading a file
// back reproduces the doubles bit for bit and re-running a config gives byte
// identical output. check_decomposition re-verifies a stored trio.

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "analysis.hpp"

namespace mhdm {

namespace io {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) { out.push_back(cur); cur.clear(); }
        else cur += ch;
    }
    out.push_back(cur);
    return out;
}

// named columns of equal or differing lengths; short columns leave blanks
struct Table {
    std::vector<std::string> names;
    std::vector<std::vector<std::string>> columns;

    void add(const std::string& name, const std::vector<double>& values) {
        names.push_back(name);
        std::vector<std::string> col;
        col.reserve(values.size());
        for (double v : values) col.push_back(format_double(v));
        columns.push_back(std::move(col));
    }

    void add(const std::string& name, const Vec& values) {
        std::vector<double> v(values.data(), values.data() + values.size());
        add(name, v);
    }

    void write(std::ostream& os) const {
        std::size_t rows = 0;
        for (const auto& c : columns) rows = std::max(rows, c.size());
        for (std::size_t j = 0; j < names.size(); ++j)
            os << names[j] << (j + 1 < names.size() ? ',' : '\n');
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < columns.size(); ++j) {
                if (i < columns[j].size()) os << columns[j][i];
                os << (j + 1 < columns.size() ? ',' : '\n');
            }
        }
    }
};

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    os << contents;
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline Table read_table(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    Table t;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty table: " + path.string());
    for (auto& name : split(trim(line), ',')) t.names.push_back(name);
    t.columns.resize(t.names.size());
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != t.names.size())
            throw std::runtime_error("ragged row in " + path.string());
        for (std::size_t j = 0; j < cells.size(); ++j)
            if (!cells[j].empty()) t.columns[j].push_back(cells[j]);
    }
    return t;
}

inline std::vector<double> column_as_doubles(const Table& t, const std::string& name) {
    for (std::size_t j = 0; j < t.names.size(); ++j) {
        if (t.names[j] == name) {
            std::vector<double> out;
            out.reserve(t.columns[j].size());
            for (const auto& s : t.columns[j]) out.push_back(parse_double(s));
            return out;
        }
    }
    throw std::runtime_error("missing column: " + name);
}

inline bool has_column(const Table& t, const std::string& name) {
    for (const auto& n : t.names)
        if (n == name) return true;
    return false;
}

inline Vec column_as_vec(const Table& t, const std::string& name) {
    auto v = column_as_doubles(t, name);
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// ordered key=value file
struct Meta {
    std::vector<std::pair<std::string, std::string>> entries;

    void set(const std::string& key, const std::string& value) { entries.emplace_back(key, value); }
    void set(const std::string& key, double value) { set(key, format_double(value)); }
    void set(const std::string& key, int value) { set(key, std::to_string(value)); }

    bool has(const std::string& key) const {
        for (const auto& [k, v] : entries)
            if (k == key) return true;
        return false;
    }

    std::string get(const std::string& key) const {
        for (const auto& [k, v] : entries)
            if (k == key) return v;
        throw std::runtime_error("missing meta key: " + key);
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? get(key) : fallback;
    }

    std::string to_string() const {
        std::ostringstream os;
        for (const auto& [k, v] : entries) os << k << " = " << v << "\n";
        return os.str();
    }
};

inline Meta read_meta(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    Meta m;
    std::string line;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad meta line: " + line);
        m.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return m;
}

// whitespace or comma separated numeric matrix, one row per line
inline Mat read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        for (char& ch : line)
            if (ch == ',' || ch == '\t' || ch == ';') ch = ' ';
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!ls.eof()) throw std::runtime_error("bad number in matrix row: " + line);
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("empty matrix: " + path.string());
    Mat A(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size())
            throw std::runtime_error("ragged matrix: " + path.string());
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return A;
}

} // namespace io

// whether every inner solve of the run is direct or a componentwise prox,
// which decides the identity-residual tolerance class
inline bool uses_exact_solver(Variant variant, const Penalty& J, const LinearMap& T) {
    if (variant == Variant::IteratedTikhonov) return true;
    if (J.kind == PenaltyKind::Quadratic) return true;
    if (!T.is_identity()) return false;
    // identity: every prox is closed form except the tight scalar searches
    if (variant == Variant::Tight) return J.kind == PenaltyKind::L1;
    if (variant == Variant::Bregman) return J.kind == PenaltyKind::L1;
    return true;
}

inline double identity_residual_tolerance(bool exact) { return exact ? 1e-10 : 1e-4; }

// ---- writing a run ----

struct StoredRun {
    std::string prefix; // path prefix, files get -iters.csv / -signals.csv / -meta.txt
    MultiscaleDecomposition decomposition;
    LinearMap op = LinearMap::identity(1);
    io::Meta meta;                 // extra keys to carry (config echo, summary)
    Vec truth, f_clean, f_noisy;   // optional context columns
    std::vector<double> tikhonov_errors; // aligned with iterations when present
    std::optional<Vec> tikhonov_solution;
};

inline void write_decomposition(const StoredRun& run) {
    const MultiscaleDecomposition& d = run.decomposition;
    namespace fsys = std::filesystem;

    io::Table iters;
    std::vector<double> idx(d.residual_norms.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<double>(i);
    iters.add("n", idx);
    iters.add("lambda", d.lambdas);
    iters.add("residual_norm", d.residual_norms);
    iters.add("penalty_value", d.penalty_values);
    iters.add("fidelity_inner", d.fidelity_inner);
    std::vector<double> ident(d.residual_norms.size());
    {
        // running identity residual, truncation after each step
        MultiscaleDecomposition partial = d;
        for (std::size_t k = 0; k < ident.size(); ++k) {
            partial.components.assign(d.components.begin(), d.components.begin() + k + 1);
            partial.lambdas.assign(d.lambdas.begin(), d.lambdas.begin() + k + 1);
            ident[k] = decomposition_identity_residual(partial, run.op);
        }
    }
    iters.add("identity_residual", ident);
    if (!run.tikhonov_errors.empty()) iters.add("tikhonov_error", run.tikhonov_errors);

    std::ostringstream iters_text;
    iters.write(iters_text);
    io::write_file(run.prefix + "-iters.csv", iters_text.str());

    io::Table signals;
    if (run.truth.size() > 0) signals.add("truth", run.truth);
    if (run.f_clean.size() > 0) signals.add("f_clean", run.f_clean);
    if (run.f_noisy.size() > 0) signals.add("f_noisy", run.f_noisy);
    signals.add("solution", d.solution());
    if (run.tikhonov_solution) signals.add("tikhonov_solution", *run.tikhonov_solution);
    for (int k = 0; k < d.steps(); ++k)
        signals.add("u" + std::to_string(k), d.components[static_cast<std::size_t>(k)]);
    std::ostringstream signals_text;
    signals.write(signals_text);
    io::write_file(run.prefix + "-signals.csv", signals_text.str());

    io::Meta meta = run.meta;
    meta.set("variant", variant_name(d.variant));
    meta.set("steps", d.steps());
    if (d.stop_index) meta.set("stop_index", *d.stop_index);
    meta.set("spacing", d.spacing);
    bool exact = uses_exact_solver(d.variant, d.penalty, run.op);
    meta.set("solver_class", exact ? "exact" : "iterative");
    meta.set("identity_residual", ident.empty() ? 0.0 : ident.back());
    io::write_file(run.prefix + "-meta.txt", meta.to_string());
}

// ---- reading and re-verifying a run ----

inline LinearMap operator_from_meta(const io::Meta& meta, const std::filesystem::path& base_dir) {
    std::string kind = meta.get("operator");
    int n = static_cast<int>(io::parse_double(meta.get("n")));
    if (kind == "identity") return LinearMap::identity(n);
    if (kind == "gaussian") return make_gaussian_conv(n, io::parse_double(meta.get("operator.sigma")));
    if (kind == "substitution") return substitution_operator(n);
    if (kind == "matrix") {
        std::filesystem::path p = meta.get("operator.file");
        if (p.is_relative()) p = base_dir / p;
        return LinearMap::from_matrix(io::read_matrix_csv(p));
    }
    throw std::runtime_error("unknown operator kind: " + kind);
}

inline Penalty penalty_from_meta(const io::Meta& meta) {
    std::string kind = meta.get("penalty");
    if (kind == "l1") return Penalty::l1();
    if (kind == "lp") return Penalty::lp(io::parse_double(meta.get("penalty.p")));
    if (kind == "tv") {
        if (meta.has("penalty.weight")) return Penalty::tv1d(io::parse_double(meta.get("penalty.weight")));
        return Penalty::tv1d();
    }
    if (kind == "quadratic") return Penalty::quadratic();
    if (kind == "entropy") return Penalty::entropy();
    throw std::runtime_error("unknown penalty kind: " + kind);
}

// Re-verify a stored trio: components must reproduce the stored residual
// norms, and the decomposition identity must hold at the tolerance of the
// run's solver class. Returns human-readable failure descriptions, empty on
// success.
inline std::vector<std::string> check_decomposition(const std::string& prefix) {
    namespace fsys = std::filesystem;
    std::vector<std::string> failures;

    io::Meta meta = io::read_meta(prefix + "-meta.txt");
    io::Table iters = io::read_table(prefix + "-iters.csv");
    io::Table signals = io::read_table(prefix + "-signals.csv");
    fsys::path base_dir = fsys::path(prefix).parent_path();

    LinearMap T = operator_from_meta(meta, base_dir);
    Penalty J = penalty_from_meta(meta);

    MultiscaleDecomposition d;
    std::string var = meta.get("variant");
    for (Variant v : {Variant::Mhdm, Variant::Flexible, Variant::Tight, Variant::Bregman,
                      Variant::IteratedTikhonov})
        if (var == variant_name(v)) d.variant = v;
    d.penalty = J;
    d.spacing = io::parse_double(meta.get("spacing"));

    double delta = meta.has("noise.delta") ? io::parse_double(meta.get("noise.delta")) : 0.0;
    std::string data_col = delta > 0.0 ? "f_noisy" : "f_clean";
    if (!io::has_column(signals, data_col)) data_col = "solution"; // minimal file
    d.data = io::column_as_vec(signals, data_col);

    d.lambdas = io::column_as_doubles(iters, "lambda");
    d.residual_norms = io::column_as_doubles(iters, "residual_norm");
    int steps = static_cast<int>(d.lambdas.size());
    Vec x = Vec::Zero(T.cols());
    for (int k = 0; k < steps; ++k) {
        std::string name = "u" + std::to_string(k);
        if (!io::has_column(signals, name)) {
            failures.push_back("missing component column " + name);
            return failures;
        }
        Vec u = io::column_as_vec(signals, name);
        d.components.push_back(u);
        x += u;
        d.partial_sums.push_back(x);
        double rn = (d.data - T.apply(x)).norm();
        double stored = d.residual_norms[static_cast<std::size_t>(k)];
        if (std::abs(rn - stored) > 1e-10 * std::max(1.0, stored))
            failures.push_back("residual norm mismatch at n=" + std::to_string(k) + ": stored "
                               + io::format_double(stored) + ", recomputed " + io::format_double(rn));
    }

    bool exact = meta.get_or("solver_class", "iterative") == "exact";
    double tol = identity_residual_tolerance(exact);
    double resid = decomposition_identity_residual(d, T);
    if (!(resid <= tol))
        failures.push_back("identity residual " + io::format_double(resid) + " exceeds "
                           + io::format_double(tol));

    if (io::has_column(signals, "solution")) {
        Vec sol = io::column_as_vec(signals, "solution");
        if ((sol - x).norm() > 1e-10 * std::max(1.0, x.norm()))
            failures.push_back("stored solution is not the sum of the components");
    }
    return failures;
}

} // namespace mhdm
