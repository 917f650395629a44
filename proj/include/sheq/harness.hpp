#pragma once
// Experiment configuration, suite orchestration and deterministic outputs.
//
// Config files are flat INI documents. Every key is known in advance; unknown
// keys and every violated precondition are reported together.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "constants.hpp"
#include "moments.hpp"
#include "noise_model.hpp"
#include "solver.hpp"
#include "transport.hpp"

namespace sheq {

inline constexpr const char* kVersion = "sheq-lab 0.1.0";

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
    const std::vector<std::string>& problems() const { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string s = "invalid configuration:";
        for (const auto& e : p) s += "\n  - " + e;
        return s;
    }
    std::vector<std::string> problems_;
};

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// Raw INI

using RawConfig = std::map<std::string, std::string>;  // "section.key" -> value

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline RawConfig parse_ini(std::istream& is, std::vector<std::string>& problems) {
    RawConfig raw;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                problems.push_back("line " + std::to_string(lineno) + ": malformed section header");
                continue;
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            problems.push_back("line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        const std::string key = (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
        if (raw.count(key)) problems.push_back("line " + std::to_string(lineno) + ": duplicate key " + key);
        raw[key] = trim(line.substr(eq + 1));
    }
    return raw;
}

// ---------------------------------------------------------------------------
// Typed config

struct MeasureSection {
    std::string kind = "point_mass";
    int d = 1;
    double eta = 0.0;
    double kappa = 0.5;
    double radius = 1.0;
    std::string table;  // "r:rho, r:rho, ..."
    int quad_budget = 16;
};

struct ExperimentConfig {
    MeasureSection measure;
    SimulationConfig solver;
    std::string sigma = "const:1", b = "zero", u0 = "zero";
    std::string drift = "unit";
    int drift_direction = 0;
    double drift_amplitude = 1.0;
    std::vector<std::string> suites{"constants"};
    std::vector<std::string> moment_checks{"pointwise", "sup", "sup-small-p", "factorization"};
    std::size_t trials = 1000;
    double p = 6.0, p_small = 2.0, eps = 1.0 / 6.0, alpha = 0.3;
    double probe_t = 0.5;
    std::vector<double> probe_x{0.5};
    std::size_t w2_samples = 256;
    std::size_t coupling_trials = 1000;
    std::size_t factorization_paths = 16;
    double confidence = 4.0;
    std::string out_dir = "sheq-out";
    std::size_t write_trajectories = 0;
    bool write_cost_matrix = false;

    Point probe() const { return probe_x.size() == 1 ? Point(probe_x[0]) : Point(probe_x[0], probe_x[1]); }
    bool has_suite(const std::string& s) const { return std::find(suites.begin(), suites.end(), s) != suites.end(); }
    bool has_check(const std::string& s) const {
        return std::find(moment_checks.begin(), moment_checks.end(), s) != moment_checks.end();
    }

    SpectralMeasure build_measure() const {
        const auto& m = measure;
        if (m.kind == "point_mass") return SpectralMeasure::point_mass(m.d, m.eta);
        if (m.kind == "riesz") return SpectralMeasure::riesz(m.d, m.kappa, m.eta);
        if (m.kind == "ball") return SpectralMeasure::ball_uniform(m.d, m.radius, m.eta);
        if (m.kind == "tabulated") return SpectralMeasure::tabulated(m.d, parse_table(m.table), m.eta);
        throw std::invalid_argument("unknown measure kind " + m.kind);
    }

    static SpectralMeasure::Table parse_table(const std::string& s) {
        SpectralMeasure::Table t;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            const auto c = item.find(':');
            if (c == std::string::npos) throw std::invalid_argument("table entry '" + item + "' is not r:rho");
            t.emplace_back(std::stod(item.substr(0, c)), std::stod(item.substr(c + 1)));
        }
        return t;
    }

    std::function<double(const Point&)> initial_field() const {
        if (u0 == "zero") return [](const Point&) { return 0.0; };
        if (u0.rfind("sine:", 0) == 0) {
            const int k = std::stoi(u0.substr(5));
            return [k](const Point& x) {
                double v = 1.0;
                for (int i = 0; i < x.dim; ++i) v *= sine_mode(k, x[i]);
                return v;
            };
        }
        if (u0 == "bump")
            return [](const Point& x) {
                double v = 1.0;
                for (int i = 0; i < x.dim; ++i) v *= 4.0 * x[i] * (1.0 - x[i]);
                return v;
            };
        throw std::invalid_argument("unknown initial field " + u0);
    }

    /// Canonical text of every effective value; the config hash is taken over it.
    std::string canonical() const {
        std::ostringstream os;
        auto kv = [&](const std::string& k, const std::string& v) { os << k << '=' << v << '\n'; };
        kv("measure.kind", measure.kind);
        kv("measure.d", std::to_string(measure.d));
        kv("measure.eta", fmt_double(measure.eta));
        kv("measure.kappa", fmt_double(measure.kappa));
        kv("measure.radius", fmt_double(measure.radius));
        kv("measure.table", measure.table);
        kv("measure.quad_budget", std::to_string(measure.quad_budget));
        kv("solver.N", std::to_string(solver.N));
        kv("solver.M", std::to_string(solver.M));
        kv("solver.dt", fmt_double(solver.dt));
        kv("solver.T", fmt_double(solver.T));
        kv("solver.stride", std::to_string(solver.stride));
        kv("coefficients.sigma", sigma);
        kv("coefficients.b", b);
        kv("coefficients.u0", u0);
        kv("drift.kind", drift);
        kv("drift.direction", std::to_string(drift_direction));
        kv("drift.amplitude", fmt_double(drift_amplitude));
        std::string s;
        for (const auto& x : suites) s += (s.empty() ? "" : ",") + x;
        kv("experiment.suites", s);
        s.clear();
        for (const auto& x : moment_checks) s += (s.empty() ? "" : ",") + x;
        kv("experiment.checks", s);
        kv("experiment.trials", std::to_string(trials));
        kv("experiment.seed", std::to_string(solver.seed));
        kv("experiment.p", fmt_double(p));
        kv("experiment.p_small", fmt_double(p_small));
        kv("experiment.eps", fmt_double(eps));
        kv("experiment.alpha", fmt_double(alpha));
        kv("experiment.probe_t", fmt_double(probe_t));
        s.clear();
        for (double x : probe_x) s += (s.empty() ? "" : ",") + fmt_double(x);
        kv("experiment.probe_x", s);
        kv("experiment.w2_samples", std::to_string(w2_samples));
        kv("experiment.coupling_trials", std::to_string(coupling_trials));
        kv("experiment.factorization_paths", std::to_string(factorization_paths));
        kv("experiment.confidence", fmt_double(confidence));
        kv("output.trajectories", std::to_string(write_trajectories));
        kv("output.cost_matrix", write_cost_matrix ? "1" : "0");
        return os.str();
    }

    std::uint64_t hash() const { return fnv1a64(canonical()); }

    /// Every precondition of the selected suites.
    std::vector<std::string> problems() const;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline const std::set<std::string>& known_suites() {
    static const std::set<std::string> s{"constants", "simulate", "verify-moments", "verify-t2", "couple"};
    return s;
}

inline const std::set<std::string>& known_checks() {
    static const std::set<std::string> s{"pointwise", "sup", "sup-small-p", "factorization"};
    return s;
}

}  // namespace detail

inline std::vector<std::string> ExperimentConfig::problems() const {
    std::vector<std::string> out;
    const int d = measure.d;
    const double eta = measure.eta;
    if (d != 1 && d != 2) out.push_back("measure.d must be 1 or 2");
    if (!(eta >= 0.0 && eta < 1.0)) out.push_back("measure.eta must lie in [0,1)");
    if (measure.kind == "riesz") {
        const double top = std::min(2.0, static_cast<double>(d));
        if (!(measure.kappa > 0.0 && measure.kappa < top))
            out.push_back("measure.kappa = " + fmt_double(measure.kappa) + " outside (0, 2 ^ d) = (0, " + fmt_double(top) + ")");
        else if (!(2.0 * eta > measure.kappa))
            out.push_back("measure.eta: need 2 eta > kappa for a finite K_eta (kappa = " + fmt_double(measure.kappa) + ")");
    } else if (measure.kind == "ball") {
        if (!(measure.radius > 0.0)) out.push_back("measure.radius must be positive");
    } else if (measure.kind == "tabulated") {
        try {
            SpectralMeasure::tabulated(d == 2 ? 2 : 1, parse_table(measure.table), std::clamp(eta, 0.0, 0.5));
        } catch (const std::exception& e) {
            out.push_back(std::string("measure.table: ") + e.what());
        }
    } else if (measure.kind != "point_mass") {
        out.push_back("measure.kind must be one of point_mass, riesz, ball, tabulated");
    }
    if (measure.quad_budget < 4) out.push_back("measure.quad_budget must be >= 4");
    SimulationConfig sc = solver;
    sc.d = d == 2 ? 2 : 1;
    for (const auto& s : sc.problems()) out.push_back("solver: " + s);
    for (const auto& s : suites)
        if (!detail::known_suites().count(s)) out.push_back("experiment.suites: unknown suite " + s);
    for (const auto& s : moment_checks)
        if (!detail::known_checks().count(s)) out.push_back("experiment.checks: unknown check " + s);
    std::optional<CoefficientSpec> co;
    try {
        co = CoefficientSpec::make(sigma, b);
    } catch (const std::exception& e) {
        out.push_back(std::string("coefficients: ") + e.what());
    }
    if (co && !std::isfinite(co->k_sigma())) out.push_back("coefficients.sigma must be bounded");
    if (co && !spot_check(*co)) out.push_back("coefficients: declared Lipschitz constant or bound violated on the spot check");
    try {
        (void)initial_field();
    } catch (const std::exception& e) {
        out.push_back(std::string("coefficients.u0: ") + e.what());
    }
    if (probe_x.size() != static_cast<std::size_t>(d)) out.push_back("experiment.probe_x must have d components");
    for (double x : probe_x)
        if (!(x >= 0.0 && x <= 1.0)) out.push_back("experiment.probe_x must lie in [0,1]");
    if (!(confidence > 0.0)) out.push_back("experiment.confidence must be positive");
    const double thr = moment_threshold(d, eta);
    if (has_suite("verify-moments")) {
        if (trials < 1000) out.push_back("experiment.trials must be >= 1000 for moment checks");
        if (has_check("pointwise") && !(p_small >= 2.0))
            out.push_back("experiment.p_small must be >= 2 for the pointwise check");
        if ((has_check("sup") || has_check("factorization")) && !(p > thr))
            out.push_back("experiment.p = " + fmt_double(p) + " must exceed (4+d)/(1-eta) = " + fmt_double(thr));
        if (has_check("sup-small-p") && !(p_small > 0.0 && p_small <= thr))
            out.push_back("experiment.p_small = " + fmt_double(p_small) + " must lie in (0, (4+d)/(1-eta)] = (0, " +
                          fmt_double(thr) + "]");
        if (has_check("sup-small-p") && !(eps > 0.0)) out.push_back("experiment.eps must be positive");
        if (has_check("pointwise") || has_check("factorization")) {
            const double steps = probe_t / solver.dt;
            if (!(probe_t > 0.0 && probe_t <= solver.T) || std::abs(steps - std::round(steps)) > 1e-9 * steps)
                out.push_back("experiment.probe_t must be a positive multiple of solver.dt not beyond solver.T");
        }
        if (has_check("factorization")) {
            const AlphaWindow w = alpha_window(p, d, eta);
            if (p > thr && !(alpha > w.lo && alpha < w.hi))
                out.push_back("experiment.alpha = " + fmt_double(alpha) + " outside the window (" + fmt_double(w.lo) +
                              ", " + fmt_double(w.hi) + ")");
            const double coarse = 4.0 * solver.dt;
            const double r = probe_t / coarse;
            if (std::abs(r - std::round(r)) > 1e-9 * std::max(1.0, r))
                out.push_back("experiment.probe_t must be a multiple of 4 solver.dt for the factorization check");
        }
    }
    if (has_suite("verify-t2") || has_suite("couple")) {
        if (drift != "zero" && drift != "unit") out.push_back("drift.kind must be zero or unit");
        const int modes = d == 2 ? solver.N * solver.N : solver.N;
        if (drift == "unit" && (drift_direction < 0 || drift_direction >= modes))
            out.push_back("drift.direction must lie in [0, N^d)");
        if (coupling_trials < 100) out.push_back("experiment.coupling_trials must be >= 100");
        if (w2_samples < 1 || w2_samples > kDefaultAssignmentCap)
            out.push_back("experiment.w2_samples must lie in [1, " + std::to_string(kDefaultAssignmentCap) + "]");
    }
    return out;
}

/// Parses and validates; throws ConfigError listing every problem.
inline ExperimentConfig parse_config(std::istream& is) {
    std::vector<std::string> problems;
    const RawConfig raw = parse_ini(is, problems);
    ExperimentConfig c;
    std::set<std::string> used;
    auto take = [&](const std::string& key) -> std::optional<std::string> {
        used.insert(key);
        const auto it = raw.find(key);
        if (it == raw.end()) return std::nullopt;
        return it->second;
    };
    auto num = [&](const std::string& key, double& dst) {
        if (auto v = take(key)) {
            try {
                std::size_t n = 0;
                dst = std::stod(*v, &n);
                if (n != v->size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                problems.push_back(key + ": not a number: " + *v);
            }
        }
    };
    auto integer = [&](const std::string& key, auto& dst) {
        if (auto v = take(key)) {
            try {
                std::size_t n = 0;
                const long long x = std::stoll(*v, &n);
                if (n != v->size() || x < 0) throw std::invalid_argument("bad");
                dst = static_cast<std::remove_reference_t<decltype(dst)>>(x);
            } catch (const std::exception&) {
                problems.push_back(key + ": not a nonnegative integer: " + *v);
            }
        }
    };
    auto text = [&](const std::string& key, std::string& dst) {
        if (auto v = take(key)) dst = *v;
    };

    text("measure.kind", c.measure.kind);
    integer("measure.d", c.measure.d);
    num("measure.eta", c.measure.eta);
    num("measure.kappa", c.measure.kappa);
    num("measure.radius", c.measure.radius);
    text("measure.table", c.measure.table);
    integer("measure.quad_budget", c.measure.quad_budget);
    integer("solver.N", c.solver.N);
    integer("solver.M", c.solver.M);
    num("solver.dt", c.solver.dt);
    num("solver.T", c.solver.T);
    integer("solver.stride", c.solver.stride);
    text("coefficients.sigma", c.sigma);
    text("coefficients.b", c.b);
    text("coefficients.u0", c.u0);
    text("drift.kind", c.drift);
    integer("drift.direction", c.drift_direction);
    num("drift.amplitude", c.drift_amplitude);
    if (auto v = take("experiment.suites")) c.suites = detail::split_list(*v);
    if (auto v = take("experiment.checks")) c.moment_checks = detail::split_list(*v);
    integer("experiment.trials", c.trials);
    integer("experiment.seed", c.solver.seed);
    num("experiment.p", c.p);
    num("experiment.p_small", c.p_small);
    num("experiment.eps", c.eps);
    num("experiment.alpha", c.alpha);
    num("experiment.probe_t", c.probe_t);
    if (auto v = take("experiment.probe_x")) {
        c.probe_x.clear();
        for (const auto& item : detail::split_list(*v)) {
            try {
                c.probe_x.push_back(std::stod(item));
            } catch (const std::exception&) {
                problems.push_back("experiment.probe_x: not a number: " + item);
            }
        }
    }
    integer("experiment.w2_samples", c.w2_samples);
    integer("experiment.coupling_trials", c.coupling_trials);
    integer("experiment.factorization_paths", c.factorization_paths);
    num("experiment.confidence", c.confidence);
    text("output.dir", c.out_dir);
    integer("output.trajectories", c.write_trajectories);
    if (auto v = take("output.cost_matrix")) {
        if (*v == "1" || *v == "true")
            c.write_cost_matrix = true;
        else if (*v != "0" && *v != "false")
            problems.push_back("output.cost_matrix: expected 0, 1, true or false: " + *v);
    }
    for (const auto& [k, v] : raw)
        if (!used.count(k)) problems.push_back("unknown key " + k);
    c.solver.d = c.measure.d;
    if (problems.empty())
        for (auto& p : c.problems()) problems.push_back(std::move(p));
    if (!problems.empty()) throw ConfigError(problems);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError({"cannot open config file " + path});
    return parse_config(is);
}

inline void revalidate(const ExperimentConfig& c) {
    auto p = c.problems();
    if (!p.empty()) throw ConfigError(p);
}

// ---------------------------------------------------------------------------
// Running

struct SuiteResult {
    SuiteResult() = default;
    explicit SuiteResult(std::string n) : name(std::move(n)) {}

    std::string name;
    bool pass = false;
    std::string error;                                    // set when the suite threw
    std::vector<std::pair<std::string, std::string>> values;  // key-value summary
};

struct RunManifest {
    std::string version = kVersion;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::vector<SuiteResult> suites;
    std::vector<std::string> files;  // outputs written, relative to the out dir
    double wall_seconds = 0.0;       // kept out of the manifest file

    bool pass() const {
        for (const auto& s : suites)
            if (!s.pass) return false;
        return !suites.empty();
    }

    /// Byte-deterministic key-value text.
    std::string text() const {
        std::ostringstream os;
        os << "version = " << version << '\n';
        os << "config_hash = " << hex64(config_hash) << '\n';
        os << "seed = " << seed << '\n';
        os << "stream_derivation = splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019))\n";
        for (const auto& s : suites) {
            os << '[' << s.name << "]\n";
            os << "pass = " << (s.pass ? "true" : "false") << '\n';
            if (!s.error.empty()) os << "error = " << s.error << '\n';
            for (const auto& [k, v] : s.values) os << k << " = " << v << '\n';
        }
        os << "[files]\n";
        for (const auto& f : files) os << f << '\n';
        os << "[result]\npass = " << (pass() ? "true" : "false") << '\n';
        return os.str();
    }
};

namespace detail {

struct RunContext {
    const ExperimentConfig& cfg;
    std::filesystem::path out;
    RunManifest& manifest;

    void write(const std::string& name, const std::string& body) {
        std::ofstream os(out / name, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + (out / name).string());
        os << body;
        manifest.files.push_back(name);
    }
};

inline std::string opt(const std::optional<double>& v) { return v ? fmt_double(*v) : "na"; }

// Last retained diagonal entry of Q relative to the first: how much noise the cutoff drops.
inline std::pair<std::string, std::string> gram_tail(const HGram& gram) {
    const auto& q = gram.matrix();
    const double first = q(0, 0), last = q(q.rows() - 1, q.cols() - 1);
    return {"gram_tail_ratio", fmt_double(first > 0.0 ? last / first : 0.0)};
}

inline SuiteResult run_constants(RunContext& rc, const SpectralMeasure& m) {
    SuiteResult r{"constants"};
    const auto& c = rc.cfg;
    const auto co = CoefficientSpec::make(c.sigma, c.b);
    ConstantsInput in;
    in.T = c.solver.T;
    in.p = c.p;
    in.p_small = c.p_small;
    in.eps = c.eps;
    in.l_sigma = co.l_sigma();
    in.l_b = co.l_b();
    in.k_sigma = co.k_sigma();
    const ConstantsReport rep = constants_report(m, in);
    const double ln10 = std::log(10.0);
    auto lg = [&](const std::optional<double>& v) { return v ? std::optional<double>(*v / ln10) : std::nullopt; };
    r.values = {
        {"K_eta", fmt_double(rep.k_eta.value)},
        {"K_eta_converged", rep.k_eta.converged ? "true" : "false"},
        {"alpha_window_lo", fmt_double(rep.window.lo)},
        {"alpha_window_hi", fmt_double(rep.window.hi)},
        {"alpha_window_empty", rep.window.empty() ? "true" : "false"},
        {"alpha_star", opt(rep.alpha_star)},
        {"log10_C_prime", opt(lg(rep.log_c_prime))},
        {"log10_C_double_prime", opt(lg(rep.log_c_double_prime))},
        {"log10_C_T_p_eta", opt(lg(rep.log_c_T_p_eta))},
        {"log10_C_T_p_eta_bound", opt(lg(rep.log_c_T_p_eta_bound))},
        {"log10_C_T_p_eta_eps", opt(lg(rep.log_c_T_p_eta_eps))},
        {"q_star", opt(rep.q_star)},
        {"C_G_T_eta", fmt_double(rep.c_G_T_eta)},
        {"log10_theorem_C", fmt_double(rep.theorem.log_value / ln10)},
        {"theorem_C", fmt_double(rep.theorem.value())},
    };
    bool ok = rep.k_eta.converged;
    if (rep.log_c_T_p_eta && rep.log_c_T_p_eta_bound) ok = ok && *rep.log_c_T_p_eta <= *rep.log_c_T_p_eta_bound;
    r.pass = ok;
    std::ostringstream csv;
    csv << "key,value\n";
    for (const auto& [k, v] : r.values) csv << k << ',' << v << '\n';
    rc.write("constants.csv", csv.str());
    return r;
}

inline SuiteResult run_simulate(RunContext& rc, const HGram& gram) {
    SuiteResult r{"simulate"};
    const auto& c = rc.cfg;
    SimulationConfig sc = c.solver;
    const Galerkin g(sc, gram);
    const auto co = CoefficientSpec::make(c.sigma, c.b);
    const Eigen::VectorXd a0 = initial_coefficients(sc, c.initial_field());
    std::vector<double> sup(c.trials);
    const std::size_t keep = std::min(c.write_trajectories, c.trials);
    std::vector<Trajectory> kept(keep);
    parallel_for(c.trials, [&](std::size_t i) {
        Rng rng = Rng::stream(sc.seed, streams::kSimulate + i);
        Trajectory tr = simulate(g, co, a0, rng, streams::kSimulate + i);
        tr.config_hash = c.hash();
        sup[i] = tr.grid.cwiseAbs().maxCoeff();
        if (i < keep) kept[i] = std::move(tr);
    });
    std::ostringstream csv;
    csv << "trial,sup_abs_u\n";
    for (std::size_t i = 0; i < sup.size(); ++i) csv << i << ',' << fmt_double(sup[i]) << '\n';
    rc.write("simulate.csv", csv.str());
    for (std::size_t i = 0; i < keep; ++i) {
        std::ostringstream bin, tcsv;
        write_trajectory(bin, kept[i]);
        write_trajectory_csv(tcsv, kept[i]);
        rc.write("trajectory_" + std::to_string(i) + ".bin", bin.str());
        rc.write("trajectory_" + std::to_string(i) + ".csv", tcsv.str());
    }
    const double mean = tree_sum(sup) / static_cast<double>(sup.size());
    r.values = {{"trials", std::to_string(c.trials)}, {"mean_sup_abs_u", fmt_double(mean)}, gram_tail(gram)};
    r.pass = true;
    return r;
}

inline std::string moment_row(const MomentReport& m) {
    std::ostringstream os;
    os << m.label << ',' << fmt_double(m.p) << ',' << fmt_double(m.lhs) << ',' << fmt_double(m.lhs_se) << ','
       << fmt_double(m.rhs) << ',' << opt(m.rhs_explicit) << ',' << m.trials << ',' << (m.exact ? 1 : 0) << ','
       << (m.se_unstable ? 1 : 0) << ',' << (m.pass ? 1 : 0) << '\n';
    return os.str();
}

inline SuiteResult run_moments(RunContext& rc, const HGram& gram, double k_eta_value) {
    SuiteResult r{"verify-moments"};
    const auto& c = rc.cfg;
    SimulationConfig sc = c.solver;
    sc.store_grid = false;
    const Galerkin g(sc, gram);
    const auto co = CoefficientSpec::make(c.sigma, c.b);
    SigmaField field{co, initial_coefficients(sc, c.initial_field())};
    std::ostringstream csv;
    csv << "check,p,lhs,lhs_se,rhs,rhs_explicit,trials,exact,se_unstable,pass\n";
    bool ok = true;
    r.values.push_back(gram_tail(gram));
    auto add = [&](const MomentReport& m, const std::string& tag) {
        csv << moment_row(m);
        r.values.emplace_back(tag + ".lhs", fmt_double(m.lhs));
        r.values.emplace_back(tag + ".lhs_se", fmt_double(m.lhs_se));
        r.values.emplace_back(tag + ".rhs", fmt_double(m.rhs));
        if (m.lhs_subgrid) r.values.emplace_back(tag + ".lhs_half_grid", fmt_double(*m.lhs_subgrid));
        r.values.emplace_back(tag + ".pass", m.pass ? "true" : "false");
        ok = ok && m.pass;
    };
    const int probe_step = static_cast<int>(std::llround(c.probe_t / sc.dt));
    if (c.has_check("pointwise"))
        add(verify_pointwise_moment_mc(g, field, c.p_small, probe_step, c.probe(), c.trials, sc.seed, c.confidence),
            "pointwise");
    if (c.has_check("sup")) add(verify_sup_moment(g, field, c.p, c.trials, sc.seed, k_eta_value, c.confidence), "sup");
    if (c.has_check("sup-small-p"))
        add(verify_sup_moment_small_p(g, field, c.p_small, c.eps, c.trials, sc.seed, k_eta_value, c.confidence),
            "sup_small_p");
    rc.write("moments.csv", csv.str());
    if (c.has_check("factorization")) {
        const auto fr = factorization_check(sc, gram, field, c.alpha, c.probe_t, c.probe(), c.factorization_paths,
                                            sc.seed, {4, 2, 1});
        std::ostringstream fc;
        fc << "dt,mean_residual,mean_abs_convolution\n";
        for (const auto& l : fr.levels)
            fc << fmt_double(l.dt) << ',' << fmt_double(l.mean_residual) << ',' << fmt_double(l.mean_abs_convolution)
               << '\n';
        rc.write("factorization.csv", fc.str());
        r.values.emplace_back("factorization.beta_error", fmt_double(std::abs(fr.beta_quadrature - fr.beta_exact)));
        r.values.emplace_back("factorization.decreasing", fr.decreasing ? "true" : "false");
        ok = ok && fr.beta_ok && fr.decreasing;
    }
    r.pass = ok;
    return r;
}

inline DriftSpec make_drift(const ExperimentConfig& c, const HGram& gram) {
    if (c.drift == "zero") return DriftSpec::zero(gram.rank());
    if (c.drift_direction >= gram.rank())
        throw std::invalid_argument("drift.direction " + std::to_string(c.drift_direction) +
                                    " is not below the Gram rank " + std::to_string(gram.rank()));
    return DriftSpec::unit(gram.rank(), c.drift_direction, c.drift_amplitude);
}

inline TransportExperiment make_transport(const ExperimentConfig& c, const HGram& gram, double k_eta_value) {
    TransportExperiment ex;
    ex.cfg = c.solver;
    ex.coeffs = CoefficientSpec::make(c.sigma, c.b);
    ex.a0 = initial_coefficients(ex.cfg, c.initial_field());
    ex.drift = make_drift(c, gram);
    ex.coupling_trials = c.coupling_trials;
    ex.w2_samples = c.w2_samples;
    ex.k_eta = k_eta_value;
    ex.confidence = c.confidence;
    return ex;
}

inline SuiteResult run_t2(RunContext& rc, const HGram& gram, double k_eta_value) {
    SuiteResult r{"verify-t2"};
    const auto& c = rc.cfg;
    const auto ex = make_transport(c, gram, k_eta_value);
    const TransportReport t = verify_t2(gram, ex, c.solver.seed);
    r.values = {
        {"entropy", fmt_double(t.entropy)},
        {"coupling_mean", fmt_double(t.coupling.mean)},
        {"coupling_se", fmt_double(t.coupling.se)},
        {"w2", fmt_double(t.w2)},
        {"w2_se", fmt_double(t.w2_se)},
        {"w2_half_sample", fmt_double(t.w2_half)},
        {"w2_coupled", fmt_double(t.w2_coupled)},
        {"paired_cost", fmt_double(t.paired_cost)},
        {"log10_C", fmt_double(t.log10_c)},
        {"bound_2CH", fmt_double(t.bound)},
        {"ratio_w2", fmt_double(t.ratio_w2)},
        {"ratio_coupling", fmt_double(t.ratio_coupling)},
        {"degenerate", t.degenerate ? "true" : "false"},
        {"admissible", t.admissible ? "true" : "false"},
        {"w2_pass", t.w2_pass ? "true" : "false"},
        {"coupling_pass", t.coupling_pass ? "true" : "false"},
    };
    std::ostringstream csv;
    for (std::size_t i = 0; i < r.values.size(); ++i) csv << r.values[i].first << (i + 1 < r.values.size() ? "," : "\n");
    for (std::size_t i = 0; i < r.values.size(); ++i) csv << r.values[i].second << (i + 1 < r.values.size() ? "," : "\n");
    rc.write("transport.csv", csv.str());
    if (c.write_cost_matrix) {
        std::ostringstream cm;
        cm << "row,col,sup_sq_distance\n";
        for (Eigen::Index i = 0; i < t.w2_cost.rows(); ++i)
            for (Eigen::Index j = 0; j < t.w2_cost.cols(); ++j) cm << i << ',' << j << ',' << fmt_double(t.w2_cost(i, j)) << '\n';
        rc.write("cost_matrix.csv", cm.str());
    }
    r.values.push_back(gram_tail(gram));
    r.pass = t.pass();
    return r;
}

inline SuiteResult run_couple(RunContext& rc, const HGram& gram, double k_eta_value) {
    SuiteResult r{"couple"};
    const auto& c = rc.cfg;
    const auto ex = make_transport(c, gram, k_eta_value);
    SimulationConfig sc = ex.cfg;
    sc.store_grid = true;
    const Galerkin g(sc, gram);
    const double energy = 2.0 * entropy_of_drift(ex.drift, sc.steps(), sc.dt);  // int |h|_H^2
    const TheoremConstant tc = theorem_constant(sc.T, ex.coeffs.l_sigma(), ex.coeffs.l_b(), ex.coeffs.k_sigma(),
                                                gram.measure().eta(), k_eta_value, sc.d);
    const double target = tc.value() * energy;
    std::vector<double> v(ex.coupling_trials);
    parallel_for(ex.coupling_trials, [&](std::size_t i) {
        Rng rng = Rng::stream(sc.seed, streams::kCoupled + i);
        auto [tu, tv] = simulate_coupled(g, ex.coeffs, ex.a0, ex.drift, rng, streams::kCoupled + i);
        const double dd = sup_metric(tu, tv);
        v[i] = dd * dd;
    });
    std::ostringstream csv;
    csv << "trial,sup_sq_u_minus_v\n";
    for (std::size_t i = 0; i < v.size(); ++i) csv << i << ',' << fmt_double(v[i]) << '\n';
    rc.write("couple.csv", csv.str());
    const double n = static_cast<double>(v.size());
    const double mean = tree_sum(v) / n;
    std::vector<double> dev(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) dev[i] = (v[i] - mean) * (v[i] - mean);
    const double se = n > 1 ? std::sqrt(tree_sum(dev) / (n - 1.0) / n) : 0.0;
    r.values = {{"coupling_mean", fmt_double(mean)},
                {"coupling_se", fmt_double(se)},
                {"h_energy", fmt_double(energy)},
                {"log10_theorem_C", fmt_double(tc.log_value / std::log(10.0))},
                {"target", fmt_double(target)},
                gram_tail(gram)};
    bool ok = mean <= target + c.confidence * se;
    if (ex.coeffs.sigma.constant && ex.coeffs.b.constant && ex.coeffs.b.value == 0.0) {
        const double exact = additive_coupling_cost(g, ex.coeffs.sigma.value, ex.drift);
        const double additive = 6.0 * ex.coeffs.k_sigma() * ex.coeffs.k_sigma() *
                                c_G_T_eta(sc.T, gram.measure().eta(), k_eta_value) * energy;
        r.values.emplace_back("additive_exact_cost", fmt_double(exact));
        r.values.emplace_back("additive_bound", fmt_double(additive));
        ok = ok && exact <= additive;
    }
    r.pass = ok;
    return r;
}

}  // namespace detail

/// Runs the selected suites in a fixed order and writes the manifest.
inline RunManifest run(const ExperimentConfig& cfg) {
    revalidate(cfg);
    RunManifest man;
    man.config_hash = cfg.hash();
    man.seed = cfg.solver.seed;
    std::filesystem::create_directories(cfg.out_dir);
    detail::RunContext rc{cfg, cfg.out_dir, man};
    rc.write("config.txt", cfg.canonical());

    const SpectralMeasure m = cfg.build_measure();
    std::optional<HGram> gram;
    std::optional<double> k_value;
    auto need_gram = [&]() -> const HGram& {
        if (!gram) gram = build_gram(m, cfg.solver.N, cfg.measure.quad_budget);
        return *gram;
    };
    auto need_k = [&]() -> double {
        if (!k_value) {
            const KEtaResult k = k_eta(m, m.eta());
            if (!k.converged) throw std::domain_error("K_eta diverges for this measure");
            k_value = k.value;
        }
        return *k_value;
    };
    const std::vector<std::string> order{"constants", "simulate", "verify-moments", "verify-t2", "couple"};
    for (const auto& name : order) {
        if (!cfg.has_suite(name)) continue;
        SuiteResult res{name};
        try {
            if (name == "constants") res = detail::run_constants(rc, m);
            if (name == "simulate") res = detail::run_simulate(rc, need_gram());
            if (name == "verify-moments") res = detail::run_moments(rc, need_gram(), need_k());
            if (name == "verify-t2") res = detail::run_t2(rc, need_gram(), need_k());
            if (name == "couple") res = detail::run_couple(rc, need_gram(), need_k());
        } catch (const std::exception& e) {
            res.pass = false;
            res.error = e.what();
        }
        man.suites.push_back(std::move(res));
    }
    man.files.push_back("manifest.txt");
    std::ofstream os(std::filesystem::path(cfg.out_dir) / "manifest.txt", std::ios::binary);
    os << man.text();
    return man;
}

}  // namespace sheq
