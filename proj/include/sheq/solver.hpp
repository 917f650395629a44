#pragma once
// Spectral Galerkin simulation of the mild solution with an exponential Euler
// step, and the drift-coupled pair (u, v) sharing one noise stream.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "basis_kernel.hpp"
#include "noise_model.hpp"
#include "rng.hpp"

namespace sheq {

// ---------------------------------------------------------------------------
// Coefficients

/// A named scalar nonlinearity with its declared Lipschitz constant and bound.
struct ScalarFunction {
    std::string name;
    std::function<double(double)> f;
    double lipschitz = 0.0;
    double bound = std::numeric_limits<double>::infinity();
    bool constant = false;
    double value = 0.0;  // meaningful when constant

    double operator()(double v) const { return f(v); }
};

/// Parses "zero", "const:c", "sin[:a]", "tanh[:a]", "linear:a", "clamp:a".
inline ScalarFunction parse_function(const std::string& spec) {
    const auto colon = spec.find(':');
    const std::string head = spec.substr(0, colon);
    double a = 1.0;
    bool has_arg = colon != std::string::npos;
    if (has_arg) {
        const std::string arg = spec.substr(colon + 1);
        std::size_t used = 0;
        try {
            a = std::stod(arg, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != arg.size() || !std::isfinite(a))
            throw std::invalid_argument("function spec '" + spec + "': bad numeric argument");
    }
    ScalarFunction s;
    s.name = spec;
    const double aa = std::abs(a);
    if (head == "zero" && !has_arg) {
        s.f = [](double) { return 0.0; };
        s.bound = 0.0;
        s.constant = true;
    } else if (head == "const" && has_arg) {
        s.f = [a](double) { return a; };
        s.bound = aa;
        s.constant = true;
        s.value = a;
    } else if (head == "sin") {
        s.f = [a](double v) { return a * std::sin(v); };
        s.lipschitz = aa;
        s.bound = aa;
    } else if (head == "tanh") {
        s.f = [a](double v) { return a * std::tanh(v); };
        s.lipschitz = aa;
        s.bound = aa;
    } else if (head == "linear" && has_arg) {
        s.f = [a](double v) { return a * v; };
        s.lipschitz = aa;
        if (a == 0.0) {
            s.bound = 0.0;
            s.constant = true;
        }
    } else if (head == "clamp" && has_arg) {
        if (!(a > 0.0)) throw std::invalid_argument("clamp: level must be positive");
        s.f = [a](double v) { return std::clamp(v, -a, a); };
        s.lipschitz = 1.0;
        s.bound = a;
    } else {
        throw std::invalid_argument("unknown function spec '" + spec + "'");
    }
    return s;
}

struct CoefficientSpec {
    ScalarFunction sigma;
    ScalarFunction b;

    static CoefficientSpec make(const std::string& sigma_spec, const std::string& b_spec) {
        return {parse_function(sigma_spec), parse_function(b_spec)};
    }

    double l_sigma() const { return sigma.lipschitz; }
    double l_b() const { return b.lipschitz; }
    double k_sigma() const { return sigma.bound; }
};

/// Checks the declared constants on a dense lattice of values in [-range, range].
inline bool spot_check(const CoefficientSpec& c, int samples = 401, double range = 20.0) {
    const double tol = 1e-12;
    std::vector<double> v(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i) v[i] = -range + 2.0 * range * i / (samples - 1);
    for (double x : v) {
        if (std::abs(c.sigma(x)) > c.k_sigma() + tol) return false;
        for (double y : v) {
            const double dv = std::abs(x - y);
            if (std::abs(c.sigma(x) - c.sigma(y)) > c.l_sigma() * dv + tol) return false;
            if (std::abs(c.b(x) - c.b(y)) > c.l_b() * dv + tol) return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Configuration

struct SimulationConfig {
    int d = 1;
    int N = 32;      // modes per axis
    int M = 64;      // interior grid points per axis
    double dt = 2e-3;
    double T = 1.0;
    int trials = 1;
    std::uint64_t seed = 1;
    int stride = 1;  // snapshot stride in steps
    bool store_grid = true;

    int steps() const { return static_cast<int>(std::llround(T / dt)); }
    int modes() const { return d == 1 ? N : N * N; }
    int grid_size() const { return d == 1 ? M : M * M; }

    /// Every violated precondition, one message each.
    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        if (d != 1 && d != 2) out.push_back("d must be 1 or 2");
        if (N < 1) out.push_back("N must be >= 1");
        if (M < 2 * N) out.push_back("M must be >= 2N");
        if (!(dt > 0.0)) out.push_back("dt must be positive");
        if (!(T > 0.0)) out.push_back("T must be positive");
        if (dt > 0.0 && T > 0.0 && std::abs(T / dt - std::round(T / dt)) > 1e-9 * (T / dt))
            out.push_back("T/dt must be an integer");
        if (trials < 1) out.push_back("trials must be >= 1");
        if (stride < 1) out.push_back("stride must be >= 1");
        return out;
    }

    void validate() const {
        const auto p = problems();
        if (p.empty()) return;
        std::string msg = "invalid simulation config:";
        for (const auto& s : p) msg += " " + s + ";";
        throw std::invalid_argument(msg);
    }
};

// ---------------------------------------------------------------------------
// Sine transforms on the interior grid x_i = i/(M+1), i = 1..M

class SineTransform {
public:
    SineTransform(int d, int N, int M) : d_(d), n_(N), m_(M), s_(M, N) {
        check_dim(d);
        if (N < 1 || M < N) throw std::invalid_argument("SineTransform: need 1 <= N <= M");
        for (int i = 0; i < M; ++i)
            for (int k = 0; k < N; ++k) s_(i, k) = sine_mode(k + 1, grid_point(i));
    }

    int dim() const { return d_; }
    int modes_per_axis() const { return n_; }
    int points_per_axis() const { return m_; }
    double grid_point(int i) const { return static_cast<double>(i + 1) / (m_ + 1); }

    /// Mode coefficients (row-major over (k1, k2)) to interior grid values (row-major over (i1, i2)).
    Eigen::VectorXd synthesize(const Eigen::VectorXd& a) const {
        if (d_ == 1) return s_ * a;
        using RM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Eigen::Map<const RM> A(a.data(), n_, n_);
        RM U = s_ * A * s_.transpose();
        return Eigen::Map<const Eigen::VectorXd>(U.data(), U.size());
    }

    /// Discrete sine analysis keeping modes 1..N per axis.
    Eigen::VectorXd analyze(const Eigen::VectorXd& u) const {
        const double h = 1.0 / (m_ + 1);
        if (d_ == 1) return (s_.transpose() * u) * h;
        using RM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Eigen::Map<const RM> U(u.data(), m_, m_);
        RM A = s_.transpose() * U * s_ * (h * h);
        return Eigen::Map<const Eigen::VectorXd>(A.data(), A.size());
    }

private:
    int d_, n_, m_;
    Eigen::MatrixXd s_;  // M x N, entries sqrt(2) sin(pi k x_i)
};

/// Full discrete sine transform of samples on the closed grid {0, 1/(M+1), ..., 1}^d
/// ((M+2)^d values, boundary included). Returns all M^d coefficients.
inline Eigen::VectorXd project_initial(const Eigen::VectorXd& samples, int d, int M) {
    check_dim(d);
    const int P = M + 2;
    if (samples.size() != (d == 1 ? P : P * P)) throw std::invalid_argument("project_initial: sample count mismatch");
    const double scale = std::max(1.0, samples.cwiseAbs().maxCoeff());
    auto at = [&](int i, int j) { return d == 1 ? samples[i] : samples[i * P + j]; };
    const auto boundary = [&](int i, int j) {
        if (std::abs(at(i, j)) > 1e-12 * scale)
            throw std::domain_error("project_initial: boundary sample is not zero");
    };
    if (d == 1) {
        boundary(0, 0);
        boundary(M + 1, 0);
    } else {
        for (int i = 0; i < P; ++i) {
            boundary(i, 0);
            boundary(i, M + 1);
            boundary(0, i);
            boundary(M + 1, i);
        }
    }
    Eigen::VectorXd interior(d == 1 ? M : M * M);
    if (d == 1)
        interior = samples.segment(1, M);
    else
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < M; ++j) interior[i * M + j] = samples[(i + 1) * P + (j + 1)];
    return SineTransform(d, M, M).analyze(interior);
}

/// Inverse of project_initial: samples on the closed grid with zero boundary.
inline Eigen::VectorXd inverse_sine_transform(const Eigen::VectorXd& coeffs, int d, int M) {
    const Eigen::VectorXd interior = SineTransform(d, M, M).synthesize(coeffs);
    const int P = M + 2;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(d == 1 ? P : P * P);
    if (d == 1)
        out.segment(1, M) = interior;
    else
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < M; ++j) out[(i + 1) * P + (j + 1)] = interior[i * M + j];
    return out;
}

/// Keeps modes 1..N per axis of a coefficient vector with `from` modes per axis.
inline Eigen::VectorXd truncate_modes(const Eigen::VectorXd& a, int d, int from, int N) {
    if (d == 1) return a.head(N);
    Eigen::VectorXd out(N * N);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) out[i * N + j] = a[i * from + j];
    return out;
}

/// Samples u0 on the closed grid, projects and truncates to the config's modes.
inline Eigen::VectorXd initial_coefficients(const SimulationConfig& cfg, const std::function<double(const Point&)>& u0) {
    const int P = cfg.M + 2;
    const double h = 1.0 / (cfg.M + 1);
    Eigen::VectorXd s(cfg.d == 1 ? P : P * P);
    if (cfg.d == 1)
        for (int i = 0; i < P; ++i) s[i] = u0(Point(i * h));
    else
        for (int i = 0; i < P; ++i)
            for (int j = 0; j < P; ++j) s[i * P + j] = u0(Point(i * h, j * h));
    return truncate_modes(project_initial(s, cfg.d, cfg.M), cfg.d, cfg.M, cfg.N);
}

// ---------------------------------------------------------------------------
// Trajectories

struct Trajectory {
    int d = 1, N = 0, M = 0, stride = 1;
    double dt = 0.0;
    std::uint64_t config_hash = 0, seed = 0, stream = 0;
    std::vector<double> times;
    std::vector<Eigen::VectorXd> coeffs;  // one per snapshot
    Eigen::MatrixXd grid;                 // snapshots x M^d interior values; empty if not stored

    std::size_t snapshots() const { return times.size(); }

    /// Fills `grid` from the coefficients if it is empty.
    void materialize() {
        if (grid.rows() == static_cast<Eigen::Index>(coeffs.size()) && grid.size() > 0) return;
        const SineTransform st(d, N, M);
        grid.resize(static_cast<Eigen::Index>(coeffs.size()), d == 1 ? M : M * M);
        for (std::size_t i = 0; i < coeffs.size(); ++i) grid.row(static_cast<Eigen::Index>(i)) = st.synthesize(coeffs[i]).transpose();
    }
};

class BlowUp : public std::runtime_error {
public:
    BlowUp(int step, double value)
        : std::runtime_error("solution blew up at step " + std::to_string(step) + " (|a_k| = " + std::to_string(value) + ")"),
          step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

inline constexpr double kBlowUpThreshold = 1e12;

/// Deterministic drift in H-orthonormal coordinates, piecewise constant on the step grid.
struct DriftSpec {
    std::vector<Eigen::VectorXd> c;  // size 1 (constant) or one per step

    static DriftSpec zero(int rank) { return {{Eigen::VectorXd::Zero(rank)}}; }
    static DriftSpec constant(const Eigen::VectorXd& c) { return {{c}}; }
    /// h = amplitude times the j-th H-orthonormal direction.
    static DriftSpec unit(int rank, int j, double amplitude = 1.0) {
        if (j < 0 || j >= rank) throw std::out_of_range("DriftSpec::unit: direction index out of range");
        Eigen::VectorXd c = Eigen::VectorXd::Zero(rank);
        c[j] = amplitude;
        return {{c}};
    }

    const Eigen::VectorXd& at(int step) const { return c.size() == 1 ? c[0] : c.at(static_cast<std::size_t>(step)); }
    /// |h(step)|_H^2 = sum_j c_j^2.
    double h_norm2(int step) const { return at(step).squaredNorm(); }
    bool is_zero() const {
        for (const auto& v : c)
            if (v.squaredNorm() != 0.0) return false;
        return true;
    }
    DriftSpec scaled(double s) const {
        DriftSpec r = *this;
        for (auto& v : r.c) v *= s;
        return r;
    }
};

// ---------------------------------------------------------------------------
// Stepping

/// Per-config precomputation shared by every trajectory.
class Galerkin {
public:
    /// Keeps a reference to gram, which must outlive the solver.
    Galerkin(const SimulationConfig& cfg, const HGram& gram)
        : cfg_(cfg), gram_(gram), st_(cfg.d, cfg.N, cfg.M), green_(cfg.d, cfg.N) {
        cfg.validate();
        if (gram.dim() != cfg.d || gram.cutoff() != cfg.N)
            throw std::invalid_argument("Galerkin: Gram matrix does not match (d, N) of the config");
        const int n = cfg.modes();
        lambda_.resize(n);
        decay_.resize(n);
        means_.resize(n);
        for (int m = 0; m < n; ++m) {
            lambda_[m] = green_.eigenvalue(m);
            decay_[m] = std::exp(-lambda_[m] * cfg.dt);
            const MultiIndex k = green_.index(m);
            means_[m] = cfg.d == 1 ? sine_mode_mean(k[0]) : sine_mode_mean(k[0]) * sine_mode_mean(k[1]);
        }
    }

    const SimulationConfig& config() const { return cfg_; }
    Galerkin(const SimulationConfig&, HGram&&) = delete;

    const HGram& gram() const { return gram_; }
    const SineTransform& transform() const { return st_; }
    const Eigen::VectorXd& eigenvalues() const { return lambda_; }
    const Eigen::VectorXd& decay() const { return decay_; }
    /// Integrals of the sine modes over the cube.
    const Eigen::VectorXd& mode_means() const { return means_; }

    /// Noise projection s_hat = P_N[sigma(u) * noise field], noise given in mode space.
    Eigen::VectorXd noise_term(const ScalarFunction& sigma, const Eigen::VectorXd& ugrid, const Eigen::VectorXd& xi) const {
        if (sigma.constant) return sigma.value * xi;
        const Eigen::VectorXd ng = st_.synthesize(xi);
        return st_.analyze(ugrid.unaryExpr(sigma.f).cwiseProduct(ng));
    }

    /// b_hat = P_N[b(u)].
    Eigen::VectorXd drift_term(const ScalarFunction& b, const Eigen::VectorXd& ugrid) const {
        if (b.constant) return b.value * means_;
        return st_.analyze(ugrid.unaryExpr(b.f));
    }

    /// a <- e^{-lambda dt} (a + dt b_hat + s_hat).
    void advance(Eigen::VectorXd& a, const Eigen::VectorXd& bhat, const Eigen::VectorXd& shat, int step) const {
        a = decay_.cwiseProduct(a + cfg_.dt * bhat + shat);
        const double big = a.cwiseAbs().maxCoeff();
        if (!(big <= kBlowUpThreshold)) throw BlowUp(step, big);
    }

private:
    SimulationConfig cfg_;
    const HGram& gram_;
    SineTransform st_;
    GreenEvaluator green_;
    Eigen::VectorXd lambda_, decay_, means_;
};

namespace detail {

inline Trajectory empty_trajectory(const SimulationConfig& cfg, std::uint64_t stream) {
    Trajectory tr;
    tr.d = cfg.d;
    tr.N = cfg.N;
    tr.M = cfg.M;
    tr.stride = cfg.stride;
    tr.dt = cfg.dt;
    tr.seed = cfg.seed;
    tr.stream = stream;
    const std::size_t snaps = static_cast<std::size_t>(cfg.steps() / cfg.stride + 1);
    tr.times.reserve(snaps);
    tr.coeffs.reserve(snaps);
    if (cfg.store_grid) tr.grid.resize(static_cast<Eigen::Index>(snaps), cfg.grid_size());
    return tr;
}

inline void record(Trajectory& tr, const SimulationConfig& cfg, int step, const Eigen::VectorXd& a,
                   const Eigen::VectorXd* ugrid, const SineTransform& st) {
    if (step % cfg.stride != 0) return;
    const auto row = static_cast<Eigen::Index>(tr.times.size());
    tr.times.push_back(step * cfg.dt);
    tr.coeffs.push_back(a);
    if (cfg.store_grid) tr.grid.row(row) = (ugrid ? *ugrid : st.synthesize(a)).transpose();
}

inline bool needs_grid(const CoefficientSpec& c) { return !c.sigma.constant || !c.b.constant; }

}  // namespace detail

/// One trajectory of the mild solution from coefficients a0 (modes 1..N).
/// The optional observer sees (step, a before the step, s_hat of the step).
inline Trajectory simulate(const Galerkin& g, const CoefficientSpec& coeffs, const Eigen::VectorXd& a0, Rng& rng,
                           std::uint64_t stream = 0,
                           const std::function<void(int, const Eigen::VectorXd&, const Eigen::VectorXd&)>& observer = {}) {
    const auto& cfg = g.config();
    if (a0.size() != cfg.modes()) throw std::invalid_argument("simulate: initial coefficients have the wrong size");
    Trajectory tr = detail::empty_trajectory(cfg, stream);
    const int steps = cfg.steps();
    const double sq = std::sqrt(cfg.dt);
    const bool grid_needed = detail::needs_grid(coeffs);
    Eigen::VectorXd a = a0, ug;
    for (int n = 0; n < steps; ++n) {
        if (grid_needed || cfg.store_grid) ug = g.transform().synthesize(a);
        detail::record(tr, cfg, n, a, cfg.store_grid ? &ug : nullptr, g.transform());
        const Eigen::VectorXd xi = g.gram().factor() * (standard_normals(g.gram().rank(), rng) * sq);
        const Eigen::VectorXd shat = g.noise_term(coeffs.sigma, ug, xi);
        const Eigen::VectorXd bhat = g.drift_term(coeffs.b, ug);
        if (observer) observer(n, a, shat);
        g.advance(a, bhat, shat, n + 1);
    }
    detail::record(tr, cfg, steps, a, nullptr, g.transform());
    return tr;
}

/// The coupled pair: both driven by the same normals; u's noise is shifted by L c(s) dt,
/// i.e. u sees sigma(u) * h_grid(s) dt on top of v's recursion.
inline std::pair<Trajectory, Trajectory> simulate_coupled(const Galerkin& g, const CoefficientSpec& coeffs,
                                                          const Eigen::VectorXd& a0, const DriftSpec& drift, Rng& rng,
                                                          std::uint64_t stream = 0) {
    const auto& cfg = g.config();
    if (a0.size() != cfg.modes()) throw std::invalid_argument("simulate_coupled: initial coefficients have the wrong size");
    const int rank = g.gram().rank();
    for (const auto& c : drift.c)
        if (c.size() != rank) throw std::invalid_argument("simulate_coupled: drift dimension differs from the Gram rank");
    if (drift.c.size() != 1 && static_cast<int>(drift.c.size()) != cfg.steps())
        throw std::invalid_argument("simulate_coupled: drift must be constant or given per step");
    Trajectory tu = detail::empty_trajectory(cfg, stream), tv = detail::empty_trajectory(cfg, stream);
    const int steps = cfg.steps();
    const double sq = std::sqrt(cfg.dt);
    const bool grid_needed = detail::needs_grid(coeffs);
    const auto& L = g.gram().factor();
    Eigen::VectorXd a = a0, b = a0, ua, vb;
    for (int n = 0; n < steps; ++n) {
        if (grid_needed || cfg.store_grid) {
            ua = g.transform().synthesize(a);
            vb = g.transform().synthesize(b);
        }
        detail::record(tu, cfg, n, a, cfg.store_grid ? &ua : nullptr, g.transform());
        detail::record(tv, cfg, n, b, cfg.store_grid ? &vb : nullptr, g.transform());
        const Eigen::VectorXd xi = L * (standard_normals(rank, rng) * sq);
        const Eigen::VectorXd xu = xi + L * (drift.at(n) * cfg.dt);
        const Eigen::VectorXd su = g.noise_term(coeffs.sigma, ua, xu);
        const Eigen::VectorXd sv = g.noise_term(coeffs.sigma, vb, xi);
        g.advance(a, g.drift_term(coeffs.b, ua), su, n + 1);
        g.advance(b, g.drift_term(coeffs.b, vb), sv, n + 1);
    }
    detail::record(tu, cfg, steps, a, nullptr, g.transform());
    detail::record(tv, cfg, steps, b, nullptr, g.transform());
    return {std::move(tu), std::move(tv)};
}

/// max over stored times and interior grid points of |u1 - u2|.
inline double sup_metric(Trajectory& t1, Trajectory& t2) {
    if (t1.d != t2.d || t1.M != t2.M || t1.times != t2.times)
        throw std::invalid_argument("sup_metric: trajectories live on different grids");
    t1.materialize();
    t2.materialize();
    return (t1.grid - t2.grid).cwiseAbs().maxCoeff();
}

/// Const variant for trajectories whose grids are already stored.
inline double sup_metric(const Trajectory& t1, const Trajectory& t2) {
    if (t1.d != t2.d || t1.M != t2.M || t1.times != t2.times)
        throw std::invalid_argument("sup_metric: trajectories live on different grids");
    if (t1.grid.rows() != static_cast<Eigen::Index>(t1.times.size()) ||
        t2.grid.rows() != static_cast<Eigen::Index>(t2.times.size()))
        throw std::invalid_argument("sup_metric: grid fields not materialized");
    return (t1.grid - t2.grid).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr char kTrajMagic[9] = "SHEQTRAJ";

/// Header: magic, u32 version, u32 d, u32 N, u32 M, u32 stride, f64 dt,
/// u64 config hash, u64 seed, u64 stream, u32 snapshots; then per snapshot
/// f64 time followed by the N^d coefficients.
inline void write_trajectory(std::ostream& os, const Trajectory& tr) {
    os.write(kTrajMagic, 8);
    io::put_u32(os, 1);
    io::put_u32(os, static_cast<std::uint32_t>(tr.d));
    io::put_u32(os, static_cast<std::uint32_t>(tr.N));
    io::put_u32(os, static_cast<std::uint32_t>(tr.M));
    io::put_u32(os, static_cast<std::uint32_t>(tr.stride));
    io::put_f64(os, tr.dt);
    io::put_u64(os, tr.config_hash);
    io::put_u64(os, tr.seed);
    io::put_u64(os, tr.stream);
    io::put_u32(os, static_cast<std::uint32_t>(tr.times.size()));
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        io::put_f64(os, tr.times[i]);
        for (Eigen::Index k = 0; k < tr.coeffs[i].size(); ++k) io::put_f64(os, tr.coeffs[i][k]);
    }
}

inline Trajectory read_trajectory(std::istream& is) {
    io::expect_magic(is, kTrajMagic);
    if (io::get_u32(is) != 1) throw std::runtime_error("read_trajectory: unsupported version");
    Trajectory tr;
    tr.d = static_cast<int>(io::get_u32(is));
    tr.N = static_cast<int>(io::get_u32(is));
    tr.M = static_cast<int>(io::get_u32(is));
    tr.stride = static_cast<int>(io::get_u32(is));
    check_dim(tr.d);
    tr.dt = io::get_f64(is);
    tr.config_hash = io::get_u64(is);
    tr.seed = io::get_u64(is);
    tr.stream = io::get_u64(is);
    const std::uint32_t snaps = io::get_u32(is);
    const int n = tr.d == 1 ? tr.N : tr.N * tr.N;
    for (std::uint32_t i = 0; i < snaps; ++i) {
        tr.times.push_back(io::get_f64(is));
        Eigen::VectorXd a(n);
        for (int k = 0; k < n; ++k) a[k] = io::get_f64(is);
        tr.coeffs.push_back(std::move(a));
    }
    return tr;
}

/// (t, x[, y], u) rows over the interior grid, 17 significant digits.
inline void write_trajectory_csv(std::ostream& os, Trajectory& tr) {
    tr.materialize();
    const double h = 1.0 / (tr.M + 1);
    os << (tr.d == 1 ? "t,x,u\n" : "t,x,y,u\n");
    os << std::setprecision(17);
    for (std::size_t s = 0; s < tr.times.size(); ++s) {
        const auto row = static_cast<Eigen::Index>(s);
        if (tr.d == 1) {
            for (int i = 0; i < tr.M; ++i) os << tr.times[s] << ',' << (i + 1) * h << ',' << tr.grid(row, i) << '\n';
        } else {
            for (int i = 0; i < tr.M; ++i)
                for (int j = 0; j < tr.M; ++j)
                    os << tr.times[s] << ',' << (i + 1) * h << ',' << (j + 1) * h << ',' << tr.grid(row, i * tr.M + j)
                       << '\n';
        }
    }
}

}  // namespace sheq
