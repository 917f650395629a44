#pragma once
// Moment bounds for the stochastic convolution Z(t,x) = int int G_{t-s}(x,y) sigma(s,y) F(ds,dy):
// exact Gaussian moments for constant sigma, Monte Carlo suprema, and the
// factorization identity checked pathwise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "constants.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "solver.hpp"

namespace sheq {

/// The integrand sigma(s,y) of the moment checks: sigma applied to a simulated u
/// (or a constant, in which case u is never simulated).
struct SigmaField {
    CoefficientSpec coeffs;
    Eigen::VectorXd a0;  // initial coefficients of u

    static SigmaField constant(double c, int modes) {
        return {CoefficientSpec::make("const:" + std::to_string(c), "zero"), Eigen::VectorXd::Zero(modes)};
    }
    bool is_constant() const { return coeffs.sigma.constant; }
    double constant_value() const { return coeffs.sigma.value; }
};

/// sqrt(2)^d prod sin(pi k_i x_i) for every retained mode, flat order as in GreenEvaluator.
inline Eigen::VectorXd mode_values(const Galerkin& g, const Point& x) {
    check_in_cube(x);
    const auto& cfg = g.config();
    if (x.dim != cfg.d) throw std::invalid_argument("mode_values: dimension mismatch");
    Eigen::VectorXd v(cfg.modes());
    for (int m = 0; m < cfg.modes(); ++m) {
        if (cfg.d == 1)
            v[m] = sine_mode(m + 1, x[0]);
        else
            v[m] = sine_mode(m / cfg.N + 1, x[0]) * sine_mode(m % cfg.N + 1, x[1]);
    }
    return v;
}

/// |G_t(x,.)|_H^2 through the Gram matrix (retained modes).
inline double green_h_norm2(const Galerkin& g, double t, const Point& x) {
    if (!(t > 0.0)) throw std::domain_error("green_h_norm2: t must be positive");
    const Eigen::VectorXd v = mode_values(g, x).cwiseProduct((-g.eigenvalues() * t).array().exp().matrix());
    return g.gram().norm2(v);
}

/// int_0^t |G_s(x,.)|_H^2 ds in closed form over the retained modes.
inline double green_h_norm2_integral(const Galerkin& g, double t, const Point& x) {
    const Eigen::VectorXd e = mode_values(g, x);
    const auto& lam = g.eigenvalues();
    const auto& Q = g.gram().matrix();
    const Eigen::Index n = e.size();
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = 0; k < n; ++k) {
            const double l = lam[j] + lam[k];
            s += Q(j, k) * e[j] * e[k] * (-std::expm1(-l * t)) / l;
        }
    return s;
}

/// Exact variance of the discrete convolution with constant sigma at (step dt, x):
/// sum_{K=1}^{step} dt c^2 v_K' Q v_K with v_K = e^{-lambda K dt} e(x).
inline double exact_convolution_variance(const Galerkin& g, double c, int step, const Point& x) {
    const Eigen::VectorXd e = mode_values(g, x);
    Eigen::VectorXd v = e;
    double s = 0.0;
    for (int K = 1; K <= step; ++K) {
        v = v.cwiseProduct(g.decay());
        s += g.gram().norm2(v);
    }
    return s * g.config().dt * c * c;
}

/// E|N(0,1)|^p.
inline double gaussian_abs_moment(double p) { return std::pow(2.0, 0.5 * p) * std::tgamma(0.5 * (p + 1.0)) / std::sqrt(kPi); }

// ---------------------------------------------------------------------------
// One path of the convolution

namespace detail {

// Max over the interior points with odd index on every axis.
inline double subgrid_max(const Eigen::VectorXd& grid, int d, int M) {
    double m = 0.0;
    if (d == 1) {
        for (int i = 1; i < M; i += 2) m = std::max(m, grid[i]);
    } else {
        for (int i = 1; i < M; i += 2)
            for (int j = 1; j < M; j += 2) m = std::max(m, grid[i * M + j]);
    }
    return m;
}

}  // namespace detail

struct PathStats {
    double sup_abs_z = 0.0;         // max over the time grid and interior grid of |Z|
    double sup_abs_z_sub = 0.0;     // same max over every second grid point per axis
    double z_probe = 0.0;           // Z at the probe point and probe step
    double sup_abs_sigma = 0.0;     // max over time and grid of |sigma|
    double int_sup_sigma_p = 0.0;   // sum_n dt max_y |sigma(t_n, y)|^p
};

/// Runs one path. sigma_p_acc (steps x grid, optional) accumulates |sigma(t_n, y)|^p.
inline PathStats convolution_path(const Galerkin& g, const SigmaField& f, double p, Rng& rng, int probe_step,
                                  const Eigen::VectorXd* probe_modes, Eigen::MatrixXd* sigma_p_acc) {
    const auto& cfg = g.config();
    const int steps = cfg.steps();
    const double sq = std::sqrt(cfg.dt);
    const auto& L = g.gram().factor();
    const bool constant = f.is_constant();
    PathStats ps;
    Eigen::VectorXd a = f.a0, z = Eigen::VectorXd::Zero(cfg.modes()), ug;
    if (constant) {
        const double c = std::abs(f.constant_value());
        ps.sup_abs_sigma = c;
        ps.int_sup_sigma_p = std::pow(c, p) * cfg.T;
    }
    for (int n = 0; n <= steps; ++n) {
        if (n == probe_step && probe_modes) ps.z_probe = z.dot(*probe_modes);
        if (n > 0) {
            const Eigen::VectorXd zg = g.transform().synthesize(z).cwiseAbs();
            ps.sup_abs_z = std::max(ps.sup_abs_z, zg.maxCoeff());
            ps.sup_abs_z_sub = std::max(ps.sup_abs_z_sub, detail::subgrid_max(zg, cfg.d, cfg.M));
        }
        if (!constant) {
            ug = g.transform().synthesize(a);
            const Eigen::VectorXd sg = ug.unaryExpr(f.coeffs.sigma.f).cwiseAbs();
            const double mx = sg.maxCoeff();
            ps.sup_abs_sigma = std::max(ps.sup_abs_sigma, mx);
            if (n < steps) {
                ps.int_sup_sigma_p += cfg.dt * std::pow(mx, p);
                if (sigma_p_acc) sigma_p_acc->row(n) += sg.array().pow(p).matrix().transpose();
            }
        }
        if (n == steps) break;
        const Eigen::VectorXd xi = L * (standard_normals(g.gram().rank(), rng) * sq);
        const Eigen::VectorXd shat = g.noise_term(f.coeffs.sigma, ug, xi);
        z = g.decay().cwiseProduct(z + shat);
        if (!constant) g.advance(a, g.drift_term(f.coeffs.b, ug), shat, n + 1);
        if (!(z.cwiseAbs().maxCoeff() <= kBlowUpThreshold)) throw BlowUp(n + 1, z.cwiseAbs().maxCoeff());
    }
    return ps;
}

/// Z(step dt, x) for one path.
inline double convolution_sample(const Galerkin& g, const SigmaField& f, int step, const Point& x, Rng& rng) {
    if (step < 0 || step > g.config().steps()) throw std::out_of_range("convolution_sample: step outside the time grid");
    const Eigen::VectorXd e = mode_values(g, x);
    return convolution_path(g, f, 2.0, rng, step, &e, nullptr).z_probe;
}

// ---------------------------------------------------------------------------
// Reports

struct MomentReport {
    std::string label;
    double p = 0.0;
    double lhs = 0.0, lhs_se = 0.0;
    double rhs = 0.0;
    std::optional<double> rhs_explicit;  // same bound with the explicit closed-form constant
    std::optional<double> lhs_subgrid;   // sup checks: lhs with the max over a half-resolution grid
    double confidence = 4.0;
    std::size_t trials = 0;
    bool exact = false;
    bool se_unstable = false;
    bool pass = false;

    double margin() const { return lhs > 0.0 ? rhs / lhs : kInf; }
};

namespace detail {

inline void finish(MomentReport& r) {
    r.pass = r.lhs <= r.rhs + r.confidence * r.lhs_se;
    r.se_unstable = !r.exact && r.lhs > 0.0 && r.lhs_se > 0.25 * r.lhs;
}

inline double mean_of(const std::vector<double>& v) { return tree_sum(v) / static_cast<double>(v.size()); }

inline double se_of(const std::vector<double>& v, double mean) {
    std::vector<double> d(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) d[i] = (v[i] - mean) * (v[i] - mean);
    const double n = static_cast<double>(v.size());
    return n > 1 ? std::sqrt(tree_sum(d) / (n - 1.0) / n) : 0.0;
}

/// Per-trial statistics plus the per-(slice, point) sums of |sigma|^p, reduced in a fixed chunk order.
struct TrialBatch {
    std::vector<PathStats> stats;
    Eigen::MatrixXd sigma_p_mean;  // empty for constant sigma
};

inline TrialBatch run_trials(const Galerkin& g, const SigmaField& f, double p, std::size_t trials, std::uint64_t seed,
                             std::uint64_t stream_base, int probe_step = -1, const Eigen::VectorXd* probe = nullptr) {
    TrialBatch out;
    out.stats.resize(trials);
    const bool acc = !f.is_constant();
    const std::size_t chunk = std::max<std::size_t>(32, (trials + 63) / 64);
    const std::size_t nchunks = (trials + chunk - 1) / chunk;
    std::vector<Eigen::MatrixXd> sums(acc ? nchunks : 0);
    parallel_for(nchunks, [&](std::size_t c) {
        Eigen::MatrixXd* s = nullptr;
        if (acc) {
            sums[c] = Eigen::MatrixXd::Zero(g.config().steps(), g.config().grid_size());
            s = &sums[c];
        }
        for (std::size_t i = c * chunk; i < std::min(trials, (c + 1) * chunk); ++i) {
            Rng rng = Rng::stream(seed, stream_base + i);
            out.stats[i] = convolution_path(g, f, p, rng, probe_step, probe, s);
        }
    });
    if (acc) {
        out.sigma_p_mean = Eigen::MatrixXd::Zero(g.config().steps(), g.config().grid_size());
        for (const auto& s : sums) out.sigma_p_mean += s;
        out.sigma_p_mean /= static_cast<double>(trials);
    }
    return out;
}

inline double subgrid_moment(const TrialBatch& b, double p) {
    std::vector<double> v(b.stats.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::pow(b.stats[i].sup_abs_z_sub, p);
    return mean_of(v);
}

}  // namespace detail

/// Pointwise moment bound with constant sigma: the exact Gaussian lhs against
/// (4p)^{p/2} (c^2 int_0^t |G_s(x,.)|_H^2 ds)^{p/2}.
inline MomentReport verify_pointwise_moment(const Galerkin& g, double c, double p, int step, const Point& x) {
    if (!(p >= 2.0)) throw std::domain_error("verify_pointwise_moment: need p >= 2");
    MomentReport r;
    r.label = "pointwise";
    r.p = p;
    r.exact = true;
    const double var = exact_convolution_variance(g, c, step, x);
    r.lhs = std::pow(var, 0.5 * p) * gaussian_abs_moment(p);
    const double t = step * g.config().dt;
    r.rhs = std::pow(4.0 * p, 0.5 * p) * std::pow(c * c * green_h_norm2_integral(g, t, x), 0.5 * p);
    detail::finish(r);
    return r;
}

/// Pointwise moment bound for a state-dependent sigma: Monte Carlo lhs, and the
/// rhs built from the empirical slice norms y -> (E|sigma(s,y)|^p)^{1/p}.
inline MomentReport verify_pointwise_moment_mc(const Galerkin& g, const SigmaField& f, double p, int step,
                                               const Point& x, std::size_t trials, std::uint64_t seed,
                                               double confidence = 4.0) {
    if (!(p >= 2.0)) throw std::domain_error("verify_pointwise_moment: need p >= 2");
    if (f.is_constant()) return verify_pointwise_moment(g, f.constant_value(), p, step, x);
    const Eigen::VectorXd e = mode_values(g, x);
    const auto batch = detail::run_trials(g, f, p, trials, seed, streams::kMoments, step, &e);
    std::vector<double> v(trials);
    for (std::size_t i = 0; i < trials; ++i) v[i] = std::pow(std::abs(batch.stats[i].z_probe), p);
    MomentReport r;
    r.label = "pointwise";
    r.p = p;
    r.trials = trials;
    r.confidence = confidence;
    r.lhs = detail::mean_of(v);
    r.lhs_se = detail::se_of(v, r.lhs);
    const double dt = g.config().dt;
    double integral = 0.0;
    Eigen::VectorXd kern = e;
    // slice m sits at lag (step - m) dt
    for (int m = step - 1; m >= 0; --m) {
        kern = kern.cwiseProduct(g.decay());
        const Eigen::VectorXd norms = batch.sigma_p_mean.row(m).transpose().array().pow(1.0 / p).matrix();
        const Eigen::VectorXd w = g.transform().analyze(g.transform().synthesize(kern).cwiseProduct(norms));
        integral += dt * g.gram().norm2(w);
    }
    r.rhs = std::pow(4.0 * p, 0.5 * p) * std::pow(integral, 0.5 * p);
    detail::finish(r);
    return r;
}

/// E sup |Z|^p against C_{T,p,eta} int_0^T sup_y E|sigma(s,y)|^p ds.
inline MomentReport verify_sup_moment(const Galerkin& g, const SigmaField& f, double p, std::size_t trials,
                                      std::uint64_t seed, double k_eta_value, double confidence = 4.0) {
    const auto& cfg = g.config();
    const double eta = g.gram().measure().eta();
    const Minimum c = c_T_p_eta(cfg.T, p, eta, cfg.d, k_eta_value);
    const auto batch = detail::run_trials(g, f, p, trials, seed, streams::kMoments);
    std::vector<double> v(trials);
    for (std::size_t i = 0; i < trials; ++i) v[i] = std::pow(batch.stats[i].sup_abs_z, p);
    double sig = 0.0;
    if (f.is_constant())
        sig = std::pow(std::abs(f.constant_value()), p) * cfg.T;
    else
        for (int n = 0; n < cfg.steps(); ++n) sig += cfg.dt * batch.sigma_p_mean.row(n).maxCoeff();
    MomentReport r;
    r.label = "sup";
    r.p = p;
    r.trials = trials;
    r.confidence = confidence;
    r.lhs = detail::mean_of(v);
    r.lhs_se = detail::se_of(v, r.lhs);
    r.lhs_subgrid = detail::subgrid_moment(batch, p);
    r.rhs = c.value() * sig;
    r.rhs_explicit = c_T_p_eta_bound(cfg.T, p, eta, cfg.d, k_eta_value) * sig;
    detail::finish(r);
    return r;
}

/// E sup |Z|^p against eps E sup|sigma|^p + C_{T,p,eta,eps} E int_0^T sup_y |sigma(s,y)|^p ds.
inline MomentReport verify_sup_moment_small_p(const Galerkin& g, const SigmaField& f, double p, double eps,
                                              std::size_t trials, std::uint64_t seed, double k_eta_value,
                                              double confidence = 4.0) {
    const auto& cfg = g.config();
    const double eta = g.gram().measure().eta();
    const Minimum c = c_T_p_eta_eps(cfg.T, p, eta, eps, cfg.d, k_eta_value);
    const auto batch = detail::run_trials(g, f, p, trials, seed, streams::kMoments);
    std::vector<double> v(trials), s1(trials), s2(trials);
    for (std::size_t i = 0; i < trials; ++i) {
        v[i] = std::pow(batch.stats[i].sup_abs_z, p);
        s1[i] = std::pow(batch.stats[i].sup_abs_sigma, p);
        s2[i] = batch.stats[i].int_sup_sigma_p;
    }
    MomentReport r;
    r.label = "sup_small_p";
    r.p = p;
    r.trials = trials;
    r.confidence = confidence;
    r.lhs = detail::mean_of(v);
    r.lhs_se = detail::se_of(v, r.lhs);
    r.lhs_subgrid = detail::subgrid_moment(batch, p);
    r.rhs = eps * detail::mean_of(s1) + c.value() * detail::mean_of(s2);
    detail::finish(r);
    return r;
}

// ---------------------------------------------------------------------------
// Factorization

/// int_s^t (t-r)^{alpha-1} (r-s)^{-alpha} dr on [0,1] by graded Gauss quadrature (equals pi/sin(pi alpha)).
inline double beta_integral(double alpha, std::size_t order = 40) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("beta_integral: alpha must lie in (0,1)");
    const auto rule = quad::gauss_legendre(order);
    return quad::two_sided_singular([](double) { return 1.0; }, 0.0, 1.0, alpha, 1.0 - alpha, rule);
}

struct FactorizationLevel {
    double dt = 0.0;
    double mean_residual = 0.0;  // mean over paths of |factorized - convolution|
    double mean_abs_convolution = 0.0;
};

struct FactorizationReport {
    double alpha = 0.0, t = 0.0;
    std::vector<FactorizationLevel> levels;  // coarse to fine
    double beta_quadrature = 0.0, beta_exact = 0.0;
    bool beta_ok = false;
    bool decreasing = false;
    std::size_t paths = 0;
};

namespace detail {

// Returns (factorized, convolution) at the probe, given s_hat for steps 0..n-1.
inline std::pair<double, double> factorize_path(const Galerkin& g, const std::vector<Eigen::VectorXd>& shat,
                                                double alpha, const Eigen::VectorXd& probe) {
    const int n = static_cast<int>(shat.size());
    const int modes = g.config().modes();
    const double dt = g.config().dt;
    std::vector<Eigen::VectorXd> pw(static_cast<std::size_t>(n + 1));
    pw[0] = Eigen::VectorXd::Ones(modes);
    for (int l = 1; l <= n; ++l) pw[l] = pw[l - 1].cwiseProduct(g.decay());
    // cell average of lag^{-alpha} over ((l-1)dt, l dt]
    std::vector<double> kappa(static_cast<std::size_t>(n + 1), 0.0);
    for (int l = 1; l <= n; ++l)
        kappa[l] = (std::pow(l, 1.0 - alpha) - std::pow(l - 1, 1.0 - alpha)) / (1.0 - alpha) * std::pow(dt, -alpha);
    Eigen::VectorXd conv = Eigen::VectorXd::Zero(modes), fac = Eigen::VectorXd::Zero(modes);
    for (int m = 0; m < n; ++m) conv += pw[n - m].cwiseProduct(shat[m]);
    const double pref = std::sin(kPi * alpha) / kPi;
    for (int j = 1; j <= n; ++j) {
        // J_alpha sigma at s_j: stochastic convolution with kernel lag^{-alpha} G_lag
        Eigen::VectorXd y = Eigen::VectorXd::Zero(modes);
        for (int m = 0; m < j; ++m) y += kappa[j - m] * pw[j - m].cwiseProduct(shat[m]);
        // exact integral of (t-s)^{alpha-1} over the cell (s_{j-1}, s_j]
        const double w = (std::pow(n - j + 1, alpha) - std::pow(n - j, alpha)) * std::pow(dt, alpha) / alpha;
        fac += w * pw[n - j].cwiseProduct(y);
    }
    fac *= pref;
    return {fac.dot(probe), conv.dot(probe)};
}

}  // namespace detail

/// Pathwise check of Z = (sin(pi a)/pi) J^{a-1}(J_a sigma) at (t, x). The same
/// Brownian path is used at every level: coarse increments are sums of the
/// finest ones. `ratios` lists step multiples of cfg.dt, coarse first.
inline FactorizationReport factorization_check(const SimulationConfig& fine, const HGram& gram, const SigmaField& f,
                                               double alpha, double t, const Point& x, std::size_t paths,
                                               std::uint64_t seed, std::vector<int> ratios = {4, 2, 1}) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("factorization_check: alpha must lie in (0,1)");
    FactorizationReport rep;
    rep.alpha = alpha;
    rep.t = t;
    rep.paths = paths;
    rep.beta_exact = kPi / std::sin(kPi * alpha);
    rep.beta_quadrature = beta_integral(alpha);
    rep.beta_ok = std::abs(rep.beta_quadrature - rep.beta_exact) <= 1e-6;
    const int max_ratio = *std::max_element(ratios.begin(), ratios.end());
    const long fine_steps = std::lround(t / fine.dt);
    if (std::abs(fine_steps * fine.dt - t) > 1e-9 * t || fine_steps % max_ratio != 0)
        throw std::invalid_argument("factorization_check: t must be a multiple of the coarsest step");
    std::vector<Galerkin> gals;
    std::vector<SimulationConfig> cfgs;
    for (int r : ratios) {
        SimulationConfig c = fine;
        c.dt = fine.dt * r;
        c.T = t;
        c.store_grid = false;
        cfgs.push_back(c);
    }
    for (const auto& c : cfgs) gals.emplace_back(c, gram);
    const Eigen::VectorXd probe = mode_values(gals.front(), x);
    const std::size_t nl = ratios.size();
    std::vector<double> res(paths * nl), absz(paths * nl);
    const int rank = gram.rank();
    parallel_for(paths, [&](std::size_t pi) {
        Rng rng = Rng::stream(seed, streams::kMisc + pi);
        std::vector<Eigen::VectorXd> zf(static_cast<std::size_t>(fine_steps));
        for (auto& z : zf) z = standard_normals(rank, rng);
        for (std::size_t li = 0; li < nl; ++li) {
            const Galerkin& g = gals[li];
            const int r = ratios[li];
            const int n = static_cast<int>(fine_steps / r);
            const double sqf = std::sqrt(fine.dt);
            std::vector<Eigen::VectorXd> shat(static_cast<std::size_t>(n));
            Eigen::VectorXd a = f.a0, ug;
            for (int m = 0; m < n; ++m) {
                Eigen::VectorXd zs = Eigen::VectorXd::Zero(rank);
                for (int q = 0; q < r; ++q) zs += zf[static_cast<std::size_t>(m * r + q)];
                const Eigen::VectorXd xi = gram.factor() * (zs * sqf);
                if (!f.is_constant()) ug = g.transform().synthesize(a);
                shat[m] = g.noise_term(f.coeffs.sigma, ug, xi);
                if (!f.is_constant()) g.advance(a, g.drift_term(f.coeffs.b, ug), shat[m], m + 1);
            }
            const auto [fac, conv] = detail::factorize_path(g, shat, alpha, probe);
            res[pi * nl + li] = std::abs(fac - conv);
            absz[pi * nl + li] = std::abs(conv);
        }
    });
    for (std::size_t li = 0; li < nl; ++li) {
        std::vector<double> a(paths), b(paths);
        for (std::size_t pi = 0; pi < paths; ++pi) {
            a[pi] = res[pi * nl + li];
            b[pi] = absz[pi * nl + li];
        }
        rep.levels.push_back({cfgs[li].dt, detail::mean_of(a), detail::mean_of(b)});
    }
    rep.decreasing = true;
    for (std::size_t li = 1; li < nl; ++li)
        if (!(rep.levels[li].mean_residual < rep.levels[li - 1].mean_residual)) rep.decreasing = false;
    return rep;
}

}  // namespace sheq
