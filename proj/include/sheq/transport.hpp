#pragma once
// Transportation check: exact drift entropy, Monte Carlo coupling cost,
// empirical W2 under the uniform path metric, and the Gronwall constant.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "assignment.hpp"
#include "constants.hpp"
#include "parallel.hpp"
#include "solver.hpp"

namespace sheq {

/// H(Q|P) = 1/2 sum_n |h(t_n)|_H^2 dt for a deterministic step drift.
inline double entropy_of_drift(const DriftSpec& drift, int steps, double dt) {
    if (steps < 0 || !(dt > 0.0)) throw std::invalid_argument("entropy_of_drift: need steps >= 0 and dt > 0");
    double s = 0.0;
    for (int n = 0; n < steps; ++n) s += drift.h_norm2(n);
    return 0.5 * s * dt;
}

struct W2Result {
    double value = 0.0;       // mean optimal cost
    double se = 0.0;          // standard error of the matched costs
    Assignment assignment;
    Eigen::MatrixXd cost;     // squared sup distances
};

inline constexpr std::size_t kDefaultAssignmentCap = 512;

/// Squared sup-metric cost matrix between two trajectory samples.
inline Eigen::MatrixXd sup_cost_matrix(const std::vector<Trajectory>& a, const std::vector<Trajectory>& b) {
    Eigen::MatrixXd c(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    parallel_for(a.size(), [&](std::size_t i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            const double d = sup_metric(a[i], b[j]);
            c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d * d;
        }
    });
    return c;
}

/// W2^2 between the uniform empirical measures on a and b (exact assignment).
inline W2Result empirical_w2(const std::vector<Trajectory>& a, const std::vector<Trajectory>& b,
                             std::size_t cap = kDefaultAssignmentCap) {
    if (a.size() != b.size()) throw std::invalid_argument("empirical_w2: sample sizes differ");
    if (a.empty()) throw std::invalid_argument("empirical_w2: empty samples");
    if (a.size() > cap)
        throw std::invalid_argument("empirical_w2: n = " + std::to_string(a.size()) + " exceeds the cap " +
                                    std::to_string(cap));
    W2Result r;
    r.cost = sup_cost_matrix(a, b);
    r.assignment = solve_assignment(r.cost);
    const double n = static_cast<double>(a.size());
    std::vector<double> m(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        m[i] = r.cost(static_cast<Eigen::Index>(i), r.assignment.col_of_row[i]);
    r.value = tree_sum(m) / n;
    std::vector<double> d(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) d[i] = (m[i] - r.value) * (m[i] - r.value);
    r.se = n > 1 ? std::sqrt(tree_sum(d) / (n - 1.0) / n) : 0.0;
    return r;
}

struct TransportExperiment {
    SimulationConfig cfg;
    CoefficientSpec coeffs;
    Eigen::VectorXd a0;
    DriftSpec drift;
    std::size_t coupling_trials = 1000;
    std::size_t w2_samples = 256;
    double k_eta = 1.0;
    double confidence = 4.0;
};

struct Estimate {
    double mean = 0.0;
    double se = 0.0;
};

/// E sup |u - v|^2 over coupled pairs, computed without storing paths.
inline Estimate coupling_bound(const Galerkin& g, const TransportExperiment& ex, std::uint64_t seed) {
    std::vector<double> v(ex.coupling_trials);
    parallel_for(ex.coupling_trials, [&](std::size_t i) {
        Rng rng = Rng::stream(seed, streams::kCoupled + i);
        auto [tu, tv] = simulate_coupled(g, ex.coeffs, ex.a0, ex.drift, rng, streams::kCoupled + i);
        const double d = sup_metric(tu, tv);
        v[i] = d * d;
    });
    const double n = static_cast<double>(v.size());
    Estimate e;
    e.mean = tree_sum(v) / n;
    std::vector<double> d(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) d[i] = (v[i] - e.mean) * (v[i] - e.mean);
    e.se = n > 1 ? std::sqrt(tree_sum(d) / (n - 1.0) / n) : 0.0;
    return e;
}

/// sup over the time grid and interior grid of |u - v|^2 for the additive case
/// (constant sigma = s, b = 0), where the difference is the deterministic recursion
/// d <- e^{-lambda dt}(d + s L c(t_n) dt).
inline double additive_coupling_cost(const Galerkin& g, double s, const DriftSpec& drift) {
    const auto& cfg = g.config();
    Eigen::VectorXd d = Eigen::VectorXd::Zero(cfg.modes());
    double best = 0.0;
    for (int n = 0; n < cfg.steps(); ++n) {
        d = g.decay().cwiseProduct(d + s * (g.gram().factor() * drift.at(n)) * cfg.dt);
        best = std::max(best, g.transform().synthesize(d).cwiseAbs().maxCoeff());
    }
    return best * best;
}

struct TransportReport {
    double entropy = 0.0;
    Estimate coupling;
    double w2 = 0.0, w2_se = 0.0;          // independent u (law Q) and v (law P) samples
    double w2_half = 0.0;                  // same estimate on the first half of each cloud
    Eigen::MatrixXd w2_cost;               // sup-metric squared costs between the two clouds
    double w2_coupled = 0.0;               // W2^2 on the coupled sample
    double paired_cost = 0.0;              // mean sup|u_i - v_i|^2 on the coupled sample
    double log10_c = 0.0;
    double c = 0.0;                        // theorem constant, may be +inf
    double bound = 0.0;                    // 2 C H
    double ratio_w2 = 0.0, ratio_coupling = 0.0;
    bool degenerate = false;               // H = 0
    bool admissible = false;               // w2_coupled <= paired_cost
    bool w2_pass = false;
    bool coupling_pass = false;
    bool pass() const { return admissible && w2_pass && coupling_pass; }
};

namespace detail {

inline std::vector<Trajectory> law_samples(const Galerkin& g, const TransportExperiment& ex, std::uint64_t seed,
                                           std::uint64_t base, bool drifted) {
    std::vector<Trajectory> out(ex.w2_samples);
    parallel_for(ex.w2_samples, [&](std::size_t i) {
        Rng rng = Rng::stream(seed, base + i);
        if (drifted)
            out[i] = std::move(simulate_coupled(g, ex.coeffs, ex.a0, ex.drift, rng, base + i).first);
        else
            out[i] = simulate(g, ex.coeffs, ex.a0, rng, base + i);
    });
    return out;
}

inline double ratio(double x, double bound) {
    if (bound == 0.0) return x == 0.0 ? 0.0 : kInf;
    return x / bound;
}

}  // namespace detail

inline TransportReport verify_t2(const HGram& gram, const TransportExperiment& ex, std::uint64_t seed) {
    SimulationConfig cfg = ex.cfg;
    cfg.store_grid = true;
    const Galerkin g(cfg, gram);
    TransportReport r;
    r.entropy = entropy_of_drift(ex.drift, cfg.steps(), cfg.dt);
    r.degenerate = r.entropy == 0.0;
    const double eta = gram.measure().eta();
    const TheoremConstant tc =
        theorem_constant(cfg.T, ex.coeffs.l_sigma(), ex.coeffs.l_b(), ex.coeffs.k_sigma(), eta, ex.k_eta, cfg.d);
    r.log10_c = tc.log_value / std::log(10.0);
    r.c = tc.value();
    r.bound = r.degenerate ? 0.0 : 2.0 * r.c * r.entropy;
    r.coupling = coupling_bound(g, ex, seed);

    // coupled sample: the first w2_samples coupled pairs again, now stored
    std::vector<Trajectory> cu(ex.w2_samples), cv(ex.w2_samples);
    parallel_for(ex.w2_samples, [&](std::size_t i) {
        Rng rng = Rng::stream(seed, streams::kCoupled + i);
        auto [tu, tv] = simulate_coupled(g, ex.coeffs, ex.a0, ex.drift, rng, streams::kCoupled + i);
        cu[i] = std::move(tu);
        cv[i] = std::move(tv);
    });
    std::vector<double> paired(ex.w2_samples);
    for (std::size_t i = 0; i < ex.w2_samples; ++i) {
        const double d = sup_metric(cu[i], cv[i]);
        paired[i] = d * d;
    }
    r.paired_cost = tree_sum(paired) / static_cast<double>(paired.size());
    r.w2_coupled = empirical_w2(cu, cv).value;
    r.admissible = r.w2_coupled <= r.paired_cost + 1e-9;
    cu.clear();
    cv.clear();

    const auto q = detail::law_samples(g, ex, seed, streams::kLawQ, true);
    const auto p = detail::law_samples(g, ex, seed, streams::kLawP, false);
    const W2Result w = empirical_w2(q, p);
    r.w2 = w.value;
    r.w2_se = w.se;
    r.w2_cost = w.cost;
    if (q.size() >= 2) {
        const std::size_t h = q.size() / 2;
        const std::vector<Trajectory> qh(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(h)),
            ph(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(h));
        r.w2_half = empirical_w2(qh, ph).value;
    } else {
        r.w2_half = r.w2;
    }
    r.ratio_w2 = detail::ratio(r.w2, r.bound);
    r.ratio_coupling = detail::ratio(r.coupling.mean, r.bound);
    r.w2_pass = r.w2 <= r.bound + ex.confidence * r.w2_se;
    r.coupling_pass = r.coupling.mean <= r.bound + ex.confidence * r.coupling.se;
    return r;
}

}  // namespace sheq
