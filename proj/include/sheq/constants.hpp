#pragma once
// Closed-form constants of the moment and transportation bounds.
//
// Most of these constants grow like p^p or worse, so each one is evaluated as a
// natural logarithm first; the plain value is exp(log) and may be +inf.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "basis_kernel.hpp"
#include "spectral_measure.hpp"

namespace sheq {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

namespace detail {

inline double log_add(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    if (a == kInf || b == kInf) return kInf;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

inline double safe_exp(double l) { return l > 709.0 ? kInf : std::exp(l); }

}  // namespace detail

// ---------------------------------------------------------------------------
// K_eta

struct KEtaResult {
    double value = 0.0;
    bool converged = false;
    int levels = 0;          // dyadic tail levels used
    double tail_ratio = 0.0; // last ratio of successive dyadic contributions
};

/// K_eta = int (1+|xi|^2)^{-eta} lambda(dxi). The tail is summed over dyadic
/// shells [2^{m-1}, 2^m]; a power-law tail is extrapolated geometrically, and
/// a shell ratio that does not fall below one after max_levels shells is
/// reported as divergence (converged = false, value = +inf).
inline KEtaResult k_eta(const SpectralMeasure& m, double eta, int max_levels = 20) {
    if (!(eta >= 0.0 && eta < 1.0)) throw std::invalid_argument("k_eta: eta must lie in [0,1)");
    KEtaResult res;
    if (m.atomic()) {
        res.value = 1.0;
        res.converged = true;
        return res;
    }
    const int d = m.dim();
    const double area = sphere_area(d);
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    const auto g = [&](double r) {
        if (r == 0.0) return 0.0;
        return m.radial_density(r) * std::pow(r, d - 1) * std::pow(1.0 + r * r, -eta);
    };

    if (m.kind() != MeasureKind::Riesz) {
        double acc = 0.0, a = 0.0;
        std::vector<double> breaks;
        if (m.kind() == MeasureKind::TabulatedRadial)
            for (const auto& e : m.table()) breaks.push_back(e.first);
        else
            breaks = {0.0, m.radius()};
        for (std::size_t i = 1; i < breaks.size(); ++i) {
            acc += GK::integrate(g, a, breaks[i], 10, 1e-13);
            a = breaks[i];
        }
        res.value = area * acc;
        res.converged = true;
        return res;
    }

    boost::math::quadrature::tanh_sinh<double> ts;
    double total = ts.integrate(g, 0.0, 1.0, 1e-13);
    double prev = -1.0, prev_ratio = -1.0;
    for (int lev = 1; lev <= max_levels; ++lev) {
        const double a = std::ldexp(1.0, lev - 1), b = std::ldexp(1.0, lev);
        const double shell = GK::integrate(g, a, b, 10, 1e-13);
        total += shell;
        res.levels = lev;
        if (prev > 0.0) {
            const double ratio = shell / prev;
            res.tail_ratio = ratio;
            if (shell < 1e-15 * total) {
                res.value = area * total;
                res.converged = true;
                return res;
            }
            if (lev == max_levels) {
                if (ratio < 1.0 - 1e-6 && std::abs(ratio - prev_ratio) < 1e-3) {
                    total += shell * ratio / (1.0 - ratio);
                    res.value = area * total;
                    res.converged = true;
                } else {
                    res.value = kInf;
                    res.converged = false;
                }
                return res;
            }
            prev_ratio = ratio;
        }
        prev = shell;
    }
    res.value = kInf;
    return res;
}

// ---------------------------------------------------------------------------
// Factorization exponent window and the two factor constants

/// Open interval ((d+2)/(2p), 1/2 - 1/p - eta/2); empty unless p > (4+d)/(1-eta).
struct AlphaWindow {
    double lo;
    double hi;
    bool empty() const { return !(hi > lo); }
};

inline double moment_threshold(int d, double eta) { return (4.0 + d) / (1.0 - eta); }

inline AlphaWindow alpha_window(double p, int d, double eta) {
    return {(d + 2.0) / (2.0 * p), 0.5 - 1.0 / p - 0.5 * eta};
}

/// Throws when the window is empty, naming the threshold on p.
inline AlphaWindow require_alpha_window(double p, int d, double eta) {
    const AlphaWindow w = alpha_window(p, d, eta);
    if (w.empty()) {
        std::ostringstream os;
        os << "alpha window empty: need p > (4+d)/(1-eta) = " << moment_threshold(d, eta) << ", got p = " << p;
        throw std::domain_error(os.str());
    }
    return w;
}

/// log C'_{T,p,alpha} = log( |sin(pi a)/pi|^p (4pi)^{-d/2} ((p-1)/(a p - 1 - d/2))^{p-1} T^{a p - d/2} ).
inline double log_c_prime(double T, double p, double alpha, int d) {
    const double denom = alpha * p - 1.0 - 0.5 * d;
    if (!(denom > 0.0)) {
        std::ostringstream os;
        os << "c_prime: need alpha > d/(2p) + 1/p, got alpha = " << alpha << " (alpha p - 1 - d/2 = " << denom << ")";
        throw std::domain_error(os.str());
    }
    if (!(T > 0.0)) throw std::domain_error("c_prime: T must be positive");
    const double s = std::abs(std::sin(kPi * alpha) / kPi);
    const double log_s = s == 0.0 ? -kInf : std::log(s);
    return p * log_s - 0.5 * d * std::log(4.0 * kPi) + (p - 1.0) * std::log((p - 1.0) / denom) +
           (alpha * p - 0.5 * d) * std::log(T);
}

inline double c_prime(double T, double p, double alpha, int d) { return detail::safe_exp(log_c_prime(T, p, alpha, d)); }

/// Log of the closed-form upper bound for C''_{T,p,alpha,eta}:
/// 1/4 (8pK)^{p/2} [ ((p-2)/(p-2-2ap))^{(p-2)/2} T^{p/2-1-ap}
///                 + (eta/8pi^2)^{eta(p-2)/2} ((p-2)/(p-2-2ap-eta p))^{(p-2)/2} T^{p/2-1-ap-eta p/2} ].
inline double log_c_double_prime(double T, double p, double alpha, double eta, double k_eta_value) {
    if (!(p > 2.0)) throw std::domain_error("c_double_prime: need p > 2");
    if (!(T > 0.0)) throw std::domain_error("c_double_prime: T must be positive");
    if (!(k_eta_value > 0.0)) throw std::domain_error("c_double_prime: K_eta must be positive");
    const double d1 = p - 2.0 - 2.0 * alpha * p;
    const double d2 = d1 - eta * p;
    if (!(d1 > 0.0) || !(d2 > 0.0)) {
        std::ostringstream os;
        os << "c_double_prime: need alpha < 1/2 - 1/p - eta/2 = " << 0.5 - 1.0 / p - 0.5 * eta
           << ", got alpha = " << alpha;
        throw std::domain_error(os.str());
    }
    const double half = 0.5 * (p - 2.0);
    const double lt = std::log(T);
    const double t1 = half * std::log((p - 2.0) / d1) + (0.5 * p - 1.0 - alpha * p) * lt;
    const double coef = eta == 0.0 ? 0.0 : eta * half * std::log(eta / (8.0 * kPi2));
    const double t2 = coef + half * std::log((p - 2.0) / d2) + (0.5 * p - 1.0 - alpha * p - 0.5 * eta * p) * lt;
    return std::log(0.25) + 0.5 * p * std::log(8.0 * p * k_eta_value) + detail::log_add(t1, t2);
}

inline double c_double_prime(double T, double p, double alpha, double eta, double k_eta_value) {
    return detail::safe_exp(log_c_double_prime(T, p, alpha, eta, k_eta_value));
}

// ---------------------------------------------------------------------------
// C_{T,p,eta} = inf over the open window of C' C''

struct Minimum {
    double log_value;
    double argmin;
    double value() const { return detail::safe_exp(log_value); }
};

namespace detail {

// Coarse scan to bracket, then golden-section on the bracket.
inline Minimum scan_then_golden(const std::function<double(double)>& f, double lo, double hi, int scan = 64,
                                double xtol = 1e-13) {
    double best_x = lo, best_f = kInf;
    int best_i = 0;
    for (int i = 0; i <= scan; ++i) {
        const double x = lo + (hi - lo) * i / scan;
        const double v = f(x);
        if (std::isfinite(v) && v < best_f) {
            best_f = v;
            best_x = x;
            best_i = i;
        }
    }
    if (!std::isfinite(best_f)) return {kInf, 0.5 * (lo + hi)};
    double a = lo + (hi - lo) * std::max(0, best_i - 1) / scan;
    double b = lo + (hi - lo) * std::min(scan, best_i + 1) / scan;
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a), e = a + invphi * (b - a);
    double fc = f(c), fe = f(e);
    for (int it = 0; it < 200 && (b - a) > xtol * std::max(1.0, std::abs(a)); ++it) {
        if (fc < fe) {
            b = e;
            e = c;
            fe = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + invphi * (b - a);
            fe = f(e);
        }
    }
    const double x = fc < fe ? c : e;
    const double v = std::min(fc, fe);
    if (v <= best_f) return {v, x};
    return {best_f, best_x};
}

}  // namespace detail

inline double log_cprime_cdoubleprime(double T, double p, double alpha, double eta, int d, double k_eta_value) {
    return log_c_prime(T, p, alpha, d) + log_c_double_prime(T, p, alpha, eta, k_eta_value);
}

/// Minimises C' C'' over the window shrunk by `shrink` at both ends.
inline Minimum c_T_p_eta(double T, double p, double eta, int d, double k_eta_value, double shrink = 1e-6) {
    const AlphaWindow w = require_alpha_window(p, d, eta);
    const double lo = w.lo + shrink, hi = w.hi - shrink;
    if (!(hi > lo)) throw std::domain_error("c_T_p_eta: window narrower than the end shrink");
    return detail::scan_then_golden(
        [&](double a) { return log_cprime_cdoubleprime(T, p, a, eta, d, k_eta_value); }, lo, hi);
}

/// Log of the explicit closed-form upper bound on C_{T,p,eta}.
inline double log_c_T_p_eta_bound(double T, double p, double eta, int d, double k_eta_value) {
    require_alpha_window(p, d, eta);
    const double lt = std::log(T);
    const double pre = 0.5 * p * std::log(p) + std::log(0.25) - 0.5 * d * std::log(4.0 * kPi) +
                       p * std::log(std::sqrt(8.0 * k_eta_value) / kPi);
    const double a1 = (1.5 * p - 2.0) * std::log((3.0 * p - 4.0) / (p - 4.0 - d));
    const double a2 = eta == 0.0 ? kInf
                                 : (p - 1.0) * std::log(2.0 * (p - 1.0) / ((1.0 - eta) * p - 4.0 - d)) +
                                       (0.5 * p - 1.0) * std::log((p - 2.0) / (p * eta));
    const double first = std::max(a1, a2) + (0.5 * p - 1.0 - 0.5 * d) * lt;
    const double coef = eta == 0.0 ? 0.0 : 0.5 * eta * (p - 2.0) * std::log(eta / (8.0 * kPi2));
    const double second = coef + (1.5 * p - 2.0) * std::log((3.0 * p - 4.0) / ((1.0 - eta) * p - 4.0 - d)) +
                          (0.5 * (1.0 - eta) * p - 1.0 - 0.5 * d) * lt;
    return pre + detail::log_add(first, second);
}

inline double c_T_p_eta_bound(double T, double p, double eta, int d, double k_eta_value) {
    return detail::safe_exp(log_c_T_p_eta_bound(T, p, eta, d, k_eta_value));
}

// ---------------------------------------------------------------------------
// Small-moment constant C_{T,p,eta,eps}

/// Log of the objective in q whose infimum over q > (4+d)/(1-eta) defines
/// C_{T,p,eta,eps}, with C_{T,q,eta} in place of the inner constant.
inline double log_small_p_objective(double q, double T, double p, double eta, double eps, int d, double k_eta_value) {
    const double log_c = c_T_p_eta(T, q, eta, d, k_eta_value).log_value;
    if (!std::isfinite(log_c)) return kInf;
    const double lq = std::log(q);
    const double r = q / p;
    const double log_x = lq + log_c - std::log(q - p);
    return detail::log_add(0.0, log_x) + std::log(p) - r * lq +
           (r - 1.0) * detail::log_add(std::log(q - p), lq + log_c) + (r - 1.0) * std::log(eps);
}

inline Minimum c_T_p_eta_eps(double T, double p, double eta, double eps, int d, double k_eta_value) {
    const double q0 = moment_threshold(d, eta);
    if (!(p > 0.0 && p <= q0)) {
        std::ostringstream os;
        os << "c_T_p_eta_eps: need 0 < p <= (4+d)/(1-eta) = " << q0 << ", got p = " << p;
        throw std::domain_error(os.str());
    }
    if (!(eps > 0.0)) throw std::domain_error("c_T_p_eta_eps: eps must be positive");
    const auto obj = [&](double lu) {
        const double q = q0 * (1.0 + std::exp(lu));
        try {
            return log_small_p_objective(q, T, p, eta, eps, d, k_eta_value);
        } catch (const std::domain_error&) {
            return kInf;
        }
    };
    // q = q0 (1 + e^{lu}), lu on a log grid from 1e-4 to 1e3 relative excess
    const Minimum m = detail::scan_then_golden(obj, std::log(1e-4), std::log(1e3), 200, 1e-10);
    return {m.log_value, q0 * (1.0 + std::exp(m.argmin))};
}

// ---------------------------------------------------------------------------
// Kernel H-norm bounds

/// K_eta (1 v (eta/8pi^2)^eta t^{-eta}).
inline double g_h_norm_bound(double t, double eta, double k_eta_value) {
    if (!(t > 0.0)) throw std::domain_error("g_h_norm_bound: t must be positive");
    const double scaled = eta == 0.0 ? 1.0 : std::pow(eta / (8.0 * kPi2), eta) * std::pow(t, -eta);
    return k_eta_value * std::max(1.0, scaled);
}

/// C_{G,T,eta}, piecewise at T = eta/(8 pi^2) exactly as stated.
inline double c_G_T_eta(double T, double eta, double k_eta_value) {
    if (!(T > 0.0)) throw std::domain_error("c_G_T_eta: T must be positive");
    if (!(eta >= 0.0 && eta < 1.0)) throw std::domain_error("c_G_T_eta: eta must lie in [0,1)");
    const double brk = eta / (8.0 * kPi2);
    if (T <= brk) return k_eta_value * std::pow(brk, eta) * std::pow(T, 1.0 - eta) / (1.0 - eta);
    return k_eta_value * T + eta * eta / (8.0 * kPi2 * (1.0 - eta));
}

// ---------------------------------------------------------------------------
// Gronwall constant

struct TheoremConstant {
    double log_value;
    double c_small_p;  // C_{T,2,eta,eps0}, 0 when L_sigma = 0
    double value() const { return detail::safe_exp(log_value); }
};

/// C = 6 K_sigma^2 C_{G,T,eta} exp(6 (C_{T,2,eta,eps0} L_sigma^2 + T L_b^2) T), eps0 = 1/(6 L_sigma^2).
/// With L_sigma = 0 the C_{T,2,eta,eps0} L_sigma^2 term is taken as 0.
inline TheoremConstant theorem_constant(double T, double l_sigma, double l_b, double k_sigma, double eta,
                                        double k_eta_value, int d) {
    if (!(k_sigma > 0.0)) throw std::domain_error("theorem_constant: K_sigma must be positive");
    if (!(l_sigma >= 0.0) || !(l_b >= 0.0)) throw std::domain_error("theorem_constant: Lipschitz constants must be >= 0");
    double rate = T * l_b * l_b;
    double c_small = 0.0;
    if (l_sigma > 0.0) {
        const double eps0 = 1.0 / (6.0 * l_sigma * l_sigma);
        const Minimum m = c_T_p_eta_eps(T, 2.0, eta, eps0, d, k_eta_value);
        c_small = m.value();
        rate += c_small * l_sigma * l_sigma;
    }
    const double log_c =
        std::log(6.0) + 2.0 * std::log(k_sigma) + std::log(c_G_T_eta(T, eta, k_eta_value)) + 6.0 * rate * T;
    return {log_c, c_small};
}

// ---------------------------------------------------------------------------

struct ConstantsReport {
    double T = 1.0;
    double p = 0.0;
    double p_small = 2.0;
    double eps = 1.0 / 6.0;
    double eta = 0.0;
    int d = 1;
    KEtaResult k_eta;
    AlphaWindow window{0.0, 0.0};
    std::optional<double> alpha_star;
    std::optional<double> log_c_prime, log_c_double_prime;
    std::optional<double> log_c_T_p_eta, log_c_T_p_eta_bound;
    std::optional<double> log_c_T_p_eta_eps;
    std::optional<double> q_star;
    double c_G_T_eta = 0.0;
    TheoremConstant theorem{0.0, 0.0};
};

struct ConstantsInput {
    double T = 1.0;
    double p = 6.0;
    double p_small = 2.0;
    double eps = 1.0 / 6.0;
    double l_sigma = 0.0, l_b = 0.0, k_sigma = 1.0;
};

inline ConstantsReport constants_report(const SpectralMeasure& m, const ConstantsInput& in) {
    ConstantsReport r;
    r.T = in.T;
    r.p = in.p;
    r.p_small = in.p_small;
    r.eps = in.eps;
    r.eta = m.eta();
    r.d = m.dim();
    r.k_eta = k_eta(m, m.eta());
    if (!r.k_eta.converged) throw std::domain_error("constants_report: K_eta diverges for this measure and eta");
    const double K = r.k_eta.value;
    r.window = alpha_window(in.p, r.d, r.eta);
    if (!r.window.empty() && in.p > 2.0) {
        const Minimum c = c_T_p_eta(in.T, in.p, r.eta, r.d, K);
        r.alpha_star = c.argmin;
        r.log_c_prime = log_c_prime(in.T, in.p, c.argmin, r.d);
        r.log_c_double_prime = log_c_double_prime(in.T, in.p, c.argmin, r.eta, K);
        r.log_c_T_p_eta = c.log_value;
        r.log_c_T_p_eta_bound = log_c_T_p_eta_bound(in.T, in.p, r.eta, r.d, K);
    }
    if (in.p_small > 0.0 && in.p_small <= moment_threshold(r.d, r.eta)) {
        const Minimum c = c_T_p_eta_eps(in.T, in.p_small, r.eta, in.eps, r.d, K);
        r.log_c_T_p_eta_eps = c.log_value;
        r.q_star = c.argmin;
    }
    r.c_G_T_eta = c_G_T_eta(in.T, r.eta, K);
    r.theorem = theorem_constant(in.T, in.l_sigma, in.l_b, in.k_sigma, r.eta, K, r.d);
    return r;
}

}  // namespace sheq
