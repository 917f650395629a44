#pragma once
// Dirichlet eigen-structure of the Laplacian on the unit cube [0,1]^d (d = 1, 2),
// the Green kernel as a truncated eigen-expansion, and the Gaussian heat kernel
// on the whole space that dominates it.

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace sheq {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kPi2 = std::numbers::pi * std::numbers::pi;

/// A point in [0,1]^d or a displacement in R^d, d in {1, 2}.
struct Point {
    int dim = 1;
    std::array<double, 2> x{0.0, 0.0};

    Point() = default;
    explicit Point(double x0) : dim(1), x{x0, 0.0} {}
    Point(double x0, double x1) : dim(2), x{x0, x1} {}

    double operator[](int i) const { return x[static_cast<std::size_t>(i)]; }
    double norm2() const {
        double s = 0.0;
        for (int i = 0; i < dim; ++i) s += x[i] * x[i];
        return s;
    }
    friend Point operator-(const Point& a, const Point& b) {
        Point r = a;
        for (int i = 0; i < a.dim; ++i) r.x[i] -= b.x[i];
        return r;
    }
};

/// Mode index of the sine basis; every component is >= 1.
struct MultiIndex {
    int dim = 1;
    std::array<int, 2> k{1, 1};

    MultiIndex() = default;
    explicit MultiIndex(int k0) : dim(1), k{k0, 1} { validate(); }
    MultiIndex(int k0, int k1) : dim(2), k{k0, k1} { validate(); }

    int operator[](int i) const { return k[static_cast<std::size_t>(i)]; }
    int norm2() const {
        int s = 0;
        for (int i = 0; i < dim; ++i) s += k[i] * k[i];
        return s;
    }

private:
    void validate() const {
        for (int i = 0; i < dim; ++i)
            if (k[i] < 1) throw std::invalid_argument("MultiIndex: components must be >= 1");
    }
};

inline void check_dim(int d) {
    if (d != 1 && d != 2) throw std::invalid_argument("dimension must be 1 or 2, got " + std::to_string(d));
}

inline void check_in_cube(const Point& x) {
    check_dim(x.dim);
    for (int i = 0; i < x.dim; ++i)
        if (!(x[i] >= 0.0 && x[i] <= 1.0))
            throw std::domain_error("point outside [0,1]^d: component " + std::to_string(x[i]));
}

/// Dirichlet eigenvalue pi^2 |k|^2 (the Laplacian is -pi^2|k|^2 on e_k).
inline double eigenvalue(const MultiIndex& k) { return kPi2 * static_cast<double>(k.norm2()); }

/// L^2-normalised sine mode sqrt(2) sin(pi k x) in one variable.
inline double sine_mode(int k, double x) { return std::numbers::sqrt2 * std::sin(kPi * k * x); }

/// e_k(x) = 2^{d/2} prod_i sin(pi k_i x_i).
inline double eigenfunction(const MultiIndex& k, const Point& x) {
    check_in_cube(x);
    if (k.dim != x.dim) throw std::invalid_argument("eigenfunction: dimension mismatch");
    double v = 1.0;
    for (int i = 0; i < x.dim; ++i) v *= sine_mode(k[i], x[i]);
    return v;
}

/// Whole-space heat kernel H_t(x) = (4 pi t)^{-d/2} exp(-|x|^2 / 4t).
inline double gauss_kernel(double t, const Point& x) {
    if (!(t > 0.0)) throw std::domain_error("gauss_kernel: t must be positive");
    return std::pow(4.0 * kPi * t, -0.5 * x.dim) * std::exp(-x.norm2() / (4.0 * t));
}

/// Smallest per-axis cutoff N with exp(-pi^2 N^2 dt) < tol.
inline int default_cutoff(double dt, double tol = 1e-14) {
    if (!(dt > 0.0)) throw std::domain_error("default_cutoff: dt must be positive");
    return static_cast<int>(std::ceil(std::sqrt(-std::log(tol) / (kPi2 * dt))));
}

/// Truncated eigen-expansion of the Dirichlet Green kernel with N modes per axis.
/// The index set is the square [1,N]^d, so the kernel factorises over axes.
class GreenEvaluator {
public:
    GreenEvaluator(int dim, int cutoff) : dim_(dim), cutoff_(cutoff) {
        check_dim(dim);
        if (cutoff < 1) throw std::invalid_argument("GreenEvaluator: cutoff must be >= 1");
        axis_eigenvalues_.resize(static_cast<std::size_t>(cutoff));
        for (int k = 1; k <= cutoff; ++k) axis_eigenvalues_[k - 1] = kPi2 * k * k;
    }

    int dim() const { return dim_; }
    int cutoff() const { return cutoff_; }
    int modes() const { return dim_ == 1 ? cutoff_ : cutoff_ * cutoff_; }

    /// pi^2 k^2 for k = 1..N along one axis.
    const std::vector<double>& axis_eigenvalues() const { return axis_eigenvalues_; }

    /// Eigenvalue of flat mode index m (row-major over the per-axis indices).
    double eigenvalue(int m) const {
        if (dim_ == 1) return axis_eigenvalues_[m];
        return axis_eigenvalues_[m / cutoff_] + axis_eigenvalues_[m % cutoff_];
    }

    MultiIndex index(int m) const {
        if (dim_ == 1) return MultiIndex(m + 1);
        return MultiIndex(m / cutoff_ + 1, m % cutoff_ + 1);
    }

    double operator()(double t, const Point& x, const Point& y) const {
        if (!(t > 0.0)) throw std::domain_error("green_eval: t must be positive (G_0 is a distribution)");
        check_in_cube(x);
        check_in_cube(y);
        if (x.dim != dim_ || y.dim != dim_) throw std::invalid_argument("green_eval: dimension mismatch");
        double g = 1.0;
        for (int i = 0; i < dim_; ++i) g *= axis_sum(t, x[i], y[i]);
        return g;
    }

private:
    double axis_sum(double t, double x, double y) const {
        double s = 0.0;
        for (int k = 1; k <= cutoff_; ++k) {
            const double decay = std::exp(-axis_eigenvalues_[k - 1] * t);
            if (decay == 0.0) break;
            // product of the two sines first so that swapping x and y is exact
            s += decay * (sine_mode(k, x) * sine_mode(k, y));
        }
        return s;
    }

    int dim_;
    int cutoff_;
    std::vector<double> axis_eigenvalues_;
};

inline double green_eval(double t, const Point& x, const Point& y, int cutoff) {
    return GreenEvaluator(x.dim, cutoff)(t, x, y);
}

namespace detail {

// One-axis mass: sum over odd k of (4/(pi k)) e^{-pi^2 k^2 t} sin(pi k x).
inline double axis_mass(double t, double x) {
    double s = 0.0;
    for (int k = 1;; k += 2) {
        const double decay = std::exp(-kPi2 * k * k * t);
        if (decay < 1e-19 || k > 4'000'001) break;
        s += 4.0 / (kPi * k) * decay * std::sin(kPi * k * x);
    }
    return s;
}

// One-axis Parseval sum: sum_k e^{-2 pi^2 k^2 t} 2 sin^2(pi k x).
inline double axis_l2(double t, double x) {
    double s = 0.0;
    for (int k = 1;; ++k) {
        const double decay = std::exp(-2.0 * kPi2 * k * k * t);
        if (decay < 1e-19 || k > 4'000'000) break;
        const double e = sine_mode(k, x);
        s += decay * e * e;
    }
    return s;
}

}  // namespace detail

/// Integral of G_t(x, .) over the cube, summed to machine tolerance.
inline double green_mass(double t, const Point& x) {
    if (!(t > 0.0)) throw std::domain_error("green_mass: t must be positive");
    check_in_cube(x);
    double m = 1.0;
    for (int i = 0; i < x.dim; ++i) m *= detail::axis_mass(t, x[i]);
    return m;
}

/// Integral of G_t(x, .)^2 over the cube via Parseval.
inline double green_l2(double t, const Point& x) {
    if (!(t > 0.0)) throw std::domain_error("green_l2: t must be positive");
    check_in_cube(x);
    double m = 1.0;
    for (int i = 0; i < x.dim; ++i) m *= detail::axis_l2(t, x[i]);
    return m;
}

/// The bound (4 pi t)^{-d/2} on the L^2 mass of G_t(x, .).
inline double green_l2_bound(double t, int d) { return std::pow(4.0 * kPi * t, -0.5 * d); }

/// |int G_t(x,z) G_s(z,y) dz - G_{t+s}(x,y)| with the composition done by a
/// trapezoid rule on quad_points intervals per axis (exact for the retained
/// trigonometric modes as long as quad_points > cutoff).
inline double semigroup_residual(double t, double s, const Point& x, const Point& y, int quad_points,
                                 int cutoff) {
    if (!(t > 0.0) || !(s > 0.0)) throw std::domain_error("semigroup_residual: t and s must be positive");
    if (quad_points < 2) throw std::invalid_argument("semigroup_residual: need at least 2 quadrature points");
    const GreenEvaluator g(x.dim, cutoff);
    const double h = 1.0 / quad_points;
    double comp = 0.0;
    if (x.dim == 1) {
        for (int i = 1; i < quad_points; ++i) {
            const Point z(i * h);
            comp += g(t, x, z) * g(s, z, y);
        }
        comp *= h;
    } else {
        for (int i = 1; i < quad_points; ++i)
            for (int j = 1; j < quad_points; ++j) {
                const Point z(i * h, j * h);
                comp += g(t, x, z) * g(s, z, y);
            }
        comp *= h * h;
    }
    return std::abs(comp - g(t + s, x, y));
}

}  // namespace sheq
