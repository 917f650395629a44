#pragma once
// Spectral measures of the spatial covariance f of the noise, with the
// Fourier convention  F phi(xi) = int exp(-2 i pi xi.x) phi(x) dx.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "basis_kernel.hpp"
#include "quadrature.hpp"

namespace sheq {

enum class MeasureKind : std::uint32_t { Riesz = 0, PointMassAtZero = 1, BallUniform = 2, TabulatedRadial = 3 };

inline std::string to_string(MeasureKind k) {
    switch (k) {
        case MeasureKind::Riesz: return "riesz";
        case MeasureKind::PointMassAtZero: return "point";
        case MeasureKind::BallUniform: return "ball";
        case MeasureKind::TabulatedRadial: return "tabulated";
    }
    return "unknown";
}

/// Reported when an adaptive quadrature fails to reach its tolerance.
class QuadratureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Surface measure of the unit sphere in R^d (d = 1: the two points +-1).
inline double sphere_area(int d) { return d == 1 ? 2.0 : 2.0 * kPi; }

/// c_{d,kappa} = pi^{kappa - d/2} Gamma((d-kappa)/2) / Gamma(kappa/2), the constant
/// with F[|x|^{-kappa}](xi) = c_{d,kappa} |xi|^{kappa-d}.
inline double riesz_constant(int d, double kappa) {
    return std::pow(kPi, kappa - 0.5 * d) * std::tgamma(0.5 * (d - kappa)) / std::tgamma(0.5 * kappa);
}

/// Density c_{d,kappa} |xi|^{kappa-d} of the Riesz spectral measure.
inline double riesz_spectral_density(double kappa, int d, const Point& xi) {
    check_dim(d);
    if (!(kappa > 0.0 && kappa < std::min(2.0, static_cast<double>(d))))
        throw std::domain_error("riesz_spectral_density: kappa must lie in (0, min(2,d))");
    const double r2 = xi.norm2();
    if (r2 == 0.0) throw std::domain_error("riesz_spectral_density: xi = 0 is not a point evaluation");
    return riesz_constant(d, kappa) * std::pow(std::sqrt(r2), kappa - d);
}

/// Nonnegative tempered measure lambda on R^d together with the regularity
/// index eta of the hypothesis K_eta < infinity.
class SpectralMeasure {
public:
    using Table = std::vector<std::pair<double, double>>;  // (radius, density)

    static SpectralMeasure riesz(int d, double kappa, double eta) {
        SpectralMeasure m(MeasureKind::Riesz, d, eta);
        if (!(kappa > 0.0 && kappa < std::min(2.0, static_cast<double>(d)))) {
            std::ostringstream os;
            os << "Riesz measure: kappa = " << kappa << " must lie in (0, 2 ^ d) = (0, " << std::min(2, d) << ")";
            throw std::invalid_argument(os.str());
        }
        if (!(2.0 * eta > kappa)) {
            std::ostringstream os;
            os << "Riesz measure: K_eta is finite only if 2 eta > kappa (eta = " << eta << ", kappa = " << kappa
               << ")";
            throw std::invalid_argument(os.str());
        }
        m.kappa_ = kappa;
        return m;
    }

    static SpectralMeasure point_mass(int d, double eta) { return SpectralMeasure(MeasureKind::PointMassAtZero, d, eta); }

    /// Lebesgue density 1 on the ball |xi| <= radius.
    static SpectralMeasure ball_uniform(int d, double radius, double eta) {
        SpectralMeasure m(MeasureKind::BallUniform, d, eta);
        if (!(radius > 0.0 && std::isfinite(radius)))
            throw std::invalid_argument("BallUniform measure: radius must be positive and finite");
        m.radius_ = radius;
        return m;
    }

    /// Radial density rho(|xi|) interpolated linearly between table nodes and zero
    /// beyond the last node. Only rho >= 0 is enforced.
    static SpectralMeasure tabulated(int d, Table table, double eta) {
        SpectralMeasure m(MeasureKind::TabulatedRadial, d, eta);
        if (table.size() < 2) throw std::invalid_argument("TabulatedRadial measure: need at least two nodes");
        if (table.front().first != 0.0) throw std::invalid_argument("TabulatedRadial measure: first radius must be 0");
        for (std::size_t i = 0; i < table.size(); ++i) {
            if (!(table[i].second >= 0.0) || !std::isfinite(table[i].second))
                throw std::invalid_argument("TabulatedRadial measure: densities must be finite and >= 0");
            if (i > 0 && !(table[i].first > table[i - 1].first))
                throw std::invalid_argument("TabulatedRadial measure: radii must be strictly increasing");
        }
        m.table_ = std::move(table);
        return m;
    }

    MeasureKind kind() const { return kind_; }
    int dim() const { return dim_; }
    double eta() const { return eta_; }
    double kappa() const { return kappa_; }
    double radius() const { return radius_; }
    const Table& table() const { return table_; }
    bool atomic() const { return kind_ == MeasureKind::PointMassAtZero; }

    /// Radius beyond which the density vanishes (infinity for Riesz, 0 for the atom).
    double support_radius() const {
        switch (kind_) {
            case MeasureKind::Riesz: return std::numeric_limits<double>::infinity();
            case MeasureKind::PointMassAtZero: return 0.0;
            case MeasureKind::BallUniform: return radius_;
            case MeasureKind::TabulatedRadial: return table_.back().first;
        }
        return 0.0;
    }

    /// rho(r) for the absolutely continuous kinds.
    double radial_density(double r) const {
        switch (kind_) {
            case MeasureKind::Riesz: return riesz_constant(dim_, kappa_) * std::pow(r, kappa_ - dim_);
            case MeasureKind::PointMassAtZero: throw std::logic_error("point mass has no density");
            case MeasureKind::BallUniform: return r <= radius_ ? 1.0 : 0.0;
            case MeasureKind::TabulatedRadial: {
                if (r >= table_.back().first) return r == table_.back().first ? table_.back().second : 0.0;
                auto it = std::upper_bound(table_.begin(), table_.end(), r,
                                           [](double v, const auto& e) { return v < e.first; });
                const auto& hi = *it;
                const auto& lo = *(it - 1);
                const double w = (r - lo.first) / (hi.first - lo.first);
                return (1.0 - w) * lo.second + w * hi.second;
            }
        }
        return 0.0;
    }

    /// Covariance function f at |x| = r (the inverse Fourier transform of lambda).
    double covariance(double r) const {
        switch (kind_) {
            case MeasureKind::Riesz: return std::pow(r, -kappa_);
            case MeasureKind::PointMassAtZero: return 1.0;
            case MeasureKind::BallUniform: {
                const double R = radius_;
                if (dim_ == 1) return r == 0.0 ? 2.0 * R : std::sin(2.0 * kPi * R * r) / (kPi * r);
                return r == 0.0 ? kPi * R * R : R * boost::math::cyl_bessel_j(1, 2.0 * kPi * R * r) / r;
            }
            case MeasureKind::TabulatedRadial: return tabulated_covariance(r);
        }
        return 0.0;
    }

    /// Short text descriptor, stable across runs.
    std::string descriptor() const {
        std::ostringstream os;
        os.precision(17);
        os << to_string(kind_) << " d=" << dim_ << " eta=" << eta_;
        if (kind_ == MeasureKind::Riesz) os << " kappa=" << kappa_;
        if (kind_ == MeasureKind::BallUniform) os << " radius=" << radius_;
        if (kind_ == MeasureKind::TabulatedRadial) os << " nodes=" << table_.size();
        return os.str();
    }

private:
    SpectralMeasure(MeasureKind k, int d, double eta) : kind_(k), dim_(d), eta_(eta) {
        check_dim(d);
        if (!(eta >= 0.0 && eta < 1.0)) throw std::invalid_argument("spectral measure: eta must lie in [0,1)");
    }

    double tabulated_covariance(double r) const {
        // f(r) = int rho(|xi|) e^{2 i pi xi.x} dxi for piecewise-linear rho.
        const double k = 2.0 * kPi * r;
        double sum = 0.0;
        if (dim_ == 1) {
            // 2 int (p + q s) cos(k s) ds per segment, in closed form
            for (std::size_t i = 1; i < table_.size(); ++i) {
                const auto [a, ra] = table_[i - 1];
                const auto [b, rb] = table_[i];
                const double q = (rb - ra) / (b - a), p = ra - q * a;
                if (k < 1e-6) {
                    sum += 2.0 * (p * (b - a) + 0.5 * q * (b * b - a * a));
                    continue;
                }
                auto prim = [&](double s) {
                    return (p + q * s) * std::sin(k * s) / k + q * std::cos(k * s) / (k * k);
                };
                sum += 2.0 * (prim(b) - prim(a));
            }
            return sum;
        }
        static const quad::Rule rule = quad::gauss_legendre(16);
        for (std::size_t i = 1; i < table_.size(); ++i) {
            const double a = table_[i - 1].first, b = table_[i].first;
            const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) * std::max(1.0, 2.0 * r))));
            for (int pc = 0; pc < pieces; ++pc) {
                std::vector<double> xs, ws;
                quad::map_rule(rule, a + (b - a) * pc / pieces, a + (b - a) * (pc + 1) / pieces, xs, ws);
                for (std::size_t j = 0; j < xs.size(); ++j)
                    sum += ws[j] * radial_density(xs[j]) * 2.0 * kPi * xs[j] * boost::math::cyl_bessel_j(0, k * xs[j]);
            }
        }
        return sum;
    }

    MeasureKind kind_;
    int dim_;
    double eta_;
    double kappa_ = 0.0;
    double radius_ = 0.0;
    Table table_;
};

namespace detail {

// Integral of g over [0, L]: tanh-sinh on the first panel (tolerates an
// integrable singularity at 0), adaptive Gauss-Kronrod on unit-ish panels after.
inline double integrate_half_line(const std::function<double(double)>& g, double L, double panel,
                                  double rel_tol = 1e-11) {
    boost::math::quadrature::tanh_sinh<double> ts;
    const double first = std::min(panel, L);
    double err = 0.0, l1 = 0.0;
    double total = ts.integrate(g, 0.0, first, rel_tol, &err, &l1);
    double err_total = err;
    for (double a = first; a < L; a += panel) {
        const double b = std::min(L, a + panel);
        double e = 0.0;
        total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, a, b, 6, rel_tol, &e);
        err_total += e;
    }
    if (!std::isfinite(total) || err_total > 1e-8 * std::max(1.0, std::abs(total)))
        throw QuadratureError("quadrature did not converge (error estimate " + std::to_string(err_total) + ")");
    return total;
}

}  // namespace detail

struct FourierPairCheck {
    double physical_side;  // int f(x) phi(x) dx
    double spectral_side;  // int F phi(xi) lambda(dxi)
    double relative_residual;
};

/// Checks int f phi dx = int F phi d lambda for the radial Gaussian
/// phi(x) = exp(-|x|^2 / (2 w^2)), whose transform is (2 pi w^2)^{d/2} exp(-2 pi^2 w^2 |xi|^2).
inline FourierPairCheck validate_fourier_pair(const SpectralMeasure& m, double width, double panel = 0.25) {
    if (!(width > 0.0)) throw std::invalid_argument("validate_fourier_pair: width must be positive");
    const int d = m.dim();
    const double w2 = width * width;
    const auto phi = [&](double r) { return std::exp(-r * r / (2.0 * w2)); };
    const auto fphi = [&](double r) { return std::pow(2.0 * kPi * w2, 0.5 * d) * std::exp(-2.0 * kPi2 * w2 * r * r); };

    const double L_phys = width * std::sqrt(2.0 * 45.0);
    const double phys = sphere_area(d) * detail::integrate_half_line(
                                             [&](double r) {
                                                 if (r == 0.0 && m.kind() == MeasureKind::Riesz) return 0.0;
                                                 return m.covariance(r) * phi(r) * std::pow(r, d - 1);
                                             },
                                             L_phys, std::min(panel, L_phys));

    double spec = 0.0;
    if (m.atomic()) {
        spec = fphi(0.0);
    } else {
        const double L_spec = std::min(m.support_radius(), std::sqrt(45.0 / (2.0 * kPi2 * w2)));
        double acc = 0.0;
        if (m.kind() == MeasureKind::TabulatedRadial) {
            double a = 0.0;
            for (std::size_t i = 1; i < m.table().size() && a < L_spec; ++i) {
                const double b = std::min(L_spec, m.table()[i].first);
                acc += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
                    [&](double r) { return m.radial_density(r) * fphi(r) * std::pow(r, d - 1); }, a, b, 15, 1e-12);
                a = b;
            }
        } else {
            acc = detail::integrate_half_line(
                [&](double r) {
                    if (r == 0.0) return m.kind() == MeasureKind::Riesz ? 0.0 : (d == 1 ? fphi(0.0) : 0.0);
                    return m.radial_density(r) * fphi(r) * std::pow(r, d - 1);
                },
                L_spec, std::min(L_spec, std::max(panel, L_spec / 64.0)));
        }
        spec = sphere_area(d) * acc;
    }
    const double rel = std::abs(phys - spec) / std::max(std::abs(spec), 1e-300);
    return {phys, spec, rel};
}

}  // namespace sheq
