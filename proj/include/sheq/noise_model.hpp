#pragma once
// Geometry of the time-white, space-colored noise restricted to the sine
// basis: Fourier transforms of the zero-extended modes, the Gram matrix of
// the H inner product, correlated increments and their binary persistence.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "basis_kernel.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "spectral_measure.hpp"

namespace sheq {

namespace detail {

// E(a) = int_0^1 e^{i a x} dx, with a Taylor branch near a = 0.
inline std::complex<double> unit_exp_integral(double a) {
    using namespace std::complex_literals;
    if (std::abs(a) < 1e-3) return 1.0 + 0.5i * a - a * a / 6.0 - (1.0i / 24.0) * a * a * a;
    return (std::exp(1.0i * a) - 1.0) / (1.0i * a);
}

}  // namespace detail

/// Fourier transform of the zero-extended mode sqrt(2) sin(pi k x) 1_[0,1](x).
inline std::complex<double> sine_mode_transform(int k, double xi) {
    using namespace std::complex_literals;
    const double b = kPi * k, c = 2.0 * kPi * xi;
    return std::numbers::sqrt2 / 2.0i *
           (detail::unit_exp_integral(b - c) - detail::unit_exp_integral(-(b + c)));
}

/// Integral of sqrt(2) sin(pi k x) over [0,1]: 2 sqrt(2)/(pi k) for odd k, 0 for even k.
inline double sine_mode_mean(int k) { return (k % 2 == 1) ? 2.0 * std::numbers::sqrt2 / (kPi * k) : 0.0; }

/// Thrown when the assembled Gram matrix is indefinite beyond quadrature noise.
class NotPositiveSemidefinite : public std::runtime_error {
public:
    NotPositiveSemidefinite(double eig, double tol)
        : std::runtime_error("Gram matrix not PSD: eigenvalue " + std::to_string(eig) + " below -" +
                             std::to_string(tol)),
          eigenvalue(eig) {}
    double eigenvalue;
};

/// Gram matrix Q_{jk} = <e_j, e_k>_H of the sine modes (flat row-major mode
/// order, see GreenEvaluator::index), with a cached factor L, Q = L L^T,
/// whose columns are the coordinates of an H-orthonormal system.
class HGram {
public:
    static HGram from_matrix(const SpectralMeasure& m, int cutoff, int quad_budget, Eigen::MatrixXd q) {
        HGram g(m, cutoff, quad_budget);
        const int n = g.size();
        if (q.rows() != n || q.cols() != n) throw std::invalid_argument("HGram: matrix size does not match cutoff");
        g.q_ = std::move(q);
        g.factorize();
        return g;
    }

    int dim() const { return measure_.dim(); }
    int cutoff() const { return cutoff_; }
    int size() const { return dim() == 1 ? cutoff_ : cutoff_ * cutoff_; }
    int quad_budget() const { return quad_budget_; }
    int rank() const { return static_cast<int>(factor_.cols()); }
    const SpectralMeasure& measure() const { return measure_; }
    const Eigen::MatrixXd& matrix() const { return q_; }
    const Eigen::MatrixXd& factor() const { return factor_; }
    /// Most negative eigenvalue seen before clipping.
    double min_raw_eigenvalue() const { return min_raw_eigenvalue_; }

    double inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
        if (a.size() != size() || b.size() != size()) throw std::invalid_argument("h_inner: dimension mismatch");
        return a.dot(q_ * b);
    }
    double norm2(const Eigen::VectorXd& a) const { return inner(a, a); }

private:
    HGram(const SpectralMeasure& m, int cutoff, int budget) : measure_(m), cutoff_(cutoff), quad_budget_(budget) {
        if (cutoff < 1) throw std::invalid_argument("HGram: cutoff must be >= 1");
    }

    void factorize() {
        const double asym = (q_ - q_.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-12 * std::max(1.0, q_.cwiseAbs().maxCoeff()))
            throw std::invalid_argument("HGram: matrix is not symmetric");
        q_ = 0.5 * (q_ + q_.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q_);
        const Eigen::VectorXd& ev = es.eigenvalues();
        const double trace = std::max(q_.trace(), 0.0);
        const double tol = 1e-10 * trace;
        min_raw_eigenvalue_ = ev.minCoeff();
        if (min_raw_eigenvalue_ < -tol) throw NotPositiveSemidefinite(min_raw_eigenvalue_, tol);
        // keep directions above the noise floor, largest first
        std::vector<int> keep;
        for (int i = static_cast<int>(ev.size()) - 1; i >= 0; --i)
            if (ev[i] > 1e-12 * trace) keep.push_back(i);
        factor_.resize(q_.rows(), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j)
            factor_.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(keep[j]) * std::sqrt(ev[keep[j]]);
    }

    SpectralMeasure measure_;
    int cutoff_;
    int quad_budget_;
    Eigen::MatrixXd q_;
    Eigen::MatrixXd factor_;
    double min_raw_eigenvalue_ = 0.0;
};

inline double h_inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const HGram& g) { return g.inner(a, b); }

namespace detail {

struct RadialNode {
    double r;
    double w;  // includes the density and the r^{d-1} Jacobian
};

// Radial rule for int_0^inf rho(r) r^{d-1} g(r) dr with Gauss panels of width
// at most 1/2 (the mode transforms oscillate with period 1 in xi).
inline std::vector<RadialNode> radial_rule(const SpectralMeasure& m, int order, double r_max) {
    const quad::Rule ref = quad::gauss_legendre(static_cast<std::size_t>(order));
    std::vector<RadialNode> out;
    const int d = m.dim();
    auto add_panels = [&](double a, double b) {
        const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / 0.5)));
        for (int p = 0; p < pieces; ++p) {
            std::vector<double> xs, ws;
            quad::map_rule(ref, a + (b - a) * p / pieces, a + (b - a) * (p + 1) / pieces, xs, ws);
            for (std::size_t i = 0; i < xs.size(); ++i)
                out.push_back({xs[i], ws[i] * m.radial_density(xs[i]) * std::pow(xs[i], d - 1)});
        }
    };
    switch (m.kind()) {
        case MeasureKind::Riesz: {
            // c r^{kappa-1} on [0, r0]: r = r0 u^{1/kappa} makes the weight constant
            const double r0 = 0.5, kappa = m.kappa();
            const double c = riesz_constant(d, kappa);
            for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
                const double u = 0.5 * (ref.nodes[i] + 1.0);
                out.push_back({r0 * std::pow(u, 1.0 / kappa), 0.5 * ref.weights[i] * c * std::pow(r0, kappa) / kappa});
            }
            add_panels(r0, r_max);
            break;
        }
        case MeasureKind::BallUniform: add_panels(0.0, m.radius()); break;
        case MeasureKind::TabulatedRadial:
            for (std::size_t i = 1; i < m.table().size(); ++i) add_panels(m.table()[i - 1].first, m.table()[i].first);
            break;
        case MeasureKind::PointMassAtZero: break;
    }
    return out;
}

inline Eigen::VectorXcd axis_transforms(int cutoff, double xi) {
    Eigen::VectorXcd v(cutoff);
    for (int k = 1; k <= cutoff; ++k) v[k - 1] = sine_mode_transform(k, xi);
    return v;
}

}  // namespace detail

/// Assembles Q on the Fourier side, Q_{jk} = int Re(F e_j conj(F e_k)) d lambda.
/// quad_budget is the Gauss order per radial panel.
inline HGram build_gram(const SpectralMeasure& m, int cutoff, int quad_budget = 16) {
    if (cutoff < 1) throw std::invalid_argument("build_gram: cutoff must be >= 1");
    if (quad_budget < 2) throw std::invalid_argument("build_gram: quad_budget must be >= 2");
    const int d = m.dim();
    const int n = d == 1 ? cutoff : cutoff * cutoff;
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);

    if (m.atomic()) {
        Eigen::VectorXd mu(n);
        for (int i = 0; i < n; ++i)
            mu[i] = d == 1 ? sine_mode_mean(i + 1) : sine_mode_mean(i / cutoff + 1) * sine_mode_mean(i % cutoff + 1);
        q = mu * mu.transpose();
        return HGram::from_matrix(m, cutoff, quad_budget, std::move(q));
    }

    const double r_max = std::min(m.support_radius(), d == 1 ? 400.0 : 60.0);
    const auto nodes = detail::radial_rule(m, quad_budget, r_max);

    if (d == 1) {
        constexpr std::size_t kChunk = 256;
        for (std::size_t start = 0; start < nodes.size(); start += kChunk) {
            const std::size_t len = std::min(kChunk, nodes.size() - start);
            Eigen::MatrixXcd v(n, static_cast<Eigen::Index>(len));
            for (std::size_t j = 0; j < len; ++j) {
                const auto& nd = nodes[start + j];
                // factor 2: xi and -xi contribute equal real parts
                v.col(static_cast<Eigen::Index>(j)) = std::sqrt(2.0 * nd.w) * detail::axis_transforms(cutoff, nd.r);
            }
            q.noalias() += (v * v.adjoint()).real();
        }
    } else {
        for (const auto& nd : nodes) {
            const double two_pi_r = 2.0 * kPi * nd.r;
            const int n_theta = static_cast<int>(std::ceil(two_pi_r + 10.0 * std::cbrt(two_pi_r) + 16.0));
            // pi-periodic integrand: trapezoid on [0, pi), doubled
            const double wt = 2.0 * nd.w * kPi / n_theta;
            Eigen::MatrixXcd v(n, n_theta);
            for (int t = 0; t < n_theta; ++t) {
                const double th = kPi * t / n_theta;
                const Eigen::VectorXcd f1 = detail::axis_transforms(cutoff, nd.r * std::cos(th));
                const Eigen::VectorXcd f2 = detail::axis_transforms(cutoff, nd.r * std::sin(th));
                for (int a = 0; a < cutoff; ++a)
                    for (int b = 0; b < cutoff; ++b) v(a * cutoff + b, t) = f1[a] * f2[b];
            }
            q.noalias() += wt * (v * v.adjoint()).real();
        }
    }
    return HGram::from_matrix(m, cutoff, quad_budget, std::move(q));
}

/// Per-mode Gaussian increments over one time step, covariance Q dt.
struct NoiseIncrement {
    Eigen::VectorXd values;
};

/// Draws the H-orthonormal coordinates z ~ N(0, I_rank).
inline Eigen::VectorXd standard_normals(int rank, Rng& rng) {
    Eigen::VectorXd z(rank);
    for (int i = 0; i < rank; ++i) z[i] = rng.normal();
    return z;
}

inline NoiseIncrement sample_increment(const HGram& g, double dt, Rng& rng) {
    if (dt < 0.0) throw std::invalid_argument("sample_increment: dt must be >= 0");
    Eigen::VectorXd z = standard_normals(g.rank(), rng);
    if (dt == 0.0) return {Eigen::VectorXd::Zero(g.size())};
    return {g.factor() * (z * std::sqrt(dt))};
}

// ---------------------------------------------------------------------------
// Binary persistence (little-endian)

namespace io {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b.data(), 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(b.data(), 8);
}
inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_u64(std::istream& is) {
    std::array<unsigned char, 8> b{};
    is.read(reinterpret_cast<char*>(b.data()), 8);
    if (!is) throw std::runtime_error("binary read: unexpected end of file");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}
inline std::uint32_t get_u32(std::istream& is) {
    std::array<unsigned char, 4> b{};
    is.read(reinterpret_cast<char*>(b.data()), 4);
    if (!is) throw std::runtime_error("binary read: unexpected end of file");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline void expect_magic(std::istream& is, const char (&magic)[9]) {
    char buf[8];
    is.read(buf, 8);
    if (!is || std::string(buf, 8) != std::string(magic, 8))
        throw std::runtime_error(std::string("binary read: bad magic, expected ") + magic);
}

}  // namespace io

inline constexpr char kGramMagic[9] = "SHEQGRAM";

/// Header: magic, u32 version, u32 d, u32 N, u32 kind, f64 eta, f64 kappa,
/// f64 radius, u32 table length, (f64 r, f64 rho) pairs, u32 quad budget;
/// then N^d x N^d row-major f64 entries.
inline void write_gram(std::ostream& os, const HGram& g) {
    const auto& m = g.measure();
    os.write(kGramMagic, 8);
    io::put_u32(os, 1);
    io::put_u32(os, static_cast<std::uint32_t>(m.dim()));
    io::put_u32(os, static_cast<std::uint32_t>(g.cutoff()));
    io::put_u32(os, static_cast<std::uint32_t>(m.kind()));
    io::put_f64(os, m.eta());
    io::put_f64(os, m.kappa());
    io::put_f64(os, m.radius());
    io::put_u32(os, static_cast<std::uint32_t>(m.table().size()));
    for (const auto& [r, rho] : m.table()) {
        io::put_f64(os, r);
        io::put_f64(os, rho);
    }
    io::put_u32(os, static_cast<std::uint32_t>(g.quad_budget()));
    const auto& q = g.matrix();
    for (Eigen::Index i = 0; i < q.rows(); ++i)
        for (Eigen::Index j = 0; j < q.cols(); ++j) io::put_f64(os, q(i, j));
}

inline HGram read_gram(std::istream& is) {
    io::expect_magic(is, kGramMagic);
    if (io::get_u32(is) != 1) throw std::runtime_error("read_gram: unsupported version");
    const int d = static_cast<int>(io::get_u32(is));
    const int cutoff = static_cast<int>(io::get_u32(is));
    const auto kind = static_cast<MeasureKind>(io::get_u32(is));
    const double eta = io::get_f64(is), kappa = io::get_f64(is), radius = io::get_f64(is);
    const std::uint32_t tlen = io::get_u32(is);
    SpectralMeasure::Table table;
    for (std::uint32_t i = 0; i < tlen; ++i) {
        const double r = io::get_f64(is);
        table.emplace_back(r, io::get_f64(is));
    }
    const int budget = static_cast<int>(io::get_u32(is));
    SpectralMeasure m = [&] {
        switch (kind) {
            case MeasureKind::Riesz: return SpectralMeasure::riesz(d, kappa, eta);
            case MeasureKind::PointMassAtZero: return SpectralMeasure::point_mass(d, eta);
            case MeasureKind::BallUniform: return SpectralMeasure::ball_uniform(d, radius, eta);
            case MeasureKind::TabulatedRadial: return SpectralMeasure::tabulated(d, table, eta);
        }
        throw std::runtime_error("read_gram: unknown measure kind");
    }();
    const int n = d == 1 ? cutoff : cutoff * cutoff;
    Eigen::MatrixXd q(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) q(i, j) = io::get_f64(is);
    return HGram::from_matrix(m, cutoff, budget, std::move(q));
}

inline void save_gram(const HGram& g, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_gram: cannot open " + path);
    write_gram(os, g);
}

inline HGram load_gram(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_gram: cannot open " + path);
    return read_gram(is);
}

// ---------------------------------------------------------------------------

struct WalshSeriesReport {
    double expected_variance = 0.0;  // sum_n |g_n|_H^2 dt
    double mean_series = 0.0, mean_direct = 0.0;
    double var_series = 0.0, var_direct = 0.0;
    double se_mean = 0.0, se_var = 0.0;
    double max_pathwise_residual = 0.0;  // |grid-pairing form - series form|
    bool moments_match = false;
};

/// Integrates a step integrand g (one sine-coefficient vector per step) three
/// ways: pairing with the projected noise field, the series over an
/// H-orthonormal basis, and a single Gaussian with variance sum |g|_H^2 dt.
/// The first two agree pathwise; all three must agree in law.
inline WalshSeriesReport walsh_vs_series_check(const HGram& g, const std::vector<Eigen::VectorXd>& steps, double dt,
                                               std::uint64_t seed, int trials, double confidence = 4.0) {
    if (trials < 2) throw std::invalid_argument("walsh_vs_series_check: need at least 2 trials");
    WalshSeriesReport rep;
    std::vector<Eigen::VectorXd> proj;
    std::vector<double> hnorm;
    for (const auto& s : steps) {
        proj.push_back(g.factor().transpose() * s);
        const double n2 = g.norm2(s);
        hnorm.push_back(std::sqrt(std::max(0.0, n2)));
        rep.expected_variance += n2 * dt;
    }
    const double sq = std::sqrt(dt);
    double s1 = 0, s2 = 0, d1 = 0, d2 = 0;
    for (int t = 0; t < trials; ++t) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(t));
        double series = 0.0, walsh = 0.0, direct = 0.0;
        for (std::size_t n = 0; n < steps.size(); ++n) {
            const Eigen::VectorXd z = standard_normals(g.rank(), rng);
            series += proj[n].dot(z) * sq;
            walsh += steps[n].dot(g.factor() * z) * sq;
            if (g.rank() > 0) direct += hnorm[n] * sq * z[0];
        }
        rep.max_pathwise_residual = std::max(rep.max_pathwise_residual, std::abs(series - walsh));
        s1 += series;
        s2 += series * series;
        d1 += direct;
        d2 += direct * direct;
    }
    const double nt = trials;
    rep.mean_series = s1 / nt;
    rep.mean_direct = d1 / nt;
    rep.var_series = s2 / nt - rep.mean_series * rep.mean_series;
    rep.var_direct = d2 / nt - rep.mean_direct * rep.mean_direct;
    rep.se_mean = std::sqrt(rep.expected_variance / nt);
    rep.se_var = rep.expected_variance * std::sqrt(2.0 / (nt - 1.0));
    const double k = confidence;
    rep.moments_match = std::abs(rep.mean_series) <= k * rep.se_mean && std::abs(rep.mean_direct) <= k * rep.se_mean &&
                        std::abs(rep.var_series - rep.expected_variance) <= k * rep.se_var &&
                        std::abs(rep.var_direct - rep.expected_variance) <= k * rep.se_var;
    return rep;
}

}  // namespace sheq
