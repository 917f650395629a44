#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include <sheq/constants.hpp>
#include <sheq/moments.hpp>

using namespace sheq;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST(KEta, PointMassIsOne) {
    for (double eta : {0.0, 0.3, 0.9}) {
        const auto r = k_eta(SpectralMeasure::point_mass(1, eta), eta);
        EXPECT_EQ(r.value, 1.0);
        EXPECT_TRUE(r.converged);
    }
}

TEST(KEta, BallUniformClosedForm) {
    // int_{-1}^{1} (1+x^2)^{-1/2} dx = 2 asinh(1)
    const auto r = k_eta(SpectralMeasure::ball_uniform(1, 1.0, 0.5), 0.5);
    EXPECT_NEAR(r.value, 2.0 * std::log(1.0 + std::sqrt(2.0)), 1e-10);
    EXPECT_NEAR(r.value, 1.76275, 5e-6);
    // d = 2, eta = 0: the area of the disc
    EXPECT_NEAR(k_eta(SpectralMeasure::ball_uniform(2, 1.5, 0.0), 0.0).value, kPi * 2.25, 1e-10);
}

TEST(KEta, RieszMatchesBetaFunctionOracle) {
    // c S_d int_0^inf r^{kappa-1} (1+r^2)^{-eta} dr = c S_d B(kappa/2, eta - kappa/2) / 2
    auto oracle = [](int d, double kappa, double eta) {
        return riesz_constant(d, kappa) * sphere_area(d) * 0.5 * std::beta(0.5 * kappa, eta - 0.5 * kappa);
    };
    for (auto [d, kappa, eta] : std::vector<std::tuple<int, double, double>>{{2, 1.0, 0.75}, {1, 0.5, 0.3}, {1, 0.2, 0.6}, {2, 1.5, 0.95}}) {
        const auto r = k_eta(SpectralMeasure::riesz(d, kappa, eta), eta);
        EXPECT_TRUE(r.converged);
        EXPECT_LT(rel(r.value, oracle(d, kappa, eta)), 1e-8) << d << ' ' << kappa << ' ' << eta;
    }
}

TEST(KEta, TabulatedPiecewiseLinear) {
    // rho = 1 - r on [0,1], eta = 0: total mass 2 * 1/2 in d = 1
    const auto m = SpectralMeasure::tabulated(1, {{0.0, 1.0}, {1.0, 0.0}}, 0.0);
    EXPECT_NEAR(k_eta(m, 0.0).value, 1.0, 1e-12);
}

TEST(AlphaWindow, StatedExamples) {
    auto w = alpha_window(6, 1, 0.0);
    EXPECT_NEAR(w.lo, 0.25, 1e-15);
    EXPECT_NEAR(w.hi, 1.0 / 3.0, 1e-15);
    EXPECT_FALSE(w.empty());
    EXPECT_TRUE(alpha_window(5, 1, 0.0).empty());
    w = alpha_window(13, 2, 0.5);
    EXPECT_NEAR(w.lo, 4.0 / 26.0, 1e-15);
    EXPECT_NEAR(w.hi, 0.5 - 1.0 / 13.0 - 0.25, 1e-15);
    EXPECT_NEAR(w.lo, 0.15385, 5e-6);
    EXPECT_NEAR(w.hi, 0.17308, 5e-6);
}

TEST(AlphaWindow, NonemptyIffAboveThreshold) {
    for (int d : {1, 2})
        for (double eta : {0.0, 0.2, 0.5, 0.8})
            for (double p = 2.5; p < 40.0; p += 0.37) {
                const bool above = p > moment_threshold(d, eta);
                EXPECT_EQ(!alpha_window(p, d, eta).empty(), above) << d << ' ' << eta << ' ' << p;
            }
    try {
        require_alpha_window(5, 1, 0.0);
        FAIL();
    } catch (const std::domain_error& e) {
        EXPECT_NE(std::string(e.what()).find("= 5"), std::string::npos) << e.what();
    }
}

TEST(CPrime, DirectEvaluation) {
    const double s = std::sin(0.3 * kPi) / kPi;
    const double expect = std::pow(s, 6) * std::pow(4 * kPi, -0.5) * std::pow(5.0 / 0.3, 5);
    EXPECT_LT(rel(c_prime(1, 6, 0.3, 1), expect), 1e-13);
    EXPECT_NEAR(c_prime(2, 6, 0.3, 1) / c_prime(1, 6, 0.3, 1), std::pow(2.0, 0.3 * 6 - 0.5), 1e-12);
    EXPECT_THROW(c_prime(1, 6, 0.25, 1), std::domain_error);
    EXPECT_THROW(c_prime(1, 6, 0.2, 1), std::domain_error);
}

TEST(CPrime, IntegerAlphaIsDegenerate) {
    // sin(pi a) = 0 at a = 1 up to rounding; the constant collapses
    EXPECT_LT(c_prime(1, 6, 1.0, 1), 1e-80);
}

TEST(CDoublePrime, DirectEvaluation) {
    EXPECT_LT(rel(c_double_prime(1, 6, 0.3, 0.0, 1.0), 5529600.0), 1e-13);
    // K^{p/2} scaling
    EXPECT_LT(rel(c_double_prime(1, 6, 0.3, 0.0, 2.0), 8.0 * 5529600.0), 1e-13);
    // with eta > 0, direct pow evaluation
    const double T = 0.7, p = 8, a = 0.3, eta = 0.1, K = 1.3;
    const double first = std::pow((p - 2) / (p - 2 - 2 * a * p), (p - 2) / 2) * std::pow(T, p / 2 - 1 - a * p);
    const double second = std::pow(eta / (8 * kPi2), eta * (p - 2) / 2) *
                          std::pow((p - 2) / (p - 2 - 2 * a * p - eta * p), (p - 2) / 2) *
                          std::pow(T, p / 2 - 1 - a * p - eta * p / 2);
    EXPECT_LT(rel(c_double_prime(T, p, a, eta, K), 0.25 * std::pow(8 * p * K, p / 2) * (first + second)), 1e-12);
    EXPECT_THROW(c_double_prime(1, 6, 1.0 / 3.0, 0.0, 1.0), std::domain_error);
}

TEST(CTPEta, GoldenSectionAgreesWithGridScan) {
    struct Case {
        double T, p, eta;
        int d;
        double K;
    };
    for (const Case c : {Case{1, 6, 0, 1, 1}, Case{1, 7, 0.1, 1, 2}, Case{0.5, 9, 0.2, 2, 5}, Case{2, 13, 0.5, 2, 1}}) {
        const Minimum m = c_T_p_eta(c.T, c.p, c.eta, c.d, c.K);
        const AlphaWindow w = alpha_window(c.p, c.d, c.eta);
        const double lo = w.lo + 1e-6, hi = w.hi - 1e-6;
        EXPECT_GT(m.argmin, lo);
        EXPECT_LT(m.argmin, hi);
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 10000; ++i) {
            const double a = lo + (hi - lo) * i / 10000.0;
            best = std::min(best, c_prime(c.T, c.p, a, c.d) * c_double_prime(c.T, c.p, a, c.eta, c.K));
        }
        EXPECT_LT(rel(m.value(), best), 1e-6) << c.p << ' ' << c.eta;
        EXPECT_LE(m.value(), best * (1 + 1e-12));
    }
}

TEST(CTPEta, BelowExplicitBound) {
    for (double T : {0.5, 1.0, 2.0})
        for (double eta : {0.05, 0.1, 0.3, 0.5})
            for (int d : {1, 2})
                for (double p : {moment_threshold(d, eta) + 0.5, moment_threshold(d, eta) + 3.0, 30.0}) {
                    const double v = c_T_p_eta(T, p, eta, d, 1.7).log_value;
                    const double b = log_c_T_p_eta_bound(T, p, eta, d, 1.7);
                    EXPECT_LE(v, b) << T << ' ' << eta << ' ' << d << ' ' << p;
                }
    // eta = 0: the bound carries (p-2)/(p eta) and is infinite
    EXPECT_TRUE(std::isinf(c_T_p_eta_bound(1, 6, 0.0, 1, 1.0)));
    EXPECT_LT(c_T_p_eta(1, 6, 0.0, 1, 1.0).value(), c_T_p_eta_bound(1, 6, 0.0, 1, 1.0));
}

TEST(CTPEta, NondecreasingInT) {
    for (double eta : {0.0, 0.2}) {
        const double a = c_T_p_eta(0.5, 8, eta, 1, 1).value();
        const double b = c_T_p_eta(1.0, 8, eta, 1, 1).value();
        const double c = c_T_p_eta(2.0, 8, eta, 1, 1).value();
        EXPECT_LE(a, b);
        EXPECT_LE(b, c);
    }
    EXPECT_THROW(c_T_p_eta(1, 5, 0.0, 1, 1), std::domain_error);
}

TEST(CTPEtaEps, FiniteAndMonotoneInEps) {
    const Minimum m = c_T_p_eta_eps(1, 2, 0.0, 1.0 / 6.0, 1, 1.0);
    EXPECT_TRUE(std::isfinite(m.log_value));
    EXPECT_GT(m.argmin, 5.0);
    const double small = c_T_p_eta_eps(1, 2, 0.0, 1e-2, 1, 1.0).log_value;
    const double one = c_T_p_eta_eps(1, 2, 0.0, 1.0, 1, 1.0).log_value;
    EXPECT_LE(small, one);
}

TEST(CTPEtaEps, ObjectiveMinimumAgainstScan) {
    const double p = 2, eps = 1.0 / 6.0;
    const Minimum m = c_T_p_eta_eps(1, p, 0.0, eps, 1, 1.0);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 2000; ++i) {
        const double q = 5.0 * (1.0 + std::exp(std::log(1e-4) + (std::log(1e3) - std::log(1e-4)) * i / 2000.0));
        best = std::min(best, log_small_p_objective(q, 1, p, 0.0, eps, 1, 1.0));
    }
    EXPECT_LE(m.log_value, best + 1e-9);
    EXPECT_NEAR(m.log_value, best, 1e-3 * std::abs(best));
}

TEST(CTPEtaEps, ThresholdBoundary) {
    EXPECT_NO_THROW(c_T_p_eta_eps(1, 5.0, 0.0, 0.5, 1, 1.0));
    EXPECT_THROW(c_T_p_eta_eps(1, 5.01, 0.0, 0.5, 1, 1.0), std::domain_error);
    EXPECT_NO_THROW(c_T_p_eta_eps(1, 6.0, 0.0, 0.5, 2, 1.0));
    EXPECT_THROW(c_T_p_eta_eps(1, 2.0, 0.0, 0.0, 1, 1.0), std::domain_error);
}

TEST(CGTEta, Branches) {
    EXPECT_DOUBLE_EQ(c_G_T_eta(1, 0.0, 1.0), 1.0);
    const double brk = 0.5 / (8 * kPi2);
    const double small = std::pow(brk, 0.5) * std::pow(brk, 0.5) / 0.5;
    const double large = brk + 0.25 / (8 * kPi2 * 0.5);
    EXPECT_NEAR(small, large, 1e-15);
    EXPECT_NEAR(c_G_T_eta(brk, 0.5, 1.0), 1.0 / (8 * kPi2), 1e-15);
    EXPECT_NEAR(c_G_T_eta(brk * (1 + 1e-12), 0.5, 1.0), 1.0 / (8 * kPi2), 1e-12);
    EXPECT_NEAR(c_G_T_eta(brk, 0.5, 1.0), 0.012665, 5e-7);
    EXPECT_NEAR(c_G_T_eta(1, 0.3, 2.0), 2.0 + 0.09 / (8 * kPi2 * 0.7), 1e-15);
    EXPECT_NEAR(c_G_T_eta(1, 0.3, 2.0), 2.00163, 5e-6);
}

TEST(GHNormBound, Examples) {
    EXPECT_EQ(g_h_norm_bound(1e-6, 0.0, 3.0), 3.0);
    EXPECT_EQ(g_h_norm_bound(0.5 / (8 * kPi2), 0.5, 2.0), 2.0);
    EXPECT_EQ(g_h_norm_bound(0.1, 0.5, 2.0), 2.0);
    EXPECT_NEAR(g_h_norm_bound(1e-4, 0.5, 1.0), std::sqrt(0.5 / (8 * kPi2)) * 100.0, 1e-12);
    EXPECT_NEAR(g_h_norm_bound(1e-4, 0.5, 1.0), 7.9577, 5e-5);
}

TEST(GHNormBound, DominatesComputedHNorm) {
    // |G_t(x,.)|_H^2 from the Gram matrix, over a log grid of t
    SimulationConfig cfg;
    cfg.N = 64;
    cfg.M = 128;
    cfg.dt = 1e-3;
    for (const auto& m : {SpectralMeasure::point_mass(1, 0.0), SpectralMeasure::riesz(1, 0.5, 0.3),
                          SpectralMeasure::ball_uniform(1, 2.0, 0.2)}) {
        const HGram gram = build_gram(m, cfg.N);
        const Galerkin g(cfg, gram);
        const double K = k_eta(m, m.eta()).value;
        for (int i = 0; i <= 12; ++i) {
            const double t = std::pow(10.0, -3.0 + 3.0 * i / 12.0);
            for (double x : {0.5, 0.1})
                EXPECT_LE(green_h_norm2(g, t, Point(x)), g_h_norm_bound(t, m.eta(), K) * (1 + 1e-12))
                    << m.descriptor() << " t=" << t;
        }
    }
}

TEST(TheoremConstant, Examples) {
    const auto c0 = theorem_constant(1, 0, 0, 1, 0, 1, 1);
    EXPECT_NEAR(c0.value(), 6.0, 1e-14);
    EXPECT_EQ(c0.c_small_p, 0.0);
    const auto c2 = theorem_constant(1, 0, 0, 2, 0, 1, 1);
    EXPECT_NEAR(c2.value(), 24.0, 1e-13);
    const auto a = theorem_constant(1, 0.0, 0.3, 1.0, 0.2, 1.5, 1);
    const auto b = theorem_constant(1, 0.0, 0.3, 3.0, 0.2, 1.5, 1);
    EXPECT_NEAR(b.log_value - a.log_value, std::log(9.0), 1e-12);
    // L_b only: 6 C_G exp(6 T^2 L_b^2)
    EXPECT_NEAR(theorem_constant(1, 0, 0.2, 1, 0, 1, 1).log_value, std::log(6.0) + 6 * 0.04, 1e-14);
}

TEST(TheoremConstant, FullCaseComposesSmallPConstant) {
    const auto c = theorem_constant(1, 1, 1, 1, 0.0, 1, 1);
    const double small = c_T_p_eta_eps(1, 2, 0.0, 1.0 / 6.0, 1, 1.0).value();
    EXPECT_TRUE(std::isfinite(small));
    EXPECT_NEAR(c.c_small_p, small, 1e-12 * small);
    EXPECT_NEAR(c.log_value, std::log(6.0) + 6.0 * (small + 1.0), 1e-9 * c.log_value);
    EXPECT_GT(c.log_value, 0.0);
}

TEST(ConstantsReport, PopulatesEveryField) {
    ConstantsInput in;
    in.p = 9;  // threshold is 5/0.7
    in.l_sigma = 1;
    const auto r = constants_report(SpectralMeasure::riesz(1, 0.5, 0.3), in);
    ASSERT_TRUE(r.alpha_star.has_value());
    EXPECT_GT(*r.alpha_star, r.window.lo);
    EXPECT_LT(*r.alpha_star, r.window.hi);
    ASSERT_TRUE(r.log_c_T_p_eta && r.log_c_T_p_eta_bound);
    EXPECT_LE(*r.log_c_T_p_eta, *r.log_c_T_p_eta_bound);
    EXPECT_NEAR(*r.log_c_prime + *r.log_c_double_prime, *r.log_c_T_p_eta, 1e-12);
    EXPECT_TRUE(r.log_c_T_p_eta_eps.has_value());
    EXPECT_GT(r.c_G_T_eta, 0.0);
    // p below the threshold leaves the sup-moment constants unset
    in.p = 5;
    const auto s = constants_report(SpectralMeasure::point_mass(1, 0.0), in);
    EXPECT_FALSE(s.alpha_star.has_value());
    EXPECT_THROW(constants_report(SpectralMeasure::riesz(1, 0.5, 0.3), [] {
        ConstantsInput i;
        i.T = -1;
        return i;
    }()), std::domain_error);
}
