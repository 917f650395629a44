#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include <sheq/solver.hpp>

using namespace sheq;

namespace {

SimulationConfig small_config(int N = 8, double dt = 1e-3, double T = 0.1) {
    SimulationConfig c;
    c.N = N;
    c.M = 2 * N;
    c.dt = dt;
    c.T = T;
    return c;
}

// Crank-Nicolson for u_t = u_xx + c on (0,1), zero boundary, zero initial data.
std::vector<double> crank_nicolson_forced(int n, double dt, double T, double c) {
    const double h = 1.0 / (n + 1), r = dt / (h * h);
    std::vector<double> u(n, 0.0), rhs(n), cp(n), dp(n);
    const int steps = static_cast<int>(std::llround(T / dt));
    for (int s = 0; s < steps; ++s) {
        for (int i = 0; i < n; ++i) {
            const double l = i > 0 ? u[i - 1] : 0.0, rt = i + 1 < n ? u[i + 1] : 0.0;
            rhs[i] = u[i] + 0.5 * r * (l - 2 * u[i] + rt) + dt * c;
        }
        // Thomas solve of (1 + r) u_i - r/2 (u_{i-1} + u_{i+1}) = rhs_i
        const double a = -0.5 * r, b = 1 + r;
        cp[0] = a / b;
        dp[0] = rhs[0] / b;
        for (int i = 1; i < n; ++i) {
            const double m = b - a * cp[i - 1];
            cp[i] = a / m;
            dp[i] = (rhs[i] - a * dp[i - 1]) / m;
        }
        u[n - 1] = dp[n - 1];
        for (int i = n - 2; i >= 0; --i) u[i] = dp[i] - cp[i] * u[i + 1];
    }
    return u;
}

double eval_modes(const Eigen::VectorXd& a, double x) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < a.size(); ++k) s += a[k] * sine_mode(static_cast<int>(k) + 1, x);
    return s;
}

}  // namespace

TEST(ParseFunction, SpecsAndConstants) {
    const auto z = parse_function("zero");
    EXPECT_TRUE(z.constant);
    EXPECT_EQ(z(3.0), 0.0);
    const auto c = parse_function("const:2.5");
    EXPECT_TRUE(c.constant);
    EXPECT_EQ(c.value, 2.5);
    EXPECT_EQ(c.bound, 2.5);
    const auto s = parse_function("sin:0.5");
    EXPECT_EQ(s.lipschitz, 0.5);
    EXPECT_NEAR(s(1.0), 0.5 * std::sin(1.0), 1e-16);
    EXPECT_EQ(parse_function("sin").lipschitz, 1.0);
    EXPECT_TRUE(std::isinf(parse_function("linear:2").bound));
    EXPECT_EQ(parse_function("clamp:3")(10.0), 3.0);
    EXPECT_THROW(parse_function("cos"), std::invalid_argument);
    EXPECT_THROW(parse_function("const:abc"), std::invalid_argument);
    EXPECT_THROW(parse_function("const"), std::invalid_argument);
    EXPECT_THROW(parse_function("clamp:-1"), std::invalid_argument);
}

TEST(SpotCheck, DeclaredConstantsHoldOrFail) {
    EXPECT_TRUE(spot_check(CoefficientSpec::make("sin:2", "tanh:0.5")));
    EXPECT_TRUE(spot_check(CoefficientSpec::make("clamp:1", "linear:-3")));
    auto bad = CoefficientSpec::make("sin", "zero");
    bad.sigma.lipschitz = 0.5;
    EXPECT_FALSE(spot_check(bad));
    bad = CoefficientSpec::make("tanh:2", "zero");
    bad.sigma.bound = 1.0;
    EXPECT_FALSE(spot_check(bad));
}

TEST(SimulationConfig, ProblemsListed) {
    SimulationConfig c;
    c.M = 10;
    c.dt = 0.3;
    c.trials = 0;
    const auto p = c.problems();
    EXPECT_EQ(p.size(), 3u);
    EXPECT_THROW(c.validate(), std::invalid_argument);
    EXPECT_TRUE(SimulationConfig{}.problems().empty());
}

TEST(Simulate, LinearDecayIsExact) {
    const HGram gram = build_gram(SpectralMeasure::point_mass(1, 0.0), 8);
    for (double dt : {1e-3, 5e-2}) {
        SimulationConfig cfg = small_config(8, dt, 0.5);
        const Galerkin g(cfg, gram);
        Eigen::VectorXd a0 = Eigen::VectorXd::Zero(8);
        a0[0] = 1.0;
        Rng rng(1);
        const Trajectory tr = simulate(g, CoefficientSpec::make("zero", "zero"), a0, rng);
        for (std::size_t s = 0; s < tr.snapshots(); ++s) {
            // repeated products of e^{-lambda dt} against one exponential: rounding only
            EXPECT_NEAR(tr.coeffs[s][0], std::exp(-kPi2 * tr.times[s]), 1e-13);
            EXPECT_EQ(tr.coeffs[s].tail(7).cwiseAbs().maxCoeff(), 0.0);
            for (int i = 0; i < cfg.M; ++i) {
                const double x = g.transform().grid_point(i);
                EXPECT_NEAR(tr.grid(static_cast<Eigen::Index>(s), i), std::exp(-kPi2 * tr.times[s]) * sine_mode(1, x), 1e-13);
            }
        }
    }
}

TEST(Simulate, ConstantForcingMatchesCrankNicolson) {
    SimulationConfig cfg;
    cfg.N = 32;
    cfg.M = 64;
    cfg.dt = 1e-4;
    cfg.T = 0.5;
    cfg.store_grid = false;
    const HGram gram = build_gram(SpectralMeasure::point_mass(1, 0.0), 32);
    const Galerkin g(cfg, gram);
    Rng rng(1);
    const double c = 1.0;
    const Trajectory tr = simulate(g, CoefficientSpec::make("zero", "const:1"), Eigen::VectorXd::Zero(32), rng);
    const int n = 512;
    const auto ref = crank_nicolson_forced(n, 1e-5, cfg.T, c);
    double err = 0.0;
    for (int i = 0; i < n; ++i) err = std::max(err, std::abs(eval_modes(tr.coeffs.back(), (i + 1.0) / (n + 1)) - ref[i]));
    EXPECT_LT(err, 1e-4);
}

TEST(Simulate, PerModeVarianceMatchesRecursion) {
    const HGram gram = build_gram(SpectralMeasure::point_mass(1, 0.0), 8);
    SimulationConfig cfg = small_config(8, 1e-3, 0.1);
    cfg.store_grid = false;
    cfg.stride = 100;
    const Galerkin g(cfg, gram);
    const int trials = 10000;
    std::vector<double> s1(8, 0.0), s2(8, 0.0);
    for (int t = 0; t < trials; ++t) {
        Rng rng = Rng::stream(42, t);
        const Trajectory tr = simulate(g, CoefficientSpec::make("const:1", "zero"), Eigen::VectorXd::Zero(8), rng);
        const auto& a = tr.coeffs.back();
        for (int k = 0; k < 8; ++k) {
            s1[k] += a[k];
            s2[k] += a[k] * a[k];
        }
    }
    for (int k = 0; k < 8; ++k) {
        const double lam = kPi2 * (k + 1) * (k + 1);
        double expect = 0.0;
        for (int K = 1; K <= cfg.steps(); ++K) expect += std::exp(-2 * lam * K * cfg.dt) * gram.matrix()(k, k) * cfg.dt;
        const double mean = s1[k] / trials, var = s2[k] / trials - mean * mean;
        if (expect == 0.0) {
            EXPECT_EQ(var, 0.0) << "mode " << k + 1;
            continue;
        }
        const double se = expect * std::sqrt(2.0 / (trials - 1));
        EXPECT_NEAR(var, expect, 4 * se) << "mode " << k + 1;
        EXPECT_NEAR(mean, 0.0, 4 * std::sqrt(expect / trials));
    }
}

TEST(Simulate, BlowUpAbortsWithStep) {
    const HGram gram = build_gram(SpectralMeasure::point_mass(1, 0.0), 4);
    SimulationConfig cfg = small_config(4, 0.05, 5.0);
    const Galerkin g(cfg, gram);
    Rng rng(1);
    Eigen::VectorXd a0 = Eigen::VectorXd::Constant(4, 1.0);
    try {
        simulate(g, CoefficientSpec::make("zero", "linear:2000"), a0, rng);
        FAIL() << "expected BlowUp";
    } catch (const BlowUp& e) {
        EXPECT_GT(e.step(), 0);
        EXPECT_LE(e.step(), cfg.steps());
    }
}

TEST(Simulate, DeterministicGivenStream) {
    const HGram gram = build_gram(SpectralMeasure::riesz(1, 0.5, 0.3), 8);
    const Galerkin g(small_config(), gram);
    const auto coeffs = CoefficientSpec::make("sin", "tanh:0.5");
    Eigen::VectorXd a0 = Eigen::VectorXd::Zero(8);
    a0[0] = 0.5;
    Rng r1 = Rng::stream(7, 3), r2 = Rng::stream(7, 3);
    const Trajectory t1 = simulate(g, coeffs, a0, r1), t2 = simulate(g, coeffs, a0, r2);
    EXPECT_EQ(sup_metric(t1, t2), 0.0);
    Rng r3 = Rng::stream(7, 4);
    EXPECT_GT(sup_metric(t1, simulate(g, coeffs, a0, r3)), 0.0);
}

TEST(Simulate, StoredGridIsInverseTransform) {
    const HGram gram = build_gram(SpectralMeasure::riesz(1, 0.5, 0.3), 8);
    const Galerkin g(small_config(), gram);
    Rng rng(2);
    const Trajectory tr = simulate(g, CoefficientSpec::make("sin", "zero"), Eigen::VectorXd::Zero(8), rng);
    Trajectory copy = tr;
    copy.grid.resize(0, 0);
    copy.materialize();
    EXPECT_LT((copy.grid - tr.grid).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Simulate, WeakSanityUnderStepHalving) {
    const HGram gram = build_gram(SpectralMeasure::point_mass(1, 0.0), 8);
    auto estimate = [&](double dt) {
        SimulationConfig cfg = small_config(8, dt, 0.2);
        const Galerkin g(cfg, gram);
        const int trials = 2000;
        double s1 = 0, s2 = 0;
        for (int t = 0; t < trials; ++t) {
            Rng rng = Rng::stream(5, t);
            const Trajectory tr = simulate(g, CoefficientSpec::make("const:1", "zero"), Eigen::VectorXd::Zero(8), rng);
            const double m = tr.grid.cwiseAbs().maxCoeff();
            s1 += m;
            s2 += m * m;
        }
        const double mean = s1 / trials;
        return std::make_pair(mean, std::sqrt((s2 / trials - mean * mean) / trials));
    };
    const auto [a, sa] = estimate(2e-3);
    const auto [b, sb] = estimate(1e-3);
    EXPECT_LT(std::abs(a - b), 4 * std::hypot(sa, sb));
}

TEST(Coupled, ZeroDriftGivesIdenticalPaths) {
    const HGram gram = build_gram(SpectralMeasure::riesz(1, 0.5, 0.3), 8);
    const Galerkin g(small_config(), gram);
    Eigen::VectorXd a0 = Eigen::VectorXd::Zero(8);
    a0[0] = 1.0;
    Rng rng(9);
    const auto [u, v] = simulate_coupled(g, CoefficientSpec::make("sin", "tanh"), a0, DriftSpec::zero(gram.rank()), rng);
    EXPECT_EQ(sup_metric(u, v), 0.0);
    for (std::size_t s = 0; s < u.snapshots(); ++s) EXPECT_EQ(std::memcmp(u.coeffs[s].data(), v.coeffs[s].data(), 8 * sizeof(double)), 0);
    // v alone reproduces the plain simulation with the same stream
    Rng r2(9);
    const Trajectory w = simulate(g, CoefficientSpec::make("sin", "tanh"), a0, r2);
    EXPECT_EQ(sup_metric(v, w), 0.0);
}

TEST(Coupled, ConstantDriftAdditiveDifferenceIsDeterministic) {
    const HGram gram = build_gram(SpectralMeasure::riesz(1, 0.5, 0.3), 8);
    SimulationConfig cfg = small_config();
    const Galerkin g(cfg, gram);
    const double amp = 0.7;
    const DriftSpec drift = DriftSpec::unit(gram.rank(), 0, amp);
    // closed-form discrete sum: d_n = sum_{K=1}^{n} e^{-lambda K dt} L c dt
    const Eigen::VectorXd lc = gram.factor().col(0) * amp * cfg.dt;
    for (std::uint64_t seed : {1u, 2u}) {
        Rng rng(seed);
        const auto [u, v] = simulate_coupled(g, CoefficientSpec::make("const:1", "zero"), Eigen::VectorXd::Zero(8), drift, rng);
        for (std::size_t s = 0; s < u.snapshots(); ++s) {
            const int n = static_cast<int>(s);
            for (int k = 0; k < 8; ++k) {
                const double lam = kPi2 * (k + 1) * (k + 1);
                double expect = 0.0;
                for (int K = 1; K <= n; ++K) expect += std::exp(-lam * K * cfg.dt) * lc[k];
                EXPECT_NEAR(u.coeffs[s][k] - v.coeffs[s][k], expect, 1e-10);
            }
        }
    }
}

TEST(Coupled, RejectsMismatchedDrift) {
    const HGram gram = build_gram(SpectralMeasure::riesz(1, 0.5, 0.3), 8);
    const Galerkin g(small_config(), gram);
    Rng rng(1);
    EXPECT_THROW(simulate_coupled(g, CoefficientSpec::make("sin", "zero"), Eigen::VectorXd::Zero(8),
                                  DriftSpec::zero(gram.rank() + 1), rng),
                 std::invalid_argument);
    EXPECT_THROW(DriftSpec::unit(3, 3), std::out_of_range);
}

TEST(DriftSpec, NormIsSumOfSquares) {
    Eigen::VectorXd c(3);
    c << 1.0, -2.0, 0.5;
    const DriftSpec d = DriftSpec::constant(c);
    EXPECT_EQ(d.h_norm2(0), 5.25);
    EXPECT_EQ(d.scaled(2.0).h_norm2(7), 21.0);
    EXPECT_TRUE(DriftSpec::zero(4).is_zero());
    EXPECT_FALSE(d.is_zero());
}

TEST(SupMetric, ShiftSymmetryTriangle) {
    const HGram gram = build_gram(SpectralMeasure::point_mass(1, 0.0), 4);
    const Galerkin g(small_config(4, 0.01, 0.05), gram);
    auto draw = [&](std::uint64_t s) {
        Rng rng(s);
        return simulate(g, CoefficientSpec::make("const:1", "zero"), Eigen::VectorXd::Zero(4), rng);
    };
    const Trajectory a = draw(1);
    EXPECT_EQ(sup_metric(a, a), 0.0);
    Trajectory shifted = a;
    shifted.grid.array() += 0.37;
    EXPECT_NEAR(sup_metric(a, shifted), 0.37, 1e-15);
    for (std::uint64_t s = 2; s < 12; s += 3) {
        const Trajectory b = draw(s), c = draw(s + 1);
        EXPECT_EQ(sup_metric(a, b), sup_metric(b, a));
        EXPECT_LE(sup_metric(a, c), sup_metric(a, b) + sup_metric(b, c) + 1e-15);
    }
    Trajectory other = draw(2);
    other.times.pop_back();
    EXPECT_THROW(sup_metric(a, other), std::invalid_argument);
}

TEST(ProjectInitial, UnitModeZeroAndRoundTrip) {
    const int M = 16, P = M + 2;
    const double h = 1.0 / (M + 1);
    Eigen::VectorXd s(P);
    for (int i = 0; i < P; ++i) s[i] = sine_mode(1, i * h);
    s[P - 1] = 0.0;
    const Eigen::VectorXd a = project_initial(s, 1, M);
    EXPECT_NEAR(a[0], 1.0, 1e-14);
    EXPECT_LT(a.tail(M - 1).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_TRUE(project_initial(Eigen::VectorXd::Zero(P), 1, M).isZero());

    Rng rng(4);
    for (int d : {1, 2}) {
        const int n = d == 1 ? P : P * P;
        Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
        for (int i = 1; i <= M; ++i) {
            if (d == 1) r[i] = rng.normal();
            else
                for (int j = 1; j <= M; ++j) r[i * P + j] = rng.normal();
        }
        const Eigen::VectorXd c = project_initial(r, d, M);
        EXPECT_LT((inverse_sine_transform(c, d, M) - r).cwiseAbs().maxCoeff(), 1e-12);
        // Parseval: h^d sum u^2 = sum a^2
        EXPECT_NEAR(std::pow(h, d) * r.squaredNorm(), c.squaredNorm(), 1e-10 * c.squaredNorm());
    }
}

TEST(ProjectInitial, RejectsNonzeroBoundary) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(10);
    s[0] = 1e-3;
    EXPECT_THROW(project_initial(s, 1, 8), std::domain_error);
    Eigen::VectorXd s2 = Eigen::VectorXd::Zero(100);
    s2[5] = 1.0;  // (0, 5) on the edge
    EXPECT_THROW(project_initial(s2, 2, 8), std::domain_error);
    EXPECT_THROW(project_initial(Eigen::VectorXd::Zero(9), 1, 8), std::invalid_argument);
}

TEST(InitialCoefficients, SineFieldTruncates) {
    SimulationConfig cfg = small_config(8);
    const Eigen::VectorXd a = initial_coefficients(cfg, [](const Point& x) { return 2.0 * sine_mode(3, x[0]); });
    ASSERT_EQ(a.size(), 8);
    EXPECT_NEAR(a[2], 2.0, 1e-13);
    cfg.d = 2;
    const Eigen::VectorXd b = initial_coefficients(cfg, [](const Point& x) { return sine_mode(1, x[0]) * sine_mode(2, x[1]); });
    ASSERT_EQ(b.size(), 64);
    EXPECT_NEAR(b[1], 1.0, 1e-13);
    EXPECT_NEAR(b.norm(), 1.0, 1e-13);
}

TEST(SineTransform, TwoDimensionalSynthesisAnalysis) {
    const SineTransform st(2, 4, 8);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(16);
    a[1 * 4 + 2] = 1.0;  // k = (2, 3)
    const Eigen::VectorXd u = st.synthesize(a);
    EXPECT_NEAR(u[3 * 8 + 5], sine_mode(2, st.grid_point(3)) * sine_mode(3, st.grid_point(5)), 1e-14);
    EXPECT_LT((st.analyze(u) - a).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(TrajectoryIo, BinaryRoundTripAndCsv) {
    const HGram gram = build_gram(SpectralMeasure::riesz(1, 0.5, 0.3), 8);
    SimulationConfig cfg = small_config();
    cfg.stride = 10;
    const Galerkin g(cfg, gram);
    Rng rng(3);
    Trajectory tr = simulate(g, CoefficientSpec::make("sin", "zero"), Eigen::VectorXd::Zero(8), rng, 17);
    tr.config_hash = 0xabcdefULL;
    EXPECT_EQ(tr.snapshots(), 11u);
    std::stringstream ss;
    write_trajectory(ss, tr);
    Trajectory back = read_trajectory(ss);
    EXPECT_EQ(back.stream, 17u);
    EXPECT_EQ(back.config_hash, 0xabcdefULL);
    EXPECT_EQ(back.times, tr.times);
    for (std::size_t s = 0; s < tr.snapshots(); ++s)
        EXPECT_EQ(std::memcmp(back.coeffs[s].data(), tr.coeffs[s].data(), 8 * sizeof(double)), 0);
    EXPECT_LT(sup_metric(back, tr), 1e-13);

    std::stringstream csv;
    write_trajectory_csv(csv, tr);
    std::string line;
    int rows = 0;
    std::getline(csv, line);
    EXPECT_EQ(line, "t,x,u");
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 11 * cfg.M);

    std::stringstream bad("SHEQGRAM");
    EXPECT_THROW(read_trajectory(bad), std::runtime_error);
}
