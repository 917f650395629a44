#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <sheq/harness.hpp>

using namespace sheq;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

std::vector<std::string> problems_of(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return e.problems();
    }
    return {};
}

bool any_contains(const std::vector<std::string>& v, const std::string& needle) {
    for (const auto& s : v)
        if (s.find(needle) != std::string::npos) return true;
    return false;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("sheq_harness_" + name);
    fs::remove_all(p);
    return p;
}

const char* kSmall = R"(
[measure]
kind = point_mass
d = 1
eta = 0
[solver]
N = 8
M = 16
dt = 0.01
T = 0.5
[coefficients]
sigma = sin
u0 = sine:1
[experiment]
suites = constants, simulate, verify-moments, verify-t2, couple
checks = pointwise, sup, sup-small-p
trials = 1000
seed = 11
p = 6
p_small = 2
probe_t = 0.2
probe_x = 0.3
w2_samples = 32
coupling_trials = 100
[output]
trajectories = 2
)";

}  // namespace

TEST(Config, DefaultsAndComments) {
    const ExperimentConfig c = parse("# nothing but a comment\n[solver]\nN = 4 ; trailing\n");
    EXPECT_EQ(c.solver.N, 4);
    EXPECT_EQ(c.measure.kind, "point_mass");
    EXPECT_EQ(c.suites, std::vector<std::string>{"constants"});
}

TEST(Config, FullParse) {
    const ExperimentConfig c = parse(kSmall);
    EXPECT_EQ(c.solver.seed, 11u);
    EXPECT_EQ(c.solver.d, 1);
    EXPECT_EQ(c.suites.size(), 5u);
    EXPECT_EQ(c.probe_x, std::vector<double>{0.3});
    EXPECT_EQ(c.write_trajectories, 2u);
}

TEST(Config, UnknownKeysAndBadValuesAreAllReported) {
    const auto p = problems_of("[solver]\nN = four\nbogus = 1\n[measure]\nkind = point_mass\ncolour = red\n");
    EXPECT_EQ(p.size(), 3u);
    EXPECT_TRUE(any_contains(p, "solver.N"));
    EXPECT_TRUE(any_contains(p, "unknown key solver.bogus"));
    EXPECT_TRUE(any_contains(p, "unknown key measure.colour"));
}

TEST(Config, MalformedLinesAndDuplicates) {
    const auto p = problems_of("[solver\nN 4\n[solver]\nM = 8\nM = 9\n");
    EXPECT_TRUE(any_contains(p, "line 1"));
    EXPECT_TRUE(any_contains(p, "line 2"));
    EXPECT_TRUE(any_contains(p, "duplicate key solver.M"));
}

TEST(Config, MomentThresholdCitesFive) {
    const auto p = problems_of(
        "[experiment]\nsuites = verify-moments\nchecks = sup\np = 5\n");
    ASSERT_EQ(p.size(), 1u);
    EXPECT_TRUE(any_contains(p, "= 5")) << p[0];
}

TEST(Config, SemanticProblemsAreCollectedTogether) {
    const auto p = problems_of(
        "[measure]\nkind = riesz\nd = 1\nkappa = 1.5\neta = 0.9\n"
        "[experiment]\nsuites = verify-moments, verify-t2, nonsense\nchecks = sup\np = 100\n"
        "trials = 10\ncoupling_trials = 5\nw2_samples = 4096\nprobe_x = 0.5, 0.5\n");
    EXPECT_TRUE(any_contains(p, "kappa"));
    EXPECT_TRUE(any_contains(p, "unknown suite nonsense"));
    EXPECT_TRUE(any_contains(p, "trials must be >= 1000"));
    EXPECT_TRUE(any_contains(p, "coupling_trials"));
    EXPECT_TRUE(any_contains(p, "w2_samples"));
    EXPECT_TRUE(any_contains(p, "probe_x"));
    EXPECT_GE(p.size(), 6u);
}

TEST(Config, RieszNeedsFiniteKEta) {
    const auto p = problems_of("[measure]\nkind = riesz\nkappa = 0.5\neta = 0.2\n");
    ASSERT_EQ(p.size(), 1u);
    EXPECT_TRUE(any_contains(p, "2 eta > kappa"));
    EXPECT_TRUE(problems_of("[measure]\nkind = riesz\nkappa = 0.5\neta = 0.3\n").empty());
}

TEST(Config, FactorizationWindowAndGrid) {
    const auto p = problems_of(
        "[solver]\ndt = 0.01\nT = 1\n[experiment]\nsuites = verify-moments\nchecks = factorization\n"
        "p = 6\nalpha = 0.4\nprobe_t = 0.5\n");
    EXPECT_TRUE(any_contains(p, "alpha"));
    EXPECT_TRUE(any_contains(p, "multiple of 4"));
}

TEST(Config, CanonicalTextAndHash) {
    const ExperimentConfig a = parse(kSmall);
    ExperimentConfig b = parse(kSmall);
    EXPECT_EQ(a.canonical(), b.canonical());
    EXPECT_EQ(a.hash(), b.hash());
    b.solver.seed = 12;
    EXPECT_NE(a.hash(), b.hash());
    // output location is not part of the experiment
    b = a;
    b.out_dir = "elsewhere";
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Run, AllSuitesWriteDeterministicOutputs) {
    ExperimentConfig c = parse(kSmall);
    const fs::path d1 = scratch("a"), d2 = scratch("b");
    c.out_dir = d1.string();
    const RunManifest m1 = run(c);
    c.out_dir = d2.string();
    const RunManifest m2 = run(c);
    ASSERT_EQ(m1.suites.size(), 5u);
    for (const auto& s : m1.suites) EXPECT_TRUE(s.error.empty()) << s.name << ": " << s.error;
    EXPECT_EQ(m1.text(), m2.text());
    EXPECT_EQ(m1.files, m2.files);
    for (const auto& f : m1.files) {
        ASSERT_TRUE(fs::exists(d1 / f)) << f;
        EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
    }
    EXPECT_EQ(slurp(d1 / "manifest.txt"), m1.text());
    EXPECT_NE(m1.text().find("config_hash = " + hex64(c.hash())), std::string::npos);
    // trajectory files round-trip
    std::ifstream is(d1 / "trajectory_1.bin", std::ios::binary);
    const Trajectory t = read_trajectory(is);
    EXPECT_EQ(t.config_hash, c.hash());
    EXPECT_EQ(t.M, 16);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST(Run, ThreadCountDoesNotChangeBytes) {
    ExperimentConfig c = parse(kSmall);
    c.suites = {"simulate", "verify-t2"};
    const fs::path d1 = scratch("t1"), d2 = scratch("t3");
    setenv("SHEQ_THREADS", "1", 1);
    c.out_dir = d1.string();
    const RunManifest m1 = run(c);
    setenv("SHEQ_THREADS", "3", 1);
    c.out_dir = d2.string();
    const RunManifest m2 = run(c);
    unsetenv("SHEQ_THREADS");
    EXPECT_EQ(m1.text(), m2.text());
    for (const auto& f : m1.files) EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST(Run, SuiteErrorsAreRecordedNotThrown) {
    ExperimentConfig c = parse(kSmall);
    c.suites = {"verify-t2"};
    c.drift_direction = 5;  // point-mass Gram has rank one
    const fs::path d = scratch("err");
    c.out_dir = d.string();
    const RunManifest m = run(c);
    ASSERT_EQ(m.suites.size(), 1u);
    EXPECT_FALSE(m.suites[0].pass);
    EXPECT_NE(m.suites[0].error.find("rank"), std::string::npos);
    EXPECT_FALSE(m.pass());
    fs::remove_all(d);
}

TEST(Run, InvalidConfigRefusedBeforeAnyOutput) {
    ExperimentConfig c = parse(kSmall);
    c.p = 2.0;
    const fs::path d = scratch("invalid");
    c.out_dir = d.string();
    EXPECT_THROW(run(c), ConfigError);
    EXPECT_FALSE(fs::exists(d));
}

TEST(Run, CostMatrixDumpAndHalfSampleW2) {
    ExperimentConfig c = parse(std::string(kSmall) + "cost_matrix = 1\n");
    EXPECT_TRUE(c.write_cost_matrix);
    c.suites = {"verify-t2"};
    const fs::path d = scratch("cost");
    c.out_dir = d.string();
    const RunManifest m = run(c);
    ASSERT_TRUE(fs::exists(d / "cost_matrix.csv"));
    std::ifstream is(d / "cost_matrix.csv");
    std::string line;
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 1 + 32 * 32);
    bool half = false, tail = false;
    for (const auto& [k, v] : m.suites[0].values) {
        half = half || k == "w2_half_sample";
        tail = tail || k == "gram_tail_ratio";
    }
    EXPECT_TRUE(half);
    EXPECT_TRUE(tail);
    EXPECT_TRUE(any_contains(problems_of("[output]\ncost_matrix = maybe\n"), "output.cost_matrix"));
    fs::remove_all(d);
}
