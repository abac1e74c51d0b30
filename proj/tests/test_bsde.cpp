#include "blq/bsde.hpp"
#include "blq/errors.hpp"
#include "blq/pipeline.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

namespace {

using namespace blq;
using blq::testing::problem_file;
using blq::testing::scalar_problem;

std::shared_ptr<const Filtration> regression(const ProblemInstance& p, int steps, int paths, std::uint64_t seed = 1) {
    SolveConfig cfg;
    cfg.steps = steps;
    cfg.paths = paths;
    cfg.seed = seed;
    return make_filtration(p, cfg);
}

std::shared_ptr<const Filtration> lattice(const ProblemInstance& p, int steps) {
    SolveConfig cfg;
    cfg.steps = steps;
    cfg.filtration = FiltrationKind::lattice;
    return make_filtration(p, cfg);
}

ControlProcess random_control(const Filtration& f, int m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    ControlProcess u = zero_control(f, m);
    for (auto& level : u.u) level = Field::NullaryExpr(level.rows(), level.cols(), [&]() { return n(rng); });
    return u;
}

double max_abs(const Process& p) {
    double out = 0.0;
    for (const auto& level : p) out = std::max(out, level.cwiseAbs().maxCoeff());
    return out;
}

TEST(StateEquation, ForcedConstantSolutionOfWorkedExample) {
    const ProblemInstance p = load_problem(problem_file("worked_example.json"));
    const auto f = regression(p, 50, 2000);
    const BackwardSolution s = solve_state_bsde(p, *f, zero_control(*f, 1), terminal_field(p, *f));
    for (const auto& y : s.Y) EXPECT_LE((y.array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_LE(max_abs(s.Z), 1e-12);
}

TEST(StateEquation, ExponentialDecayWithConstantDrift) {
    const double a = 0.8;
    const ProblemInstance p = scalar_problem("0.8", "1", "0", "0", "1", "1", "0");
    double previous = 0.0;
    for (int steps : {50, 100, 200}) {
        const auto g = regression(p, steps, 50);
        const BackwardSolution s = solve_state_bsde(p, *g, zero_control(*g, 1), terminal_field(p, *g));
        double err = 0.0;
        for (int k = 0; k <= steps; ++k)
            err = std::max(err, std::abs(s.Y[static_cast<std::size_t>(k)](0, 0) -
                                         std::exp(-a * (1.0 - g->grid().time(k)))));
        EXPECT_LE(err, 1.0 / steps);
        if (previous > 0.0) EXPECT_NEAR(previous / err, 2.0, 0.1);  // first order in dt
        previous = err;
    }
}

TEST(StateEquation, MartingaleRepresentationOfTerminalBrownian) {
    const ProblemInstance p = scalar_problem("0", "0", "0", "0", "1", "1", "0", "w");
    const auto f = regression(p, 20, 20000);
    const BackwardSolution s = solve_state_bsde(p, *f, zero_control(*f, 1), terminal_field(p, *f));
    for (int k = 0; k < 20; ++k) {
        const auto level = static_cast<std::size_t>(k);
        const Field diff = s.Y[level] - Field(f->w(k));
        EXPECT_LE(std::sqrt(diff.squaredNorm() / 20000.0), 0.02) << k;
        EXPECT_NEAR(s.Z[level].mean(), 1.0, 0.03) << k;
    }
    // The tree gives the representation exactly.
    const auto t = lattice(p, 8);
    const BackwardSolution e = solve_state_bsde(p, *t, zero_control(*t, 1), terminal_field(p, *t));
    for (int k = 0; k < 8; ++k) {
        EXPECT_LE((e.Y[static_cast<std::size_t>(k)] - Field(t->w(k))).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((e.Z[static_cast<std::size_t>(k)].array() - 1.0).abs().maxCoeff(), 1e-12);
    }
}

TEST(StateEquation, TerminalValueIsExact) {
    const ProblemInstance p = scalar_problem("0.3", "1", "0.2", "0", "1", "1", "0", "w^2/(1+w^2)");
    const auto f = regression(p, 10, 500);
    const Field xi = terminal_field(p, *f);
    const BackwardSolution s = solve_state_bsde(p, *f, random_control(*f, 1, 3), xi);
    EXPECT_TRUE((s.Y.back().array() == xi.array()).all());
}

TEST(StateEquation, LinearInDataAndControl) {
    const ProblemInstance p = scalar_problem("0.5*s", "1/(1+w^2)", "0.3", "0", "1", "1", "0", "w");
    const auto f = regression(p, 12, 800);
    const Field xi1 = terminal_field(p, *f);
    const Field xi2 = xi1.array().square().matrix();
    const ControlProcess u1 = random_control(*f, 1, 1), u2 = random_control(*f, 1, 2);
    const double a = 1.7, b = -0.6;
    const BackwardSolution s1 = solve_state_bsde(p, *f, u1, xi1);
    const BackwardSolution s2 = solve_state_bsde(p, *f, u2, xi2);
    const ControlProcess mix = control_axpy(control_axpy(zero_control(*f, 1), a, u1), b, u2);
    const BackwardSolution s = solve_state_bsde(p, *f, mix, a * xi1 + b * xi2);
    for (int k = 0; k <= 12; ++k) {
        const auto level = static_cast<std::size_t>(k);
        EXPECT_LE((s.Y[level] - a * s1.Y[level] - b * s2.Y[level]).cwiseAbs().maxCoeff(), 1e-8);
        if (k < 12) EXPECT_LE((s.Z[level] - a * s1.Z[level] - b * s2.Z[level]).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(StateEquation, GridRefinementIsFirstOrder) {
    // dY = (aY + u) ds, Y(1) = 1, u = 1: Y(0) = (1 + 1/a) e^{-a} - 1/a.
    const double a = 1.0;
    const ProblemInstance p = scalar_problem("1", "1", "0", "0", "1", "1", "0");
    const double exact = (1.0 + 1.0 / a) * std::exp(-a) - 1.0 / a;
    double previous = 0.0;
    for (int steps : {40, 80, 160}) {
        const auto g = regression(p, steps, 20);
        ControlProcess u = zero_control(*g, 1);
        for (auto& level : u.u) level.setOnes();
        const double err = std::abs(solve_state_bsde(p, *g, u, terminal_field(p, *g)).Y[0](0, 0) - exact);
        if (previous > 0.0) EXPECT_NEAR(previous / err, 2.0, 0.15);
        previous = err;
    }
}

TEST(StateEquation, SingularPropagatorIsReported) {
    const ProblemInstance p = scalar_problem("-1", "1", "0", "0", "1", "1", "0");
    SolveConfig cfg;
    cfg.steps = 1;
    cfg.filtration = FiltrationKind::lattice;
    const auto f = make_filtration(p, cfg);
    EXPECT_THROW(solve_state_bsde(p, *f, zero_control(*f, 1), terminal_field(p, *f)), LinearSolveError);
}

TEST(APrioriAudit, ZeroSolutionGivesZero) {
    const ProblemInstance p = scalar_problem("0.2", "1", "0.1", "0", "1", "1", "0", "0");
    const auto f = regression(p, 10, 100);
    const Field xi = terminal_field(p, *f);
    const ControlProcess u = zero_control(*f, 1);
    EXPECT_EQ(audit_apriori_estimate(*f, solve_state_bsde(p, *f, u, xi), u, xi), 0.0);
}

TEST(APrioriAudit, WorkedExampleRatioIsOne) {
    const ProblemInstance p = load_problem(problem_file("worked_example.json"));
    const auto f = regression(p, 50, 1000);
    const Field xi = terminal_field(p, *f);
    const ControlProcess u = zero_control(*f, 1);
    EXPECT_NEAR(audit_apriori_estimate(*f, solve_state_bsde(p, *f, u, xi), u, xi), 1.0, 0.05);
}

TEST(APrioriAudit, ScaleInvariant) {
    const ProblemInstance p = scalar_problem("0.4", "1/(1+w^2)", "0.5", "0", "1", "1", "0", "1+w");
    const auto f = regression(p, 16, 600);
    const Field xi = terminal_field(p, *f);
    const ControlProcess u = random_control(*f, 1, 5);
    const double base = audit_apriori_estimate(*f, solve_state_bsde(p, *f, u, xi), u, xi);
    const ControlProcess u2 = control_axpy(zero_control(*f, 1), 2.0, u);
    const Field xi2 = 2.0 * xi;
    const double doubled = audit_apriori_estimate(*f, solve_state_bsde(p, *f, u2, xi2), u2, xi2);
    EXPECT_NEAR(doubled, base, 1e-10 * base);
}

TEST(APrioriAudit, NonzeroSolutionWithZeroDataIsDegenerate) {
    const ProblemInstance p = scalar_problem("0", "1", "0", "0", "1", "1", "0", "0");
    const auto f = lattice(p, 3);
    const Field xi = terminal_field(p, *f);
    const ControlProcess u = zero_control(*f, 1);
    BackwardSolution fake = solve_state_bsde(p, *f, u, xi);
    fake.Y[0].setOnes();
    EXPECT_THROW(audit_apriori_estimate(*f, fake, u, xi), DegenerateInputError);
}

TEST(StateEquation, CsvDump) {
    const ProblemInstance p = load_problem(problem_file("worked_example.json"));
    const auto f = lattice(p, 2);
    const BackwardSolution s = solve_state_bsde(p, *f, zero_control(*f, 1), terminal_field(p, *f));
    std::ostringstream out;
    write_backward_csv(out, *f, s, 2);
    EXPECT_EQ(out.str(), "path,k,t,Y_1,Z_1\n0,0,0,1,0\n0,1,0.5,1,0\n0,2,1,1,\n"
                         "1,0,0,1,0\n1,1,0.5,1,0\n1,2,1,1,\n");
}

} // namespace
