#include "blq/decoupler.hpp"
#include "blq/pipeline.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace {

using namespace blq;
using blq::testing::problem_file;
using blq::testing::scalar_problem;
using blq::testing::unit_scalar;

double max_abs(const Process& p) {
    double out = 0.0;
    for (const auto& level : p) out = std::max(out, level.size() ? level.cwiseAbs().maxCoeff() : 0.0);
    return out;
}

double max_dev(const Process& p, double value) {
    double out = 0.0;
    for (const auto& level : p) out = std::max(out, (level.array() - value).abs().maxCoeff());
    return out;
}

SolveOutcome solve_on(const ProblemInstance& p, FiltrationKind kind, int steps, int paths = 2000) {
    SolveConfig cfg;
    cfg.steps = steps;
    cfg.paths = paths;
    cfg.filtration = kind;
    return run_solve(p, cfg);
}

TEST(Decoupler, WorkedExampleHasTheConstantSolution) {
    const ProblemInstance p = load_problem(problem_file("worked_example.json"));
    const SolveOutcome s = solve_on(p, FiltrationKind::regression, 50);
    EXPECT_LE(max_dev(s.aux.phi, -1.0), 1e-10);
    EXPECT_LE(max_abs(s.aux.beta), 1e-10);
    EXPECT_LE(max_abs(s.forward.X), 1e-12);
    EXPECT_LE(max_abs(s.triple.u.u), 1e-12);
    EXPECT_LE(max_dev(s.triple.state.Y, 1.0), 1e-10);
    EXPECT_LE(max_abs(s.triple.state.Z), 1e-10);
    EXPECT_EQ(s.decoupling, 0.0);
}

TEST(Decoupler, ZeroTerminalStateGivesZeroAuxiliary) {
    const ProblemInstance p = scalar_problem("0.3", "1/(1+w^2)", "0.2", "0.5", "1", "1", "1", "0");
    const SolveOutcome s = solve_on(p, FiltrationKind::regression, 20, 1000);
    EXPECT_EQ(max_abs(s.aux.phi), 0.0);
    EXPECT_EQ(max_abs(s.aux.beta), 0.0);
    // With phi = 0 the forward pass starts from zero and stays there.
    EXPECT_EQ(max_abs(s.forward.X), 0.0);
    EXPECT_EQ(max_abs(s.triple.state.Y), 0.0);
    EXPECT_EQ(max_abs(s.triple.u.u), 0.0);
}

TEST(Decoupler, TerminalWeightOneSplitsTheEffort) {
    // J = Y(0)^2 + int u^2 with dY = u ds, Y(1) = 1: the optimum is u = 1/2, Y(0) = 1/2.
    const ProblemInstance p = unit_scalar("1");
    const SolveOutcome s = solve_on(p, FiltrationKind::lattice, 10);
    EXPECT_LE(max_dev(s.forward.X, 0.5), 1e-12);
    EXPECT_LE(max_dev(s.triple.u.u, 0.5), 1e-12);
    EXPECT_NEAR(s.triple.state.Y[0](0, 0), 0.5, 1e-12);
    const double dt = s.filtration->dt();
    for (int k = 0; k <= 10; ++k)
        EXPECT_NEAR(s.triple.state.Y[static_cast<std::size_t>(k)](0, 0), 1.0 - 0.5 * (1.0 - k * dt), 1e-12);
    const ResidualReport r = fbsde_residuals(p, *s.filtration, s.triple, s.xi);
    EXPECT_LE(r.initial_rms, 1e-10);
}

TEST(Decoupler, NoControlChannelGivesZeroControl) {
    const ProblemInstance p = scalar_problem("0.4", "0", "0.3", "1", "1", "1", "1", "1+w");
    const SolveOutcome s = solve_on(p, FiltrationKind::regression, 20, 1000);
    EXPECT_EQ(max_abs(s.triple.u.u), 0.0);
}

TEST(Decoupler, AuxiliaryRepresentsTheTerminalBrownian) {
    // B = 0 gives Sigma = 0, so phi is the conditional mean of -W(T).
    const ProblemInstance p = scalar_problem("0", "0", "0", "0", "1", "1", "0", "w");
    const SolveOutcome s = solve_on(p, FiltrationKind::lattice, 8);
    for (int k = 0; k <= 8; ++k)
        EXPECT_LE((s.aux.phi[static_cast<std::size_t>(k)] + Field(s.filtration->w(k))).cwiseAbs().maxCoeff(), 1e-12);
    // beta carries the martingale part with the sign convention beta = -E[(f - E f) dW] / dt.
    EXPECT_LE(max_dev(s.aux.beta, 1.0), 1e-12);

    const SolveOutcome r = solve_on(p, FiltrationKind::regression, 10, 20000);
    for (int k = 0; k < 10; ++k) EXPECT_NEAR(r.aux.beta[static_cast<std::size_t>(k)].mean(), 1.0, 0.05) << k;
}

TEST(Residuals, ExactOnTheWorkedExample) {
    const ProblemInstance p = load_problem(problem_file("worked_example.json"));
    const SolveOutcome s = solve_on(p, FiltrationKind::regression, 50);
    const ResidualReport r = fbsde_residuals(p, *s.filtration, s.triple, s.xi);
    EXPECT_LE(r.backward_rms, 1e-8);
    EXPECT_LE(r.forward_rms, 1e-8);
    EXPECT_LE(r.terminal_rms, 1e-12);
    EXPECT_LE(r.initial_rms, 1e-12);
}

TEST(Residuals, ShiftedStateIsDetected) {
    const ProblemInstance p = load_problem(problem_file("worked_example.json"));
    const SolveOutcome s = solve_on(p, FiltrationKind::regression, 20, 500);
    OptimalTriple shifted = s.triple;
    for (auto& y : shifted.state.Y) y.array() += 1.0;
    const ResidualReport r = fbsde_residuals(p, *s.filtration, shifted, s.xi);
    EXPECT_NEAR(r.terminal_rms, 1.0, 1e-12);
    EXPECT_GE(decoupling_residual(p, *s.filtration, s.riccati.sigma, s.aux, shifted), 1.0 - 1e-12);
}

ProblemInstance two_dimensional() {
    nlohmann::json j = blq::testing::scalar_json("0", "1", "0", "0", "1", "1", "0");
    j["n"] = 2;
    j["m"] = 1;
    j["A"] = blq::testing::rows({{"0.3", "-0.5"}, {"0.2", "0.1"}});
    j["B"] = blq::testing::rows({{"1"}, {"0.5"}});
    j["C"] = blq::testing::rows({{"0.4", "0"}, {"-0.3", "0.2"}});
    j["Q"] = blq::testing::rows({{"1", "0.2"}, {"0.2", "0.5"}});
    j["N"] = blq::testing::rows({{"1", "0"}, {"0", "1"}});
    j["G"] = blq::testing::rows({{"0.5", "0"}, {"0", "0.5"}});
    j["xi"] = nlohmann::json::array({"1+w", "w^2"});
    j["delta"] = 0.5;
    return problem_from_json(j);
}

TEST(Residuals, EulerDefectsShrinkUnderRefinement) {
    const ProblemInstance p = two_dimensional();
    ResidualReport previous;
    for (int steps : {5, 10, 20}) {
        SolveConfig cfg;
        cfg.steps = steps;
        cfg.filtration = FiltrationKind::lattice;
        cfg.route = Route::markov;
        const SolveOutcome s = run_solve(p, cfg);
        const ResidualReport r = fbsde_residuals(p, *s.filtration, s.triple, s.xi);
        EXPECT_LE(r.terminal_rms, 1e-10);
        EXPECT_LE(r.initial_rms, 1e-10);
        EXPECT_EQ(s.decoupling, 0.0);
        EXPECT_GT(max_abs(s.triple.u.u), 0.01);
        if (steps > 5) {
            EXPECT_LT(r.backward_rms, previous.backward_rms / 1.9) << steps;
            EXPECT_LT(r.forward_rms, previous.forward_rms / 1.9) << steps;
        }
        previous = r;
    }
}

TEST(Output, TripleCsvLayout) {
    const ProblemInstance p = unit_scalar("1");
    const SolveOutcome s = solve_on(p, FiltrationKind::lattice, 2);
    std::ostringstream out;
    write_triple_csv(out, *s.filtration, s.triple, 1);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "path,k,t,Y_1,Z_1,X_1,u_1");
    std::getline(in, line);
    EXPECT_EQ(line, "0,0,0,0.5,0,0.5,0.5");
    int rows = 1;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 3);
    std::ostringstream control;
    write_control_csv(control, *s.filtration, s.triple.u, 1);
    EXPECT_EQ(control.str().substr(0, 15), "path,k,t,u_1\n0,");
}

} // namespace
