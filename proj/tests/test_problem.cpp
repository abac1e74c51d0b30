#include "blq/errors.hpp"
#include "blq/problem.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace {

using namespace blq;
using blq::testing::problem_file;
using blq::testing::scalar_json;
using blq::testing::scalar_problem;

std::vector<SamplePoint> grid_on(double lo, double hi, int count) {
    std::vector<SamplePoint> out;
    for (int i = 0; i < count; ++i) out.emplace_back(0.5, lo + (hi - lo) * i / (count - 1));
    return out;
}

TEST(Coefficients, ConstantMatrix) {
    Mat v(1, 1);
    v << 2.0;
    const CoefficientExpr e = CoefficientExpr::constant(v);
    EXPECT_TRUE(e.is_constant());
    EXPECT_EQ(e.evaluate(0.1, 3.0)(0, 0), 2.0);
    EXPECT_EQ(e.evaluate(0.9, -1.0)(0, 0), 2.0);
}

TEST(Coefficients, WorkedExampleValues) {
    const ProblemInstance p = load_problem(problem_file("worked_example.json"));
    const Coefficients c = p.coefficients(0.3, 0.0);
    EXPECT_DOUBLE_EQ(c.B(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(c.N(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(p.coefficients(0.0, 1.0).R(0, 0), 1.5);
    EXPECT_FALSE(p.is_deterministic());
    EXPECT_DOUBLE_EQ(p.terminal_state(0.7)(0), 1.0);
}

TEST(Coefficients, DeclaredSymmetricExpressionsEvaluateSymmetric) {
    nlohmann::json j = scalar_json("0", "1", "0", "0", "1", "1", "0");
    j["n"] = 2;
    j["A"] = blq::testing::rows({{"0", "0"}, {"0", "0"}});
    j["B"] = blq::testing::rows({{"1"}, {"w/(1+w^2)"}});
    j["C"] = blq::testing::rows({{"0", "0"}, {"0", "0"}});
    j["Q"] = blq::testing::rows({{"1/(1+w^2)", "s*w/(3+w^2)"}, {"s*w/(3+w^2)", "1"}});
    j["N"] = blq::testing::rows({{"2", "0.1*w/(1+w^2)"}, {"0.1*w/(1+w^2)", "2"}});
    j["G"] = blq::testing::rows({{"1", "0"}, {"0", "1"}});
    j["xi"] = nlohmann::json::array({"w", "1"});
    j["lambda"] = 3.0;
    const ProblemInstance p = problem_from_json(j);
    for (double w = -4.0; w <= 4.0; w += 0.25) {
        const Coefficients c = p.coefficients(0.6, w);
        EXPECT_LE((c.Q - c.Q.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((c.N - c.N.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    }
    EXPECT_TRUE(validate_assumptions(p, default_sample_grid(p)).all_ok());
}

TEST(Loading, ShapeAndFieldErrors) {
    nlohmann::json j = scalar_json("0", "1", "0", "0", "1", "1", "0");
    EXPECT_NO_THROW(problem_from_json(j));

    auto broken = j;
    broken["A"] = blq::testing::rows({{"0", "0"}});
    EXPECT_THROW(problem_from_json(broken), ValidationError);
    broken = j;
    broken.erase("xi");
    EXPECT_THROW(problem_from_json(broken), ValidationError);
    broken = j;
    broken["T"] = 0;
    EXPECT_THROW(problem_from_json(broken), ValidationError);
    broken = j;
    broken["n"] = 7;
    EXPECT_THROW(problem_from_json(broken), ValidationError);
    broken = j;
    broken["R"] = {{"1+"}};
    EXPECT_THROW(problem_from_json(broken), ValidationError);
    broken = j;
    broken["G"] = {{"s"}};
    EXPECT_THROW(problem_from_json(broken), ValidationError);
}

TEST(Loading, NumbersAndStringsBothAccepted) {
    nlohmann::json j = scalar_json("0", "1", "0", "0", "1", "1", "0");
    j["B"] = {{0.5}};
    EXPECT_DOUBLE_EQ(problem_from_json(j).coefficients(0, 0).B(0, 0), 0.5);
}

TEST(Loading, MalformedFileIsValidationError) {
    const auto path = std::filesystem::temp_directory_path() / "blq_malformed_problem.json";
    std::ofstream(path) << "{\"n\": 1, ";
    EXPECT_THROW(load_problem(path), ValidationError);
    EXPECT_THROW(load_problem(path.string() + ".missing"), ValidationError);
    std::filesystem::remove(path);
}

TEST(Assumptions, WorkedExampleHolds) {
    const ProblemInstance p = load_problem(problem_file("worked_example.json"));
    const AssumptionReport r = validate_assumptions(p, grid_on(-5.0, 5.0, 101));
    EXPECT_TRUE(r.h1_ok);
    EXPECT_TRUE(r.h2_ok);
    EXPECT_TRUE(r.h3_ok);
    EXPECT_GE(r.observed_min_eig_N, p.delta - 1e-10);
    EXPECT_LE(r.observed_max_eig_N, 2.0 + 1e-12);
}

TEST(Assumptions, VanishingNFails) {
    const ProblemInstance p = scalar_problem("0", "1", "0", "0", "0", "1", "0");
    const AssumptionReport r = validate_assumptions(p, default_sample_grid(p));
    EXPECT_FALSE(r.h3_ok);
    EXPECT_FALSE(r.messages.empty());
}

TEST(Assumptions, ConstantScalarHolds) {
    const ProblemInstance p = scalar_problem("0", "1", "0", "0", "1", "1", "0");
    const AssumptionReport r = validate_assumptions(p, default_sample_grid(p));
    EXPECT_TRUE(r.all_ok());
    EXPECT_DOUBLE_EQ(r.observed_min_eig_N, 1.0);
    EXPECT_EQ(r.sample_count, 11 * 121);
}

TEST(Assumptions, RBelowDeltaAndIndefiniteQFail) {
    EXPECT_FALSE(validate_assumptions(scalar_problem("0", "1", "0", "0", "1", "0.5", "0"),
                                      grid_on(-1, 1, 5))
                     .h2_ok);
    EXPECT_FALSE(validate_assumptions(scalar_problem("0", "1", "0", "-1", "1", "1", "0"),
                                      grid_on(-1, 1, 5))
                     .h2_ok);
}

TEST(Assumptions, PoleInSampledRangeFailsBoundedness) {
    const ProblemInstance p = scalar_problem("1/w", "1", "0", "0", "1", "1", "0");
    const AssumptionReport r = validate_assumptions(p, grid_on(-1, 1, 5));
    EXPECT_FALSE(r.h1_ok);
}

TEST(Assumptions, MoreSamplesOnlyLowerMinima) {
    const ProblemInstance p = load_problem(problem_file("worked_example.json"));
    const AssumptionReport coarse = validate_assumptions(p, grid_on(-1, 1, 3));
    auto fine_grid = grid_on(-1, 1, 3);
    const auto extra = grid_on(-6, 6, 49);
    fine_grid.insert(fine_grid.end(), extra.begin(), extra.end());
    const AssumptionReport fine = validate_assumptions(p, fine_grid);
    EXPECT_LE(fine.observed_min_eig_N, coarse.observed_min_eig_N);
    EXPECT_LE(fine.observed_min_eig_R, coarse.observed_min_eig_R);
}

} // namespace
